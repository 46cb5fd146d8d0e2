#include "nlselect/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nlselect::simulation {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const double kLargeMagnitudes[10] = {1.1, 1.2, 1.3, 1.4, 1.5,
                                     1.6, 1.7, 1.8, 1.9, 2.0};
const double kMixedMagnitudes[10] = {0.3, 0.35, 0.4, 0.45, 0.5,
                                     1.1, 1.2, 1.3, 1.4, 1.5};

/// First `take` entries of a seeded partial shuffle of `pool`.
std::vector<int> sample_without_replacement(std::vector<int> pool, int take,
                                            Rng& rng) {
    const int m = static_cast<int>(pool.size());
    if (take > m) throw Error("cannot sample more items than the pool holds");
    for (int i = 0; i < take; ++i) {
        const int j = i + static_cast<int>(rng.uniform_below(m - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

std::vector<int> range_pool(int p) {
    std::vector<int> pool(p);
    std::iota(pool.begin(), pool.end(), 0);
    return pool;
}

} // namespace

CovarianceModel::CovarianceModel(Design design, int p, double rho)
    : design_(design), p_(p), rho_(rho) {
    if (p < 1) throw Error("covariance: p must be positive");
    if (design == Design::isotropic) {
        rho_ = 0.0;
    } else if (design == Design::compound_symmetry) {
        if (rho < 0.0 || rho >= 1.0) {
            throw Error("compound symmetry needs rho in [0, 1)");
        }
    } else {
        if (std::abs(rho) >= 1.0) throw Error("ar1 needs |rho| < 1");
    }
}

double CovarianceModel::entry(int i, int j) const {
    if (i < 0 || j < 0 || i >= p_ || j >= p_) {
        throw Error("covariance entry out of range");
    }
    if (i == j) return 1.0;
    switch (design_) {
        case Design::isotropic: return 0.0;
        case Design::compound_symmetry: return rho_;
        case Design::ar1: return std::pow(rho_, std::abs(i - j));
    }
    return 0.0;
}

void CovarianceModel::sample_row(
    Rng& rng,
    Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
    if (row.size() != p_) throw Error("covariance: row length mismatch");
    switch (design_) {
        case Design::isotropic:
            for (int j = 0; j < p_; ++j) row[j] = rng.normal();
            break;
        case Design::compound_symmetry: {
            const double shared = rng.normal();
            const double a = std::sqrt(rho_);
            const double b = std::sqrt(1.0 - rho_);
            for (int j = 0; j < p_; ++j) {
                row[j] = a * shared + b * rng.normal();
            }
            break;
        }
        case Design::ar1: {
            row[0] = rng.normal();
            const double innov = std::sqrt(1.0 - rho_ * rho_);
            for (int j = 1; j < p_; ++j) {
                row[j] = rho_ * row[j - 1] + innov * rng.normal();
            }
            break;
        }
    }
}

CovarianceModel make_covariance(Design design, int p, double rho) {
    return CovarianceModel(design, p, rho);
}

int effective_n(const SimSpec& spec) {
    return spec.n > 0 ? spec.n : spec.p / 5;
}

Instance sample_dataset(const SimSpec& spec, int repetition) {
    if (spec.p < 1) throw Error("simulation: p must be positive");
    if (repetition < 0) throw Error("simulation: repetition must be >= 0");
    if (!(spec.sigma > 0.0)) throw Error("simulation: sigma must be positive");
    const int n = effective_n(spec);
    const int p = spec.p;

    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(p);
    std::vector<int> active;
    if (spec.pattern == Pattern::custom) {
        if (spec.custom_beta.size() != p) {
            throw Error("simulation: custom beta must have length p");
        }
        beta0 = spec.custom_beta;
        for (int j = 0; j < p; ++j) {
            if (beta0[j] != 0.0) active.push_back(j);
        }
    } else {
        if (p < 10) throw Error("simulation: built-in patterns need p >= 10");
        const double* mags = spec.pattern == Pattern::large
                                 ? kLargeMagnitudes
                                 : kMixedMagnitudes;
        for (int j = 0; j < 10; ++j) {
            beta0[j] = mags[j];
            active.push_back(j);
        }
    }
    const int t_size = static_cast<int>(active.size());
    if (n < t_size + 2) {
        throw Error("simulation: need n >= |truth| + 2");
    }

    Rng rng(derive_seed(spec.seed, 0xDA7A5E7, repetition, spec.p));
    if (spec.sign_flip_prob > 0.0 && spec.pattern != Pattern::custom) {
        for (int j : active) {
            if (rng.uniform() < spec.sign_flip_prob) beta0[j] = -beta0[j];
        }
    }

    const CovarianceModel cov = make_covariance(spec.design, p, spec.rho);
    Eigen::MatrixXd X(n, p);
    for (int i = 0; i < n; ++i) {
        cov.sample_row(rng, X.row(i));
    }
    Eigen::VectorXd y = X * beta0;
    for (int i = 0; i < n; ++i) {
        y[i] += spec.sigma * rng.normal();
    }

    Instance inst;
    inst.dataset = standardize(std::move(X), std::move(y));
    inst.truth = ModelIndex(active);
    inst.beta0 = beta0;
    return inst;
}

Metrics selection_metrics(const ModelIndex& selected, const ModelIndex& truth,
                          int p) {
    if (selected.max_index() >= p || truth.max_index() >= p) {
        throw Error("metrics: model index out of range");
    }
    int tp = 0;
    for (int j : selected.indices()) {
        if (truth.contains(j)) ++tp;
    }
    const int fp = selected.size() - tp;
    const int fn = truth.size() - tp;
    const int tn = p - tp - fp - fn;
    Metrics m;
    if (tp + fp > 0) {
        m.ppv = static_cast<double>(tp) / (tp + fp);
    } else {
        m.ppv = truth.empty() ? 1.0 : 0.0;
    }
    m.tpr = truth.empty() ? 1.0
                          : static_cast<double>(tp) / truth.size();
    m.fpr = (fp + tn) > 0 ? static_cast<double>(fp) / (fp + tn) : 0.0;
    return m;
}

ModelIndex scenario_model(const ModelIndex& truth, int scenario, int p,
                          Rng& rng) {
    const int m = truth.size();
    if (m < 2) throw Error("scenario models need |truth| >= 2");
    const int half = m / 2;
    switch (scenario) {
        case 1:
            return ModelIndex(
                sample_without_replacement(truth.indices(), half, rng));
        case 2: {
            if (p < 2 * m) throw Error("scenario 2 needs p >= 2|truth|");
            std::vector<int> complement;
            complement.reserve(p - m);
            for (int j = 0; j < p; ++j) {
                if (!truth.contains(j)) complement.push_back(j);
            }
            std::vector<int> extra =
                sample_without_replacement(std::move(complement), m, rng);
            std::vector<int> all = truth.indices();
            all.insert(all.end(), extra.begin(), extra.end());
            return ModelIndex(std::move(all));
        }
        case 3:
            return ModelIndex(
                sample_without_replacement(range_pool(p), half, rng));
        case 4:
            if (p < 2 * m) throw Error("scenario 4 needs p >= 2|truth|");
            return ModelIndex(
                sample_without_replacement(range_pool(p), 2 * m, rng));
        default:
            throw Error("scenario must be 1, 2, 3, or 4");
    }
}

std::vector<RatioRow> ratio_experiment(const SimSpec& base,
                                       std::span<const int> p_sweep,
                                       int scenario, const HyperConfig& cfg) {
    if (scenario < 1 || scenario > 4) {
        throw Error("scenario must be 1, 2, 3, or 4");
    }
    if (base.repetitions < 1) {
        throw Error("ratio experiment needs at least one repetition");
    }
    std::vector<RatioRow> rows;
    for (int p : p_sweep) {
        SimSpec spec = base;
        spec.p = p;
        const int n = effective_n(spec);
        std::vector<double> values;
        values.reserve(spec.repetitions);
        for (int rep = 0; rep < spec.repetitions; ++rep) {
            const Instance inst = sample_dataset(spec, rep);
            Rng rng(derive_seed(spec.seed, 0x5CE9A210u + scenario, rep, p));
            const ModelIndex candidate =
                scenario_model(inst.truth, scenario, p, rng);
            HyperConfig run_cfg = cfg;
            // the scenario models must stay inside the size cap so the
            // restricted model prior keeps the ratio finite
            run_cfg.q_n = std::max(effective_qn(cfg, n),
                                   std::max(candidate.size(),
                                            2 * inst.truth.size()));
            values.push_back(laplace::log_posterior_ratio(
                inst.dataset, candidate, inst.truth, run_cfg));
        }
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= values.size();
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double se = values.size() > 1
                              ? std::sqrt(var / (values.size() - 1.0) /
                                          values.size())
                              : 0.0;
        rows.push_back(RatioRow{p, scenario, base.design, mean, se});
    }
    return rows;
}

std::vector<MetricRow> selection_experiment(
    const SimSpec& spec, std::span<const Method> methods,
    const HyperConfig& base_cfg, const search::SearchConfig& base_search) {
    if (spec.repetitions < 1) {
        throw Error("selection experiment needs at least one repetition");
    }
    if (methods.empty()) throw Error("selection experiment needs a method");
    std::vector<Metrics> sums(methods.size());
    for (int rep = 0; rep < spec.repetitions; ++rep) {
        const Instance inst = sample_dataset(spec, rep);
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            HyperConfig cfg = base_cfg;
            cfg.tau_mode = methods[mi] == Method::fixed_tau
                               ? TauMode::fixed
                               : TauMode::hierarchical;
            search::SearchConfig scfg = base_search;
            scfg.seed = derive_seed(spec.seed, 0x5EAC0DE, rep, mi);
            const search::ScoredModelSet set =
                search::run_search(inst.dataset, cfg, scfg);
            const ModelIndex selected = search::map_model(set).model;
            const Metrics m = selection_metrics(selected, inst.truth, spec.p);
            sums[mi].ppv += m.ppv;
            sums[mi].tpr += m.tpr;
            sums[mi].fpr += m.fpr;
        }
    }
    std::vector<MetricRow> rows;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        MetricRow row;
        row.p = spec.p;
        row.design = spec.design;
        row.pattern = spec.pattern;
        row.method = methods[mi];
        row.metrics.ppv = sums[mi].ppv / spec.repetitions;
        row.metrics.tpr = sums[mi].tpr / spec.repetitions;
        row.metrics.fpr = sums[mi].fpr / spec.repetitions;
        rows.push_back(row);
    }
    return rows;
}

Eigen::VectorXd inclusion_probabilities(int p,
                                        const search::ScoredModelSet& set) {
    double best = -kInf;
    for (const auto& [model, scored] : set.entries) {
        best = std::max(best, scored.log_posterior_unnorm);
    }
    if (!std::isfinite(best)) {
        throw EmptySet("no finite-scored models in the set");
    }
    Eigen::VectorXd incl = Eigen::VectorXd::Zero(p);
    double total = 0.0;
    for (const auto& [model, scored] : set.entries) {
        if (!std::isfinite(scored.log_posterior_unnorm)) continue;
        const double w = std::exp(scored.log_posterior_unnorm - best);
        total += w;
        for (int j : model.indices()) {
            if (j >= p) throw Error("inclusion: model index out of range");
            incl[j] += w;
        }
    }
    incl /= total;
    return incl;
}

std::vector<RocPoint> roc_points(int p, const ModelIndex& truth,
                                 const search::ScoredModelSet& set) {
    const Eigen::VectorXd incl = inclusion_probabilities(p, set);
    std::vector<double> thresholds;
    thresholds.push_back(1.5); // above any probability: empty selection
    std::vector<double> unique(incl.data(), incl.data() + p);
    std::sort(unique.begin(), unique.end(), std::greater<double>());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (double u : unique) thresholds.push_back(u);
    if (thresholds.back() != 0.0) thresholds.push_back(0.0);
    std::vector<RocPoint> points;
    points.reserve(thresholds.size());
    for (double threshold : thresholds) {
        std::vector<int> chosen;
        for (int j = 0; j < p; ++j) {
            if (incl[j] >= threshold) chosen.push_back(j);
        }
        const Metrics m =
            selection_metrics(ModelIndex(std::move(chosen)), truth, p);
        points.push_back(RocPoint{threshold, m.fpr, m.tpr});
    }
    return points;
}

double mspe(const Dataset& train, const Dataset& test,
            const ModelIndex& model) {
    validate_dataset(train);
    validate_dataset(test);
    if (train.p() != test.p()) {
        throw Error("mspe: train and test column counts differ");
    }
    if (model.max_index() >= train.p()) {
        throw Error("mspe: model index out of range");
    }
    if (model.empty()) {
        return test.y.squaredNorm() / test.n();
    }
    const int k = model.size();
    Eigen::MatrixXd Xtr(train.n(), k);
    Eigen::MatrixXd Xte(test.n(), k);
    for (int i = 0; i < k; ++i) {
        Xtr.col(i) = train.X.col(model.indices()[i]);
        Xte.col(i) = test.X.col(model.indices()[i]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xtr);
    if (qr.rank() < k) {
        throw SingularDesign("training columns are rank deficient for model " +
                             model.to_string());
    }
    const Eigen::VectorXd beta = qr.solve(train.y);
    return (test.y - Xte * beta).squaredNorm() / test.n();
}

const char* design_name(Design design) {
    switch (design) {
        case Design::isotropic: return "iso";
        case Design::compound_symmetry: return "cs";
        case Design::ar1: return "ar1";
    }
    return "iso";
}

const char* pattern_name(Pattern pattern) {
    switch (pattern) {
        case Pattern::large: return "large";
        case Pattern::mixed: return "mixed";
        case Pattern::custom: return "custom";
    }
    return "large";
}

const char* method_name(Method method) {
    return method == Method::fixed_tau ? "fixed-tau" : "hyper-pmom";
}

Design design_from_name(const std::string& name) {
    if (name == "iso") return Design::isotropic;
    if (name == "cs") return Design::compound_symmetry;
    if (name == "ar1") return Design::ar1;
    throw Error("unknown design '" + name + "' (use iso, cs, or ar1)");
}

Pattern pattern_from_name(const std::string& name) {
    if (name == "large") return Pattern::large;
    if (name == "mixed") return Pattern::mixed;
    if (name == "custom") return Pattern::custom;
    throw Error("unknown pattern '" + name + "' (use large or mixed)");
}

} // namespace nlselect::simulation
