#include "nlselect/search.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include "nlselect/priors.hpp"
#include "nlselect/rng.hpp"

namespace nlselect::search {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Compressed-sensing style support identification: iterate between a
/// residual-correlation proxy and a joint least-squares fit on the
/// union of the current support and the top proxy columns, pruning to
/// the k largest coefficients.  The joint fit ranks candidates far
/// more sharply than any marginal statistic when spurious columns
/// shadow the signal.
ModelIndex matching_pursuit_support(const Dataset& data, int k,
                                    int iterations = 30) {
    const int n = data.n();
    const int p = data.p();
    k = std::min(k, p);
    if (k < 1) return ModelIndex{};
    Eigen::VectorXd resid = data.y;
    std::vector<int> support;
    std::vector<int> last;
    for (int it = 0; it < iterations; ++it) {
        std::vector<std::pair<double, int>> proxy;
        proxy.reserve(p);
        for (int j = 0; j < p; ++j) {
            proxy.emplace_back(-std::abs(data.X.col(j).dot(resid)), j);
        }
        std::sort(proxy.begin(), proxy.end());
        std::vector<int> uni = support;
        for (int i = 0; i < 2 * k && i < p; ++i) {
            const int j = proxy[i].second;
            if (std::find(uni.begin(), uni.end(), j) == uni.end()) {
                uni.push_back(j);
            }
        }
        Eigen::MatrixXd Xu(n, uni.size());
        for (std::size_t i = 0; i < uni.size(); ++i) {
            Xu.col(i) = data.X.col(uni[i]);
        }
        Eigen::MatrixXd gram = Xu.transpose() * Xu;
        gram.diagonal().array() += 1e-8; // rank guard when |union| > n
        const Eigen::VectorXd coef =
            gram.ldlt().solve(Xu.transpose() * data.y);
        std::vector<std::pair<double, int>> mag;
        mag.reserve(uni.size());
        for (std::size_t i = 0; i < uni.size(); ++i) {
            mag.emplace_back(-std::abs(coef[i]), uni[i]);
        }
        std::sort(mag.begin(), mag.end());
        std::vector<int> next;
        next.reserve(k);
        for (int i = 0; i < k && i < static_cast<int>(mag.size()); ++i) {
            next.push_back(mag[i].second);
        }
        std::sort(next.begin(), next.end());
        Eigen::MatrixXd Xs(n, next.size());
        for (std::size_t i = 0; i < next.size(); ++i) {
            Xs.col(i) = data.X.col(next[i]);
        }
        Eigen::MatrixXd gs = Xs.transpose() * Xs;
        gs.diagonal().array() += 1e-8;
        resid = data.y - Xs * gs.ldlt().solve(Xs.transpose() * data.y);
        if (next == last) break;
        last = support = std::move(next);
    }
    return ModelIndex(std::move(support));
}

/// Distinct supports along a coordinate-descent l1 path, largest
/// penalty first.  Supports wider than max_size are truncated to the
/// max_size largest coefficients in magnitude.
std::vector<ModelIndex> l1_path_supports(const Dataset& data, int max_size,
                                         int n_lambda = 40) {
    const int n = data.n();
    const int p = data.p();
    std::vector<double> colsq(p);
    for (int j = 0; j < p; ++j) colsq[j] = data.X.col(j).squaredNorm();
    double lambda_max = 0.0;
    for (int j = 0; j < p; ++j) {
        lambda_max = std::max(lambda_max,
                              std::abs(data.X.col(j).dot(data.y)));
    }
    std::vector<ModelIndex> supports;
    if (lambda_max <= 0.0) return supports;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd resid = data.y;
    const double ratio = 5e-3;
    for (int s = 0; s < n_lambda; ++s) {
        const double lambda =
            lambda_max * std::pow(ratio, (s + 1.0) / n_lambda);
        for (int sweep = 0; sweep < 200; ++sweep) {
            double max_delta = 0.0;
            for (int j = 0; j < p; ++j) {
                if (colsq[j] <= 0.0) continue;
                const double rho =
                    data.X.col(j).dot(resid) + colsq[j] * beta[j];
                const double next =
                    std::copysign(std::max(std::abs(rho) - lambda, 0.0),
                                  rho) / colsq[j];
                const double delta = next - beta[j];
                if (delta != 0.0) {
                    resid -= delta * data.X.col(j);
                    beta[j] = next;
                    max_delta = std::max(max_delta, std::abs(delta));
                }
            }
            if (max_delta < 1e-7) break;
        }
        std::vector<std::pair<double, int>> active;
        for (int j = 0; j < p; ++j) {
            if (beta[j] != 0.0) active.emplace_back(-std::abs(beta[j]), j);
        }
        std::sort(active.begin(), active.end());
        if (static_cast<int>(active.size()) > max_size) {
            active.resize(max_size);
        }
        std::vector<int> idx;
        idx.reserve(active.size());
        for (auto& [mag, j] : active) idx.push_back(j);
        ModelIndex support(std::move(idx));
        if (support.empty()) continue;
        if (supports.empty() || !(supports.back() == support)) {
            supports.push_back(std::move(support));
        }
        if (static_cast<int>(active.size()) >= max_size &&
            n > 0 && support.size() >= std::min(max_size, n - 1)) {
            break;
        }
    }
    return supports;
}

void parallel_for(int count, int threads,
                  const std::function<void(int)>& body) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    const int workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < count; i += workers) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace

std::vector<double> default_ladder() {
    std::vector<double> ladder(10);
    for (int i = 0; i < 10; ++i) {
        ladder[i] = 3.0 * std::pow(1.0 / 3.0, i / 9.0);
    }
    return ladder;
}

int default_screen_size(int n) {
    const int by_n = static_cast<int>(std::ceil(n / std::log(n)));
    return std::max(20, by_n);
}

std::vector<int> screen(const Dataset& data, const ModelIndex& model,
                        const Eigen::VectorXd& current_beta,
                        int screen_size) {
    validate_dataset(data);
    if (current_beta.size() != model.size()) {
        throw Error("screen: beta length does not match model size");
    }
    const int p = data.p();
    if (screen_size < 1) throw Error("screen: size must be at least 1");
    screen_size = std::min(screen_size, p);
    Eigen::VectorXd resid = data.y;
    for (int i = 0; i < model.size(); ++i) {
        resid -= current_beta[i] * data.X.col(model.indices()[i]);
    }
    const double rnorm = resid.norm();
    Eigen::VectorXd stat = Eigen::VectorXd::Zero(p);
    if (rnorm > 1e-12) {
        for (int j = 0; j < p; ++j) {
            const double cnorm = data.X.col(j).norm();
            if (cnorm > 0.0) {
                stat[j] = std::abs(data.X.col(j).dot(resid)) /
                          (cnorm * rnorm);
            }
        }
    }
    std::vector<int> order;
    order.reserve(p);
    for (int j = 0; j < p; ++j) {
        if (!model.contains(j)) order.push_back(j);
    }
    screen_size = std::min<int>(screen_size,
                                static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + screen_size,
                      order.end(), [&](int a, int b) {
                          if (stat[a] != stat[b]) return stat[a] > stat[b];
                          return a < b;
                      });
    order.resize(screen_size);
    return order;
}

std::vector<ModelIndex> NeighborSets::all() const {
    std::vector<ModelIndex> flat;
    flat.reserve(additions.size() + deletions.size() + swaps.size());
    flat.insert(flat.end(), additions.begin(), additions.end());
    flat.insert(flat.end(), deletions.begin(), deletions.end());
    flat.insert(flat.end(), swaps.begin(), swaps.end());
    return flat;
}

NeighborSets neighbors(const ModelIndex& model, int p, int q_n,
                       std::span<const int> screened) {
    if (model.max_index() >= p) {
        throw Error("neighbors: model index out of range");
    }
    if (q_n < 1) throw Error("neighbors: q_n must be at least 1");
    for (int j : screened) {
        if (j < 0 || j >= p) {
            throw Error("neighbors: screened index out of range");
        }
    }
    NeighborSets sets;
    const int k = model.size();
    if (k + 1 <= q_n) {
        for (int j : screened) {
            if (!model.contains(j)) {
                sets.additions.push_back(model.with(j));
            }
        }
    }
    for (int i : model.indices()) {
        sets.deletions.push_back(model.without(i));
    }
    for (int i : model.indices()) {
        const ModelIndex reduced = model.without(i);
        for (int j : screened) {
            if (!model.contains(j)) {
                sets.swaps.push_back(reduced.with(j));
            }
        }
    }
    return sets;
}

namespace {

struct Scorer {
    const Dataset& data;
    const HyperConfig& cfg;
    laplace::ScoreCache cache;
    ScoredModelSet& out;
    int threads;

    laplace::ScoredModel get(const ModelIndex& model) {
        auto it = out.entries.find(model);
        if (it != out.entries.end()) return it->second;
        laplace::ScoredModel scored = compute(model);
        out.entries.emplace(model, scored);
        return scored;
    }

    laplace::ScoredModel compute(const ModelIndex& model) {
        try {
            return laplace::score_model(data, model, cfg, &cache);
        } catch (const Error& err) {
            out.failures.emplace_back(model, err.what());
            return laplace::ScoredModel{model, -kInf, -kInf};
        }
    }

    /// Score a batch, preserving candidate order in the failure log.
    std::vector<laplace::ScoredModel> batch(
        const std::vector<ModelIndex>& models) {
        const int count = static_cast<int>(models.size());
        std::vector<laplace::ScoredModel> scored(count);
        std::vector<int> missing;
        missing.reserve(count);
        for (int i = 0; i < count; ++i) {
            auto it = out.entries.find(models[i]);
            if (it != out.entries.end()) {
                scored[i] = it->second;
            } else {
                missing.push_back(i);
            }
        }
        if (threads <= 1) {
            for (int i : missing) scored[i] = compute(models[i]);
        } else {
            std::vector<std::string> errs(missing.size());
            parallel_for(static_cast<int>(missing.size()), threads,
                         [&](int t) {
                             const ModelIndex& m = models[missing[t]];
                             try {
                                 scored[missing[t]] = laplace::score_model(
                                     data, m, cfg, &cache);
                             } catch (const Error& err) {
                                 errs[t] = err.what();
                                 scored[missing[t]] =
                                     laplace::ScoredModel{m, -kInf, -kInf};
                             }
                         });
            for (std::size_t t = 0; t < missing.size(); ++t) {
                if (!errs[t].empty()) {
                    out.failures.emplace_back(models[missing[t]], errs[t]);
                }
            }
        }
        for (int i : missing) {
            out.entries.emplace(models[i], scored[i]);
        }
        return scored;
    }
};

} // namespace

ScoredModelSet run_search(const Dataset& data, const HyperConfig& cfg,
                          const SearchConfig& scfg) {
    validate_dataset(data);
    validate_hyper(cfg);
    if (!data.standardized) {
        throw Error("run_search requires a standardized dataset");
    }
    const int n = data.n();
    const int p = data.p();
    const int qn_requested = scfg.q_n > 0 ? scfg.q_n : effective_qn(cfg, n);
    const int qn = std::max(1, std::min({qn_requested, n - 1, p}));
    const int screen_size =
        std::min(p, scfg.screen_size > 0 ? scfg.screen_size
                                         : default_screen_size(n));
    if (scfg.iterations_per_temperature < 1) {
        throw Error("search: iterations per temperature must be positive");
    }
    std::vector<double> ladder = scfg.temperature_ladder.empty()
                                     ? default_ladder()
                                     : scfg.temperature_ladder;
    for (double t : ladder) {
        if (!(t > 0.0)) throw Error("search: temperatures must be positive");
    }

    ScoredModelSet result;
    Scorer scorer{data, cfg, {}, result, scfg.threads};
    Rng rng(derive_seed(scfg.seed, 0x5EA7C4));

    auto beta_of = [&](const ModelIndex& model) {
        if (model.empty()) return Eigen::VectorXd();
        if (auto hit = scorer.cache.lookup(model)) return hit->beta_hat;
        return Eigen::VectorXd::Zero(model.size()).eval();
    };

    // the null model and the best single variable by marginal correlation
    const double null_lp = scorer.get(ModelIndex{}).log_posterior_unnorm;
    result.visits.push_back(ModelIndex{});
    ModelIndex incumbent;
    double incumbent_lp = null_lp;
    {
        const std::vector<int> top =
            screen(data, ModelIndex{}, Eigen::VectorXd(), 1);
        if (!top.empty()) {
            const ModelIndex start = ModelIndex{}.with(top[0]);
            const double start_lp = scorer.get(start).log_posterior_unnorm;
            if (!std::isfinite(start_lp) && !std::isfinite(null_lp)) {
                throw NonConvergence("search: starting model failed to score");
            }
            result.visits.push_back(start);
            if (start_lp > incumbent_lp) {
                incumbent = start;
                incumbent_lp = start_lp;
            }
        }
    }

    auto best_of = [&](const std::vector<ModelIndex>& candidates,
                       const laplace::ScoredModel*& next) {
        next = nullptr;
        for (const auto& s : scorer.batch(candidates)) {
            if (!std::isfinite(s.log_posterior_unnorm)) continue;
            if (!next ||
                s.log_posterior_unnorm > next->log_posterior_unnorm) {
                // batch returns by value; re-fetch the stored entry
                next = &result.entries.at(s.model);
            }
        }
    };

    // block exchange: replace the m weakest coefficients by the m
    // strongest screened residual correlates in one move; single swaps
    // cannot cross between a noise-built model and the signal model of
    // the same size, a whole-block trade can
    auto splice = [&](const ModelIndex& model, int m) -> ModelIndex {
        const int k = model.size();
        if (m < 1 || m > k) return model;
        const Eigen::VectorXd bh = beta_of(model);
        std::vector<std::pair<double, int>> ranked;
        ranked.reserve(k);
        for (int i = 0; i < k; ++i) {
            ranked.emplace_back(std::abs(bh[i]), model.indices()[i]);
        }
        std::sort(ranked.begin(), ranked.end());
        const std::vector<int> in = screen(data, model, bh, m);
        std::vector<int> next;
        next.reserve(k);
        for (int i = m; i < k; ++i) next.push_back(ranked[i].second);
        for (int i = 0; i < m && i < static_cast<int>(in.size()); ++i) {
            next.push_back(in[i]);
        }
        return ModelIndex(std::move(next));
    };
    auto splice_refine = [&](ModelIndex& model, double& model_lp) {
        const int max_rounds = 2 * model.size() + 4;
        for (int round = 0; round < max_rounds; ++round) {
            ModelIndex best_cand;
            double best_lp = model_lp;
            for (int m = 1; m <= model.size(); ++m) {
                const ModelIndex cand = splice(model, m);
                if (cand == model) continue;
                const double cand_lp =
                    scorer.get(cand).log_posterior_unnorm;
                if (cand_lp > best_lp) {
                    best_cand = cand;
                    best_lp = cand_lp;
                }
            }
            if (!(best_lp > model_lp)) break;
            model = best_cand;
            model_lp = best_lp;
            result.visits.push_back(model);
        }
        if (model_lp > incumbent_lp) {
            incumbent_lp = model_lp;
            incumbent = model;
        }
    };

    // deterministic backbone before the stochastic phase: a coefficient
    // prior that vanishes at zero digs a posterior valley between the
    // null basin and well-fitting models, and stochastic single moves
    // do not cross it at any temperature worth running
    {
        // forward: best screened addition at each size, splice-refined;
        // the step budget keeps the pass finite when a refinement near
        // the saturated size shrinks the model it just grew
        ModelIndex path;
        double path_lp = null_lp;
        for (int step = 0; step < 2 * qn + 8 && path.size() < qn; ++step) {
            const std::vector<int> screened =
                screen(data, path, beta_of(path), screen_size);
            const std::vector<ModelIndex> steps =
                neighbors(path, p, qn, screened).additions;
            if (steps.empty()) break;
            const laplace::ScoredModel* next = nullptr;
            best_of(steps, next);
            if (!next) break;
            path = next->model;
            path_lp = next->log_posterior_unnorm;
            result.visits.push_back(path);
            splice_refine(path, path_lp);
        }
        // backward: best deletion at each size down to the null model;
        // when the forward terminal overshot into a superset of the
        // signal, the pruning sequence passes through the signal itself
        while (path.size() > 0) {
            const laplace::ScoredModel* next = nullptr;
            best_of(neighbors(path, p, qn, {}).deletions, next);
            if (!next) break;
            path = next->model;
            path_lp = next->log_posterior_unnorm;
            result.visits.push_back(path);
            splice_refine(path, path_lp);
        }
        // independent seeds: screened additions and exchanges both rank
        // candidates against the current fit's residual, which at an
        // overfit model is too small to expose missed signal; l1-path
        // and pursuit supports rank without reference to any current
        // model and land on the signal side of the valley
        std::vector<ModelIndex> seeds = l1_path_supports(data, qn);
        for (double f : {0.25, 0.4, 0.5, 0.65, 0.8, 1.0}) {
            const int k = std::min(
                qn, std::max(1, static_cast<int>(std::lround(f * qn))));
            seeds.push_back(matching_pursuit_support(data, k));
        }
        for (const ModelIndex& seed : seeds) {
            if (seed.empty()) continue;
            double seed_lp = scorer.get(seed).log_posterior_unnorm;
            if (!std::isfinite(seed_lp)) continue;
            result.visits.push_back(seed);
            ModelIndex refined = seed;
            splice_refine(refined, seed_lp);
            // prune the seed: sparsity heuristics keep marginal columns
            // that the exact posterior rejects
            while (refined.size() > 0) {
                const laplace::ScoredModel* next = nullptr;
                best_of(neighbors(refined, p, qn, {}).deletions, next);
                if (!next || next->log_posterior_unnorm <= seed_lp) break;
                refined = next->model;
                seed_lp = next->log_posterior_unnorm;
                result.visits.push_back(refined);
                splice_refine(refined, seed_lp);
            }
        }
    }
    ModelIndex current = incumbent;

    for (double temperature : ladder) {
        current = incumbent; // each stage fans out from the best model so far
        for (int iter = 0; iter < scfg.iterations_per_temperature; ++iter) {
            const std::vector<int> screened =
                screen(data, current, beta_of(current), screen_size);
            const std::vector<ModelIndex> candidates =
                neighbors(current, p, qn, screened).all();
            if (candidates.empty()) break;
            const std::vector<laplace::ScoredModel> scored =
                scorer.batch(candidates);
            double best = -kInf;
            for (const auto& s : scored) {
                best = std::max(best, s.log_posterior_unnorm);
                if (s.log_posterior_unnorm > incumbent_lp) {
                    incumbent_lp = s.log_posterior_unnorm;
                    incumbent = s.model;
                }
            }
            if (!std::isfinite(best)) continue; // nothing movable here
            std::vector<double> weights(scored.size(), 0.0);
            double total = 0.0;
            for (std::size_t i = 0; i < scored.size(); ++i) {
                const double lp = scored[i].log_posterior_unnorm;
                if (std::isfinite(lp)) {
                    weights[i] = std::exp((lp - best) / temperature);
                    total += weights[i];
                }
            }
            const double draw = rng.uniform() * total;
            double run = 0.0;
            std::size_t pick = weights.size();
            std::size_t last_positive = weights.size();
            for (std::size_t i = 0; i < weights.size(); ++i) {
                if (weights[i] <= 0.0) continue;
                last_positive = i;
                run += weights[i];
                if (draw < run) {
                    pick = i;
                    break;
                }
            }
            if (pick == weights.size()) pick = last_positive;
            current = scored[pick].model;
            result.visits.push_back(current);
        }
    }

    // zero-temperature limit of the same move rule, iterated to a local
    // maximum: swaps trade spurious columns for missed signal and
    // deletions shed the overfit tail the hot phase tends to pick up
    for (int round = 0; round < 100; ++round) {
        const std::vector<int> screened =
            screen(data, incumbent, beta_of(incumbent), screen_size);
        const std::vector<ModelIndex> candidates =
            neighbors(incumbent, p, qn, screened).all();
        if (candidates.empty()) break;
        bool improved = false;
        for (const auto& s : scorer.batch(candidates)) {
            if (s.log_posterior_unnorm > incumbent_lp) {
                incumbent_lp = s.log_posterior_unnorm;
                incumbent = s.model;
                improved = true;
            }
        }
        if (!improved) break;
        result.visits.push_back(incumbent);
    }
    return result;
}

laplace::ScoredModel map_model(const ScoredModelSet& set) {
    const laplace::ScoredModel* best = nullptr;
    for (const auto& [model, scored] : set.entries) {
        if (!std::isfinite(scored.log_posterior_unnorm)) continue;
        if (!best) {
            best = &scored;
            continue;
        }
        const double a = scored.log_posterior_unnorm;
        const double b = best->log_posterior_unnorm;
        if (a > b) {
            best = &scored;
        } else if (a == b) {
            if (model.size() < best->model.size() ||
                (model.size() == best->model.size() &&
                 model.indices() < best->model.indices())) {
                best = &scored;
            }
        }
    }
    if (!best) throw EmptySet("no finite-scored models in the set");
    return *best;
}

} // namespace nlselect::search
