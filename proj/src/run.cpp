#include "nlselect/run.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "json.hpp"
#include "nlselect/csv.hpp"
#include "nlselect/oracle.hpp"
#include "nlselect/priors.hpp"
#include "nlselect/rng.hpp"

namespace nlselect {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const char* command_name(RunConfig::Command command) {
    switch (command) {
        case RunConfig::Command::select: return "select";
        case RunConfig::Command::simulate: return "simulate";
        case RunConfig::Command::ratio: return "ratio";
        case RunConfig::Command::verify: return "verify";
    }
    return "verify";
}

std::vector<int> sweep_or_default(const RunConfig& config) {
    if (!config.p_sweep.empty()) return config.p_sweep;
    return {100, 200, 400};
}

ordered_json config_json(const RunConfig& config) {
    ordered_json j;
    j["command"] = command_name(config.command);
    j["seed"] = config.seed;
    j["out_dir"] = config.out_dir;
    j["threads"] = config.threads;
    if (config.command == RunConfig::Command::select) {
        j["data"] = config.data_path;
        j["response"] = config.response;
        j["holdout"] = config.holdout;
    }
    if (config.command == RunConfig::Command::simulate ||
        config.command == RunConfig::Command::ratio) {
        j["p"] = sweep_or_default(config);
        j["n"] = config.n;
        j["design"] = simulation::design_name(config.design);
        j["pattern"] = simulation::pattern_name(config.pattern);
        j["reps"] = config.reps;
    }
    j["prior"] = {
        {"r", config.hyper.r},
        {"alpha1", config.hyper.alpha1},
        {"alpha2", config.hyper.alpha2},
        {"tau", config.hyper.tau_mode == TauMode::fixed ? "fixed"
                                                        : "hierarchical"},
        {"fixed_tau", config.hyper.fixed_tau},
        {"model_prior",
         config.hyper.model_prior.kind ==
                 ModelPriorSpec::Kind::uniform_restricted
             ? "uniform"
             : "complexity"},
        {"c1", config.hyper.model_prior.c1},
        {"c2", config.hyper.model_prior.c2},
        {"q_n", config.hyper.q_n},
    };
    j["search"] = {
        {"iterations_per_temperature",
         config.search.iterations_per_temperature},
        {"screen_size", config.search.screen_size},
        {"temperatures", config.search.temperature_ladder.empty()
                             ? search::default_ladder()
                             : config.search.temperature_ladder},
    };
    j["versions"] = {
        {"nlselect", version_string()},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
    };
    return j;
}

void write_manifest(const RunConfig& config,
                    const std::vector<std::string>& outputs) {
    ordered_json manifest = config_json(config);
    manifest["outputs"] = outputs;
    io::write_text_file((fs::path(config.out_dir) / "manifest.json").string(),
                        manifest.dump(2) + "\n");
}

search::SearchConfig resolve_search(const RunConfig& config) {
    search::SearchConfig scfg = config.search;
    scfg.seed = config.seed;
    scfg.threads = config.threads;
    if (scfg.q_n == 0) scfg.q_n = config.hyper.q_n;
    return scfg;
}

std::string model_field(const ModelIndex& model) {
    std::string out;
    for (std::size_t i = 0; i < model.indices().size(); ++i) {
        if (i) out += ";";
        out += std::to_string(model.indices()[i]);
    }
    return out.empty() ? "-" : out;
}

int run_select(const RunConfig& config) {
    if (config.data_path.empty()) {
        throw Error("select requires a data file");
    }
    if (config.holdout < 0.0 || config.holdout >= 1.0) {
        throw Error("holdout fraction must be in [0, 1)");
    }
    const io::IngestResult ingest =
        io::ingest_csv(config.data_path, config.response);
    const Dataset& full = ingest.dataset;
    const int n = full.n();
    const int p = full.p();

    // deterministic holdout split of the standardized data
    Dataset train = full;
    Dataset test;
    const int n_test =
        static_cast<int>(std::lround(config.holdout * n));
    if (n_test > 0) {
        if (n - n_test < 3) throw Error("holdout leaves too few rows");
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(config.seed, 0x5B117));
        for (int i = 0; i < n_test; ++i) {
            const int j = i + static_cast<int>(rng.uniform_below(n - i));
            std::swap(order[i], order[j]);
        }
        std::vector<int> test_idx(order.begin(), order.begin() + n_test);
        std::vector<int> train_idx(order.begin() + n_test, order.end());
        std::sort(test_idx.begin(), test_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        auto take = [&](const std::vector<int>& idx) {
            Dataset subset;
            subset.X.resize(static_cast<int>(idx.size()), p);
            subset.y.resize(static_cast<int>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) {
                subset.X.row(static_cast<int>(i)) = full.X.row(idx[i]);
                subset.y[static_cast<int>(i)] = full.y[idx[i]];
            }
            subset.standardized = true;
            return subset;
        };
        train = take(train_idx);
        test = take(test_idx);
    }

    const search::SearchConfig scfg = resolve_search(config);
    const search::ScoredModelSet set =
        search::run_search(train, config.hyper, scfg);
    const laplace::ScoredModel best = search::map_model(set);
    const Eigen::VectorXd incl =
        simulation::inclusion_probabilities(p, set);

    // ranked model table, best first
    std::vector<const laplace::ScoredModel*> ranked;
    for (const auto& [model, scored] : set.entries) {
        if (std::isfinite(scored.log_posterior_unnorm)) {
            ranked.push_back(&scored);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto* a, const auto* b) {
        if (a->log_posterior_unnorm != b->log_posterior_unnorm) {
            return a->log_posterior_unnorm > b->log_posterior_unnorm;
        }
        if (a->model.size() != b->model.size()) {
            return a->model.size() < b->model.size();
        }
        return a->model.indices() < b->model.indices();
    });
    std::string top = "rank,model,log_marginal,log_posterior\n";
    const std::size_t limit = std::min<std::size_t>(ranked.size(), 20);
    for (std::size_t i = 0; i < limit; ++i) {
        top += std::to_string(i + 1) + "," + model_field(ranked[i]->model) +
               "," + io::format_double(ranked[i]->log_marginal) + "," +
               io::format_double(ranked[i]->log_posterior_unnorm) + "\n";
    }
    std::string inclusion = "variable,inclusion_prob\n";
    for (int j = 0; j < p; ++j) {
        inclusion += ingest.predictors[j] + "," +
                     io::format_double(incl[j]) + "\n";
    }

    ordered_json selection;
    selection["response"] = ingest.response;
    selection["n"] = n;
    selection["n_train"] = train.n();
    selection["n_test"] = n_test;
    selection["p"] = p;
    ordered_json chosen = ordered_json::array();
    for (int j : best.model.indices()) {
        chosen.push_back({{"index", j},
                          {"name", ingest.predictors[j]},
                          {"inclusion_prob", incl[j]}});
    }
    selection["selected"] = chosen;
    selection["log_marginal"] = best.log_marginal;
    selection["log_posterior"] = best.log_posterior_unnorm;
    selection["models_scored"] = set.entries.size();
    selection["failed_evaluations"] = set.failures.size();
    if (n_test > 0) {
        selection["mspe_holdout"] =
            simulation::mspe(train, test, best.model);
    }

    const fs::path dir(config.out_dir);
    io::write_text_file((dir / "selection.json").string(),
                        selection.dump(2) + "\n");
    io::write_text_file((dir / "top_models.csv").string(), top);
    io::write_text_file((dir / "inclusion.csv").string(), inclusion);
    write_manifest(config, {"selection.json", "top_models.csv",
                            "inclusion.csv"});

    std::cout << "selected " << best.model.to_string() << " ("
              << best.model.size() << " of " << p << " variables, "
              << set.entries.size() << " models scored)\n";
    for (int j : best.model.indices()) {
        std::cout << "  " << ingest.predictors[j] << "  (inclusion "
                  << io::format_double(incl[j]) << ")\n";
    }
    if (n_test > 0) {
        std::cout << "holdout mspe: "
                  << io::format_double(
                         selection["mspe_holdout"].get<double>())
                  << "\n";
    }
    return 0;
}

int run_simulate(const RunConfig& config) {
    const std::vector<int> sweep = sweep_or_default(config);
    const simulation::Method methods[2] = {
        simulation::Method::hyper_pmom, simulation::Method::fixed_tau};
    std::vector<simulation::MetricRow> all_rows;
    std::vector<std::string> outputs;
    const fs::path dir(config.out_dir);
    for (int p : sweep) {
        simulation::SimSpec spec;
        spec.p = p;
        spec.n = config.n;
        spec.design = config.design;
        spec.pattern = config.pattern;
        spec.repetitions = config.reps;
        spec.seed = config.seed;
        search::SearchConfig scfg = resolve_search(config);
        const std::vector<simulation::MetricRow> rows =
            simulation::selection_experiment(spec, methods, config.hyper,
                                             scfg);
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());

        // operating points from the first repetition, hierarchical prior
        const simulation::Instance inst = simulation::sample_dataset(spec, 0);
        search::SearchConfig roc_scfg = scfg;
        roc_scfg.seed = derive_seed(spec.seed, 0x5EAC0DE, 0, 0);
        const search::ScoredModelSet set =
            search::run_search(inst.dataset, config.hyper, roc_scfg);
        const std::string roc_name = "roc_p" + std::to_string(p) + ".csv";
        io::write_text_file(
            (dir / roc_name).string(),
            io::roc_table_csv(simulation::roc_points(p, inst.truth, set)));
        outputs.push_back(roc_name);
    }
    io::write_text_file((dir / "metrics.csv").string(),
                        io::metrics_table_csv(all_rows));
    outputs.insert(outputs.begin(), "metrics.csv");
    write_manifest(config, outputs);
    std::cout << io::metrics_table_csv(all_rows);
    return 0;
}

int run_ratio(const RunConfig& config) {
    const std::vector<int> sweep = sweep_or_default(config);
    simulation::SimSpec spec;
    spec.n = config.n;
    spec.design = config.design;
    spec.pattern = config.pattern;
    spec.repetitions = config.reps;
    spec.seed = config.seed;
    std::vector<simulation::RatioRow> rows;
    for (int scenario = 1; scenario <= 4; ++scenario) {
        const std::vector<simulation::RatioRow> part =
            simulation::ratio_experiment(spec, sweep, scenario, config.hyper);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const fs::path dir(config.out_dir);
    io::write_text_file((dir / "ratio.csv").string(),
                        io::ratio_table_csv(rows));
    write_manifest(config, {"ratio.csv"});
    std::cout << io::ratio_table_csv(rows);
    return 0;
}

struct CheckLog {
    ordered_json checks = ordered_json::array();
    bool all_ok = true;

    void record(const std::string& name, bool ok,
                const std::string& detail = "") {
        checks.push_back({{"name", name},
                          {"ok", ok},
                          {"detail", detail}});
        all_ok = all_ok && ok;
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!ok && !detail.empty()) std::cout << ": " << detail;
        std::cout << "\n";
    }
};

int run_verify(const RunConfig& config) {
    CheckLog log;
    HyperConfig cfg = config.hyper;

    simulation::SimSpec spec;
    spec.p = 25;
    spec.n = 60;
    spec.design = simulation::Design::ar1;
    spec.seed = config.seed;
    spec.pattern = simulation::Pattern::custom;
    spec.custom_beta = Eigen::VectorXd::Zero(25);
    spec.custom_beta[0] = 1.5;
    spec.custom_beta[3] = -1.2;
    spec.custom_beta[7] = 1.2;
    const simulation::Instance inst = simulation::sample_dataset(spec, 0);
    const Dataset& data = inst.dataset;

    try {
        // the log joint must equal the sum of its published parts
        Rng rng(derive_seed(config.seed, 0xC0FFEE));
        ModelIndex model({0, 3, 7});
        ParamPoint point;
        point.beta = Eigen::VectorXd(3);
        for (int i = 0; i < 3; ++i) point.beta[i] = rng.normal();
        for (int i = 0; i < 3; ++i) {
            if (std::abs(point.beta[i]) < 0.05) point.beta[i] = 0.3;
        }
        point.tau = std::exp(rng.normal() * 0.5);
        point.sigma2 = std::exp(rng.normal() * 0.5);
        const double whole = priors::log_joint(data, model, point, cfg);
        const double parts =
            priors::log_pmom_prior(point.beta, point.tau, point.sigma2, cfg) +
            priors::log_tau_prior(point.tau, data.n()) +
            priors::log_sigma2_prior(point.sigma2, cfg) +
            priors::gaussian_loglik(data, model, point.beta, point.sigma2);
        log.record("log joint decomposition",
                   std::abs(whole - parts) < 1e-10);

        const double closed = laplace::null_log_marginal(data, cfg);
        const double quad_null =
            oracle::quadrature_log_marginal(data, ModelIndex{}, cfg).value;
        log.record("null model closed form",
                   std::abs(closed - quad_null) <
                       1e-8 * std::max(1.0, std::abs(closed)),
                   "difference " + std::to_string(closed - quad_null));

        bool fd_ok = true;
        std::string fd_detail;
        for (int trial = 0; trial < 5; ++trial) {
            ParamPoint q;
            q.beta = Eigen::VectorXd(3);
            for (int i = 0; i < 3; ++i) {
                double b = rng.normal();
                if (std::abs(b) < 0.05) b = b < 0 ? -0.3 : 0.3;
                q.beta[i] = b;
            }
            q.tau = std::exp(rng.normal() * 0.5);
            q.sigma2 = std::exp(rng.normal() * 0.5);
            const double gdev =
                oracle::finite_difference_gradient_check(data, model, q, cfg);
            const double hdev =
                oracle::finite_difference_hessian_check(data, model, q, cfg);
            if (gdev > 1e-6 || hdev > 1e-5) {
                fd_ok = false;
                fd_detail = "gradient " + std::to_string(gdev) +
                            ", hessian " + std::to_string(hdev);
                break;
            }
        }
        log.record("derivatives match finite differences", fd_ok, fd_detail);

        // the scale directions keep a fixed-shape profile, so the full
        // hierarchical approximation carries a small size-dependent offset
        // that never vanishes with n; the fixed-scale variant loses it
        const ModelIndex single({0});
        oracle::QuadratureConfig qcfg;
        qcfg.hermite_nodes = 16;
        qcfg.outer_nodes = 60;
        qcfg.rel_tol = 1e-6;
        const oracle::QuadratureResult quad =
            oracle::quadrature_log_marginal(data, single, cfg, qcfg);
        const double lap = laplace::log_marginal(data, single, cfg);
        log.record("laplace near quadrature, hierarchical scale",
                   quad.converged && std::abs(lap - quad.value) < 0.6,
                   "difference " + std::to_string(lap - quad.value));
        HyperConfig fixed_cfg = cfg;
        fixed_cfg.tau_mode = TauMode::fixed;
        const oracle::QuadratureResult fquad =
            oracle::quadrature_log_marginal(data, single, fixed_cfg, qcfg);
        const double flap = laplace::log_marginal(data, single, fixed_cfg);
        log.record("laplace near quadrature, fixed scale",
                   fquad.converged && std::abs(flap - fquad.value) < 0.15,
                   "difference " + std::to_string(flap - fquad.value));

        const oracle::TailCheckReport tail =
            oracle::chisq_tail_check(10, 20.0, 0.0, 200000,
                                     derive_seed(config.seed, 0x7A11));
        log.record("chi-squared tail bound", tail.pass);

        search::SearchConfig scfg = resolve_search(config);
        scfg.iterations_per_temperature = 10;
        const search::ScoredModelSet a =
            search::run_search(data, cfg, scfg);
        const search::ScoredModelSet b =
            search::run_search(data, cfg, scfg);
        const bool same = a.visits == b.visits &&
                          search::map_model(a).model ==
                              search::map_model(b).model;
        log.record("search determinism", same);
        log.record("search recovers planted signal",
                   search::map_model(a).model == inst.truth,
                   "found " + search::map_model(a).model.to_string());
    } catch (const std::exception& err) {
        log.record("verify run", false, err.what());
    }

    ordered_json report;
    report["checks"] = log.checks;
    report["ok"] = log.all_ok;
    io::write_text_file(
        (fs::path(config.out_dir) / "verify_report.json").string(),
        report.dump(2) + "\n");
    write_manifest(config, {"verify_report.json"});
    return log.all_ok ? 0 : 1;
}

} // namespace

bool apply_env_seed(RunConfig& config) {
    const char* env = std::getenv("NLSELECT_SEED");
    if (!env || !*env) return false;
    char* end = nullptr;
    const unsigned long long value = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
        throw Error("NLSELECT_SEED must be an unsigned integer");
    }
    config.seed = static_cast<std::uint64_t>(value);
    return true;
}

std::string version_string() { return "0.1.0"; }

int run(const RunConfig& config) {
    validate_hyper(config.hyper);
    if (config.threads < 1) throw Error("threads must be at least 1");
    fs::create_directories(config.out_dir);
    switch (config.command) {
        case RunConfig::Command::select: return run_select(config);
        case RunConfig::Command::simulate: return run_simulate(config);
        case RunConfig::Command::ratio: return run_ratio(config);
        case RunConfig::Command::verify: return run_verify(config);
    }
    return 2;
}

} // namespace nlselect
