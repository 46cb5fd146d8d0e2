#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlselect/run.hpp"

namespace {

using nlselect::RunConfig;

/// "hier" or "fixed:<value>".
void parse_tau(const std::string& text, nlselect::HyperConfig& hyper) {
    if (text == "hier" || text == "hierarchical") {
        hyper.tau_mode = nlselect::TauMode::hierarchical;
        return;
    }
    if (text.rfind("fixed:", 0) == 0) {
        hyper.tau_mode = nlselect::TauMode::fixed;
        hyper.fixed_tau = std::stod(text.substr(6));
        return;
    }
    if (text == "fixed") {
        hyper.tau_mode = nlselect::TauMode::fixed;
        return;
    }
    throw CLI::ValidationError("--tau", "use 'hier' or 'fixed:<value>'");
}

/// "uniform" or "complexity:<c1>,<c2>".
void parse_model_prior(const std::string& text,
                       nlselect::HyperConfig& hyper) {
    if (text == "uniform") {
        hyper.model_prior.kind =
            nlselect::ModelPriorSpec::Kind::uniform_restricted;
        return;
    }
    if (text.rfind("complexity", 0) == 0) {
        hyper.model_prior.kind = nlselect::ModelPriorSpec::Kind::complexity;
        if (text.size() > 10 && text[10] == ':') {
            const std::string args = text.substr(11);
            const std::size_t comma = args.find(',');
            if (comma == std::string::npos) {
                throw CLI::ValidationError("--model-prior",
                                           "use 'complexity:<c1>,<c2>'");
            }
            hyper.model_prior.c1 = std::stod(args.substr(0, comma));
            hyper.model_prior.c2 = std::stod(args.substr(comma + 1));
        }
        return;
    }
    throw CLI::ValidationError("--model-prior",
                               "use 'uniform' or 'complexity:<c1>,<c2>'");
}

void add_shared_flags(CLI::App* cmd, RunConfig& config, std::string& tau,
                      std::string& model_prior, std::string& design,
                      std::string& pattern) {
    cmd->add_option("--seed", config.seed, "root random seed");
    cmd->add_option("--r", config.hyper.r, "prior polynomial order");
    cmd->add_option("--alpha1", config.hyper.alpha1,
                    "noise variance prior shape");
    cmd->add_option("--alpha2", config.hyper.alpha2,
                    "noise variance prior scale");
    cmd->add_option("--tau", tau, "'hier' or 'fixed:<value>'");
    cmd->add_option("--model-prior", model_prior,
                    "'uniform' or 'complexity:<c1>,<c2>'");
    cmd->add_option("--qn", config.hyper.q_n,
                    "model size cap (0: ceil(n/2))");
    cmd->add_option("--threads", config.threads, "worker threads");
    cmd->add_option("--out", config.out_dir, "output directory");
    cmd->add_option("--design", design, "iso, cs, or ar1");
    cmd->add_option("--pattern", pattern, "large or mixed");
    cmd->add_option("--screen-size", config.search.screen_size,
                    "screened columns per step (0: auto)");
    cmd->add_option("--iters", config.search.iterations_per_temperature,
                    "iterations per temperature");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian variable selection under product-moment priors"};
    app.require_subcommand(1);

    RunConfig config;
    std::string tau, model_prior, design = "iso", pattern = "large";

    CLI::App* select = app.add_subcommand(
        "select", "search for the best model on a CSV dataset");
    select->add_option("--data", config.data_path, "CSV file with header")
        ->required();
    select->add_option("--response", config.response,
                       "response column name");
    select->add_option("--holdout", config.holdout,
                       "holdout fraction for prediction error");
    add_shared_flags(select, config, tau, model_prior, design, pattern);

    CLI::App* simulate = app.add_subcommand(
        "simulate", "selection accuracy on synthetic data");
    simulate->add_option("--p", config.p_sweep, "problem sizes to sweep");
    simulate->add_option("--n", config.n, "sample size (0: p/5)");
    simulate->add_option("--reps", config.reps, "repetitions");
    add_shared_flags(simulate, config, tau, model_prior, design, pattern);

    CLI::App* ratio = app.add_subcommand(
        "ratio", "posterior ratio consistency sweep");
    ratio->add_option("--p", config.p_sweep, "problem sizes to sweep");
    ratio->add_option("--n", config.n, "sample size (0: p/5)");
    ratio->add_option("--reps", config.reps, "repetitions");
    add_shared_flags(ratio, config, tau, model_prior, design, pattern);

    CLI::App* verify =
        app.add_subcommand("verify", "run built-in integrity checks");
    add_shared_flags(verify, config, tau, model_prior, design, pattern);

    CLI11_PARSE(app, argc, argv);

    try {
        if (select->parsed()) config.command = RunConfig::Command::select;
        if (simulate->parsed()) config.command = RunConfig::Command::simulate;
        if (ratio->parsed()) config.command = RunConfig::Command::ratio;
        if (verify->parsed()) config.command = RunConfig::Command::verify;
        if (!tau.empty()) parse_tau(tau, config.hyper);
        if (!model_prior.empty()) parse_model_prior(model_prior, config.hyper);
        config.design = nlselect::simulation::design_from_name(design);
        config.pattern = nlselect::simulation::pattern_from_name(pattern);
        nlselect::apply_env_seed(config);
        return nlselect::run(config);
    } catch (const CLI::Error& err) {
        return app.exit(err);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
