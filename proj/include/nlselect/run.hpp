#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlselect/search.hpp"
#include "nlselect/simulation.hpp"
#include "nlselect/types.hpp"

namespace nlselect {

/* Resolved configuration for one CLI run.  The command-line front end
 * only parses flags into this struct; everything observable happens
 * in run(), which makes the behavior testable without a subprocess.
 */
struct RunConfig {
    enum class Command { select, simulate, ratio, verify };
    Command command = Command::verify;

    // select
    std::string data_path;
    std::string response = "y";
    double holdout = 0.2;

    // simulate / ratio
    std::vector<int> p_sweep; // default {100, 200, 400}
    int n = 0;                // 0 derives p / 5
    simulation::Design design = simulation::Design::isotropic;
    simulation::Pattern pattern = simulation::Pattern::large;
    int reps = 20;

    // shared
    std::uint64_t seed = 1;
    HyperConfig hyper;
    search::SearchConfig search;
    std::string out_dir = ".";
    int threads = 1;
};

/// NLSELECT_SEED overrides the configured seed; true when it did.
bool apply_env_seed(RunConfig& config);

/// Execute a run, writing artifacts and a manifest into out_dir.
/// Returns the process exit status (verify: nonzero on failed checks).
int run(const RunConfig& config);

std::string version_string();

} // namespace nlselect
