#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlselect/laplace.hpp"
#include "nlselect/types.hpp"

namespace nlselect::search {

/* Shotgun stochastic search with screening.  Each step scores the
 * addition, deletion and swap neighborhoods of the current model
 * (swap candidates restricted to a screened set of columns), then
 * moves randomly with probabilities proportional to
 * exp(log posterior / temperature) along a cooling ladder.  Every
 * scored model is retained, so the result doubles as a posterior
 * summary over the visited region.
 */

struct SearchConfig {
    std::vector<double> temperature_ladder; // empty: geometric 3 -> 1, 10 rungs
    int iterations_per_temperature = 30;
    int screen_size = 0; // 0: max(20, ceil(n / log n))
    int q_n = 0;         // 0: take the cap from the hyper config
    std::uint64_t seed = 1;
    int threads = 1;
};

std::vector<double> default_ladder();
int default_screen_size(int n);

/// Columns ranked by |correlation| with the residual of the current
/// fit; ties break toward the smaller index.
std::vector<int> screen(const Dataset& data, const ModelIndex& model,
                        const Eigen::VectorXd& current_beta, int screen_size);

struct NeighborSets {
    std::vector<ModelIndex> additions;
    std::vector<ModelIndex> deletions;
    std::vector<ModelIndex> swaps;

    /// Flattened in enumeration order: additions, deletions, swaps.
    std::vector<ModelIndex> all() const;
};

/// Neighborhood of a model: screened additions respecting the size
/// cap, all single deletions, and one-out-one-in swaps.
NeighborSets neighbors(const ModelIndex& model, int p, int q_n,
                       std::span<const int> screened);

struct ScoredModelSet {
    std::map<ModelIndex, laplace::ScoredModel> entries;
    std::vector<ModelIndex> visits; // accepted moves, in order
    std::vector<std::pair<ModelIndex, std::string>> failures;
};

/// Run the annealed search; requires a standardized dataset.
ScoredModelSet run_search(const Dataset& data, const HyperConfig& cfg,
                          const SearchConfig& scfg);

/// Best finite-scored model: highest log posterior, then smaller
/// size, then lexicographically smaller indices.
laplace::ScoredModel map_model(const ScoredModelSet& set);

} // namespace nlselect::search
