#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlselect/rng.hpp"
#include "nlselect/search.hpp"
#include "nlselect/types.hpp"

namespace nlselect::simulation {

enum class Design { isotropic, compound_symmetry, ar1 };

/* Row covariance of the simulated design matrix.  Sampling is O(p)
 * per row: compound symmetry through one shared factor, AR(1)
 * through its recursion.
 */
class CovarianceModel {
public:
    CovarianceModel(Design design, int p, double rho);

    double entry(int i, int j) const;
    void sample_row(
        Rng& rng,
        Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const;

    Design design() const { return design_; }
    int p() const { return p_; }
    double rho() const { return rho_; }

private:
    Design design_;
    int p_;
    double rho_;
};

CovarianceModel make_covariance(Design design, int p, double rho = 0.5);

enum class Pattern { large, mixed, custom };

struct SimSpec {
    int p = 100;
    int n = 0; // 0 derives p / 5
    Design design = Design::isotropic;
    double rho = 0.5;
    Pattern pattern = Pattern::large;
    Eigen::VectorXd custom_beta; // length p when pattern == custom
    double sigma = 1.0;
    double sign_flip_prob = 0.5;
    int repetitions = 20;
    std::uint64_t seed = 1;
};

int effective_n(const SimSpec& spec);

struct Instance {
    Dataset dataset; // standardized
    ModelIndex truth;
    Eigen::VectorXd beta0; // generating coefficients on the raw scale
};

/// One simulated dataset; (spec, repetition) fully determines it.
Instance sample_dataset(const SimSpec& spec, int repetition = 0);

struct Metrics {
    double ppv = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

/// Counted over all p coordinates.  Conventions: PPV with an empty
/// selection is 0 unless the truth is also empty (then 1); TPR with
/// an empty truth is 1; FPR with no true negatives available is 0.
Metrics selection_metrics(const ModelIndex& selected, const ModelIndex& truth,
                          int p);

struct RatioRow {
    int p = 0;
    int scenario = 0;
    Design design = Design::isotropic;
    double mean_log_ratio = 0.0;
    double std_error = 0.0;
};

/// Mean log posterior ratio of a perturbed model against the truth
/// over repetitions, for each p in the sweep.  Scenarios: 1 drops
/// half the truth, 2 doubles it with noise columns, 3 is an arbitrary
/// half-size model, 4 an arbitrary double-size model.
std::vector<RatioRow> ratio_experiment(const SimSpec& base,
                                       std::span<const int> p_sweep,
                                       int scenario, const HyperConfig& cfg);

/// Seeded construction of the scenario model for one instance.
ModelIndex scenario_model(const ModelIndex& truth, int scenario, int p,
                          Rng& rng);

enum class Method { hyper_pmom, fixed_tau };

struct MetricRow {
    int p = 0;
    Design design = Design::isotropic;
    Pattern pattern = Pattern::large;
    Method method = Method::hyper_pmom;
    Metrics metrics;
};

/// Full selection pipeline over repetitions; means per method.
std::vector<MetricRow> selection_experiment(
    const SimSpec& spec, std::span<const Method> methods,
    const HyperConfig& base_cfg, const search::SearchConfig& base_search);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Posterior-weighted inclusion probabilities over the scored set.
Eigen::VectorXd inclusion_probabilities(int p,
                                        const search::ScoredModelSet& set);

/// Operating points swept over inclusion-probability thresholds,
/// from (0,0) down to (1,1).
std::vector<RocPoint> roc_points(int p, const ModelIndex& truth,
                                 const search::ScoredModelSet& set);

/// Least-squares refit on the training rows of the chosen columns,
/// scored by mean squared prediction error on the test rows.
double mspe(const Dataset& train, const Dataset& test,
            const ModelIndex& model);

const char* design_name(Design design);
const char* pattern_name(Pattern pattern);
const char* method_name(Method method);
Design design_from_name(const std::string& name);
Pattern pattern_from_name(const std::string& name);

} // namespace nlselect::simulation
