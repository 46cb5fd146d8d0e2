#pragma once

#include <Eigen/Dense>
#include <map>
#include <mutex>
#include <optional>

#include "nlselect/types.hpp"

namespace nlselect::laplace {

/* Laplace approximation of model marginal likelihoods.  The mode of
 * the log joint is found by a safeguarded Newton iteration over
 * (beta, log tau, log sigma2); the curvature correction uses the
 * negative Hessian in the original (beta, tau, sigma2) coordinates.
 * When tau is fixed the tau coordinate drops out and the
 * approximation runs over (beta, sigma2).
 */

struct ModeResult {
    ParamPoint point;
    double objective = 0.0;  // log joint value at the mode
    Eigen::MatrixXd hessian; // negative Hessian, original coordinates
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
};

struct ScoredModel {
    ModelIndex model;
    double log_marginal = 0.0;
    double log_posterior_unnorm = 0.0;
};

/// Gradient of the log joint in the optimizer's coordinates
/// (beta, log tau, log sigma2); the tau entry drops when tau is fixed.
Eigen::VectorXd gradient(const Dataset& data, const ModelIndex& model,
                         const ParamPoint& point, const HyperConfig& cfg);

/// Gradient in the original coordinates (beta, tau, sigma2).
Eigen::VectorXd gradient_original(const Dataset& data, const ModelIndex& model,
                                  const ParamPoint& point,
                                  const HyperConfig& cfg);

/// Negative Hessian of the log joint in original coordinates.
Eigen::MatrixXd hessian(const Dataset& data, const ModelIndex& model,
                        const ParamPoint& point, const HyperConfig& cfg);

/// Posterior mode of the log joint for a non-empty model.
ModeResult find_mode(const Dataset& data, const ModelIndex& model,
                     const HyperConfig& cfg,
                     const std::optional<ParamPoint>& init = std::nullopt);

/// Laplace-approximated log marginal likelihood; exact for the empty model.
double log_marginal(const Dataset& data, const ModelIndex& model,
                    const HyperConfig& cfg);

/// Closed-form log marginal of the intercept-only model.
double null_log_marginal(const Dataset& data, const HyperConfig& cfg);

/// log posterior odds of candidate against reference.
double log_posterior_ratio(const Dataset& data, const ModelIndex& candidate,
                           const ModelIndex& reference, const HyperConfig& cfg);

struct Evaluation {
    double log_marginal = 0.0;
    Eigen::VectorXd beta_hat; // mode coefficients; empty for the null model
};

/// Memoized per-model scores; safe to share across threads.
class ScoreCache {
public:
    std::optional<Evaluation> lookup(const ModelIndex& model) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = entries_.find(model);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void insert(const ModelIndex& model, Evaluation eval) {
        std::lock_guard<std::mutex> lock(mu_);
        entries_.emplace(model, std::move(eval));
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return entries_.size();
    }

private:
    mutable std::mutex mu_;
    std::map<ModelIndex, Evaluation> entries_;
};

/// log_marginal plus the mode coefficients, memoized through cache.
Evaluation evaluate_model(const Dataset& data, const ModelIndex& model,
                          const HyperConfig& cfg, ScoreCache* cache = nullptr);

/// Evaluation combined with the model prior into an unnormalized posterior.
ScoredModel score_model(const Dataset& data, const ModelIndex& model,
                        const HyperConfig& cfg, ScoreCache* cache = nullptr);

} // namespace nlselect::laplace
