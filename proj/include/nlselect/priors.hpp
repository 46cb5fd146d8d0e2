#pragma once

#include <Eigen/Dense>

#include "nlselect/types.hpp"

namespace nlselect::priors {

/* Log densities for the hierarchical product-moment prior.  All
 * functions return natural-log values and keep every additive
 * constant, so sums of these terms match the exact marginal
 * likelihood identities used by the quadrature checks.
 */

/// log((m)!!) for odd m >= -1; log_double_factorial(-1) = 0.
double log_double_factorial(int m);

/// Normalizer d_k with the identity scale matrix: ((2r-1)!!)^(-k).
double dk_normalizer(int k, int r);

/// Product-moment prior on the active coefficients given (tau, sigma2).
double log_pmom_prior(const Eigen::VectorXd& beta, double tau, double sigma2,
                      const HyperConfig& cfg);

/// Coefficient prior with tau integrated out against IG(1/2, n/2).
double log_marginal_beta_prior(const Eigen::VectorXd& beta, double sigma2,
                               int n, const HyperConfig& cfg);

/// IG(1/2, n/2) density for the scale tau.
double log_tau_prior(double tau, int n);

/// IG(alpha1, alpha2) density for the noise variance.
double log_sigma2_prior(double sigma2, const HyperConfig& cfg);

/// Unnormalized log prior mass of a model; -inf above the size cap.
double log_model_prior(const ModelIndex& model, const HyperConfig& cfg,
                       int p, int n);

/// Gaussian log likelihood of y given the active columns and beta.
double gaussian_loglik(const Dataset& data, const ModelIndex& model,
                       const Eigen::VectorXd& beta, double sigma2);

/// Full log joint over (beta, tau, sigma2) for a model: the integrand
/// whose normalizing constant is the model marginal likelihood.
double log_joint(const Dataset& data, const ModelIndex& model,
                 const ParamPoint& point, const HyperConfig& cfg);

} // namespace nlselect::priors
