#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "nlselect/types.hpp"

namespace nlselect::oracle {

/* Independent ground truth for the approximations in the library:
 * deterministic quadrature for model marginals, exact Gaussian
 * polynomial moments, Monte Carlo tail-bound checks, and finite
 * difference derivative checks.  Nothing here reuses the mode-finding
 * or Laplace code paths.
 */

struct QuadratureConfig {
    int hermite_nodes = 64; // inner nodes per coefficient axis (min 16)
    int outer_nodes = 120;  // outer nodes per scale axis (min 16)
    double box_log_drop = 45.0; // integration box reaches this log drop
    double rel_tol = 1e-7;      // node-doubling self-check tolerance
};

struct QuadratureResult {
    double value = 0.0;      // log marginal likelihood
    double rel_change = 0.0; // node-doubling relative change
    bool converged = false;
};

struct GaussHermite {
    Eigen::VectorXd nodes;   // abscissas for weight exp(-x^2)
    Eigen::VectorXd weights;
};

struct GaussLegendre {
    Eigen::VectorXd nodes;   // abscissas on [-1, 1]
    Eigen::VectorXd weights;
};

/// Golub-Welsch nodes and weights, physicists' convention.
GaussHermite gauss_hermite(int m);

/// Golub-Welsch nodes and weights on [-1, 1].
GaussLegendre gauss_legendre(int m);

/// E[prod_i beta_i^(2r)] under N(mu, cov); exact for polynomial order.
double gaussian_product_moment(const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& cov, int r,
                               int nodes = 64);

/// E[prod_i beta_i^(e_i)] under N(mu, cov), dimension at most 2.
double gaussian_poly_moment(const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& cov,
                            const std::vector<int>& exponents,
                            int nodes = 64);

/// Log marginal likelihood by deterministic quadrature (models of
/// size <= 2); tau and sigma2 integrated on an adaptive box after the
/// coefficients are integrated out exactly.
QuadratureResult quadrature_log_marginal(const Dataset& data,
                                         const ModelIndex& model,
                                         const HyperConfig& cfg,
                                         const QuadratureConfig& qcfg = {});

/// Value of quadrature_log_marginal; throws NonConvergedQuadrature when
/// the node-doubling self-check fails.
double quadrature_log_marginal_value(const Dataset& data,
                                     const ModelIndex& model,
                                     const HyperConfig& cfg,
                                     const QuadratureConfig& qcfg = {});

struct PosteriorBetaMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
};

/// Posterior mean and sd of the active coefficients by quadrature.
PosteriorBetaMoments quadrature_posterior_beta_moments(
    const Dataset& data, const ModelIndex& model, const HyperConfig& cfg,
    const QuadratureConfig& qcfg = {});

struct TailCheckReport {
    int dof = 0;
    double noncentrality = 0.0;
    double threshold = 0.0;      // deviation a being tested
    double empirical_prob = 0.0;
    double bound = 0.0;          // bound the check gates on
    double bound_stated = 0.0;   // looser classical form, for reference
    double std_error = 0.0;      // binomial standard error
    long draws = 0;
    bool pass = false;
};

/* Empirical tail probability of a (non)central chi-squared deviation
 * against its exponential bound.  Central (lambda == 0) checks
 * P(|X - p| > a) against 2 exp(-a^2 / (4 (p + a))); noncentral checks
 * P(X - (p + lambda) > a) against exp(-(p/2) (q - log(1+q))) with
 * q = a / (p + lambda).  Passes when the empirical frequency is below
 * bound + 3 standard errors.
 */
TailCheckReport chisq_tail_check(int dof, double a, double noncentrality,
                                 long draws, std::uint64_t seed);

/// Central-difference gradient with steps scaled to the point.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x);

/// Central second-difference Hessian.
Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x);

/// max_ij |a_ij - b_ij| / max(1, |a_ij|, |b_ij|).
double max_rel_deviation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Worst relative deviation between the analytic gradient of the log
/// joint (optimizer coordinates) and central differences.
double finite_difference_gradient_check(const Dataset& data,
                                        const ModelIndex& model,
                                        const ParamPoint& point,
                                        const HyperConfig& cfg);

/// Worst relative deviation between the analytic negative Hessian
/// (original coordinates) and central second differences.
double finite_difference_hessian_check(const Dataset& data,
                                       const ModelIndex& model,
                                       const ParamPoint& point,
                                       const HyperConfig& cfg);

/// Log of the integral of exp(log_f) over the real line; the
/// integration interval grows from center_guess until the integrand
/// has dropped by log_drop on both ends.
double log_integrate_1d(const std::function<double(double)>& log_f,
                        double center_guess, int nodes = 200,
                        double log_drop = 45.0);

} // namespace nlselect::oracle
