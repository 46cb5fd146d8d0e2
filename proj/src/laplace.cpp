#include "nlselect/laplace.hpp"

#include <cmath>
#include <limits>

#include "nlselect/priors.hpp"

namespace nlselect::laplace {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInf = std::numeric_limits<double>::infinity();

/* Per-model sufficient statistics.  Every Newton step works off the
 * Gram matrix, so the data are touched once per model.
 */
struct Workspace {
    Eigen::MatrixXd G;   // X_k'X_k
    Eigen::VectorXd Xty; // X_k'y
    double yty = 0.0;
    int n = 0;
    int k = 0;
    double ldf = 0.0;       // log((2r-1)!!)
    double b_tau = 0.0;     // power of tau in the joint
    double c_sigma = 0.0;   // power of sigma2 in the joint
    double log_const = 0.0; // beta/tau/sigma2-free terms of the joint
    bool hierarchical = true;
    double fixed_tau = 1.0;
    int r = 2;
    double alpha2 = 0.0;
};

Workspace make_workspace(const Dataset& data, const ModelIndex& model,
                         const HyperConfig& cfg) {
    validate_dataset(data);
    validate_hyper(cfg);
    if (model.max_index() >= data.p()) {
        throw Error("model index out of range for p = " +
                    std::to_string(data.p()));
    }
    const int n = data.n();
    const int k = model.size();
    if (k > n) {
        throw Error("model size " + std::to_string(k) +
                    " exceeds sample size " + std::to_string(n));
    }
    Workspace ws;
    ws.n = n;
    ws.k = k;
    ws.r = cfg.r;
    ws.alpha2 = cfg.alpha2;
    ws.hierarchical = cfg.tau_mode == TauMode::hierarchical;
    ws.fixed_tau = cfg.fixed_tau;
    Eigen::MatrixXd Xk(n, k);
    for (int i = 0; i < k; ++i) {
        Xk.col(i) = data.X.col(model.indices()[i]);
    }
    ws.G = Xk.transpose() * Xk;
    ws.Xty = Xk.transpose() * data.y;
    ws.yty = data.y.squaredNorm();
    ws.ldf = priors::log_double_factorial(2 * cfg.r - 1);
    ws.b_tau = cfg.r * k + 0.5 * (k + 3);
    ws.c_sigma = cfg.r * k + 0.5 * (n + k) + cfg.alpha1 + 1.0;
    ws.log_const = -k * ws.ldf - 0.5 * (n + k) * kLog2Pi +
                   cfg.alpha1 * std::log(cfg.alpha2) - std::lgamma(cfg.alpha1);
    if (ws.hierarchical) {
        ws.log_const += 0.5 * std::log(0.5 * n) - std::lgamma(0.5);
    } else {
        ws.log_const -= (cfg.r * k + 0.5 * k) * std::log(cfg.fixed_tau);
    }
    return ws;
}

double rss(const Workspace& ws, const Eigen::VectorXd& beta) {
    if (ws.k == 0) return ws.yty;
    return ws.yty - 2.0 * beta.dot(ws.Xty) + beta.dot(ws.G * beta);
}

/* Log joint evaluated from the workspace.  theta holds the active
 * coordinates: (beta, u, w) hierarchical, (beta, w) fixed, with
 * u = log tau and w = log sigma2.  Returns -inf on points outside the
 * domain so the line search can reject them without exceptions.
 */
double eval_g(const Workspace& ws, const Eigen::VectorXd& theta) {
    const int k = ws.k;
    const Eigen::VectorXd beta = theta.head(k);
    const double w = theta[theta.size() - 1];
    const double u = ws.hierarchical ? theta[k] : std::log(ws.fixed_tau);
    const double tau = std::exp(u);
    const double inv_s2 = std::exp(-w);
    double log_beta_term = 0.0;
    for (int i = 0; i < k; ++i) {
        const double a = std::abs(beta[i]);
        if (a < 1e-300) return -kInf;
        log_beta_term += 2.0 * ws.r * std::log(a);
    }
    const double bb = beta.squaredNorm();
    double g = ws.log_const + log_beta_term - ws.c_sigma * w -
               0.5 * rss(ws, beta) * inv_s2 - 0.5 * bb * inv_s2 / tau -
               ws.alpha2 * inv_s2;
    if (ws.hierarchical) {
        g += -ws.b_tau * u - 0.5 * ws.n * std::exp(-u);
    }
    return g;
}

int dim_of(const Workspace& ws) { return ws.k + (ws.hierarchical ? 2 : 1); }

Eigen::VectorXd eval_grad(const Workspace& ws, const Eigen::VectorXd& theta) {
    const int k = ws.k;
    const Eigen::VectorXd beta = theta.head(k);
    const double w = theta[theta.size() - 1];
    const double u = ws.hierarchical ? theta[k] : std::log(ws.fixed_tau);
    const double inv_s2 = std::exp(-w);
    const double inv_ts2 = std::exp(-u) * inv_s2;
    const Eigen::VectorXd score = ws.G * beta - ws.Xty; // X'(X beta - y)
    Eigen::VectorXd grad(dim_of(ws));
    for (int i = 0; i < k; ++i) {
        grad[i] = -score[i] * inv_s2 - beta[i] * inv_ts2 +
                  2.0 * ws.r / beta[i];
    }
    const double bb = beta.squaredNorm();
    if (ws.hierarchical) {
        grad[k] = -ws.b_tau + 0.5 * bb * inv_ts2 +
                  0.5 * ws.n * std::exp(-u);
    }
    grad[grad.size() - 1] = -ws.c_sigma +
                            (0.5 * rss(ws, beta) + ws.alpha2) * inv_s2 +
                            0.5 * bb * inv_ts2;
    return grad;
}

Eigen::MatrixXd eval_hess(const Workspace& ws, const Eigen::VectorXd& theta) {
    const int k = ws.k;
    const int d = dim_of(ws);
    const Eigen::VectorXd beta = theta.head(k);
    const double w = theta[theta.size() - 1];
    const double u = ws.hierarchical ? theta[k] : std::log(ws.fixed_tau);
    const double inv_s2 = std::exp(-w);
    const double inv_ts2 = std::exp(-u) * inv_s2;
    const Eigen::VectorXd score = ws.G * beta - ws.Xty;
    const double bb = beta.squaredNorm();
    Eigen::MatrixXd H(d, d);
    H.topLeftCorner(k, k) = -ws.G * inv_s2;
    for (int i = 0; i < k; ++i) {
        H(i, i) += -inv_ts2 - 2.0 * ws.r / (beta[i] * beta[i]);
    }
    const int iw = d - 1;
    for (int i = 0; i < k; ++i) {
        const double hw = score[i] * inv_s2 + beta[i] * inv_ts2;
        H(i, iw) = hw;
        H(iw, i) = hw;
    }
    H(iw, iw) = -(0.5 * rss(ws, beta) + ws.alpha2) * inv_s2 -
                0.5 * bb * inv_ts2;
    if (ws.hierarchical) {
        for (int i = 0; i < k; ++i) {
            H(i, k) = beta[i] * inv_ts2;
            H(k, i) = beta[i] * inv_ts2;
        }
        H(k, k) = -0.5 * bb * inv_ts2 - 0.5 * ws.n * std::exp(-u);
        H(k, iw) = -0.5 * bb * inv_ts2;
        H(iw, k) = H(k, iw);
    }
    return H;
}

/// Negative Hessian in original coordinates (beta, tau, sigma2).
Eigen::MatrixXd eval_neg_hess_original(const Workspace& ws,
                                       const Eigen::VectorXd& beta,
                                       double tau, double sigma2) {
    const int k = ws.k;
    const int d = dim_of(ws);
    const double s2 = sigma2;
    const double s4 = s2 * s2;
    const double s6 = s4 * s2;
    const Eigen::VectorXd score = ws.G * beta - ws.Xty;
    const double bb = beta.squaredNorm();
    const double r2 = rss(ws, beta);
    Eigen::MatrixXd V(d, d);
    V.topLeftCorner(k, k) = ws.G / s2;
    for (int i = 0; i < k; ++i) {
        V(i, i) += 1.0 / (tau * s2) + 2.0 * ws.r / (beta[i] * beta[i]);
    }
    const int iw = d - 1;
    for (int i = 0; i < k; ++i) {
        const double v = -beta[i] / (tau * s4) - score[i] / s4;
        V(i, iw) = v;
        V(iw, i) = v;
    }
    V(iw, iw) = -ws.c_sigma / s4 + bb / (tau * s6) + r2 / s6 +
                2.0 * ws.alpha2 / s6;
    if (ws.hierarchical) {
        const double t2 = tau * tau;
        const double t3 = t2 * tau;
        for (int i = 0; i < k; ++i) {
            V(i, k) = -beta[i] / (t2 * s2);
            V(k, i) = V(i, k);
        }
        V(k, k) = -ws.b_tau / t2 + bb / (t3 * s2) + ws.n / t3;
        V(k, iw) = 0.5 * bb / (t2 * s4);
        V(iw, k) = V(k, iw);
    }
    return V;
}

Eigen::VectorXd pack_theta(const Workspace& ws, const ParamPoint& point) {
    if (point.beta.size() != ws.k) {
        throw Error("beta length does not match model size");
    }
    if (!(point.sigma2 > 0.0)) {
        throw NonPositiveScale("sigma2 must be positive");
    }
    Eigen::VectorXd theta(dim_of(ws));
    theta.head(ws.k) = point.beta;
    if (ws.hierarchical) {
        if (!(point.tau > 0.0)) {
            throw NonPositiveScale("tau must be positive");
        }
        theta[ws.k] = std::log(point.tau);
    }
    theta[theta.size() - 1] = std::log(point.sigma2);
    return theta;
}

ParamPoint unpack_theta(const Workspace& ws, const Eigen::VectorXd& theta) {
    ParamPoint point;
    point.beta = theta.head(ws.k);
    point.tau = ws.hierarchical ? std::exp(theta[ws.k]) : ws.fixed_tau;
    point.sigma2 = std::exp(theta[theta.size() - 1]);
    return point;
}

struct NewtonOutcome {
    Eigen::VectorXd theta;
    double value = -kInf;
    int iterations = 0;
    double grad_norm = kInf;
    bool converged = false;
};

/* Safeguarded ascent: Newton direction when the negative Hessian is
 * positive definite, steepest ascent otherwise, with Armijo
 * backtracking in both cases.
 */
NewtonOutcome maximize(const Workspace& ws, Eigen::VectorXd theta) {
    constexpr int kMaxIter = 200;
    constexpr double kArmijo = 1e-4;
    NewtonOutcome out;
    double g = eval_g(ws, theta);
    if (!std::isfinite(g)) {
        throw NonConvergence("log joint not finite at the starting point");
    }
    for (int iter = 1; iter <= kMaxIter; ++iter) {
        out.iterations = iter;
        const Eigen::VectorXd grad = eval_grad(ws, theta);
        out.grad_norm = grad.lpNorm<Eigen::Infinity>();
        if (out.grad_norm <= 1e-6 * (1.0 + std::abs(g))) {
            out.converged = true;
            break;
        }
        const Eigen::MatrixXd negH = -eval_hess(ws, theta);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(negH);
        Eigen::VectorXd dir;
        bool have_newton = ldlt.info() == Eigen::Success &&
                           (ldlt.vectorD().array() > 0.0).all();
        if (have_newton) {
            dir = ldlt.solve(grad);
            if (!dir.allFinite() || grad.dot(dir) <= 0.0) have_newton = false;
        }
        if (!have_newton) {
            dir = grad / std::max(1.0, grad.norm());
        }
        const auto try_direction = [&](const Eigen::VectorXd& d) {
            const double slope = grad.dot(d);
            double step = 1.0;
            while (step >= 1e-14) {
                const Eigen::VectorXd cand = theta + step * d;
                const double gc = eval_g(ws, cand);
                if (std::isfinite(gc) && gc >= g + kArmijo * step * slope) {
                    theta = cand;
                    g = gc;
                    return true;
                }
                step *= 0.5;
            }
            return false;
        };
        bool accepted = try_direction(dir);
        if (!accepted && have_newton) {
            // the Newton step can overshoot the narrow curved valley the
            // quartic prior carves near a zero coefficient; plain ascent
            // still makes progress there
            accepted = try_direction(grad / std::max(1.0, grad.norm()));
        }
        if (!accepted) break; // line search stalled; report as-is
    }
    // final gradient check, in case the loop exited on the last step
    const Eigen::VectorXd grad = eval_grad(ws, theta);
    out.grad_norm = grad.lpNorm<Eigen::Infinity>();
    out.converged = out.grad_norm <= 1e-6 * (1.0 + std::abs(g));
    out.theta = std::move(theta);
    out.value = g;
    return out;
}

Eigen::VectorXd default_start(const Workspace& ws, double floor_mag,
                              double tau_start) {
    const int k = ws.k;
    const double tau0 = ws.hierarchical ? tau_start : ws.fixed_tau;
    // the prior's Gaussian factor is a ridge with penalty 1/tau; using
    // it keeps the start well conditioned even for saturated models
    Eigen::MatrixXd ridge = ws.G;
    ridge.diagonal().array() += 1.0 / tau0 + 1e-6 * ws.n;
    Eigen::VectorXd beta = ridge.llt().solve(ws.Xty);
    if (!beta.allFinite()) {
        throw SingularDesign("ridge-regularized least squares failed");
    }
    for (int i = 0; i < k; ++i) {
        // keep the start clear of the density's zeros
        const double sign = beta[i] < 0.0 ? -1.0 : 1.0;
        if (std::abs(beta[i]) < floor_mag) beta[i] = sign * floor_mag;
    }
    // conditional mode of sigma2 given (beta, tau0); never collapses to
    // zero because the scale prior keeps alpha2 in the numerator
    const double scaled = rss(ws, beta) + beta.squaredNorm() / tau0;
    const double resid_var = (scaled + 2.0 * ws.alpha2) / (2.0 * ws.c_sigma);
    Eigen::VectorXd theta(dim_of(ws));
    theta.head(k) = beta;
    if (ws.hierarchical) theta[k] = std::log(tau0);
    theta[theta.size() - 1] = std::log(resid_var);
    return theta;
}

double log_det_pd(const Eigen::MatrixXd& V, const ModelIndex& model) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(V);
    if (ldlt.info() == Eigen::Success &&
        (ldlt.vectorD().array() > 0.0).all()) {
        return ldlt.vectorD().array().log().sum();
    }
    // LDLT can be inconclusive near the PD boundary; settle it exactly
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
    if (es.info() != Eigen::Success ||
        es.eigenvalues().minCoeff() <= 0.0) {
        throw NonConvergence("negative Hessian is not positive definite "
                             "at the mode of model " + model.to_string());
    }
    return es.eigenvalues().array().log().sum();
}

ModeResult find_mode_ws(const Workspace& ws, const ModelIndex& model,
                        const std::optional<ParamPoint>& init) {
    if (ws.k == 0) {
        throw Error("find_mode requires a non-empty model");
    }
    NewtonOutcome out;
    if (init) {
        out = maximize(ws, pack_theta(ws, *init));
    } else {
        /* Deterministic restart ladder.  Nearly collinear saturated
         * designs (k close to n on centered columns) leave coefficients
         * the data cannot pin; the least-squares start then sits where
         * the quartic prior's gradient is enormous.  Later rungs floor
         * small coefficients further from zero and shrink the start
         * toward the prior until the ascent converges.
         */
        constexpr struct {
            double floor, tau;
        } kStarts[] = {{1e-3, 1.0}, {0.1, 1.0}, {0.2, 1.0},
                       {0.05, 0.3}, {0.5, 0.1}};
        for (const auto& s : kStarts) {
            out = maximize(ws, default_start(ws, s.floor, s.tau));
            if (out.converged) break;
        }
    }
    if (!out.converged) {
        throw NonConvergence("mode search did not converge for model " +
                             model.to_string() + " (grad norm " +
                             std::to_string(out.grad_norm) + ")");
    }
    ModeResult result;
    result.point = unpack_theta(ws, out.theta);
    result.objective = out.value;
    result.hessian = eval_neg_hess_original(ws, result.point.beta,
                                            result.point.tau,
                                            result.point.sigma2);
    result.converged = true;
    result.iterations = out.iterations;
    result.grad_norm = out.grad_norm;
    return result;
}

double log_marginal_from_mode(const Workspace& ws, const ModelIndex& model,
                              const ModeResult& mode) {
    const int d = dim_of(ws);
    const double logdet = log_det_pd(mode.hessian, model);
    return 0.5 * d * kLog2Pi + mode.objective - 0.5 * logdet;
}

} // namespace

Eigen::VectorXd gradient(const Dataset& data, const ModelIndex& model,
                         const ParamPoint& point, const HyperConfig& cfg) {
    Workspace ws = make_workspace(data, model, cfg);
    return eval_grad(ws, pack_theta(ws, point));
}

Eigen::VectorXd gradient_original(const Dataset& data, const ModelIndex& model,
                                  const ParamPoint& point,
                                  const HyperConfig& cfg) {
    Workspace ws = make_workspace(data, model, cfg);
    Eigen::VectorXd grad = eval_grad(ws, pack_theta(ws, point));
    // d f / d tau = (d g / d u) / tau, and likewise for sigma2
    if (ws.hierarchical) grad[ws.k] /= point.tau;
    grad[grad.size() - 1] /= point.sigma2;
    return grad;
}

Eigen::MatrixXd hessian(const Dataset& data, const ModelIndex& model,
                        const ParamPoint& point, const HyperConfig& cfg) {
    Workspace ws = make_workspace(data, model, cfg);
    pack_theta(ws, point); // validates beta length and scale positivity
    for (int i = 0; i < point.beta.size(); ++i) {
        if (std::abs(point.beta[i]) < 1e-300) {
            throw ZeroCoefficient("coefficient " + std::to_string(i) +
                                  " is numerically zero");
        }
    }
    // the joint ignores point.tau when tau is fixed; mirror that here
    const double tau = ws.hierarchical ? point.tau : ws.fixed_tau;
    return eval_neg_hess_original(ws, point.beta, tau, point.sigma2);
}

ModeResult find_mode(const Dataset& data, const ModelIndex& model,
                     const HyperConfig& cfg,
                     const std::optional<ParamPoint>& init) {
    Workspace ws = make_workspace(data, model, cfg);
    return find_mode_ws(ws, model, init);
}

double null_log_marginal(const Dataset& data, const HyperConfig& cfg) {
    validate_dataset(data);
    validate_hyper(cfg);
    const double n = data.n();
    const double yty = data.y.squaredNorm();
    return -0.5 * n * kLog2Pi + cfg.alpha1 * std::log(cfg.alpha2) -
           std::lgamma(cfg.alpha1) + std::lgamma(0.5 * n + cfg.alpha1) -
           (0.5 * n + cfg.alpha1) * std::log(0.5 * yty + cfg.alpha2);
}

double log_marginal(const Dataset& data, const ModelIndex& model,
                    const HyperConfig& cfg) {
    if (model.empty()) return null_log_marginal(data, cfg);
    Workspace ws = make_workspace(data, model, cfg);
    ModeResult mode = find_mode_ws(ws, model, std::nullopt);
    return log_marginal_from_mode(ws, model, mode);
}

double log_posterior_ratio(const Dataset& data, const ModelIndex& candidate,
                           const ModelIndex& reference,
                           const HyperConfig& cfg) {
    const int p = data.p();
    const int n = data.n();
    const double prior_ref = priors::log_model_prior(reference, cfg, p, n);
    if (!std::isfinite(prior_ref)) {
        throw Error("reference model has zero prior mass");
    }
    const double prior_cand = priors::log_model_prior(candidate, cfg, p, n);
    if (!std::isfinite(prior_cand)) {
        return -std::numeric_limits<double>::infinity();
    }
    return log_marginal(data, candidate, cfg) + prior_cand -
           log_marginal(data, reference, cfg) - prior_ref;
}

Evaluation evaluate_model(const Dataset& data, const ModelIndex& model,
                          const HyperConfig& cfg, ScoreCache* cache) {
    if (cache) {
        if (auto hit = cache->lookup(model)) return *hit;
    }
    Evaluation eval;
    if (model.empty()) {
        eval.log_marginal = null_log_marginal(data, cfg);
        eval.beta_hat = Eigen::VectorXd();
    } else {
        Workspace ws = make_workspace(data, model, cfg);
        ModeResult mode = find_mode_ws(ws, model, std::nullopt);
        eval.log_marginal = log_marginal_from_mode(ws, model, mode);
        eval.beta_hat = mode.point.beta;
    }
    if (cache) cache->insert(model, eval);
    return eval;
}

ScoredModel score_model(const Dataset& data, const ModelIndex& model,
                        const HyperConfig& cfg, ScoreCache* cache) {
    Evaluation eval = evaluate_model(data, model, cfg, cache);
    const double prior =
        priors::log_model_prior(model, cfg, data.p(), data.n());
    return ScoredModel{model, eval.log_marginal,
                       eval.log_marginal + prior};
}

} // namespace nlselect::laplace
