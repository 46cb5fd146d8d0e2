#include "nlselect/oracle.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "nlselect/laplace.hpp"
#include "nlselect/priors.hpp"
#include "nlselect/rng.hpp"

namespace nlselect::oracle {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = 2.2204460492503131e-16;

double ipow(double x, int e) {
    double v = 1.0;
    for (int i = 0; i < e; ++i) v *= x;
    return v;
}

Eigen::MatrixXd jacobi_eigen(const Eigen::VectorXd& offdiag,
                             Eigen::VectorXd& eigenvalues) {
    const int m = static_cast<int>(offdiag.size()) + 1;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(Eigen::VectorXd::Zero(m), offdiag,
                              Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) {
        throw Error("tridiagonal eigensolve failed");
    }
    eigenvalues = es.eigenvalues();
    return es.eigenvectors();
}

} // namespace

GaussHermite gauss_hermite(int m) {
    if (m < 1) throw Error("gauss_hermite: need at least one node");
    Eigen::VectorXd off(m - 1);
    for (int i = 1; i < m; ++i) off[i - 1] = std::sqrt(0.5 * i);
    Eigen::VectorXd values;
    const Eigen::MatrixXd vecs = jacobi_eigen(off, values);
    GaussHermite gh;
    gh.nodes = values;
    gh.weights.resize(m);
    const double sqrt_pi = std::sqrt(M_PI);
    for (int i = 0; i < m; ++i) {
        gh.weights[i] = sqrt_pi * vecs(0, i) * vecs(0, i);
    }
    return gh;
}

GaussLegendre gauss_legendre(int m) {
    if (m < 1) throw Error("gauss_legendre: need at least one node");
    Eigen::VectorXd off(m - 1);
    for (int i = 1; i < m; ++i) {
        off[i - 1] = i / std::sqrt(4.0 * i * i - 1.0);
    }
    Eigen::VectorXd values;
    const Eigen::MatrixXd vecs = jacobi_eigen(off, values);
    GaussLegendre gl;
    gl.nodes = values;
    gl.weights.resize(m);
    for (int i = 0; i < m; ++i) {
        gl.weights[i] = 2.0 * vecs(0, i) * vecs(0, i);
    }
    return gl;
}

namespace {

/* Moments of prod_i x_i^{e_i} under N(mu, L L') for dimension <= 2,
 * one Gauss-Hermite tensor pass for a whole batch of exponent rows.
 * Exact whenever the node count exceeds half the polynomial degree.
 */
void normal_moments(const Eigen::VectorXd& mu, const Eigen::MatrixXd& L,
                    const std::vector<std::array<int, 2>>& expos,
                    const GaussHermite& gh, std::vector<double>& out) {
    const int d = static_cast<int>(mu.size());
    const int m = static_cast<int>(gh.nodes.size());
    const std::size_t ne = expos.size();
    out.assign(ne, 0.0);
    const double sqrt2 = std::sqrt(2.0);
    if (d == 1) {
        const double s = sqrt2 * L(0, 0);
        for (int i = 0; i < m; ++i) {
            const double x = mu[0] + s * gh.nodes[i];
            for (std::size_t e = 0; e < ne; ++e) {
                out[e] += gh.weights[i] * ipow(x, expos[e][0]);
            }
        }
        const double scale = 1.0 / std::sqrt(M_PI);
        for (double& v : out) v *= scale;
    } else if (d == 2) {
        const double s11 = sqrt2 * L(0, 0);
        const double s21 = sqrt2 * L(1, 0);
        const double s22 = sqrt2 * L(1, 1);
        for (int i = 0; i < m; ++i) {
            const double x1 = mu[0] + s11 * gh.nodes[i];
            const double x2b = mu[1] + s21 * gh.nodes[i];
            for (int j = 0; j < m; ++j) {
                const double x2 = x2b + s22 * gh.nodes[j];
                const double wij = gh.weights[i] * gh.weights[j];
                for (std::size_t e = 0; e < ne; ++e) {
                    out[e] += wij * ipow(x1, expos[e][0]) *
                              ipow(x2, expos[e][1]);
                }
            }
        }
        const double scale = 1.0 / M_PI;
        for (double& v : out) v *= scale;
    } else {
        throw DimensionTooLarge("normal moments limited to dimension 2");
    }
}

Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        throw Error(std::string(what) + ": matrix not positive definite");
    }
    return llt.matrixL();
}

} // namespace

double gaussian_poly_moment(const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& cov,
                            const std::vector<int>& exponents, int nodes) {
    const int d = static_cast<int>(mu.size());
    if (d < 1 || d > 2) {
        throw DimensionTooLarge("gaussian_poly_moment limited to dimension 2");
    }
    if (static_cast<int>(exponents.size()) != d) {
        throw Error("exponent list does not match dimension");
    }
    for (int e : exponents) {
        if (e < 0) throw Error("exponents must be non-negative");
    }
    if (cov.rows() != d || cov.cols() != d) {
        throw Error("covariance does not match dimension");
    }
    const Eigen::MatrixXd L = chol_lower(cov, "gaussian_poly_moment");
    std::vector<std::array<int, 2>> expos(1);
    expos[0] = {exponents[0], d == 2 ? exponents[1] : 0};
    const int degree = expos[0][0] + expos[0][1];
    const GaussHermite gh = gauss_hermite(std::max(nodes, degree / 2 + 2));
    std::vector<double> out;
    normal_moments(mu, L, expos, gh, out);
    return out[0];
}

double gaussian_product_moment(const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& cov, int r, int nodes) {
    std::vector<int> expos(mu.size(), 2 * r);
    return gaussian_poly_moment(mu, cov, expos, nodes);
}

namespace {

/* Integrand of the model marginal after the coefficients have been
 * integrated out exactly: only the scales (tau, sigma2) remain, in
 * log coordinates u and w with their Jacobian absorbed.
 */
struct MarginalIntegrand {
    Eigen::MatrixXd G;
    Eigen::VectorXd Xty;
    double yty = 0.0;
    int n = 0;
    int k = 0;
    int r = 2;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    bool hierarchical = true;
    double fixed_tau = 1.0;
    GaussHermite gh;
    std::vector<std::array<int, 2>> expos; // expos[0] = all-2r row
    double log_const = 0.0;

    struct PreparedU {
        double tau_part = 0.0;
        double logdetC = 0.0;
        double R = 0.0;
        Eigen::VectorXd m;
        Eigen::MatrixXd M; // lower Cholesky factor of C^{-1}
        bool ok = false;
    };

    PreparedU prepare_u(double u) const {
        PreparedU pu;
        const double tau = hierarchical ? std::exp(u) : fixed_tau;
        if (!(tau > 0.0) || !std::isfinite(tau)) return pu;
        if (hierarchical) {
            pu.tau_part = -(r * k + 0.5 * (k + 3)) * u -
                          0.5 * n * std::exp(-u) + u;
        }
        if (k == 0) {
            pu.R = yty;
            pu.ok = true;
            return pu;
        }
        Eigen::MatrixXd C = G;
        C.diagonal().array() += 1.0 / tau;
        Eigen::LLT<Eigen::MatrixXd> llt(C);
        if (llt.info() != Eigen::Success) return pu;
        const Eigen::MatrixXd L = llt.matrixL();
        pu.logdetC = 0.0;
        for (int i = 0; i < k; ++i) pu.logdetC += 2.0 * std::log(L(i, i));
        pu.m = llt.solve(Xty);
        pu.R = yty - Xty.dot(pu.m);
        const Eigen::MatrixXd Cinv =
            llt.solve(Eigen::MatrixXd::Identity(k, k));
        Eigen::LLT<Eigen::MatrixXd> llt_inv(Cinv);
        if (llt_inv.info() != Eigen::Success) return pu;
        pu.M = llt_inv.matrixL();
        pu.ok = true;
        return pu;
    }

    /// Everything except the log of the coefficient moments.
    double eval(const PreparedU& pu, double w, std::vector<double>& M) const {
        if (!pu.ok) return -kInf;
        const double s2 = std::exp(w);
        if (!(s2 > 0.0) || !std::isfinite(s2)) return -kInf;
        if (k == 0) {
            M.assign(1, 1.0);
        } else {
            normal_moments(pu.m, std::sqrt(s2) * pu.M, expos, gh, M);
        }
        return log_const + pu.tau_part -
               (0.5 * n + r * k + alpha1 + 1.0) * w -
               0.5 * (pu.R + 2.0 * alpha2) * std::exp(-w) -
               0.5 * pu.logdetC + w;
    }

    double h(double u, double w) const {
        std::vector<double> M;
        const PreparedU pu = prepare_u(u);
        const double base = eval(pu, w, M);
        if (!std::isfinite(base) || !(M[0] > 0.0)) return -kInf;
        return base + std::log(M[0]);
    }
};

MarginalIntegrand make_integrand(const Dataset& data, const ModelIndex& model,
                                 const HyperConfig& cfg, int hermite_nodes,
                                 bool want_moments) {
    validate_dataset(data);
    validate_hyper(cfg);
    const int k = model.size();
    if (k > 2) {
        throw DimensionTooLarge("quadrature supports models up to size 2");
    }
    MarginalIntegrand ig;
    ig.n = data.n();
    ig.k = k;
    ig.r = cfg.r;
    ig.alpha1 = cfg.alpha1;
    ig.alpha2 = cfg.alpha2;
    ig.hierarchical = cfg.tau_mode == TauMode::hierarchical;
    ig.fixed_tau = cfg.fixed_tau;
    Eigen::MatrixXd Xk(ig.n, k);
    for (int i = 0; i < k; ++i) {
        Xk.col(i) = data.X.col(model.indices()[i]);
    }
    ig.G = Xk.transpose() * Xk;
    ig.Xty = Xk.transpose() * data.y;
    ig.yty = data.y.squaredNorm();
    // the even-moment polynomial has per-axis degree 4r (+2 for the
    // posterior moment variants), so this node count is exact
    ig.gh = gauss_hermite(std::max(hermite_nodes, 2 * cfg.r + 2));
    const int tr = 2 * cfg.r;
    ig.expos.push_back({tr, tr});
    if (want_moments) {
        for (int j = 0; j < k; ++j) {
            std::array<int, 2> e{tr, tr};
            e[j] = tr + 1;
            ig.expos.push_back(e);
        }
        for (int j = 0; j < k; ++j) {
            std::array<int, 2> e{tr, tr};
            e[j] = tr + 2;
            ig.expos.push_back(e);
        }
    }
    ig.log_const = -k * priors::log_double_factorial(2 * cfg.r - 1) -
                   0.5 * ig.n * kLog2Pi + cfg.alpha1 * std::log(cfg.alpha2) -
                   std::lgamma(cfg.alpha1);
    if (ig.hierarchical) {
        ig.log_const += 0.5 * std::log(0.5 * ig.n) - std::lgamma(0.5);
    } else {
        ig.log_const -= (cfg.r * k + 0.5 * k) * std::log(cfg.fixed_tau);
    }
    return ig;
}

struct Box {
    double u_lo = 0.0, u_hi = 0.0;
    double w_lo = 0.0, w_hi = 0.0;
    double peak_u = 0.0, peak_w = 0.0, peak_h = -kInf;
};

/// Distance along a ray until the integrand drops by log_drop.
double walk_out(const std::function<double(double)>& hline, double h_star,
                double log_drop) {
    double t = 0.25;
    while (t < 120.0 && hline(t) > h_star - log_drop) t += 0.25;
    return t;
}

Box locate_box(const MarginalIntegrand& ig, double log_drop) {
    Box box;
    const double wg = std::log(ig.yty / ig.n + ig.alpha2);
    // coarse grid, then a pattern search down to fine resolution
    double bu = 0.0, bw = wg, bh = -kInf;
    const bool two_dim = ig.hierarchical;
    for (double u = two_dim ? -12.0 : 0.0; u <= (two_dim ? 12.0 : 0.0);
         u += 1.0) {
        for (double w = wg - 16.0; w <= wg + 8.0; w += 0.5) {
            const double hv = ig.h(u, w);
            if (hv > bh) {
                bh = hv;
                bu = u;
                bw = w;
            }
        }
    }
    if (!std::isfinite(bh)) {
        throw Error("quadrature: integrand vanished on the search grid");
    }
    double step = 0.5;
    while (step > 1e-7) {
        bool moved = true;
        while (moved) {
            moved = false;
            const double cand_u[4] = {bu + step, bu - step, bu, bu};
            const double cand_w[4] = {bw, bw, bw + step, bw - step};
            for (int c = 0; c < 4; ++c) {
                if (!two_dim && c < 2) continue;
                const double hv = ig.h(cand_u[c], cand_w[c]);
                if (hv > bh) {
                    bh = hv;
                    bu = cand_u[c];
                    bw = cand_w[c];
                    moved = true;
                }
            }
        }
        step *= 0.5;
    }
    box.peak_u = bu;
    box.peak_w = bw;
    box.peak_h = bh;
    const double up = two_dim
        ? walk_out([&](double t) { return ig.h(bu + t, bw); }, bh, log_drop)
        : 0.0;
    const double um = two_dim
        ? walk_out([&](double t) { return ig.h(bu - t, bw); }, bh, log_drop)
        : 0.0;
    const double wp =
        walk_out([&](double t) { return ig.h(bu, bw + t); }, bh, log_drop);
    const double wm =
        walk_out([&](double t) { return ig.h(bu, bw - t); }, bh, log_drop);
    // double the ray distances so tilted level sets stay inside, then
    // push each side out until the boundary really is negligible
    box.u_lo = bu - 2.0 * um;
    box.u_hi = bu + 2.0 * up;
    box.w_lo = bw - 2.0 * wm;
    box.w_hi = bw + 2.0 * wp;
    for (int round = 0; round < 60; ++round) {
        const int probes = 33;
        double worst[4] = {-kInf, -kInf, -kInf, -kInf}; // lo_u hi_u lo_w hi_w
        for (int i = 0; i < probes; ++i) {
            const double fu = box.u_lo +
                              (box.u_hi - box.u_lo) * i / (probes - 1.0);
            const double fw = box.w_lo +
                              (box.w_hi - box.w_lo) * i / (probes - 1.0);
            if (two_dim) {
                worst[0] = std::max(worst[0], ig.h(box.u_lo, fw));
                worst[1] = std::max(worst[1], ig.h(box.u_hi, fw));
            }
            worst[2] = std::max(worst[2], ig.h(fu, box.w_lo));
            worst[3] = std::max(worst[3], ig.h(fu, box.w_hi));
        }
        bool ok = true;
        const double cut = bh - log_drop;
        if (two_dim && worst[0] > cut) {
            box.u_lo -= 0.5 * (box.u_hi - box.u_lo);
            ok = false;
        }
        if (two_dim && worst[1] > cut) {
            box.u_hi += 0.5 * (box.u_hi - box.u_lo);
            ok = false;
        }
        if (worst[2] > cut) {
            box.w_lo -= 0.5 * (box.w_hi - box.w_lo);
            ok = false;
        }
        if (worst[3] > cut) {
            box.w_hi += 0.5 * (box.w_hi - box.w_lo);
            ok = false;
        }
        if (ok) break;
    }
    return box;
}

struct QuadRun {
    double value = 0.0;
    std::vector<double> ratios; // moment integrals over the base integral
};

QuadRun integrate_box(const MarginalIntegrand& ig, const Box& box,
                      int outer_nodes) {
    const GaussLegendre gl = gauss_legendre(outer_nodes);
    const bool two_dim = ig.hierarchical;
    const int mu = two_dim ? outer_nodes : 1;
    const int mw = outer_nodes;
    const double su = two_dim ? 0.5 * (box.u_hi - box.u_lo) : 0.0;
    const double cu = two_dim ? 0.5 * (box.u_hi + box.u_lo) : 0.0;
    const double sw = 0.5 * (box.w_hi - box.w_lo);
    const double cw = 0.5 * (box.w_hi + box.w_lo);
    const std::size_t nm = ig.expos.size();
    std::vector<double> lq(static_cast<std::size_t>(mu) * mw, -kInf);
    std::vector<double> ratio(static_cast<std::size_t>(mu) * mw * (nm - 1),
                              0.0);
    std::vector<double> M;
    double top = -kInf;
    for (int i = 0; i < mu; ++i) {
        const double u = two_dim ? cu + su * gl.nodes[i] : 0.0;
        const double lwu = two_dim ? std::log(gl.weights[i] * su) : 0.0;
        const MarginalIntegrand::PreparedU pu = ig.prepare_u(u);
        for (int j = 0; j < mw; ++j) {
            const double w = cw + sw * gl.nodes[j];
            const double base = ig.eval(pu, w, M);
            const std::size_t at = static_cast<std::size_t>(i) * mw + j;
            if (!std::isfinite(base) || !(M[0] > 0.0)) continue;
            lq[at] = base + std::log(M[0]) + lwu +
                     std::log(gl.weights[j] * sw);
            for (std::size_t e = 1; e < nm; ++e) {
                ratio[at * (nm - 1) + (e - 1)] = M[e] / M[0];
            }
            top = std::max(top, lq[at]);
        }
    }
    if (!std::isfinite(top)) {
        throw Error("quadrature: integrand vanished over the box");
    }
    double t0 = 0.0;
    std::vector<double> tm(nm - 1, 0.0);
    for (std::size_t at = 0; at < lq.size(); ++at) {
        if (!std::isfinite(lq[at])) continue;
        const double e = std::exp(lq[at] - top);
        t0 += e;
        for (std::size_t m = 0; m + 1 < nm; ++m) {
            tm[m] += e * ratio[at * (nm - 1) + m];
        }
    }
    QuadRun run;
    run.value = top + std::log(t0);
    run.ratios.resize(nm - 1);
    for (std::size_t m = 0; m + 1 < nm; ++m) run.ratios[m] = tm[m] / t0;
    return run;
}

QuadRun run_once(const Dataset& data, const ModelIndex& model,
                 const HyperConfig& cfg, int hermite_nodes, int outer_nodes,
                 double log_drop, bool want_moments) {
    const MarginalIntegrand ig =
        make_integrand(data, model, cfg, hermite_nodes, want_moments);
    const Box box = locate_box(ig, log_drop);
    return integrate_box(ig, box, outer_nodes);
}

void validate_qcfg(const QuadratureConfig& qcfg) {
    if (qcfg.hermite_nodes < 16 || qcfg.outer_nodes < 16) {
        throw Error("quadrature config: node counts must be at least 16");
    }
    if (!(qcfg.box_log_drop > 0.0) || !(qcfg.rel_tol > 0.0)) {
        throw Error("quadrature config: drop and tolerance must be positive");
    }
}

} // namespace

QuadratureResult quadrature_log_marginal(const Dataset& data,
                                         const ModelIndex& model,
                                         const HyperConfig& cfg,
                                         const QuadratureConfig& qcfg) {
    validate_qcfg(qcfg);
    QuadratureResult result;
    const QuadRun coarse = run_once(data, model, cfg, qcfg.hermite_nodes,
                                    qcfg.outer_nodes, qcfg.box_log_drop,
                                    false);
    const QuadRun fine = run_once(data, model, cfg, 2 * qcfg.hermite_nodes,
                                  2 * qcfg.outer_nodes, qcfg.box_log_drop,
                                  false);
    result.value = fine.value;
    result.rel_change = std::abs(fine.value - coarse.value) /
                        std::max(1.0, std::abs(fine.value));
    result.converged = result.rel_change <= qcfg.rel_tol;
    return result;
}

double quadrature_log_marginal_value(const Dataset& data,
                                     const ModelIndex& model,
                                     const HyperConfig& cfg,
                                     const QuadratureConfig& qcfg) {
    const QuadratureResult result =
        quadrature_log_marginal(data, model, cfg, qcfg);
    if (!result.converged) {
        throw NonConvergedQuadrature(
            "node doubling moved the value by a relative " +
            std::to_string(result.rel_change));
    }
    return result.value;
}

PosteriorBetaMoments quadrature_posterior_beta_moments(
    const Dataset& data, const ModelIndex& model, const HyperConfig& cfg,
    const QuadratureConfig& qcfg) {
    validate_qcfg(qcfg);
    const int k = model.size();
    if (k == 0) throw Error("posterior moments need a non-empty model");
    const QuadRun coarse = run_once(data, model, cfg, qcfg.hermite_nodes,
                                    qcfg.outer_nodes, qcfg.box_log_drop,
                                    true);
    const QuadRun fine = run_once(data, model, cfg, 2 * qcfg.hermite_nodes,
                                  2 * qcfg.outer_nodes, qcfg.box_log_drop,
                                  true);
    const double rel = std::abs(fine.value - coarse.value) /
                       std::max(1.0, std::abs(fine.value));
    if (rel > qcfg.rel_tol) {
        throw NonConvergedQuadrature(
            "node doubling moved the value by a relative " +
            std::to_string(rel));
    }
    PosteriorBetaMoments moments;
    moments.mean.resize(k);
    moments.sd.resize(k);
    for (int j = 0; j < k; ++j) {
        const double mean = fine.ratios[j];
        const double second = fine.ratios[k + j];
        moments.mean[j] = mean;
        moments.sd[j] = std::sqrt(std::max(second - mean * mean, 0.0));
    }
    return moments;
}

TailCheckReport chisq_tail_check(int dof, double a, double noncentrality,
                                 long draws, std::uint64_t seed) {
    if (dof < 1) throw Error("tail check: dof must be at least 1");
    if (!(a > 0.0)) throw Error("tail check: threshold must be positive");
    if (draws < 1) throw Error("tail check: need at least one draw");
    if (noncentrality < 0.0) {
        throw Error("tail check: noncentrality must be non-negative");
    }
    Rng rng(seed);
    long count = 0;
    const double p = static_cast<double>(dof);
    if (noncentrality == 0.0) {
        for (long i = 0; i < draws; ++i) {
            const double x = rng.chi_squared(p);
            if (std::abs(x - p) > a) ++count;
        }
    } else {
        const double center = p + noncentrality;
        for (long i = 0; i < draws; ++i) {
            const double x = rng.noncentral_chi_squared(p, noncentrality);
            if (x - center > a) ++count;
        }
    }
    TailCheckReport report;
    report.dof = dof;
    report.noncentrality = noncentrality;
    report.threshold = a;
    report.draws = draws;
    report.empirical_prob =
        static_cast<double>(count) / static_cast<double>(draws);
    if (noncentrality == 0.0) {
        report.bound = 2.0 * std::exp(-a * a / (4.0 * (p + a)));
        report.bound_stated = 2.0 * std::exp(-a * a / (4.0 * p));
    } else {
        const double q = a / (p + noncentrality);
        report.bound = std::exp(-0.5 * p * (q - std::log1p(q)));
        report.bound_stated = report.bound;
    }
    report.std_error = std::sqrt(report.empirical_prob *
                                 (1.0 - report.empirical_prob) /
                                 static_cast<double>(draws));
    report.pass = report.empirical_prob <=
                  report.bound + 3.0 * report.std_error;
    return report;
}

Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x) {
    const double h0 = std::cbrt(kEps);
    const int d = static_cast<int>(x.size());
    Eigen::VectorXd grad(d);
    for (int i = 0; i < d; ++i) {
        const double h = h0 * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        grad[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return grad;
}

Eigen::MatrixXd fd_hessian(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x) {
    const double h0 = std::pow(kEps, 0.25);
    const int d = static_cast<int>(x.size());
    const double f0 = f(x);
    Eigen::MatrixXd hess(d, d);
    Eigen::VectorXd steps(d);
    for (int i = 0; i < d; ++i) {
        steps[i] = h0 * std::max(1.0, std::abs(x[i]));
    }
    for (int i = 0; i < d; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += steps[i];
        xm[i] -= steps[i];
        hess(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (steps[i] * steps[i]);
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[i] += steps[i];
            xpp[j] += steps[j];
            xpm[i] += steps[i];
            xpm[j] -= steps[j];
            xmp[i] -= steps[i];
            xmp[j] += steps[j];
            xmm[i] -= steps[i];
            xmm[j] -= steps[j];
            const double v = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) /
                             (4.0 * steps[i] * steps[j]);
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

double max_rel_deviation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error("max_rel_deviation: shape mismatch");
    }
    double worst = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            const double denom =
                std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
        }
    }
    return worst;
}

double finite_difference_gradient_check(const Dataset& data,
                                        const ModelIndex& model,
                                        const ParamPoint& point,
                                        const HyperConfig& cfg) {
    const int k = model.size();
    const bool hier = cfg.tau_mode == TauMode::hierarchical;
    const int d = k + (hier ? 2 : 1);
    Eigen::VectorXd theta(d);
    theta.head(k) = point.beta;
    if (hier) theta[k] = std::log(point.tau);
    theta[d - 1] = std::log(point.sigma2);
    auto f = [&](const Eigen::VectorXd& t) {
        ParamPoint q;
        q.beta = t.head(k);
        q.tau = hier ? std::exp(t[k]) : cfg.fixed_tau;
        q.sigma2 = std::exp(t[d - 1]);
        return priors::log_joint(data, model, q, cfg);
    };
    const Eigen::VectorXd analytic = laplace::gradient(data, model, point, cfg);
    const Eigen::VectorXd numeric = fd_gradient(f, theta);
    return max_rel_deviation(analytic, numeric);
}

double finite_difference_hessian_check(const Dataset& data,
                                       const ModelIndex& model,
                                       const ParamPoint& point,
                                       const HyperConfig& cfg) {
    const int k = model.size();
    const bool hier = cfg.tau_mode == TauMode::hierarchical;
    const int d = k + (hier ? 2 : 1);
    Eigen::VectorXd z(d);
    z.head(k) = point.beta;
    if (hier) z[k] = point.tau;
    z[d - 1] = point.sigma2;
    auto f = [&](const Eigen::VectorXd& t) {
        ParamPoint q;
        q.beta = t.head(k);
        q.tau = hier ? t[k] : cfg.fixed_tau;
        q.sigma2 = t[d - 1];
        return priors::log_joint(data, model, q, cfg);
    };
    const Eigen::MatrixXd analytic = laplace::hessian(data, model, point, cfg);
    const Eigen::MatrixXd numeric = -fd_hessian(f, z);
    return max_rel_deviation(analytic, numeric);
}

double log_integrate_1d(const std::function<double(double)>& log_f,
                        double center_guess, int nodes, double log_drop) {
    if (nodes < 16) throw Error("log_integrate_1d: need at least 16 nodes");
    double bx = center_guess, bh = -kInf;
    for (double x = center_guess - 30.0; x <= center_guess + 30.0; x += 0.5) {
        const double hv = log_f(x);
        if (hv > bh) {
            bh = hv;
            bx = x;
        }
    }
    if (!std::isfinite(bh)) {
        throw Error("log_integrate_1d: integrand vanished on the scan grid");
    }
    double step = 0.5;
    while (step > 1e-8) {
        bool moved = true;
        while (moved) {
            moved = false;
            for (double cand : {bx + step, bx - step}) {
                const double hv = log_f(cand);
                if (hv > bh) {
                    bh = hv;
                    bx = cand;
                    moved = true;
                }
            }
        }
        step *= 0.5;
    }
    const double right =
        walk_out([&](double t) { return log_f(bx + t); }, bh, log_drop);
    const double left =
        walk_out([&](double t) { return log_f(bx - t); }, bh, log_drop);
    double lo = bx - 2.0 * left, hi = bx + 2.0 * right;
    const GaussLegendre gl = gauss_legendre(nodes);
    const double s = 0.5 * (hi - lo), c = 0.5 * (hi + lo);
    double top = -kInf;
    std::vector<double> lq(nodes);
    for (int i = 0; i < nodes; ++i) {
        lq[i] = log_f(c + s * gl.nodes[i]) + std::log(gl.weights[i] * s);
        top = std::max(top, lq[i]);
    }
    double total = 0.0;
    for (int i = 0; i < nodes; ++i) {
        if (std::isfinite(lq[i])) total += std::exp(lq[i] - top);
    }
    return top + std::log(total);
}

} // namespace nlselect::oracle
