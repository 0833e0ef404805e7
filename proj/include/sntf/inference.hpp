#pragma once

// Coordinate-ascent variational inference for the tri-factorization model.
//
// Closed-form blocks: q(gamma), each q(S_kr), each q(V_jr), plus a per-column
// rescaling of (S, V) along the direction the likelihood cannot see.
// Gradient blocks (backtracking Armijo ascent): cluster logits theta^U, and
// the membership coupling {q(G), q(pi_bar)} under the constraint penalty.
// After each sweep `fit` tries an overrelaxed step along the sweep's
// displacement and keeps it only if the objective improves.

#include "sntf/dist.hpp"
#include "sntf/model.hpp"
#include "sntf/parallel.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace sntf {

/// Backtracking line-search settings for the gradient blocks.
struct GradientBlockConfig {
    int max_inner = 25;
    double initial_step = 1.0;
    double shrink = 0.5;
    double armijo = 1e-4;
    double grad_tol = 1e-8;
    double min_step = 1e-14;

    void validate() const {
        if (max_inner < 1 || !(initial_step > 0.0) ||
            !(shrink > 0.0 && shrink < 1.0) || !(armijo > 0.0 && armijo < 1.0) ||
            !(grad_tol > 0.0) || !(min_step > 0.0))
            throw DomainError("invalid gradient block configuration");
    }
};

namespace detail {

inline constexpr double kMinAssocPrecision = 1e-10;

inline TruncatedNormalParams assoc_optimum(double e_gamma, double quad,
                                           double lin, double lambda) {
    const double tau = std::max(e_gamma * quad, kMinAssocPrecision);
    return {(e_gamma * lin - lambda) / tau, 1.0 / tau};
}

inline NormalParams basis_optimum(double e_gamma, double quad, double lin,
                                  double prior_mean, double prior_var) {
    const double prec = 1.0 / prior_var + e_gamma * quad;
    return {(prior_mean / prior_var + e_gamma * lin) / prec, 1.0 / prec};
}

/// Running statistics for Gauss-Seidel updates of S. `c` holds
/// (X - m w^T) w, kept current through rank-one corrections.
struct AssocStats {
    Matrix c;      // N x R
    Matrix gram_w; // R x R, w^T w
    Vector p;      // R, column sums of w2
};

inline AssocStats assoc_stats(const Model& model, const Moments& mo) {
    AssocStats st;
    st.gram_w = mo.w.transpose() * mo.w;
    st.c = model.data().X * mo.w - mo.m * st.gram_w;
    st.p = mo.w2.colwise().sum().transpose();
    return st;
}

inline TruncatedNormalParams assoc_update_from_stats(const Model& model,
                                                     const Moments& mo,
                                                     const AssocStats& st,
                                                     double e_gamma, Index k,
                                                     Index r) {
    const Index N = model.data().N();
    double quad = 0.0, lin = 0.0;
    const double es = mo.s_mean(k, r);
    for (Index i = 0; i < N; ++i) {
        const double u = mo.u(i, k);
        quad += u * u;
        lin += u * (st.c(i, r) + mo.m(i, r) * st.gram_w(r, r) -
                    (mo.m(i, r) - u * es) * st.p(r));
    }
    quad *= st.p(r);
    return assoc_optimum(e_gamma, quad, lin, model.lambda_S()(k, r));
}

} // namespace detail

/// Conjugate update of q(gamma).
inline GammaParams update_noise(const Model& model, const VariationalState& s) {
    const auto& h = model.hyper();
    const double nd = static_cast<double>(model.data().N() * model.data().D());
    return {h.alpha_a0 + 0.5 * nd,
            h.alpha_b0 + 0.5 * model.expected_sq_residual(s)};
}

/// Optimal q(S_kr) with every other factor held fixed.
inline TruncatedNormalParams update_association(const Model& model,
                                                const VariationalState& s,
                                                Index k, Index r) {
    const Moments mo = model.moments(s);
    const auto st = detail::assoc_stats(model, mo);
    return detail::assoc_update_from_stats(model, mo, st,
                                           gamma_expectations(s.noise).mean, k, r);
}

/// Optimal q(V_jr) with every other factor held fixed.
inline NormalParams update_basis(const Model& model, const VariationalState& s,
                                 Index j, Index r) {
    const Moments mo = model.moments(s);
    const Index R = model.data().R();
    const double rho = mo.rho(j, r);
    const double xtm = model.data().X.col(j).dot(mo.m.col(r));
    double cross = 0.0;
    for (Index q = 0; q < R; ++q)
        if (q != r)
            cross += mo.m.col(r).dot(mo.m.col(q)) * mo.w(j, q);
    return detail::basis_optimum(gamma_expectations(s.noise).mean,
                                 rho * mo.t2.col(r).sum(), rho * (xtm - cross),
                                 model.mu_V0()(j, r), model.var_V0()(j, r));
}

/// Gauss-Seidel pass over all q(S_kr), k-major.
inline void sweep_association(const Model& model, VariationalState& s) {
    Moments mo = model.moments(s);
    auto st = detail::assoc_stats(model, mo);
    const double eg = gamma_expectations(s.noise).mean;
    const Index K = model.data().K(), R = model.data().R();
    for (Index k = 0; k < K; ++k)
        for (Index r = 0; r < R; ++r) {
            const auto q = detail::assoc_update_from_stats(model, mo, st, eg, k, r);
            s.assoc_location(k, r) = q.location;
            s.assoc_scale_sq(k, r) = q.scale_sq;
            const auto tn = truncated_normal_moments(q);
            const double delta = tn.mean - mo.s_mean(k, r);
            mo.s_mean(k, r) = tn.mean;
            mo.s_var(k, r) = tn.variance;
            if (delta == 0.0)
                continue;
            mo.m.col(r) += delta * mo.u.col(k);
            st.c.noalias() -= mo.u.col(k) * (delta * st.gram_w.row(r));
        }
}

/// All q(V_jr): rows j in parallel, Gauss-Seidel over r within a row.
inline void sweep_basis(const Model& model, VariationalState& s) {
    const Moments mo = model.moments(s);
    const Index D = model.data().D(), R = model.data().R();
    const double eg = gamma_expectations(s.noise).mean;
    const Matrix gram_m = mo.m.transpose() * mo.m;
    const Vector t2_sum = mo.t2.colwise().sum().transpose();
    const Matrix& X = model.data().X;
    parallel_for(static_cast<std::size_t>(D), model.threads(), [&](std::size_t jj) {
        const auto j = static_cast<Index>(jj);
        Eigen::RowVectorXd w = mo.w.row(j);
        for (Index r = 0; r < R; ++r) {
            const double rho = mo.rho(j, r);
            const double xtm = X.col(j).dot(mo.m.col(r));
            double cross = 0.0;
            for (Index q = 0; q < R; ++q)
                if (q != r)
                    cross += gram_m(r, q) * w(q);
            const auto v = detail::basis_optimum(eg, rho * t2_sum(r),
                                                 rho * (xtm - cross),
                                                 model.mu_V0()(j, r),
                                                 model.var_V0()(j, r));
            s.basis_mean(j, r) = v.mean;
            s.basis_var(j, r) = v.variance;
            w(r) = rho * v.mean;
        }
    });
}

/// The likelihood sees S_:r and V_:r only through their products, so the
/// map (S_:r, V_:r) -> (c S_:r, V_:r / c) moves the bound through the priors
/// and entropies alone. Applies the best c per column, and only when the
/// bound strictly improves. Without this move, coordinate ascent drifts
/// along the scale direction for thousands of sweeps.
inline void rebalance_scales(const Model& model, VariationalState& s) {
    const Index K = model.data().K(), D = model.data().D(), R = model.data().R();
    const double n = static_cast<double>(K - D);
    for (Index r = 0; r < R; ++r) {
        double a = 0.0, b = 0.0, c = 0.0;
        for (Index k = 0; k < K; ++k)
            a += model.lambda_S()(k, r) * truncated_normal_moments(s.assoc(k, r)).mean;
        for (Index j = 0; j < D; ++j) {
            const double v0 = model.var_V0()(j, r);
            const double m = s.basis_mean(j, r);
            b += (m * m + s.basis_var(j, r)) / v0;
            c += model.mu_V0()(j, r) * m / v0;
        }
        // Bound change as a function of t = log(scale), up to a constant.
        auto gain = [&](double t) {
            const double e = std::exp(-t);
            return n * t - std::exp(t) * a - 0.5 * b * e * e + c * e;
        };
        boost::uintmax_t iters = 200;
        const auto [t, neg] = boost::math::tools::brent_find_minima(
            [&](double x) { return -gain(x); }, -30.0, 30.0, 40, iters);
        if (!(-neg > gain(0.0)) || t == 0.0)
            continue;
        const double scale = std::exp(t);
        s.assoc_location.col(r) *= scale;
        s.assoc_scale_sq.col(r) *= scale * scale;
        s.basis_mean.col(r) /= scale;
        s.basis_var.col(r) /= scale * scale;
    }
}

namespace detail {

/// Per-sample slice of the bound as a function of theta_i. The bound is
/// separable over samples in the cluster logits.
class ClusterObjective {
  public:
    ClusterObjective(const Model& model, const VariationalState& s)
        : model_(model), e_gamma_(gamma_expectations(s.noise).mean) {
        const Moments mo = model.moments(s);
        s_mean_ = mo.s_mean;
        s_var_ = mo.s_var;
        w_ = mo.w;
        const Vector p = mo.w2.colwise().sum().transpose();
        q_ = p - mo.w.colwise().squaredNorm().transpose();
        vs_p_ = s_var_ * p;
    }

    /// Value of -E[gamma]/2 * SSR_i; fills `grad` (length K) if non-null.
    double value(Index i, const Eigen::RowVectorXd& theta,
                 Eigen::RowVectorXd* grad) const {
        const auto& X = model_.data().X;
        const double zeta = model_.hyper().zeta;
        const Index K = s_mean_.rows(), R = s_mean_.cols(), D = X.cols();

        const double mx = theta.maxCoeff();
        Eigen::RowVectorXd p = (theta.array() - mx).exp().matrix();
        p /= p.sum();
        const Eigen::RowVectorXd u = zeta * model_.data().U0.row(i) + (1.0 - zeta) * p;
        const Eigen::RowVectorXd m = u * s_mean_;

        double ssr = 0.0;
        Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(R);
        for (Index j = 0; j < D; ++j) {
            const double e = X(i, j) - m.dot(w_.row(j));
            ssr += e * e;
            if (grad)
                a += e * w_.row(j);
        }
        for (Index r = 0; r < R; ++r)
            ssr += m(r) * m(r) * q_(r);
        ssr += u.cwiseAbs2().dot(vs_p_);

        if (grad) {
            Eigen::RowVectorXd h(R);
            for (Index r = 0; r < R; ++r)
                h(r) = -2.0 * a(r) + 2.0 * m(r) * q_(r);
            Eigen::RowVectorXd gu(K);
            for (Index k = 0; k < K; ++k)
                gu(k) = -0.5 * e_gamma_ *
                        (s_mean_.row(k).dot(h) + 2.0 * u(k) * vs_p_(k));
            const double pg = p.dot(gu);
            *grad = (1.0 - zeta) * p.cwiseProduct((gu.array() - pg).matrix());
        }
        return -0.5 * e_gamma_ * ssr;
    }

  private:
    const Model& model_;
    double e_gamma_;
    Matrix s_mean_, s_var_, w_;
    Vector q_;    // sum_j (w2 - w^2)
    Vector vs_p_; // s_var * sum_j w2
};

} // namespace detail

/// d elbo / d theta^U.
inline Matrix cluster_gradient(const Model& model, const VariationalState& s) {
    const detail::ClusterObjective obj(model, s);
    Matrix g(s.cluster_logits.rows(), s.cluster_logits.cols());
    for (Index i = 0; i < g.rows(); ++i) {
        Eigen::RowVectorXd gi;
        obj.value(i, s.cluster_logits.row(i), &gi);
        g.row(i) = gi;
    }
    return g;
}

struct ClusterUpdate {
    Matrix logits;
    bool stalled = false;
    int iterations = 0; // largest inner-iteration count over samples
};

/// Armijo gradient ascent on theta^U, one independent search per sample.
inline ClusterUpdate update_cluster(const Model& model, const VariationalState& s,
                                    const GradientBlockConfig& cfg) {
    cfg.validate();
    ClusterUpdate out{s.cluster_logits, false, 0};
    if (model.hyper().zeta == 1.0)
        return out;
    const detail::ClusterObjective obj(model, s);
    const auto N = static_cast<std::size_t>(s.cluster_logits.rows());
    std::vector<char> stalled(N, 0);
    std::vector<int> iters(N, 0);
    parallel_for(N, model.threads(), [&](std::size_t ii) {
        const auto i = static_cast<Index>(ii);
        Eigen::RowVectorXd theta = s.cluster_logits.row(i);
        Eigen::RowVectorXd g;
        double f = obj.value(i, theta, &g);
        double step = cfg.initial_step;
        for (int it = 0; it < cfg.max_inner; ++it) {
            const double gg = g.squaredNorm();
            if (std::sqrt(gg) < cfg.grad_tol)
                break;
            bool accepted = false;
            while (step >= cfg.min_step) {
                const Eigen::RowVectorXd trial = theta + step * g;
                Eigen::RowVectorXd gt;
                const double ft = obj.value(i, trial, &gt);
                if (std::isfinite(ft) && ft >= f + cfg.armijo * step * gg) {
                    theta = trial;
                    f = ft;
                    g = gt;
                    accepted = true;
                    break;
                }
                step *= cfg.shrink;
            }
            if (!accepted) {
                stalled[ii] = 1;
                break;
            }
            iters[ii] = it + 1;
            step = std::min(step * 2.0, 1e8);
        }
        out.logits.row(i) = theta;
    });
    for (std::size_t i = 0; i < N; ++i) {
        out.stalled = out.stalled || stalled[i];
        out.iterations = std::max(out.iterations, iters[i]);
    }
    return out;
}

/// Unconstrained coordinates of the membership-coupling block.
struct CouplingParams {
    Matrix mean_g;     // D x R
    Matrix log_var_g;  // D x R
    Vector mean_pi;    // R
    Vector log_var_pi; // R

    static CouplingParams from_state(const VariationalState& s) {
        return {s.coupling_mean, s.coupling_var.array().log().matrix(),
                s.sparsity_mean, s.sparsity_var.array().log().matrix()};
    }
    void write_to(VariationalState& s) const {
        s.coupling_mean = mean_g;
        s.coupling_var = log_var_g.array().exp().matrix();
        s.sparsity_mean = mean_pi;
        s.sparsity_var = log_var_pi.array().exp().matrix();
    }
    double dot(const CouplingParams& o) const {
        return mean_g.cwiseProduct(o.mean_g).sum() +
               log_var_g.cwiseProduct(o.log_var_g).sum() + mean_pi.dot(o.mean_pi) +
               log_var_pi.dot(o.log_var_pi);
    }
    CouplingParams plus(double t, const CouplingParams& d) const {
        return {mean_g + t * d.mean_g, log_var_g + t * d.log_var_g,
                mean_pi + t * d.mean_pi, log_var_pi + t * d.log_var_pi};
    }
};

namespace detail {

/// The regularized objective as a function of the coupling block only, up
/// to an additive constant. Likelihood dependence enters through q(Z = 1)
/// and is evaluated from precomputed cross-products, without touching X.
class CouplingObjective {
  public:
    CouplingObjective(const Model& model, const VariationalState& s)
        : model_(model), e_gamma_(gamma_expectations(s.noise).mean) {
        const Moments mo = model.moments(s);
        const auto& data = model.data();
        xtm_ = data.X.transpose() * mo.m;
        gram_m_ = mo.m.transpose() * mo.m;
        t2_sum_ = mo.t2.colwise().sum().transpose();
        m2_sum_ = mo.m.colwise().squaredNorm().transpose();
        mu_v_ = s.basis_mean;
        ev2_ = (s.basis_mean.array().square() + s.basis_var.array()).matrix();
        in_m_ = Matrix::Zero(data.D(), data.R());
        for (const auto& [j, r] : data.M)
            in_m_(j, r) = 1.0;
        c_ = model.beta_a() / static_cast<double>(data.R());
    }

    double value(const CouplingParams& x, CouplingParams* grad) const {
        const double ninf = -std::numeric_limits<double>::infinity();
        const Index D = mu_v_.rows(), R = mu_v_.cols();
        const double xi = model_.hyper().xi;
        const auto& lap = model_.laplacian();

        const Matrix var_g = x.log_var_g.array().exp().matrix();
        const Vector var_pi = x.log_var_pi.array().exp().matrix();
        if (!var_g.allFinite() || !var_pi.allFinite() || !x.mean_g.allFinite() ||
            !x.mean_pi.allFinite() || (var_g.array() <= 0.0).any() ||
            (var_pi.array() <= 0.0).any())
            return ninf;

        Matrix delta(D, R), sd(D, R), rho(D, R);
        double pen = 0.0;
        for (Index r = 0; r < R; ++r)
            for (Index j = 0; j < D; ++j) {
                sd(j, r) = std::sqrt(var_pi(r) + var_g(j, r));
                delta(j, r) = (x.mean_pi(r) - x.mean_g(j, r)) / sd(j, r);
                if (!std::isfinite(delta(j, r)))
                    return ninf;
                rho(j, r) = std_normal_cdf(delta(j, r));
                if (in_m_(j, r) != 0.0)
                    pen += log_std_normal_cdf(delta(j, r));
            }
        const Matrix w = rho.cwiseProduct(mu_v_);
        const Matrix w2 = rho.cwiseProduct(ev2_);
        const Matrix gram_w = w.transpose() * w;
        double ssr = -2.0 * w.cwiseProduct(xtm_).sum() +
                     gram_m_.cwiseProduct(gram_w).sum();
        for (Index r = 0; r < R; ++r)
            ssr += t2_sum_(r) * w2.col(r).sum() - m2_sum_(r) * gram_w(r, r);

        const Matrix lam_mu = lap.precision() * x.mean_g;
        double f = -0.5 * e_gamma_ * ssr + xi * pen;
        std::vector<ExpectedLogCdf> lcs;
        lcs.reserve(static_cast<std::size_t>(R));
        for (Index r = 0; r < R; ++r) {
            f += -0.5 * (x.mean_g.col(r).dot(lam_mu.col(r)) +
                         lap.precision_diagonal().dot(var_g.col(r)));
            f += 0.5 * x.log_var_g.col(r).sum();
            const auto& lc = lcs.emplace_back(expected_log_cdf(x.mean_pi(r), var_pi(r)));
            f += (c_ - 1.0) * lc.value -
                 0.5 * (x.mean_pi(r) * x.mean_pi(r) + var_pi(r)) +
                 0.5 * x.log_var_pi(r);
        }
        if (!std::isfinite(f))
            return ninf;
        if (!grad)
            return f;

        // d f / d rho, then d f / d delta.
        const Matrix d_ssr_dw = -2.0 * xtm_ + 2.0 * w * gram_m_ -
                                2.0 * w * m2_sum_.asDiagonal();
        grad->mean_g.resize(D, R);
        grad->log_var_g.resize(D, R);
        grad->mean_pi = Vector::Zero(R);
        grad->log_var_pi = Vector::Zero(R);
        Vector d_var_pi = Vector::Zero(R);
        for (Index r = 0; r < R; ++r) {
            for (Index j = 0; j < D; ++j) {
                const double d_ssr_drho =
                    d_ssr_dw(j, r) * mu_v_(j, r) + t2_sum_(r) * ev2_(j, r);
                double g_delta =
                    -0.5 * e_gamma_ * d_ssr_drho * std_normal_pdf(delta(j, r));
                if (in_m_(j, r) != 0.0)
                    g_delta += xi * pdf_over_cdf(delta(j, r));
                const double s = sd(j, r);
                const double d_var = g_delta * (-delta(j, r) / (2.0 * s * s));
                grad->mean_g(j, r) = -g_delta / s - lam_mu(j, r);
                grad->log_var_g(j, r) =
                    var_g(j, r) * (d_var - 0.5 * lap.precision_diagonal()(j)) + 0.5;
                grad->mean_pi(r) += g_delta / s;
                d_var_pi(r) += d_var;
            }
            const auto& lc = lcs[static_cast<std::size_t>(r)];
            grad->mean_pi(r) += (c_ - 1.0) * lc.d_mean - x.mean_pi(r);
            grad->log_var_pi(r) =
                var_pi(r) * (d_var_pi(r) + (c_ - 1.0) * lc.d_variance - 0.5) + 0.5;
        }
        return f;
    }

  private:
    const Model& model_;
    double e_gamma_;
    double c_;
    Matrix xtm_, gram_m_, mu_v_, ev2_, in_m_;
    Vector t2_sum_, m2_sum_;
};

} // namespace detail

/// Gradient of the regularized objective in the coupling block's
/// unconstrained coordinates (means and log-variances).
inline CouplingParams coupling_gradient(const Model& model,
                                        const VariationalState& s) {
    const detail::CouplingObjective obj(model, s);
    CouplingParams g;
    obj.value(CouplingParams::from_state(s), &g);
    return g;
}

struct CouplingUpdate {
    Matrix coupling_mean;
    Matrix coupling_var;
    Vector sparsity_mean;
    Vector sparsity_var;
    bool stalled = false;
    int iterations = 0;
};

/// Joint Armijo ascent over {q(G), q(pi_bar)} on the regularized objective.
inline CouplingUpdate update_coupling(const Model& model, const VariationalState& s,
                                      const GradientBlockConfig& cfg) {
    cfg.validate();
    const detail::CouplingObjective obj(model, s);
    CouplingParams x = CouplingParams::from_state(s);
    CouplingParams g;
    double f = obj.value(x, &g);
    if (!std::isfinite(f))
        throw NumericalError("coupling", "objective not finite at block start");
    CouplingUpdate out;
    double step = cfg.initial_step;
    for (int it = 0; it < cfg.max_inner; ++it) {
        const double gg = g.dot(g);
        if (std::sqrt(gg) < cfg.grad_tol)
            break;
        bool accepted = false;
        while (step >= cfg.min_step) {
            const CouplingParams trial = x.plus(step, g);
            CouplingParams gt;
            const double ft = obj.value(trial, &gt);
            if (std::isfinite(ft) && ft >= f + cfg.armijo * step * gg) {
                x = trial;
                f = ft;
                g = std::move(gt);
                accepted = true;
                break;
            }
            step *= cfg.shrink;
        }
        if (!accepted) {
            out.stalled = true;
            break;
        }
        out.iterations = it + 1;
        step = std::min(step * 2.0, 1e8);
    }
    VariationalState tmp;
    x.write_to(tmp);
    out.coupling_mean = std::move(tmp.coupling_mean);
    out.coupling_var = std::move(tmp.coupling_var);
    out.sparsity_mean = std::move(tmp.sparsity_mean);
    out.sparsity_var = std::move(tmp.sparsity_var);
    return out;
}

enum class Block { noise = 0, association, basis, cluster, coupling, extrapolation };
inline constexpr std::size_t kBlocks = 6;
inline constexpr std::array<const char*, kBlocks> kBlockNames = {
    "noise", "association", "basis", "cluster", "coupling", "extrapolation"};

/// from + eta * (to - from), taken in unconstrained coordinates: variances,
/// scales and the Gamma parameters move on the log scale.
inline VariationalState extrapolate(const VariationalState& from,
                                    const VariationalState& to, double eta) {
    auto lin = [eta](const auto& a, const auto& b) {
        using M = std::decay_t<decltype(a)>;
        return M(a + eta * (b - a));
    };
    // Unchanged entries are copied, not round-tripped through log/exp.
    auto geo1 = [eta](double a, double b) {
        return a == b ? a : std::exp(std::log(a) + eta * (std::log(b) - std::log(a)));
    };
    auto geo = [&geo1](const auto& a, const auto& b) {
        using M = std::decay_t<decltype(a)>;
        return M(a.binaryExpr(b, geo1));
    };
    VariationalState s;
    s.noise = {geo1(from.noise.shape, to.noise.shape), geo1(from.noise.rate, to.noise.rate)};
    s.assoc_location = lin(from.assoc_location, to.assoc_location);
    s.assoc_scale_sq = geo(from.assoc_scale_sq, to.assoc_scale_sq);
    s.basis_mean = lin(from.basis_mean, to.basis_mean);
    s.basis_var = geo(from.basis_var, to.basis_var);
    s.coupling_mean = lin(from.coupling_mean, to.coupling_mean);
    s.coupling_var = geo(from.coupling_var, to.coupling_var);
    s.sparsity_mean = lin(from.sparsity_mean, to.sparsity_mean);
    s.sparsity_var = geo(from.sparsity_var, to.sparsity_var);
    s.cluster_logits = lin(from.cluster_logits, to.cluster_logits);
    return s;
}

struct SweepRecord {
    int sweep = 0;
    double elbo = 0.0;
    double penalty = 0.0;
    double objective = 0.0;
    std::array<double, kBlocks> block_delta{}; // objective change per block
};

struct ElboTrace {
    std::vector<SweepRecord> records; // records[0] is the initial state

    /// Largest drop between consecutive sweeps, relative to |previous|.
    double max_relative_decrease() const {
        double worst = 0.0;
        for (std::size_t t = 1; t < records.size(); ++t) {
            const double prev = records[t - 1].objective;
            const double drop = prev - records[t].objective;
            worst = std::max(worst, drop / std::max(std::abs(prev), 1e-300));
        }
        return worst;
    }
    bool monotone(double rel_tol = 1e-8) const {
        return max_relative_decrease() <= rel_tol;
    }
};

struct FitOptions {
    GradientBlockConfig cluster;
    GradientBlockConfig coupling;
    bool track_block_deltas = true;
    int converge_patience = 3;
    /// Rescale each (S_:r, V_:r) pair after the basis block.
    bool rebalance = true;
    /// Adaptive overrelaxation: after each sweep, try moving further along
    /// the sweep's displacement with a growing factor; keep the move only if
    /// the objective improves, else reset the factor.
    bool overrelax = true;
    double overrelax_growth = 1.5;
    double overrelax_max = 64.0;
    /// Sweeps during which the coupling block is held at its initial value.
    int coupling_warmup = 0;
};

struct FitReport {
    VariationalState state;
    ElboTrace trace;
    bool converged = false;
    int sweeps = 0;
    std::array<double, kBlocks> wall_seconds{}; // per block, summed over sweeps
    int cluster_stalls = 0;
    int coupling_stalls = 0;
    std::vector<std::string> warnings;
};

/// Runs sweeps noise -> S -> V -> theta^U -> (G, pi_bar) from `init` until the
/// relative objective change stays below the tolerance for
/// `converge_patience` consecutive sweeps, or max_sweeps is reached.
inline FitReport fit(const Model& model, VariationalState init,
                     const FitOptions& opt = {}) {
    using clock = std::chrono::steady_clock;
    model.check_shapes(init);
    const auto& sched = model.hyper().schedule;
    FitReport rep;
    if (model.data().M.empty() && model.hyper().xi > 0.0)
        rep.warnings.emplace_back(
            "constraint set M is empty; the membership penalty has no effect");

    VariationalState& s = rep.state;
    s = std::move(init);
    Objective cur = model.regularized_objective(s);
    rep.trace.records.push_back({0, cur.elbo, cur.penalty, cur.objective, {}});

    int calm = 0;
    double eta = 1.0;
    VariationalState start;
    for (int sweep = 1; sweep <= sched.max_sweeps; ++sweep) {
        if (opt.overrelax)
            start = s;
        SweepRecord rec;
        rec.sweep = sweep;
        double before = cur.objective;
        auto finish_block = [&](Block b, clock::time_point t0) {
            const auto bi = static_cast<std::size_t>(b);
            rep.wall_seconds[bi] +=
                std::chrono::duration<double>(clock::now() - t0).count();
            if (opt.track_block_deltas) {
                const double now = model.regularized_objective(s).objective;
                rec.block_delta[bi] = now - before;
                before = now;
            }
        };

        auto t0 = clock::now();
        s.noise = update_noise(model, s);
        finish_block(Block::noise, t0);

        t0 = clock::now();
        sweep_association(model, s);
        finish_block(Block::association, t0);

        t0 = clock::now();
        sweep_basis(model, s);
        if (opt.rebalance)
            rebalance_scales(model, s);
        finish_block(Block::basis, t0);

        t0 = clock::now();
        auto cu = update_cluster(model, s, opt.cluster);
        s.cluster_logits = std::move(cu.logits);
        rep.cluster_stalls += cu.stalled ? 1 : 0;
        finish_block(Block::cluster, t0);

        t0 = clock::now();
        if (sweep > opt.coupling_warmup) {
            auto gu = update_coupling(model, s, opt.coupling);
            s.coupling_mean = std::move(gu.coupling_mean);
            s.coupling_var = std::move(gu.coupling_var);
            s.sparsity_mean = std::move(gu.sparsity_mean);
            s.sparsity_var = std::move(gu.sparsity_var);
            rep.coupling_stalls += gu.stalled ? 1 : 0;
        }
        finish_block(Block::coupling, t0);

        Objective next = model.regularized_objective(s);
        t0 = clock::now();
        if (opt.overrelax) {
            eta = std::min(eta * opt.overrelax_growth, opt.overrelax_max);
            VariationalState trial = extrapolate(start, s, eta);
            Objective tried{-std::numeric_limits<double>::infinity(), 0.0, 0.0};
            try {
                tried = model.regularized_objective(trial);
            } catch (const NumericalError&) {
            }
            if (tried.objective > next.objective) {
                s = std::move(trial);
                next = tried;
            } else {
                eta = 1.0;
            }
        }
        rep.wall_seconds[static_cast<std::size_t>(Block::extrapolation)] +=
            std::chrono::duration<double>(clock::now() - t0).count();
        if (opt.track_block_deltas)
            rec.block_delta[static_cast<std::size_t>(Block::extrapolation)] =
                next.objective - before;
        rec.elbo = next.elbo;
        rec.penalty = next.penalty;
        rec.objective = next.objective;
        rep.trace.records.push_back(rec);
        rep.sweeps = sweep;

        const double rel = std::abs(next.objective - cur.objective) /
                           std::max(std::abs(cur.objective), 1e-300);
        cur = next;
        calm = rel < sched.elbo_rel_tol && sweep > opt.coupling_warmup ? calm + 1 : 0;
        if (calm >= opt.converge_patience) {
            rep.converged = true;
            break;
        }
    }
    return rep;
}

/// Moves the coupling means of constrained pairs two standard deviations
/// below the threshold, so q(Z = 1) starts near Phi(2) on M. Everything
/// else is left as given.
inline VariationalState constrained_start(const Model& model, VariationalState s,
                                          double margin = 2.0) {
    model.check_shapes(s);
    for (const auto& [j, r] : model.data().M)
        s.coupling_mean(j, r) =
            s.sparsity_mean(r) - margin * std::sqrt(s.sparsity_var(r) + s.coupling_var(j, r));
    return s;
}

inline FitReport fit(const ObservationSet& data, const Hyperparameters& hyper,
                     const FitOptions& opt = {}) {
    const Model model(data, hyper);
    return fit(model, model.initial_state(), opt);
}

} // namespace sntf
