#pragma once

// Data, hyperparameters and variational state of the semi-nonnegative
// tri-factorization X ~ U S (Z o V)^T, plus pure evaluation of the evidence
// lower bound, the membership-regularized objective and derived summaries.

#include "sntf/dist.hpp"
#include "sntf/error.hpp"
#include "sntf/graph.hpp"
#include "sntf/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sntf {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Observations and structured prior knowledge, aligned on one feature order.
struct ObservationSet {
    Matrix X;  // N x D
    Matrix U0; // N x K, one-hot rows
    Matrix Z0; // D x R, 0/1
    std::vector<std::pair<Index, Index>> M; // (j, r) with Z0(j, r) == 1
    InteractionGraph graph;                 // nodes in feature order
    std::vector<std::string> sample_ids;
    std::vector<std::string> feature_ids;
    std::vector<std::string> cluster_ids;
    std::vector<std::string> set_ids;

    Index N() const noexcept { return X.rows(); }
    Index D() const noexcept { return X.cols(); }
    Index K() const noexcept { return U0.cols(); }
    Index R() const noexcept { return Z0.cols(); }

    static std::vector<std::pair<Index, Index>>
    constraints_from_mask(const Matrix& Z0) {
        std::vector<std::pair<Index, Index>> out;
        for (Index j = 0; j < Z0.rows(); ++j)
            for (Index r = 0; r < Z0.cols(); ++r)
                if (Z0(j, r) == 1.0)
                    out.emplace_back(j, r);
        return out;
    }

    /// Throws DomainError naming the first violated invariant.
    void validate() const {
        const Index n = N(), d = D(), k = K(), r = R();
        if (n < 1 || d < 1 || k < 1 || r < 1)
            throw DomainError("observation set has an empty dimension");
        if (U0.rows() != n)
            throw DomainError("U0 rows must match X rows");
        if (Z0.rows() != d)
            throw DomainError("Z0 rows must match X columns");
        if (!X.allFinite())
            throw DomainError("X contains non-finite values");
        for (Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Index c = 0; c < k; ++c) {
                if (U0(i, c) != 0.0 && U0(i, c) != 1.0)
                    throw DomainError("U0 must be 0/1");
                s += U0(i, c);
            }
            if (s != 1.0)
                throw DomainError("each U0 row must contain exactly one 1");
        }
        for (Index j = 0; j < d; ++j)
            for (Index c = 0; c < r; ++c)
                if (Z0(j, c) != 0.0 && Z0(j, c) != 1.0)
                    throw DomainError("Z0 must be 0/1");
        if (M != constraints_from_mask(Z0))
            throw DomainError("constraint set M must equal the nonzeros of Z0");
        if (static_cast<Index>(graph.size()) != d)
            throw DomainError("graph must have one node per feature");
        auto len_ok = [](const auto& v, Index want) {
            return static_cast<Index>(v.size()) == want;
        };
        if (!len_ok(sample_ids, n) || !len_ok(feature_ids, d) ||
            !len_ok(cluster_ids, k) || !len_ok(set_ids, r))
            throw DomainError("label list lengths must match matrix dimensions");
        if (graph.node_labels() != feature_ids)
            throw DomainError("graph node order must equal feature order");
    }
};

/// Inference schedule. `threads` only changes wall time, never results.
struct Schedule {
    int max_sweeps = 1000;
    double elbo_rel_tol = 1e-6;
    std::uint64_t seed = 1;
    int threads = 1;
};

/// Prior constants. Scalars broadcast unless the matching matrix override is
/// set; `beta_a` defaults to R/10 when unset.
struct Hyperparameters {
    double alpha_a0 = 1.0;
    double alpha_b0 = 1.0;
    double lambda_S0 = 1.0;
    double mu_V0 = 0.0;
    double sigma_V0 = 1.0; // variance
    std::optional<double> beta_a;
    double zeta = 0.9;
    double xi = 100.0;
    double epsilon = 0.05;
    std::optional<Matrix> lambda_S0_matrix; // K x R
    std::optional<Matrix> mu_V0_matrix;     // D x R
    std::optional<Matrix> sigma_V0_matrix;  // D x R
    Schedule schedule;

    double beta_a_for(Index R) const {
        return beta_a ? *beta_a : static_cast<double>(R) / 10.0;
    }

    void validate(Index K, Index D, Index R) const {
        auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
        if (!pos(alpha_a0) || !pos(alpha_b0))
            throw DomainError("alpha_a0 and alpha_b0 must be > 0");
        if (!pos(beta_a_for(R)))
            throw DomainError("beta_a must be > 0");
        if (!(zeta >= 0.0 && zeta <= 1.0))
            throw DomainError("zeta must lie in [0,1]");
        if (!(xi >= 0.0) || !std::isfinite(xi))
            throw DomainError("xi must be >= 0");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            throw DomainError("epsilon must be >= 0");
        if (!std::isfinite(mu_V0))
            throw DomainError("mu_V0 must be finite");
        if (schedule.max_sweeps < 1)
            throw DomainError("max_sweeps must be >= 1");
        if (!(schedule.elbo_rel_tol > 0.0))
            throw DomainError("elbo_rel_tol must be > 0");
        const Matrix ls = lambda_S(K, R);
        const Matrix sv = sigma_V(D, R);
        if (!(ls.array() > 0.0).all() || !ls.allFinite())
            throw DomainError("lambda_S0 entries must be > 0");
        if (!(sv.array() > 0.0).all() || !sv.allFinite())
            throw DomainError("sigma_V0 entries must be > 0");
        if (!mu_V(D, R).allFinite())
            throw DomainError("mu_V0 entries must be finite");
    }

    Matrix lambda_S(Index K, Index R) const {
        return broadcast(lambda_S0_matrix, lambda_S0, K, R, "lambda_S0");
    }
    Matrix mu_V(Index D, Index R) const {
        return broadcast(mu_V0_matrix, mu_V0, D, R, "mu_V0");
    }
    Matrix sigma_V(Index D, Index R) const {
        return broadcast(sigma_V0_matrix, sigma_V0, D, R, "sigma_V0");
    }

  private:
    static Matrix broadcast(const std::optional<Matrix>& m, double scalar,
                            Index rows, Index cols, const char* name) {
        if (!m)
            return Matrix::Constant(rows, cols, scalar);
        if (m->rows() != rows || m->cols() != cols)
            throw DomainError(std::string(name) + " matrix has wrong shape");
        return *m;
    }
};

/// Parameters of the fully factorized variational posterior. All `_var`
/// and `_scale_sq` members are variances.
struct VariationalState {
    GammaParams noise;
    Matrix assoc_location; // K x R, truncated-normal parent location
    Matrix assoc_scale_sq; // K x R
    Matrix basis_mean;     // D x R
    Matrix basis_var;      // D x R
    Matrix coupling_mean;  // D x R
    Matrix coupling_var;   // D x R
    Vector sparsity_mean;  // R
    Vector sparsity_var;   // R
    Matrix cluster_logits; // N x K

    TruncatedNormalParams assoc(Index k, Index r) const {
        return {assoc_location(k, r), assoc_scale_sq(k, r)};
    }
    NormalParams basis(Index j, Index r) const {
        return {basis_mean(j, r), basis_var(j, r)};
    }
    NormalParams coupling(Index j, Index r) const {
        return {coupling_mean(j, r), coupling_var(j, r)};
    }
    NormalParams sparsity(Index r) const {
        return {sparsity_mean(r), sparsity_var(r)};
    }

    bool operator==(const VariationalState& o) const {
        return noise.shape == o.noise.shape && noise.rate == o.noise.rate &&
               assoc_location == o.assoc_location &&
               assoc_scale_sq == o.assoc_scale_sq &&
               basis_mean == o.basis_mean && basis_var == o.basis_var &&
               coupling_mean == o.coupling_mean &&
               coupling_var == o.coupling_var &&
               sparsity_mean == o.sparsity_mean &&
               sparsity_var == o.sparsity_var &&
               cluster_logits == o.cluster_logits;
    }
};

/// u_i = zeta * u0_i + (1 - zeta) * softmax(theta_i), row by row.
inline Matrix mix_cluster(const Matrix& theta, const Matrix& U0, double zeta) {
    if (theta.rows() != U0.rows() || theta.cols() != U0.cols())
        throw DomainError("mix_cluster: logits and U0 shapes differ");
    if (!(zeta >= 0.0 && zeta <= 1.0))
        throw DomainError("mix_cluster: zeta must lie in [0,1]");
    Matrix out(theta.rows(), theta.cols());
    for (Index i = 0; i < theta.rows(); ++i) {
        const double mx = theta.row(i).maxCoeff();
        Eigen::RowVectorXd e = (theta.row(i).array() - mx).exp().matrix();
        e /= e.sum();
        out.row(i) = zeta * U0.row(i) + (1.0 - zeta) * e;
    }
    return out;
}

/// Standardized threshold gap (mu_pi - mu_g) / sqrt(var_pi + var_g).
inline double z_threshold_gap(const NormalParams& coupling,
                              const NormalParams& sparsity) {
    return (sparsity.mean - coupling.mean) /
           std::sqrt(sparsity.variance + coupling.variance);
}

/// q(Z = 1) = P(G < pi_bar) for independent Gaussians G and pi_bar.
inline double z_marginal(const NormalParams& coupling,
                         const NormalParams& sparsity) {
    if (!coupling.valid() || !sparsity.valid())
        throw DomainError("z_marginal: variances must be > 0");
    return std_normal_cdf(z_threshold_gap(coupling, sparsity));
}

/// First and second moments of everything the likelihood touches. With
/// T = U S and W = Z o V: m = E[T], t2 = E[T^2], w = E[W], w2 = E[W^2].
struct Moments {
    Matrix u;      // N x K
    Matrix s_mean; // K x R
    Matrix s_var;  // K x R
    Matrix rho;    // D x R, q(Z = 1)
    Matrix w;      // D x R
    Matrix w2;     // D x R
    Matrix m;      // N x R
    Matrix t2;     // N x R
};

/// The evidence lower bound split by variational block.
struct ElboTerms {
    double likelihood = 0.0;  // E[log p(X | ...)]
    double noise = 0.0;       // E[log p(gamma)] + H[q(gamma)]
    double association = 0.0; // S
    double basis = 0.0;       // V
    double coupling = 0.0;    // G
    double sparsity = 0.0;    // pi_bar

    double total() const {
        return likelihood + noise + association + basis + coupling + sparsity;
    }
};

struct Objective {
    double objective;
    double elbo;
    double penalty;
};

struct RankedSet {
    std::string set_id;
    double score;
    bool operator==(const RankedSet&) const = default;
};

/// Posterior summaries reported after a fit.
struct AssociationResult {
    Matrix assoc_mean; // K x R, E[S]
    Matrix z_marginal; // D x R, q(Z = 1)
    Matrix u_mixed;    // N x K
    std::vector<std::string> set_ids;
    std::vector<std::vector<RankedSet>> ranked; // per cluster
};

/// Sets ranked by E[S_kr] descending; ties go to the lexicographically
/// smaller set id.
inline std::vector<RankedSet> rank_sets(const AssociationResult& result,
                                        Index k, Index top_m) {
    if (k < 0 || k >= result.assoc_mean.rows())
        throw DomainError("rank_sets: cluster index out of range");
    const Index R = result.assoc_mean.cols();
    if (top_m < 1 || top_m > R)
        throw DomainError("rank_sets: top_m must lie in [1, R]");
    if (static_cast<Index>(result.set_ids.size()) != R)
        throw DomainError("rank_sets: set id count does not match R");
    std::vector<Index> order(static_cast<std::size_t>(R));
    for (Index r = 0; r < R; ++r)
        order[static_cast<std::size_t>(r)] = r;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double sa = result.assoc_mean(k, a), sb = result.assoc_mean(k, b);
        if (sa != sb)
            return sa > sb;
        return result.set_ids[static_cast<std::size_t>(a)] <
               result.set_ids[static_cast<std::size_t>(b)];
    });
    std::vector<RankedSet> out;
    for (Index i = 0; i < top_m; ++i) {
        const Index r = order[static_cast<std::size_t>(i)];
        out.push_back({result.set_ids[static_cast<std::size_t>(r)],
                       result.assoc_mean(k, r)});
    }
    return out;
}

/// Binds an observation set to resolved hyperparameters and the graph prior.
/// Holds a reference to `data`, which must outlive the model.
class Model {
  public:
    Model(const ObservationSet& data, const Hyperparameters& hyper)
        : data_(data), hyper_(hyper),
          lap_(normalized_laplacian(data.graph, hyper.epsilon)) {
        data.validate();
        hyper.validate(data.K(), data.D(), data.R());
        lambda_S_ = hyper.lambda_S(data.K(), data.R());
        mu_V0_ = hyper.mu_V(data.D(), data.R());
        var_V0_ = hyper.sigma_V(data.D(), data.R());
        beta_a_ = hyper.beta_a_for(data.R());
        x_sq_norm_ = data.X.squaredNorm();
    }

    const ObservationSet& data() const noexcept { return data_; }
    const Hyperparameters& hyper() const noexcept { return hyper_; }
    const LaplacianOperator& laplacian() const noexcept { return lap_; }
    const Matrix& lambda_S() const noexcept { return lambda_S_; }
    const Matrix& mu_V0() const noexcept { return mu_V0_; }
    const Matrix& var_V0() const noexcept { return var_V0_; }
    double beta_a() const noexcept { return beta_a_; }
    int threads() const noexcept { return std::max(1, hyper_.schedule.threads); }

    /// Prior-mean start: E[S] at the exponential mean, V at its prior mean
    /// plus seeded 0.01-scale jitter, couplings at zero, pi_bar at the
    /// quantile of E[pi].
    VariationalState initial_state() const {
        const Index N = data_.N(), D = data_.D(), K = data_.K(), R = data_.R();
        VariationalState s;
        s.noise = {hyper_.alpha_a0, hyper_.alpha_b0};
        s.assoc_location = lambda_S_.cwiseInverse();
        s.assoc_scale_sq = Matrix::Ones(K, R);
        std::mt19937_64 rng(hyper_.schedule.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        s.basis_mean = mu_V0_;
        for (Index r = 0; r < R; ++r)
            for (Index j = 0; j < D; ++j)
                s.basis_mean(j, r) += 0.01 * normal(rng);
        s.basis_var = var_V0_;
        s.coupling_mean = Matrix::Zero(D, R);
        s.coupling_var = Matrix::Ones(D, R);
        const double c = beta_a_ / static_cast<double>(R);
        s.sparsity_mean = Vector::Constant(R, std_normal_quantile(c / (c + 1.0)));
        s.sparsity_var = Vector::Ones(R);
        s.cluster_logits = Matrix::Zero(N, K);
        return s;
    }

    void check_shapes(const VariationalState& s) const {
        const Index N = data_.N(), D = data_.D(), K = data_.K(), R = data_.R();
        auto shape = [](const auto& m, Index r, Index c) {
            return m.rows() == r && m.cols() == c;
        };
        if (!shape(s.assoc_location, K, R) || !shape(s.assoc_scale_sq, K, R) ||
            !shape(s.basis_mean, D, R) || !shape(s.basis_var, D, R) ||
            !shape(s.coupling_mean, D, R) || !shape(s.coupling_var, D, R) ||
            s.sparsity_mean.size() != R || s.sparsity_var.size() != R ||
            !shape(s.cluster_logits, N, K))
            throw DomainError("variational state shape does not match data");
    }

    Matrix mixed_clusters(const VariationalState& s) const {
        return mix_cluster(s.cluster_logits, data_.U0, hyper_.zeta);
    }

    /// q(Z = 1) for every (j, r).
    Matrix z_marginals(const VariationalState& s) const {
        const Index D = data_.D(), R = data_.R();
        Matrix rho(D, R);
        for (Index r = 0; r < R; ++r)
            for (Index j = 0; j < D; ++j)
                rho(j, r) = std_normal_cdf(
                    z_threshold_gap(s.coupling(j, r), s.sparsity(r)));
        return rho;
    }

    Moments moments(const VariationalState& s) const {
        check_shapes(s);
        const Index K = data_.K(), R = data_.R();
        Moments mo;
        mo.u = mixed_clusters(s);
        mo.s_mean.resize(K, R);
        mo.s_var.resize(K, R);
        for (Index r = 0; r < R; ++r)
            for (Index k = 0; k < K; ++k) {
                const auto tn = truncated_normal_moments(s.assoc(k, r));
                mo.s_mean(k, r) = tn.mean;
                mo.s_var(k, r) = tn.variance;
            }
        mo.rho = z_marginals(s);
        mo.w = mo.rho.cwiseProduct(s.basis_mean);
        mo.w2 = mo.rho.cwiseProduct(
            (s.basis_mean.array().square() + s.basis_var.array()).matrix());
        mo.m = mo.u * mo.s_mean;
        mo.t2 = mo.m.cwiseAbs2() + mo.u.cwiseAbs2() * mo.s_var;
        return mo;
    }

    /// sum_ij E[(X_ij - u_i^T S (z_j o v_j))^2].
    double expected_sq_residual(const Moments& mo) const {
        const Index N = data_.N(), D = data_.D(), R = data_.R();
        std::vector<double> rows(static_cast<std::size_t>(N));
        parallel_for(static_cast<std::size_t>(N), threads(), [&](std::size_t ii) {
            const auto i = static_cast<Index>(ii);
            double acc = 0.0;
            for (Index j = 0; j < D; ++j) {
                double pred = 0.0;
                for (Index r = 0; r < R; ++r)
                    pred += mo.m(i, r) * mo.w(j, r);
                const double e = data_.X(i, j) - pred;
                acc += e * e;
            }
            rows[ii] = acc;
        });
        double ssr = 0.0;
        for (double v : rows)
            ssr += v;
        for (Index r = 0; r < R; ++r)
            ssr += mo.t2.col(r).sum() * mo.w2.col(r).sum() -
                   mo.m.col(r).squaredNorm() * mo.w.col(r).squaredNorm();
        return std::max(ssr, 0.0);
    }

    double expected_sq_residual(const VariationalState& s) const {
        return expected_sq_residual(moments(s));
    }

    /// E[U S (Z o V)^T].
    Matrix expected_reconstruction(const VariationalState& s) const {
        const Moments mo = moments(s);
        return mo.m * mo.w.transpose();
    }

    ElboTerms elbo_terms(const VariationalState& s) const {
        const Moments mo = moments(s);
        const Index N = data_.N(), D = data_.D(), K = data_.K(), R = data_.R();
        const double nd = static_cast<double>(N * D);
        ElboTerms t;

        const auto g = gamma_expectations(s.noise);
        t.likelihood = 0.5 * nd * (g.mean_log - kLog2Pi) -
                       0.5 * g.mean * expected_sq_residual(mo);
        check_finite(t.likelihood, "likelihood");

        const double a0 = hyper_.alpha_a0, b0 = hyper_.alpha_b0;
        t.noise = a0 * std::log(b0) - std::lgamma(a0) +
                  (a0 - 1.0) * g.mean_log - b0 * g.mean + g.entropy;
        check_finite(t.noise, "noise");

        for (Index r = 0; r < R; ++r)
            for (Index k = 0; k < K; ++k) {
                const double lam = lambda_S_(k, r);
                const auto tn = truncated_normal_moments(s.assoc(k, r));
                t.association += std::log(lam) - lam * tn.mean + tn.entropy;
            }
        check_finite(t.association, "association");

        for (Index r = 0; r < R; ++r)
            for (Index j = 0; j < D; ++j) {
                const double v0 = var_V0_(j, r);
                const double d = s.basis_mean(j, r) - mu_V0_(j, r);
                t.basis += -0.5 * (kLog2Pi + std::log(v0)) -
                           (d * d + s.basis_var(j, r)) / (2.0 * v0) +
                           normal_entropy(s.basis_var(j, r));
            }
        check_finite(t.basis, "basis");

        const Vector cross =
            gp_cross_terms(s.coupling_mean, s.coupling_var, lap_);
        const double dd = static_cast<double>(D);
        for (Index r = 0; r < R; ++r) {
            t.coupling += 0.5 * lap_.log_det_precision() - 0.5 * dd * kLog2Pi -
                          0.5 * cross(r);
            for (Index j = 0; j < D; ++j)
                t.coupling += normal_entropy(s.coupling_var(j, r));
        }
        check_finite(t.coupling, "coupling");

        for (Index r = 0; r < R; ++r)
            t.sparsity += expected_pi_bar_log_prior(s.sparsity(r)).value +
                          normal_entropy(s.sparsity_var(r));
        check_finite(t.sparsity, "sparsity");
        return t;
    }

    double elbo(const VariationalState& s) const { return elbo_terms(s).total(); }

    /// xi * sum over M of log q(Z_jr = 1).
    double penalty(const VariationalState& s) const {
        if (hyper_.xi == 0.0)
            return 0.0;
        double p = 0.0;
        for (const auto& [j, r] : data_.M)
            p += log_std_normal_cdf(
                z_threshold_gap(s.coupling(j, r), s.sparsity(r)));
        const double out = hyper_.xi * p;
        check_finite(out, "penalty");
        return out;
    }

    Objective regularized_objective(const VariationalState& s) const {
        const double e = elbo(s);
        const double p = penalty(s);
        return {e + p, e, p};
    }

    /// E_q[log p(pi_bar_r)] with derivatives in the variational mean and
    /// variance.
    ExpectedLogCdf expected_pi_bar_log_prior(const NormalParams& q) const {
        const double c = beta_a_ / static_cast<double>(data_.R());
        const auto lc = expected_log_cdf(q.mean, q.variance);
        return {(c - 1.0) * lc.value + std::log(c) - 0.5 * kLog2Pi -
                    0.5 * (q.mean * q.mean + q.variance),
                (c - 1.0) * lc.d_mean - q.mean, (c - 1.0) * lc.d_variance - 0.5};
    }

    /// Posterior summaries; with `clamp_constraints` the marginals on M are
    /// reported as 1.
    AssociationResult result(const VariationalState& s, Index top_m,
                             bool clamp_constraints = false) const {
        const Moments mo = moments(s);
        AssociationResult res;
        res.assoc_mean = mo.s_mean;
        res.z_marginal = mo.rho;
        if (clamp_constraints)
            for (const auto& [j, r] : data_.M)
                res.z_marginal(j, r) = 1.0;
        res.u_mixed = mo.u;
        res.set_ids = data_.set_ids;
        const Index m = std::min<Index>(top_m, data_.R());
        for (Index k = 0; k < data_.K(); ++k)
            res.ranked.push_back(rank_sets(res, k, m));
        return res;
    }

    double x_squared_norm() const noexcept { return x_sq_norm_; }

    static void check_finite(double v, const char* block) {
        if (!std::isfinite(v))
            throw NumericalError(block, "non-finite value in objective");
    }

  private:
    const ObservationSet& data_;
    Hyperparameters hyper_;
    LaplacianOperator lap_;
    Matrix lambda_S_;
    Matrix mu_V0_;
    Matrix var_V0_;
    double beta_a_ = 0.0;
    double x_sq_norm_ = 0.0;
};

} // namespace sntf
