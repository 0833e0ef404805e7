#pragma once

// Planted-truth datasets sampled forward from the generative model, and
// recovery metrics for a fitted state against that truth.

#include "sntf/dist.hpp"
#include "sntf/error.hpp"
#include "sntf/graph.hpp"
#include "sntf/inference.hpp"
#include "sntf/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sntf {

struct GenerateConfig {
    Index N = 60;
    Index K = 3;
    Index D = 40;
    Index R = 8;
    /// Erdos-Renyi edge probability; ignored when `independent` is set.
    double edge_prob = 0.1;
    /// Latent G drawn i.i.d. N(0, 1) with an edgeless graph instead of the GMRF.
    bool independent = false;
    double epsilon = 0.05;
    double beta_a = 2.0;
    double lambda_S = 1.0;
    double mu_V = 0.0;
    double sigma_V = 1.0; // variance
    /// Noise precision. Ignored when `snr` is set.
    double gamma = 25.0;
    /// If set, gamma = snr / Var(noiseless entries).
    std::optional<double> snr;
    /// Fraction of true memberships hidden from the mask Z0.
    double corruption = 0.0;
    /// Columns of Z with fewer ones are redrawn (0 = pure prior draw).
    Index min_set_size = 0;
    std::uint64_t seed = 1;
    /// If set, observation noise comes from its own stream, so the planted
    /// factors stay fixed while the noise is redrawn.
    std::optional<std::uint64_t> noise_seed;

    void validate() const {
        if (N < 1 || K < 1 || D < 1 || R < 1)
            throw DomainError("generate: dimensions must be positive");
        if (K > N)
            throw DomainError("generate: need at least one sample per cluster");
        if (!(corruption >= 0.0 && corruption < 0.5))
            throw DomainError("generate: corruption rate must lie in [0, 0.5)");
        if (!(edge_prob >= 0.0 && edge_prob <= 1.0))
            throw DomainError("generate: edge probability must lie in [0, 1]");
        if (!(beta_a > 0.0) || !(lambda_S > 0.0) || !(sigma_V > 0.0) ||
            !(epsilon >= 0.0))
            throw DomainError("generate: prior constants out of range");
        if (snr ? !(*snr > 0.0) : !(gamma > 0.0))
            throw DomainError("generate: noise level must be positive");
        if (min_set_size > D)
            throw DomainError("generate: min_set_size exceeds D");
    }
};

struct PlantedTruth {
    Matrix S;     // K x R, nonnegative
    Matrix V;     // D x R
    Matrix Z;     // D x R, 0/1
    Matrix G;     // D x R latent coupling
    Vector pi;    // R
    Matrix Z0;    // mask shown to the model; Z with some ones removed
    Matrix mean;  // N x D noiseless U0 S (Z o V)^T
    double gamma = 0.0;

    /// Planted top sets of cluster k: indices of the `m` largest S(k, :),
    /// ties to the smaller set id.
    std::vector<Index> top_sets(Index k, Index m,
                                const std::vector<std::string>& set_ids) const {
        std::vector<Index> order(static_cast<std::size_t>(S.cols()));
        std::iota(order.begin(), order.end(), Index{0});
        std::sort(order.begin(), order.end(), [&](Index a, Index b) {
            if (S(k, a) != S(k, b))
                return S(k, a) > S(k, b);
            return set_ids[static_cast<std::size_t>(a)] <
                   set_ids[static_cast<std::size_t>(b)];
        });
        order.resize(static_cast<std::size_t>(m));
        return order;
    }
};

struct SyntheticDataset {
    ObservationSet data;
    PlantedTruth truth;
};

namespace detail {

inline std::string padded(const char* prefix, Index i, Index n) {
    const int width = static_cast<int>(std::to_string(n).size());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%0*ld", prefix, width, static_cast<long>(i + 1));
    return buf;
}

} // namespace detail

inline SyntheticDataset generate(const GenerateConfig& cfg) {
    cfg.validate();
    const Index N = cfg.N, K = cfg.K, D = cfg.D, R = cfg.R;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    SyntheticDataset out;
    ObservationSet& o = out.data;
    PlantedTruth& t = out.truth;
    for (Index j = 0; j < D; ++j)
        o.feature_ids.push_back(detail::padded("G", j, D));
    for (Index i = 0; i < N; ++i)
        o.sample_ids.push_back(detail::padded("S", i, N));
    for (Index k = 0; k < K; ++k)
        o.cluster_ids.push_back(detail::padded("C", k, K));
    for (Index r = 0; r < R; ++r)
        o.set_ids.push_back(detail::padded("P", r, R));

    o.graph = InteractionGraph(o.feature_ids);
    if (!cfg.independent)
        for (Index a = 0; a < D; ++a)
            for (Index b = a + 1; b < D; ++b)
                if (unif(rng) < cfg.edge_prob)
                    o.graph.add_edge(static_cast<std::size_t>(a),
                                     static_cast<std::size_t>(b), 1.0);
    std::optional<LaplacianOperator> lap;
    if (!cfg.independent)
        lap.emplace(o.graph, cfg.epsilon);

    // pi_r ~ Beta(c, 1) by inversion: pi = u^(1/c).
    const double c = cfg.beta_a / static_cast<double>(R);
    t.pi.resize(R);
    t.G.resize(D, R);
    t.Z = Matrix::Zero(D, R);
    for (Index r = 0; r < R; ++r) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 100000)
                throw DomainError("generate: cannot reach min_set_size; raise beta_a");
            const double pi = std::pow(unif(rng), 1.0 / c);
            Vector z(D);
            for (Index j = 0; j < D; ++j)
                z(j) = normal(rng);
            const Vector g = lap ? lap->correlate(z) : z;
            const double thr =
                pi <= 0.0 ? -std::numeric_limits<double>::infinity()
                : pi >= 1.0 ? std::numeric_limits<double>::infinity()
                            : std_normal_quantile(pi);
            Index ones = 0;
            for (Index j = 0; j < D; ++j)
                ones += g(j) < thr ? 1 : 0;
            if (ones < cfg.min_set_size)
                continue;
            t.pi(r) = pi;
            t.G.col(r) = g;
            for (Index j = 0; j < D; ++j)
                t.Z(j, r) = g(j) < thr ? 1.0 : 0.0;
            break;
        }
    }

    std::exponential_distribution<double> expo(cfg.lambda_S);
    t.S.resize(K, R);
    for (Index r = 0; r < R; ++r)
        for (Index k = 0; k < K; ++k)
            t.S(k, r) = expo(rng);
    t.V.resize(D, R);
    const double sv = std::sqrt(cfg.sigma_V);
    for (Index r = 0; r < R; ++r)
        for (Index j = 0; j < D; ++j)
            t.V(j, r) = cfg.mu_V + sv * normal(rng);

    o.U0 = Matrix::Zero(N, K);
    for (Index i = 0; i < N; ++i)
        o.U0(i, i % K) = 1.0;
    t.mean = o.U0 * t.S * t.Z.cwiseProduct(t.V).transpose();

    if (cfg.snr) {
        const double mu = t.mean.mean();
        const double var = (t.mean.array() - mu).square().mean();
        t.gamma = var > 0.0 ? *cfg.snr / var : 1.0;
    } else {
        t.gamma = cfg.gamma;
    }
    const double noise_sd = 1.0 / std::sqrt(t.gamma);
    std::mt19937_64 own_noise(cfg.noise_seed.value_or(0));
    auto& noise_rng = cfg.noise_seed ? own_noise : rng;
    std::normal_distribution<double> noise_normal(0.0, 1.0); // no cached draw carried over
    o.X = t.mean;
    for (Index j = 0; j < D; ++j)
        for (Index i = 0; i < N; ++i)
            o.X(i, j) += noise_sd * noise_normal(noise_rng);

    // Hide round(rho * nnz) memberships, never emptying a column.
    t.Z0 = t.Z;
    std::vector<std::pair<Index, Index>> ones;
    for (Index r = 0; r < R; ++r)
        for (Index j = 0; j < D; ++j)
            if (t.Z(j, r) == 1.0)
                ones.emplace_back(j, r);
    std::shuffle(ones.begin(), ones.end(), rng);
    const auto target = static_cast<std::size_t>(
        std::llround(cfg.corruption * static_cast<double>(ones.size())));
    Vector col_count = t.Z.colwise().sum().transpose();
    std::size_t hidden = 0;
    for (const auto& [j, r] : ones) {
        if (hidden == target)
            break;
        if (col_count(r) <= 1.0)
            continue;
        t.Z0(j, r) = 0.0;
        col_count(r) -= 1.0;
        ++hidden;
    }
    o.Z0 = t.Z0;
    o.M = ObservationSet::constraints_from_mask(o.Z0);
    return out;
}

/// Recovery metrics. `auc_hidden` is NaN when the hidden entries hold no
/// positive or no negative.
struct Metrics {
    Index top_m = 0;
    double precision_at_m = 0.0;
    double rmse = 0.0;
    double auc_hidden = 0.0;
    double sign_agreement = 0.0;
    Index hidden_positives = 0;
    Index hidden_negatives = 0;
};

/// Point estimates scored against the truth.
struct Estimates {
    Matrix assoc_mean;     // K x R
    Matrix z_marginal;     // D x R
    Matrix reconstruction; // N x D
    Matrix basis_mean;     // D x R
    std::vector<std::string> set_ids;
};

inline Estimates estimates_from(const Model& model, const VariationalState& s) {
    const Moments mo = model.moments(s);
    return {mo.s_mean, mo.rho, mo.m * mo.w.transpose(), s.basis_mean,
            model.data().set_ids};
}

/// Mann-Whitney AUC, ties counted one half.
inline double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<double, int>> all;
    for (double v : pos)
        all.emplace_back(v, 1);
    for (double v : neg)
        all.emplace_back(v, 0);
    std::sort(all.begin(), all.end());
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first)
            ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j); // mean 1-based rank
        for (std::size_t q = i; q < j; ++q)
            if (all[q].second)
                rank_sum += mid;
        i = j;
    }
    const double np = static_cast<double>(pos.size());
    const double nn = static_cast<double>(neg.size());
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

inline Metrics score(const Estimates& e, const PlantedTruth& t, Index top_m) {
    const Index K = t.S.rows(), R = t.S.cols(), D = t.Z.rows();
    if (e.assoc_mean.rows() != K || e.assoc_mean.cols() != R ||
        e.z_marginal.rows() != D || e.z_marginal.cols() != R ||
        e.basis_mean.rows() != D || e.basis_mean.cols() != R ||
        e.reconstruction.rows() != t.mean.rows() ||
        e.reconstruction.cols() != t.mean.cols() ||
        static_cast<Index>(e.set_ids.size()) != R)
        throw DomainError("score: estimate and truth dimensions differ");
    if (top_m < 1 || top_m > R)
        throw DomainError("score: top_m must lie in [1, R]");

    Metrics m;
    m.top_m = top_m;
    AssociationResult ar;
    ar.assoc_mean = e.assoc_mean;
    ar.set_ids = e.set_ids;
    double prec = 0.0;
    for (Index k = 0; k < K; ++k) {
        const auto planted = t.top_sets(k, top_m, e.set_ids);
        const auto ranked = rank_sets(ar, k, top_m);
        Index hits = 0;
        for (const auto& rs : ranked)
            for (Index r : planted)
                hits += e.set_ids[static_cast<std::size_t>(r)] == rs.set_id ? 1 : 0;
        prec += static_cast<double>(hits) / static_cast<double>(top_m);
    }
    m.precision_at_m = prec / static_cast<double>(K);

    m.rmse = std::sqrt((e.reconstruction - t.mean).squaredNorm() /
                       static_cast<double>(t.mean.size()));

    std::vector<double> pos, neg;
    Index agree = 0, total = 0;
    for (Index r = 0; r < R; ++r)
        for (Index j = 0; j < D; ++j) {
            if (t.Z0(j, r) == 0.0)
                (t.Z(j, r) == 1.0 ? pos : neg).push_back(e.z_marginal(j, r));
            if (t.Z(j, r) == 1.0) {
                ++total;
                agree += (e.basis_mean(j, r) > 0.0) == (t.V(j, r) > 0.0) ? 1 : 0;
            }
        }
    m.auc_hidden = auc(pos, neg);
    m.hidden_positives = static_cast<Index>(pos.size());
    m.hidden_negatives = static_cast<Index>(neg.size());
    m.sign_agreement = total > 0 ? static_cast<double>(agree) /
                                       static_cast<double>(total)
                                 : std::numeric_limits<double>::quiet_NaN();
    return m;
}

inline Metrics score(const Model& model, const FitReport& report,
                     const PlantedTruth& truth, Index top_m) {
    return score(estimates_from(model, report.state), truth, top_m);
}

/// A variational state concentrated on the planted values; scores as a
/// perfect fit.
inline VariationalState oracle_state(const Model& model, const PlantedTruth& t) {
    VariationalState s = model.initial_state();
    const double tiny = 1e-12;
    s.noise = {1e6 * t.gamma, 1e6};
    s.assoc_location = t.S;
    s.assoc_scale_sq.setConstant(tiny);
    s.basis_mean = t.V;
    s.basis_var.setConstant(tiny);
    // The latent draw itself, pushed a little away from each threshold so
    // that q(Z = 1) matches Z.
    for (Index r = 0; r < t.Z.cols(); ++r) {
        const double thr = std_normal_quantile(std::clamp(t.pi(r), 1e-12, 1.0 - 1e-12));
        s.sparsity_mean(r) = thr;
        for (Index j = 0; j < t.Z.rows(); ++j) {
            const double side = t.Z(j, r) == 1.0 ? -1.0 : 1.0;
            const double gap = side * (t.G(j, r) - thr);
            s.coupling_mean(j, r) = thr + side * std::max(gap, 0.05);
        }
    }
    s.coupling_var.setConstant(1e-6);
    s.sparsity_var.setConstant(1e-6);
    s.cluster_logits = 60.0 * model.data().U0;
    return s;
}

} // namespace sntf
