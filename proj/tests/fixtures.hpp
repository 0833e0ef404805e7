#pragma once

// Random observation sets and variational states shared by the test suites.

#include "sntf/model.hpp"

#include <random>
#include <string>

namespace sntf::testing {

inline ObservationSet random_instance(Index N, Index D, Index K, Index R,
                                      std::uint64_t seed, double edge_prob = 0.2,
                                      double mask_prob = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ObservationSet o;
    o.X.resize(N, D);
    for (Index i = 0; i < o.X.size(); ++i)
        o.X(i) = nd(rng);
    o.U0 = Matrix::Zero(N, K);
    for (Index i = 0; i < N; ++i)
        o.U0(i, i < K ? i : static_cast<Index>(rng() % static_cast<std::uint64_t>(K))) = 1.0;
    o.Z0 = Matrix::Zero(D, R);
    for (Index j = 0; j < D; ++j)
        for (Index r = 0; r < R; ++r)
            o.Z0(j, r) = u(rng) < mask_prob ? 1.0 : 0.0;
    o.M = ObservationSet::constraints_from_mask(o.Z0);
    for (Index j = 0; j < D; ++j)
        o.feature_ids.push_back("g" + std::to_string(j));
    for (Index i = 0; i < N; ++i)
        o.sample_ids.push_back("s" + std::to_string(i));
    for (Index k = 0; k < K; ++k)
        o.cluster_ids.push_back("c" + std::to_string(k));
    for (Index r = 0; r < R; ++r)
        o.set_ids.push_back("p" + std::to_string(r));
    o.graph = InteractionGraph(o.feature_ids);
    for (Index a = 0; a < D; ++a)
        for (Index b = a + 1; b < D; ++b)
            if (u(rng) < edge_prob)
                o.graph.add_edge(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                 0.5 + u(rng));
    return o;
}

/// A valid state away from the initialization, so that every block has
/// nonzero gradients.
inline VariationalState random_state(const Model& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.3, 1.5);
    VariationalState s = model.initial_state();
    s.noise = {2.0 + 5.0 * u(rng), 1.0 + 3.0 * u(rng)};
    for (Index i = 0; i < s.assoc_location.size(); ++i) {
        s.assoc_location(i) = nd(rng);
        s.assoc_scale_sq(i) = 0.2 * u(rng);
    }
    for (Index i = 0; i < s.basis_mean.size(); ++i) {
        s.basis_mean(i) = nd(rng);
        s.basis_var(i) = 0.2 * u(rng);
        s.coupling_mean(i) = nd(rng);
        s.coupling_var(i) = u(rng);
    }
    for (Index r = 0; r < s.sparsity_mean.size(); ++r) {
        s.sparsity_mean(r) = nd(rng);
        s.sparsity_var(r) = u(rng);
    }
    for (Index i = 0; i < s.cluster_logits.size(); ++i)
        s.cluster_logits(i) = nd(rng);
    return s;
}

} // namespace sntf::testing
