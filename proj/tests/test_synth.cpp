#include "sntf/dataio.hpp"
#include "sntf/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace sntf;

namespace {

GenerateConfig small(std::uint64_t seed = 3) {
    GenerateConfig c;
    c.N = 12;
    c.K = 3;
    c.D = 10;
    c.R = 4;
    c.seed = seed;
    return c;
}

} // namespace

TEST(Generate, Validation) {
    auto c = small();
    c.corruption = 0.5;
    EXPECT_THROW(generate(c), DomainError);
    c = small();
    c.D = 0;
    EXPECT_THROW(generate(c), DomainError);
    c = small();
    c.K = 20;
    EXPECT_THROW(generate(c), DomainError);
}

TEST(Generate, NoCorruptionShowsTrueMask) {
    auto c = small();
    c.corruption = 0.0;
    const auto ds = generate(c);
    EXPECT_EQ(ds.truth.Z0, ds.truth.Z);
    EXPECT_EQ(ds.data.Z0, ds.truth.Z);
}

TEST(Generate, CorruptionOnlyDeletes) {
    auto c = small();
    c.D = 60;
    c.R = 10;
    c.beta_a = 5.0;
    c.corruption = 0.2;
    const auto ds = generate(c);
    const auto& t = ds.truth;
    EXPECT_TRUE(((t.Z0.array() <= t.Z.array())).all());
    const double nnz = t.Z.sum();
    EXPECT_EQ(nnz - t.Z0.sum(), std::round(0.2 * nnz));
    for (Index r = 0; r < t.Z.cols(); ++r) {
        if (t.Z.col(r).sum() > 0) {
            EXPECT_GE(t.Z0.col(r).sum(), 1.0);
        }
    }
}

TEST(Generate, NoiselessRankOne) {
    GenerateConfig c;
    c.N = 6;
    c.K = 1;
    c.D = 5;
    c.R = 1;
    c.beta_a = 1000.0;
    c.min_set_size = 5; // all-ones Z
    c.gamma = 1e300;
    const auto ds = generate(c);
    const auto& t = ds.truth;
    ASSERT_EQ(t.Z.sum(), 5.0);
    const Matrix want = t.S(0, 0) * (Vector::Ones(6) * t.V.transpose());
    EXPECT_LT((ds.data.X - want).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::JacobiSVD<Matrix> svd(ds.data.X);
    EXPECT_LT(svd.singularValues()(1), 1e-12 * svd.singularValues()(0));
}

TEST(Generate, PureFunctionOfSeed) {
    const auto a = generate(small(5));
    const auto b = generate(small(5));
    const auto c = generate(small(6));
    EXPECT_TRUE(same_observations(a.data, b.data));
    EXPECT_EQ(a.truth.S, b.truth.S);
    EXPECT_NE(a.data.X, c.data.X);
}

TEST(Generate, PriorMassMatchesExpectedNonzeros) {
    GenerateConfig c;
    c.N = 1;
    c.K = 1;
    c.D = 50;
    c.R = 20;
    c.beta_a = 2.0;
    c.independent = true;
    const int draws = 10000;
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < draws; ++t) {
        c.seed = 1000 + static_cast<std::uint64_t>(t);
        const double n = generate(c).truth.Z.sum();
        s += n;
        s2 += n * n;
    }
    const double mean = s / draws;
    const double se = std::sqrt((s2 / draws - mean * mean) / draws);
    const double want = 50.0 * 2.0 / (1.0 + 2.0 / 20.0);
    EXPECT_NEAR(mean, want, 3.0 * se);
}

TEST(Generate, GraphCouplingSmoothsMembership) {
    GenerateConfig c;
    c.N = 1;
    c.K = 1;
    c.D = 30;
    c.R = 20;
    c.beta_a = 20.0;
    c.edge_prob = 0.2;
    c.epsilon = 0.01;
    double adj = 0, adj_n = 0, non = 0, non_n = 0;
    for (int t = 0; t < 50; ++t) {
        c.seed = 77 + static_cast<std::uint64_t>(t);
        const auto ds = generate(c);
        const auto& g = ds.data.graph;
        Matrix A = Matrix::Zero(30, 30);
        for (const auto& e : g.edges())
            A(static_cast<Index>(e.a), static_cast<Index>(e.b)) = 1.0;
        for (Index r = 0; r < c.R; ++r)
            for (Index a = 0; a < 30; ++a)
                for (Index b = a + 1; b < 30; ++b) {
                    const double same = ds.truth.Z(a, r) == ds.truth.Z(b, r) ? 1.0 : 0.0;
                    if (A(a, b) != 0.0 || A(b, a) != 0.0) {
                        adj += same;
                        adj_n += 1;
                    } else {
                        non += same;
                        non_n += 1;
                    }
                }
    }
    EXPECT_GT(adj / adj_n, non / non_n + 0.02);
}

TEST(Generate, NoiseAveragesToForwardMean) {
    GenerateConfig c;
    c.N = 3;
    c.K = 3;
    c.D = 4;
    c.R = 2;
    c.beta_a = 4.0;
    c.gamma = 4.0;
    c.seed = 12;
    const int draws = 10000;
    Matrix s = Matrix::Zero(3, 4), s2 = Matrix::Zero(3, 4);
    Matrix mean;
    for (int t = 0; t < draws; ++t) {
        c.noise_seed = static_cast<std::uint64_t>(t);
        const auto ds = generate(c);
        if (t == 0)
            mean = ds.truth.mean;
        ASSERT_EQ(ds.truth.mean, mean);
        s += ds.data.X;
        s2 += ds.data.X.cwiseAbs2();
    }
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j) {
            const double m = s(i, j) / draws;
            const double se = std::sqrt((s2(i, j) / draws - m * m) / draws);
            EXPECT_NEAR(m, mean(i, j), 3.0 * se) << i << "," << j;
        }
}

TEST(Score, OracleStateIsPerfect) {
    auto c = small(9);
    c.corruption = 0.3;
    c.min_set_size = 2;
    c.beta_a = 8.0;
    const auto ds = generate(c);
    Hyperparameters h;
    const Model model(ds.data, h);
    const auto s = oracle_state(model, ds.truth);
    const auto m = score(estimates_from(model, s), ds.truth, 2);
    EXPECT_EQ(m.precision_at_m, 1.0);
    EXPECT_LT(m.rmse, 1e-6);
    EXPECT_EQ(m.auc_hidden, 1.0);
    EXPECT_EQ(m.sign_agreement, 1.0);
}

TEST(Score, RandomAssociationsScoreAtChance) {
    GenerateConfig c;
    c.N = 8;
    c.K = 2;
    c.D = 6;
    c.R = 8;
    c.seed = 4;
    const auto ds = generate(c);
    const Model model(ds.data, Hyperparameters{});
    auto e = estimates_from(model, model.initial_state());
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int trials = 4000;
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < trials; ++t) {
        for (Index i = 0; i < e.assoc_mean.size(); ++i)
            e.assoc_mean(i) = u(rng);
        const double p = score(e, ds.truth, 3).precision_at_m;
        s += p;
        s2 += p * p;
    }
    const double mean = s / trials;
    const double se = std::sqrt((s2 / trials - mean * mean) / trials);
    EXPECT_NEAR(mean, 3.0 / 8.0, 3.0 * se);
}

TEST(Score, AucHandCases) {
    EXPECT_EQ(auc({0.9, 0.8}, {0.1, 0.2}), 1.0);
    EXPECT_EQ(auc({0.1}, {0.9}), 0.0);
    EXPECT_EQ(auc({0.5}, {0.5}), 0.5);
    EXPECT_DOUBLE_EQ(auc({0.3, 0.7}, {0.5}), 0.5);
    EXPECT_TRUE(std::isnan(auc({}, {0.1})));
}

TEST(Score, DimensionMismatchRejected) {
    const auto ds = generate(small());
    const Model model(ds.data, Hyperparameters{});
    auto e = estimates_from(model, model.initial_state());
    EXPECT_THROW(score(e, ds.truth, 0), DomainError);
    e.assoc_mean.conservativeResize(1, Eigen::NoChange);
    EXPECT_THROW(score(e, ds.truth, 1), DomainError);
}
