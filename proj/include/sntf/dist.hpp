#pragma once

// Distributions and special functions used by the factorization model.
// Everything here is a pure function of its arguments.

#include "sntf/error.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace sntf {

inline constexpr double kLog2Pi = 1.8378770664093454836; // log(2*pi)
inline constexpr double kSqrt2 = std::numbers::sqrt2;
inline constexpr double kInvSqrtPi = std::numbers::inv_sqrtpi;
inline constexpr double kSqrt2OverPi = 0.79788456080286535588; // sqrt(2/pi)

/// Gamma distribution with shape/rate parameterization.
struct GammaParams {
    double shape = 1.0;
    double rate = 1.0;

    bool valid() const noexcept {
        return std::isfinite(shape) && std::isfinite(rate) && shape > 0 &&
               rate > 0;
    }
};

/// Normal distribution truncated to [0, inf). `location` and `scale_sq` are
/// the parameters of the untruncated parent.
struct TruncatedNormalParams {
    double location = 0.0;
    double scale_sq = 1.0;

    bool valid() const noexcept {
        return std::isfinite(location) && std::isfinite(scale_sq) &&
               scale_sq > 0;
    }
};

/// Normal distribution; `variance` is a variance, never a standard deviation.
struct NormalParams {
    double mean = 0.0;
    double variance = 1.0;

    bool valid() const noexcept {
        return std::isfinite(mean) && std::isfinite(variance) && variance > 0;
    }
};

struct TruncatedNormalMoments {
    double mean;
    double variance;
    double entropy;
};

struct GammaExpectations {
    double mean;
    double mean_log;
    double entropy;
};

/// Scaled complementary error function exp(x^2) * erfc(x).
inline double erfcx(double x) {
    if (x < 0.0)
        return 2.0 * std::exp(x * x) - erfcx(-x);
    if (x < 3.0)
        return std::exp(x * x) * std::erfc(x);
    // Continued fraction, converged to double precision for x >= 3 after
    // 40 levels.
    double tail = 0.0;
    for (int k = 40; k >= 1; --k)
        tail = (0.5 * k) / (x + tail);
    return kInvSqrtPi / (x + tail);
}

inline double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x - 0.5 * kLog2Pi);
}

/// Standard normal CDF. Results that would underflow are clamped to the
/// smallest positive subnormal so the lower tail stays strictly positive.
inline double std_normal_cdf(double x) {
    if (!std::isfinite(x))
        throw DomainError("std_normal_cdf: non-finite argument");
    const double p = 0.5 * std::erfc(-x / kSqrt2);
    return std::max(p, std::numeric_limits<double>::denorm_min());
}

/// log Phi(x), accurate far into the lower tail.
inline double log_std_normal_cdf(double x) {
    if (!std::isfinite(x))
        throw DomainError("log_std_normal_cdf: non-finite argument");
    if (x < -1.0) {
        const double t = -x / kSqrt2;
        return std::log(0.5 * erfcx(t)) - t * t;
    }
    return std::log1p(-0.5 * std::erfc(x / kSqrt2));
}

/// phi(x) / Phi(x), the derivative of log Phi(x).
inline double pdf_over_cdf(double x) {
    if (x < 0.0)
        return kSqrt2OverPi / erfcx(-x / kSqrt2);
    return std_normal_pdf(x) / (0.5 * std::erfc(-x / kSqrt2));
}

inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("std_normal_quantile: probability must lie in (0,1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_entropy(double variance) {
    return 0.5 * (kLog2Pi + 1.0 + std::log(variance));
}

/// Mean, variance and differential entropy of a normal truncated below at 0.
///
/// With alpha = -location/scale the hazard lambda = phi(alpha)/(1-Phi(alpha))
/// is formed from erfcx so that strongly negative locations never divide two
/// underflowing tails. For alpha > 5 the Mills-ratio continued fraction gives
/// lambda - alpha and the variance ratio without cancellation; past
/// alpha = 50 the asymptotic series takes over.
inline TruncatedNormalMoments
truncated_normal_moments(const TruncatedNormalParams& p) {
    if (!p.valid())
        throw DomainError("truncated_normal_moments: scale_sq must be > 0");
    const double sigma = std::sqrt(p.scale_sq);
    const double alpha = -p.location / sigma;

    double offset;   // E[S]/sigma = lambda - alpha
    double var_ratio; // Var[S]/sigma^2
    double lambda;
    if (alpha > 50.0) {
        const double ia = 1.0 / alpha;
        const double ia2 = ia * ia;
        offset = ia * (1.0 + ia2 * (-2.0 + ia2 * (10.0 + ia2 * (-74.0 +
                       ia2 * (706.0 + ia2 * (-8162.0))))));
        var_ratio = ia2 * (1.0 + ia2 * (-6.0 + ia2 * (50.0 + ia2 * (-518.0 +
                          ia2 * (6354.0 + ia2 * (-89782.0))))));
        lambda = alpha + offset;
    } else if (alpha > 5.0) {
        // t_n = n / (alpha + t_{n+1}); offset = t_1, var_ratio = t_1 (t_2 - t_1)
        double t = 0.0, t2 = 0.0;
        for (int n = 150; n >= 1; --n) {
            t2 = t;
            t = n / (alpha + t);
        }
        offset = t;
        var_ratio = t * (t2 - t);
        lambda = alpha + offset;
    } else {
        lambda = kSqrt2OverPi / erfcx(alpha / kSqrt2);
        offset = lambda - alpha;
        var_ratio = 1.0 - lambda * offset;
    }
    var_ratio = std::clamp(var_ratio, std::numeric_limits<double>::min(), 1.0);

    // log(1 - Phi(alpha))
    double log_tail;
    if (alpha > 0.0) {
        const double t = alpha / kSqrt2;
        log_tail = std::log(0.5 * erfcx(t)) - t * t;
    } else {
        log_tail = std::log(0.5 * std::erfc(alpha / kSqrt2));
    }

    TruncatedNormalMoments m;
    m.mean = sigma * offset;
    m.variance = p.scale_sq * var_ratio;
    m.entropy = normal_entropy(p.scale_sq) + log_tail + 0.5 * alpha * lambda;
    return m;
}

inline GammaExpectations gamma_expectations(const GammaParams& p) {
    if (!p.valid())
        throw DomainError("gamma_expectations: shape and rate must be > 0");
    const double dg = boost::math::digamma(p.shape);
    GammaExpectations e;
    e.mean = p.shape / p.rate;
    e.mean_log = dg - std::log(p.rate);
    e.entropy = p.shape - std::log(p.rate) + std::lgamma(p.shape) +
                (1.0 - p.shape) * dg;
    return e;
}

/// log density of the transformed sparsity level pi_bar = Phi^{-1}(pi) when
/// pi ~ Beta(beta_a / R, 1).
inline double pi_bar_log_prior(double pi_bar, double beta_a, int R) {
    const double c = beta_a / static_cast<double>(R);
    return (c - 1.0) * log_std_normal_cdf(pi_bar) + std::log(c) -
           0.5 * kLog2Pi - 0.5 * pi_bar * pi_bar;
}

/// Gauss-Legendre rule on [-1, 1].
class GaussLegendre {
  public:
    explicit GaussLegendre(int n) : nodes_(n), weights_(n) {
        // Golub-Welsch: Jacobi matrix with off-diagonal k / sqrt(4k^2 - 1).
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
        for (int k = 1; k < n; ++k) {
            const double kk = static_cast<double>(k);
            J(k, k - 1) = J(k - 1, k) = kk / std::sqrt(4.0 * kk * kk - 1.0);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
        for (int i = 0; i < n; ++i) {
            nodes_[i] = es.eigenvalues()(i);
            const double v0 = es.eigenvectors()(0, i);
            weights_[i] = 2.0 * v0 * v0;
        }
    }

    static const GaussLegendre& standard() {
        static const GaussLegendre rule(10);
        return rule;
    }

    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

  private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// E[log Phi(Y)] for Y ~ N(mean, variance) and its partial derivatives with
/// respect to mean and variance.
struct ExpectedLogCdf {
    double value;
    double d_mean;
    double d_variance;
};

/// Composite Gauss-Legendre over the standardized variable on [-9, 9],
/// with unit panels plus extra breakpoints where log Phi bends (|y| <= 4),
/// so wide and narrow Gaussians are both resolved. Value and derivatives
/// share the same nodes.
inline ExpectedLogCdf expected_log_cdf(double mean, double variance) {
    constexpr double kHalfWidth = 9.0;
    const double sd = std::sqrt(variance);
    std::vector<double> cuts;
    for (int k = -9; k <= 9; ++k)
        cuts.push_back(static_cast<double>(k));
    for (double b : {-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0}) {
        const double x = (b - mean) / sd;
        if (x > -kHalfWidth && x < kHalfWidth)
            cuts.push_back(x);
    }
    std::sort(cuts.begin(), cuts.end());

    const auto& gl = GaussLegendre::standard();
    double v = 0.0, dm = 0.0, ds = 0.0;
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        const double lo = cuts[p], hi = cuts[p + 1];
        if (hi - lo <= 0.0)
            continue;
        const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        for (std::size_t i = 0; i < gl.nodes().size(); ++i) {
            const double x = mid + half * gl.nodes()[i];
            const double w = half * gl.weights()[i] * std_normal_pdf(x);
            const double y = mean + sd * x;
            const double h = pdf_over_cdf(y);
            v += w * log_std_normal_cdf(y);
            dm += w * h;
            ds += w * h * x;
        }
    }
    return {v, dm, ds / (2.0 * sd)};
}

} // namespace sntf
