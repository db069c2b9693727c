#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace flownet {

inline double sample_mean(const Eigen::VectorXd& x) { return x.mean(); }

// Sample standard deviation, divisor n-1.
inline double sample_sd(const Eigen::VectorXd& x) {
    const double n = static_cast<double>(x.size());
    if (n < 2) return 0.0;
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / (n - 1.0));
}

// Pearson correlation; nullopt when either side has zero variance.
inline std::optional<double> pearson_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double mx = x.mean();
    const double my = y.mean();
    const Eigen::ArrayXd dx = x.array() - mx;
    const Eigen::ArrayXd dy = y.array() - my;
    const double sxx = dx.square().sum();
    const double syy = dy.square().sum();
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return dx.cwiseProduct(dy).sum() / std::sqrt(sxx * syy);
}

// Linear-interpolation quantile (R type 7) on a copy of the data.
inline double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (values.size() == 1) return values.front();
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// Lower-triangular Cholesky factor of a 2x2 covariance, tolerant of
// boundary-degenerate inputs (clamps tiny negatives to zero).
inline Eigen::Matrix2d cholesky2x2(const Eigen::Matrix2d& sigma) {
    Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
    const double s11 = std::max(sigma(0, 0), 0.0);
    l(0, 0) = std::sqrt(s11);
    l(1, 0) = l(0, 0) > 0.0 ? sigma(1, 0) / l(0, 0) : 0.0;
    const double rem = sigma(1, 1) - l(1, 0) * l(1, 0);
    l(1, 1) = std::sqrt(std::max(rem, 0.0));
    return l;
}

struct CredibleInterval {
    double lower = 0.0;
    double upper = 0.0;
    bool contains(double v) const { return v >= lower && v <= upper; }
    double width() const { return upper - lower; }
};

inline CredibleInterval credible_interval_95(const Eigen::VectorXd& draws) {
    std::vector<double> v(draws.data(), draws.data() + draws.size());
    return {quantile(v, 0.025), quantile(v, 0.975)};
}

}  // namespace flownet
