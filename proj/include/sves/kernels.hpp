#pragma once

// RBF kernel k(x, y) = exp(-||x - y||^2 / 2h), its gradient in the first
// argument, and bandwidth policies. Shared by the SVGD-family samplers and
// the MMD metric.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <variant>
#include <vector>

#include "sves/errors.hpp"

namespace sves {

inline double rbf_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h) {
    if (x.size() != y.size()) throw DimError("rbf_eval: dimension mismatch");
    return std::exp(-(x - y).squaredNorm() / (2.0 * h));
}

// grad_x k(x, y) = -(x - y)/h * k(x, y)
inline Eigen::VectorXd rbf_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h) {
    if (x.size() != y.size()) throw DimError("rbf_grad: dimension mismatch");
    const double k = std::exp(-(x - y).squaredNorm() / (2.0 * h));
    return (-(x - y) / h) * k;
}

// Median of squared pairwise distances over the rows of `samples` (i < j).
// Squared distances match the kernel's /2h convention.
inline double median_bandwidth(const Eigen::MatrixXd& samples) {
    const Eigen::Index n = samples.rows();
    if (n < 2) throw DegenerateSamples("median_bandwidth: need at least 2 samples");
    std::vector<double> sq;
    sq.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            sq.push_back((samples.row(i) - samples.row(j)).squaredNorm());
    std::sort(sq.begin(), sq.end());
    const std::size_t k = sq.size();
    const double med = (k % 2 == 1) ? sq[k / 2] : 0.5 * (sq[k / 2 - 1] + sq[k / 2]);
    if (med <= 0.0) throw DegenerateSamples("median_bandwidth: all samples identical");
    return med;
}

struct FixedBandwidth {
    double h;
};
struct MedianHeuristic {};

// Bandwidth policy plus the value it resolved to. Fixed policies are
// resolved at construction; the median heuristic needs a reference set.
struct KernelSpec {
    std::variant<FixedBandwidth, MedianHeuristic> policy;
    double resolved_h = 0.0;

    static KernelSpec fixed(double h) {
        if (!(h > 0.0)) throw ConfigError("KernelSpec: bandwidth must be positive");
        return KernelSpec{FixedBandwidth{h}, h};
    }

    static KernelSpec median(const Eigen::MatrixXd& reference) {
        return KernelSpec{MedianHeuristic{}, median_bandwidth(reference)};
    }

    double h() const { return resolved_h; }
};

}  // namespace sves
