#pragma once

// Dense symmetric-matrix helpers for the CMA covariance machinery:
// floored eigendecomposition, inverse square root, multivariate normal draws.

#include <Eigen/Dense>
#include <cstdint>

#include "sves/errors.hpp"
#include "sves/rng.hpp"

namespace sves {

// Symmetric matrix kept symmetric by construction: every build path applies
// (M + M^T)/2.
struct SymMatrix {
    Eigen::MatrixXd m;

    SymMatrix() = default;
    explicit SymMatrix(const Eigen::MatrixXd& raw) : m(0.5 * (raw + raw.transpose())) {}

    static SymMatrix identity(int dim) { return SymMatrix(Eigen::MatrixXd::Identity(dim, dim)); }

    int dim() const { return static_cast<int>(m.rows()); }
};

// Cached factorization C = B diag(D^2) B^T with D = sqrt of (floored)
// eigenvalues. `stamp` is the generation the cache was computed at.
struct EigCache {
    Eigen::MatrixXd basis;   // orthonormal columns B
    Eigen::VectorXd scales;  // D, all > 0
    std::int64_t stamp = 0;

    int dim() const { return static_cast<int>(scales.size()); }

    // B diag(D^2) B^T, the matrix this cache represents.
    Eigen::MatrixXd reconstruct() const {
        const Eigen::MatrixXd r =
            basis * scales.array().square().matrix().asDiagonal() * basis.transpose();
        return 0.5 * (r + r.transpose());
    }

    // B diag(D) z, i.e. a C^{1/2} image of z.
    Eigen::VectorXd transform(const Eigen::VectorXd& z) const {
        return basis * (scales.array() * z.array()).matrix();
    }

    // C^{-1/2} v.
    Eigen::VectorXd inv_sqrt_apply(const Eigen::VectorXd& v) const {
        return basis * ((basis.transpose() * v).array() / scales.array()).matrix();
    }
};

// Eigenvalues below eigen_floor(lambda_max) are clipped up so C^{-1/2} stays
// bounded when the covariance degenerates.
inline double eigen_floor(double lambda_max) {
    return 1e-12 * std::max(1.0, lambda_max);
}

inline EigCache sym_eig(const SymMatrix& mat, std::int64_t stamp = 0) {
    if (!mat.m.allFinite()) throw InvalidMatrix("sym_eig: matrix has non-finite entries");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(mat.m);
    if (solver.info() != Eigen::Success) throw InvalidMatrix("sym_eig: eigendecomposition failed");
    Eigen::VectorXd evals = solver.eigenvalues();
    const double floor = eigen_floor(evals.maxCoeff());
    evals = evals.cwiseMax(floor);
    EigCache cache;
    cache.basis = solver.eigenvectors();
    cache.scales = evals.cwiseSqrt();
    cache.stamp = stamp;
    return cache;
}

inline SymMatrix inv_sqrt(const EigCache& cache) {
    return SymMatrix(cache.basis * cache.scales.cwiseInverse().asDiagonal() *
                     cache.basis.transpose());
}

// Draw from N(mean, sigma^2 C) given the factorization of C.
inline Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, double sigma,
                                  const EigCache& cache, RngStream& rng) {
    if (mean.size() != cache.dim())
        throw DimError("mvn_sample: mean dimension does not match cache");
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mean + sigma * cache.transform(z);
}

}  // namespace sves
