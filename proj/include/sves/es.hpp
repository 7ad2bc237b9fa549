#pragma once

// Vanilla CMA-ES (mean, cumulative step-size and covariance adaptation),
// rank-based recombination weights with the negative-weight extension,
// the OpenAI-ES antithetic gradient estimator, and an independent-parallel
// multi-run wrapper.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sves/errors.hpp"
#include "sves/linalg.hpp"
#include "sves/parallel.hpp"
#include "sves/rng.hpp"
#include "sves/targets.hpp"

namespace sves {

// Recombination weights: w_1..m sorted descending, positives (i <= elite)
// summing to one, the tail rescaled to the standard negative-weight budget.
struct EsWeights {
    int m = 0;
    int elite = 0;
    Eigen::VectorXd w;
    double lambda_eff = 1.0;  // (sum of squared elite weights)^{-1}

    double positive_sum() const { return w.head(elite).sum(); }
    double total_sum() const { return w.sum(); }
};

// CMA learning rates and constants; defaults follow the usual tutorial
// formulas in terms of (dim, lambda_eff).
struct CmaParams {
    double alpha_x = 1.0;     // mean learning rate
    double alpha_sigma = 0;   // step-size path smoothing
    double d_sigma = 1;       // step-size damping
    double alpha_c = 0;       // covariance path smoothing
    double alpha_1 = 0;       // rank-one rate
    double alpha_lambda = 0;  // rank-mu rate
    double chi_d = 1;         // E||N(0,I)||

    static CmaParams defaults(int dim, double lambda_eff) {
        const double d = static_cast<double>(dim);
        CmaParams p;
        p.alpha_x = 1.0;
        p.alpha_sigma = (lambda_eff + 2.0) / (d + lambda_eff + 5.0);
        p.d_sigma = 1.0 +
                    2.0 * std::max(0.0, std::sqrt((lambda_eff - 1.0) / (d + 1.0)) - 1.0) +
                    p.alpha_sigma;
        p.alpha_c = (4.0 + lambda_eff / d) / (d + 4.0 + 2.0 * lambda_eff / d);
        p.alpha_1 = 2.0 / ((d + 1.3) * (d + 1.3) + lambda_eff);
        p.alpha_lambda =
            std::min(1.0 - p.alpha_1, 2.0 * (lambda_eff - 2.0 + 1.0 / lambda_eff) /
                                          ((d + 2.0) * (d + 2.0) + lambda_eff));
        p.chi_d = std::sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));
        return p;
    }
};

// w'_i = ln((m+1)/2) - ln(i); elite part normalized to sum one, remaining
// raw weights clipped to <= 0 and scaled so their absolute sum hits
// min(1 + a1/al, 1 + 2*leff_neg/(leff+2), (1 - a1 - al)/(dim*al)).
inline EsWeights cma_weights(int m, int elite, int dim) {
    if (elite < 1 || elite > m) throw ConfigError("cma_weights: need 1 <= elite <= m");
    Eigen::VectorXd raw(m);
    for (int i = 0; i < m; ++i)
        raw[i] = std::log((m + 1.0) / 2.0) - std::log(static_cast<double>(i + 1));

    EsWeights ws;
    ws.m = m;
    ws.elite = elite;
    ws.w = Eigen::VectorXd::Zero(m);

    const double pos_sum = raw.head(elite).sum();
    if (!(pos_sum > 0.0)) throw ConfigError("cma_weights: elite weights not positive");
    ws.w.head(elite) = raw.head(elite) / pos_sum;
    ws.lambda_eff = 1.0 / ws.w.head(elite).squaredNorm();

    if (elite < m) {
        // Raw entries between the elite cut and the sign change are clipped
        // to zero so the tail stays non-positive.
        Eigen::VectorXd neg = raw.tail(m - elite).cwiseMin(0.0);
        const double neg_sum = -neg.sum();
        if (neg_sum > 0.0) {
            const CmaParams p = CmaParams::defaults(dim, ws.lambda_eff);
            const double leff_neg = neg_sum * neg_sum / neg.squaredNorm();
            double budget = std::min(1.0 + p.alpha_1 / p.alpha_lambda,
                                     1.0 + 2.0 * leff_neg / (ws.lambda_eff + 2.0));
            budget = std::min(budget, (1.0 - p.alpha_1 - p.alpha_lambda) /
                                          (dim * p.alpha_lambda));
            ws.w.tail(m - elite) = neg * (budget / neg_sum);
        }
    }
    return ws;
}

// One CMA-ES search distribution: N(mean, sigma^2 C) plus evolution paths.
struct CmaState {
    Eigen::VectorXd mean;
    double sigma = 1.0;
    SymMatrix cov;
    Eigen::VectorXd path_sigma;
    Eigen::VectorXd path_c;
    long generation = 0;
    EigCache eig;

    static CmaState init(const Eigen::VectorXd& mean, double sigma) {
        CmaState s;
        s.mean = mean;
        s.sigma = sigma;
        s.cov = SymMatrix::identity(static_cast<int>(mean.size()));
        s.path_sigma = Eigen::VectorXd::Zero(mean.size());
        s.path_c = Eigen::VectorXd::Zero(mean.size());
        s.eig = sym_eig(s.cov, 0);
        return s;
    }

    int dim() const { return static_cast<int>(mean.size()); }
};

inline constexpr double kSigmaMin = 1e-12;
inline constexpr double kSigmaMax = 1e6;

// A sampled generation, already sorted ascending by fitness. y rows hold the
// exact sampled displacements, so xi = mean + sigma * y reconstructs bitwise.
struct Subpopulation {
    Eigen::MatrixXd xi;       // m x d candidates
    Eigen::MatrixXd y;        // m x d normalized displacements
    Eigen::VectorXd fitness;  // ascending
    std::vector<int> order;   // sorted position -> draw index

    double best_fitness() const { return fitness[0]; }
};

inline Subpopulation sample_subpop(const CmaState& state, int m, const TargetDensity& target,
                                   RngStream& rng, unsigned threads = 1) {
    const int d = state.dim();
    Eigen::MatrixXd y(m, d), xi(m, d);
    for (int j = 0; j < m; ++j) {
        Eigen::VectorXd z(d);
        for (int k = 0; k < d; ++k) z[k] = rng.normal();
        y.row(j) = state.eig.transform(z).transpose();
        xi.row(j) = state.mean.transpose() + state.sigma * y.row(j);
    }
    Eigen::VectorXd f(m);
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t j) {
        f[static_cast<Eigen::Index>(j)] = target.energy(xi.row(static_cast<Eigen::Index>(j)).transpose());
    });

    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });

    Subpopulation sub;
    sub.xi.resize(m, d);
    sub.y.resize(m, d);
    sub.fitness.resize(m);
    sub.order = order;
    for (int r = 0; r < m; ++r) {
        sub.xi.row(r) = xi.row(order[static_cast<std::size_t>(r)]);
        sub.y.row(r) = y.row(order[static_cast<std::size_t>(r)]);
        sub.fitness[r] = f[order[static_cast<std::size_t>(r)]];
    }
    return sub;
}

// Elite recombination: y_hat = sum of elite-weighted sorted displacements,
// new mean = mean + alpha_x * sigma * y_hat.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> recombine_mean(const CmaState& state,
                                                                  const Subpopulation& sub,
                                                                  const EsWeights& w,
                                                                  const CmaParams& p) {
    Eigen::VectorXd y_hat = Eigen::VectorXd::Zero(state.dim());
    for (int i = 0; i < w.elite; ++i) y_hat += w.w[i] * sub.y.row(i).transpose();
    Eigen::VectorXd new_mean = state.mean + p.alpha_x * state.sigma * y_hat;
    return {new_mean, y_hat};
}

// Cumulative step-size adaptation driven by y_hat. Uses the factorization
// the candidates were sampled with.
inline void csa_update(CmaState& state, const Eigen::VectorXd& y_hat, const EsWeights& w,
                       const CmaParams& p) {
    state.path_sigma = (1.0 - p.alpha_sigma) * state.path_sigma +
                       std::sqrt(p.alpha_sigma * (2.0 - p.alpha_sigma) * w.lambda_eff) *
                           state.eig.inv_sqrt_apply(y_hat);
    state.sigma *= std::exp((p.alpha_sigma / p.d_sigma) *
                            (state.path_sigma.norm() / p.chi_d - 1.0));
    state.sigma = std::clamp(state.sigma, kSigmaMin, kSigmaMax);
}

// Covariance adaptation (rank-one + rank-mu with negative-weight rescaling).
// Expects csa_update to have run this generation; refreshes the eigen cache.
inline void cov_update(CmaState& state, const Subpopulation& sub, const Eigen::VectorXd& y_hat,
                       const EsWeights& w, const CmaParams& p) {
    const double d = static_cast<double>(state.dim());
    const double denom =
        std::sqrt(1.0 - std::pow(1.0 - p.alpha_sigma, 2.0 * (state.generation + 1.0)));
    const double h_bar = state.path_sigma.norm() / denom;
    const double h_sigma = h_bar < (1.4 + 2.0 / (d + 1.0)) * p.chi_d ? 1.0 : 0.0;
    const double dh = p.alpha_c * (1.0 - h_sigma) * (2.0 - p.alpha_c) <= 1.0 ? 1.0 : 0.0;

    state.path_c = (1.0 - p.alpha_c) * state.path_c +
                   h_sigma * std::sqrt(p.alpha_c * (2.0 - p.alpha_c) * w.lambda_eff) * y_hat;

    Eigen::MatrixXd c_new =
        (1.0 + p.alpha_1 * dh - p.alpha_1 - p.alpha_lambda * w.total_sum()) * state.cov.m;
    c_new += p.alpha_1 * state.path_c * state.path_c.transpose();
    for (int i = 0; i < w.m; ++i) {
        double wi = w.w[i];
        if (wi == 0.0) continue;
        if (wi < 0.0) {
            const double n2 = state.eig.inv_sqrt_apply(sub.y.row(i).transpose()).squaredNorm();
            if (n2 == 0.0) continue;  // zero displacement contributes nothing
            wi *= d / n2;
        }
        c_new += p.alpha_lambda * wi * sub.y.row(i).transpose() * sub.y.row(i);
    }

    state.eig = sym_eig(SymMatrix(c_new), state.generation + 1);
    state.cov = SymMatrix(state.eig.reconstruct());
}

// One full generation; returns the best fitness seen in the subpopulation.
inline double cma_step(CmaState& state, const TargetDensity& target, int m, const EsWeights& w,
                       const CmaParams& p, RngStream& rng, unsigned threads = 1) {
    const Subpopulation sub = sample_subpop(state, m, target, rng, threads);
    auto [new_mean, y_hat] = recombine_mean(state, sub, w, p);
    state.mean = new_mean;
    csa_update(state, y_hat, w, p);
    cov_update(state, sub, y_hat, w, p);
    ++state.generation;
    return sub.best_fitness();
}

// Centered fitness ranks in [-0.5, 0.5], ascending, ties sharing their mean
// rank so constant fitness maps to all zeros.
inline Eigen::VectorXd centered_ranks(const Eigen::VectorXd& f) {
    const int m = static_cast<int>(f.size());
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
    Eigen::VectorXd ranks(m);
    int r = 0;
    while (r < m) {
        int r2 = r;
        while (r2 + 1 < m && f[order[static_cast<std::size_t>(r2 + 1)]] ==
                                 f[order[static_cast<std::size_t>(r)]])
            ++r2;
        const double shared = 0.5 * (r + r2);
        for (int k = r; k <= r2; ++k) ranks[order[static_cast<std::size_t>(k)]] = shared;
        r = r2 + 1;
    }
    if (m == 1) return Eigen::VectorXd::Zero(1);
    return (ranks.array() / (m - 1.0)) - 0.5;
}

// Antithetic Monte-Carlo estimate of grad f(x): perturbations zeta * xi with
// xi ~ N(0, I) in +/- pairs, fitness either rank-shaped (default) or raw.
inline Eigen::VectorXd openes_grad(const Eigen::VectorXd& x, double zeta, int m,
                                   const TargetDensity& target, RngStream& rng,
                                   bool rank_shaping = true, unsigned threads = 1) {
    if (m < 2 || m % 2 != 0) throw ConfigError("openes_grad: m must be even and >= 2");
    const int d = static_cast<int>(x.size());
    Eigen::MatrixXd xi(m, d);
    for (int j = 0; j < m / 2; ++j) {
        Eigen::VectorXd z(d);
        for (int k = 0; k < d; ++k) z[k] = rng.normal();
        xi.row(2 * j) = z.transpose();
        xi.row(2 * j + 1) = -z.transpose();
    }
    Eigen::VectorXd f(m);
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        f[jj] = target.energy(x + zeta * xi.row(jj).transpose());
    });
    const Eigen::VectorXd shaped = rank_shaping ? centered_ranks(f) : f;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < m; ++j) grad += shaped[j] * xi.row(j).transpose();
    return grad / (static_cast<double>(m) * zeta);
}

// Uncoordinated baseline: advance each CMA-ES run with its own stream.
inline std::vector<double> independent_parallel_step(std::vector<CmaState>& states,
                                                     const TargetDensity& target, int m,
                                                     const EsWeights& w, const CmaParams& p,
                                                     std::vector<RngStream>& rngs,
                                                     unsigned threads = 1) {
    if (states.size() != rngs.size())
        throw ConfigError("independent_parallel_step: one rng stream per state");
    std::vector<double> best(states.size());
    parallel_for(states.size(), threads, [&](std::size_t i) {
        best[i] = cma_step(states[i], target, m, w, p, rngs[i], 1);
    });
    return best;
}

}  // namespace sves
