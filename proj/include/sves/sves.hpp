#pragma once

// Stein Variational Evolution Strategies: an ensemble of ES search
// distributions, one per SVGD particle, coupled through the kernel-gradient
// repulsion term. SV-CMA-ES drives each particle with its own CMA-ES
// recombination; SV-OpenAI-ES drives particles with antithetic Monte-Carlo
// gradient estimates.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "sves/es.hpp"
#include "sves/kernels.hpp"
#include "sves/svgd.hpp"
#include "sves/targets.hpp"

namespace sves {

namespace detail {

// Sum the term vectors in a canonical (lexicographic) order so the result is
// independent of particle indexing; keeps permutation equivariance bitwise.
inline Eigen::VectorXd ordered_sum(std::vector<Eigen::VectorXd>& terms, Eigen::Index dim) {
    std::sort(terms.begin(), terms.end(), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                            b.data() + b.size());
    });
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
    for (const auto& t : terms) acc += t;
    return acc;
}

}  // namespace detail

struct SvCmaConfig {
    // Reproduce the literal raw-displacement scaling of the published
    // algorithm listing instead of the sigma-normalized update.
    bool alg1_literal = false;
    // Kernel-smooth the driving term over all particles instead of the
    // simplified own-subpopulation update.
    bool full_driving_sum = false;
};

// n parallel CMA-ES states (means = particles) with shared weights, learning
// rates, kernel and annealing schedule. Each particle owns its RNG stream so
// evaluation order and particle permutations do not change results.
struct SvesEnsemble {
    std::vector<CmaState> states;
    std::vector<RngStream> streams;
    EsWeights weights;
    CmaParams params;
    KernelSpec kernel;
    AnnealSchedule schedule;
    SvCmaConfig cfg;
    int subpop_size = 0;
    long generation = 0;

    static SvesEnsemble init(const Eigen::MatrixXd& means, double sigma, int subpop_size,
                             int elite, const KernelSpec& kernel, const AnnealSchedule& schedule,
                             const RngStream& root, SvCmaConfig cfg = {}) {
        SvesEnsemble ens;
        const int n = static_cast<int>(means.rows());
        const int d = static_cast<int>(means.cols());
        ens.weights = cma_weights(subpop_size, elite, d);
        ens.params = CmaParams::defaults(d, ens.weights.lambda_eff);
        ens.kernel = kernel;
        ens.schedule = schedule;
        ens.cfg = cfg;
        ens.subpop_size = subpop_size;
        for (int i = 0; i < n; ++i) {
            ens.states.push_back(CmaState::init(means.row(i).transpose(), sigma));
            ens.streams.push_back(root.derive({0x5cda, static_cast<std::uint64_t>(i)}));
        }
        return ens;
    }

    int n() const { return static_cast<int>(states.size()); }
    int dim() const { return states.at(0).dim(); }

    Eigen::MatrixXd particles() const {
        Eigen::MatrixXd x(n(), dim());
        for (int i = 0; i < n(); ++i) x.row(i) = states[static_cast<std::size_t>(i)].mean.transpose();
        return x;
    }

    double gamma_now() const {
        const int t = static_cast<int>(std::clamp<long>(generation + 1, 1,
                                                        std::max(1, schedule.horizon)));
        return gamma_at(schedule, t);
    }
};

// The annealed particle step in sigma-normalized coordinates:
//   y_hat_i = sum_k w_ik y_ik + (gamma / (n sigma_i)) sum_j grad_{x_j} k(x_j, x_i)
// so that mean_i + alpha_x sigma_i y_hat_i realizes the published update.
// The repulsion reads a frozen snapshot of all means.
inline Eigen::VectorXd svcma_direction(const SvesEnsemble& ens, int i,
                                       const std::vector<Subpopulation>& subs, double gamma,
                                       const Eigen::MatrixXd& mean_snapshot) {
    const int n = ens.n();
    const Eigen::Index d = ens.dim();
    const CmaState& state = ens.states[static_cast<std::size_t>(i)];
    const double h = ens.kernel.h();

    Eigen::VectorXd drive;
    if (!ens.cfg.full_driving_sum) {
        drive = recombine_mean(state, subs[static_cast<std::size_t>(i)], ens.weights, ens.params)
                    .second;
    } else {
        // Kernel-smoothed driving term over all subpopulations, expressed in
        // particle i's normalized coordinates.
        std::vector<Eigen::VectorXd> terms;
        terms.reserve(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            const CmaState& sj = ens.states[static_cast<std::size_t>(j)];
            const Eigen::VectorXd yj =
                recombine_mean(sj, subs[static_cast<std::size_t>(j)], ens.weights, ens.params)
                    .second;
            const double k = std::exp(
                -(mean_snapshot.row(j) - mean_snapshot.row(i)).squaredNorm() / (2.0 * h));
            terms.push_back((sj.sigma * k) * yj);
        }
        drive = detail::ordered_sum(terms, d) / (static_cast<double>(n) * state.sigma);
    }

    if (gamma == 0.0 || n == 1)
        return ens.cfg.alg1_literal ? Eigen::VectorXd(state.sigma * drive) : drive;

    std::vector<Eigen::VectorXd> terms;
    terms.reserve(static_cast<std::size_t>(n - 1));
    for (int j = 0; j < n; ++j) {
        if (j == i) continue;  // grad k(x, x) = 0
        const Eigen::VectorXd diff =
            (mean_snapshot.row(j) - mean_snapshot.row(i)).transpose();
        const double k = std::exp(-diff.squaredNorm() / (2.0 * h));
        terms.push_back((-diff / h) * k);
    }
    const Eigen::VectorXd repulsion = detail::ordered_sum(terms, d);
    const double scale = ens.cfg.alg1_literal
                             ? gamma / static_cast<double>(n)
                             : gamma / (static_cast<double>(n) * state.sigma);
    if (ens.cfg.alg1_literal) return state.sigma * drive + scale * repulsion;
    return drive + scale * repulsion;
}

// One synchronous generation: all n subpopulations are sampled and evaluated
// before any particle moves. Returns the best fitness seen this generation.
inline double svcma_step(SvesEnsemble& ens, const TargetDensity& target, unsigned threads = 1) {
    const int n = ens.n();
    std::vector<Subpopulation> subs(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        subs[i] = sample_subpop(ens.states[i], ens.subpop_size, target, ens.streams[i], 1);
    });

    const double gamma = ens.gamma_now();
    const Eigen::MatrixXd snapshot = ens.particles();

    // All directions are computed against the frozen snapshot before any
    // state is written.
    std::vector<Eigen::VectorXd> y_hats(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        y_hats[i] = svcma_direction(ens, static_cast<int>(i), subs, gamma, snapshot);
    });

    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        CmaState& state = ens.states[i];
        const Eigen::VectorXd& y_hat = y_hats[i];
        if ((gamma == 0.0 || n == 1) && !ens.cfg.alg1_literal) {
            // Identical arithmetic to the vanilla step so the n = 1 reduction
            // is bit-exact.
            state.mean = recombine_mean(state, subs[i], ens.weights, ens.params).first;
        } else {
            state.mean += ens.params.alpha_x * state.sigma * y_hat;
        }
        csa_update(state, y_hat, ens.weights, ens.params);
        cov_update(state, subs[i], y_hat, ens.weights, ens.params);
        ++state.generation;
    });

    ++ens.generation;
    double best = subs[0].best_fitness();
    for (const auto& sub : subs) best = std::min(best, sub.best_fitness());
    return best;
}

// ---------------------------------------------------------------------------
// SV-OpenAI-ES

struct OpenEsConfig {
    double zeta = 0.1;  // perturbation scale
    double lr = 0.05;   // optimizer learning rate
    int m = 16;         // subpopulation (perturbation) count, even
    bool rank_shaping = true;
};

// One SVGD step whose score term is the per-particle OpenAI-ES gradient
// estimate: dir row i = (1/n) sum_j [ -g_j k(x_j, x_i) + gamma grad k(x_j, x_i) ].
inline void svopenes_step(ParticleSet& ps, const OpenEsConfig& cfg, const TargetDensity& target,
                          const KernelSpec& kernel, double gamma,
                          std::vector<RngStream>& streams, OptimizerState& opt,
                          unsigned threads = 1) {
    const Eigen::Index n = ps.n();
    const Eigen::Index d = ps.dim();
    if (static_cast<Eigen::Index>(streams.size()) != n)
        throw ConfigError("svopenes_step: one rng stream per particle");
    const double h = kernel.h();

    Eigen::MatrixXd grads(n, d);
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        grads.row(jj) = openes_grad(ps.x.row(jj).transpose(), cfg.zeta, cfg.m, target,
                                    streams[j], cfg.rank_shaping, 1)
                            .transpose();
    });

    Eigen::MatrixXd dir(n, d);
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        std::vector<Eigen::VectorXd> terms;
        terms.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::VectorXd diff = (ps.x.row(j) - ps.x.row(ii)).transpose();
            const double k = std::exp(-diff.squaredNorm() / (2.0 * h));
            terms.push_back(-k * grads.row(j).transpose() + gamma * (-diff / h) * k);
        }
        dir.row(ii) = detail::ordered_sum(terms, d).transpose() / static_cast<double>(n);
    });

    svgd_step(ps, dir, opt);
}

}  // namespace sves
