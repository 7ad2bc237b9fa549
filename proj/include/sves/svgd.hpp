#pragma once

// Gradient-based SVGD, annealing schedules, and the gradient-free GF-SVGD
// baseline (surrogate-score SVGD with self-normalized importance weights).

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "sves/errors.hpp"
#include "sves/kernels.hpp"
#include "sves/targets.hpp"

namespace sves {

// Particle matrix, one row per particle.
struct ParticleSet {
    Eigen::MatrixXd x;

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index dim() const { return x.cols(); }
};

enum class ScheduleKind { Constant, LogClamped, LogFade };

// Annealing weight gamma(t) on the repulsive term, 1 <= t <= horizon.
// LogClamped: max(ln(T/t), 1). LogFade: max(ln(T/t), 0), reaching 0 at t = T.
struct AnnealSchedule {
    ScheduleKind kind = ScheduleKind::Constant;
    double constant = 1.0;
    int horizon = 1;

    static AnnealSchedule constant_gamma(double gamma) {
        return {ScheduleKind::Constant, gamma, 1};
    }
    static AnnealSchedule log_clamped(int horizon) {
        return {ScheduleKind::LogClamped, 1.0, horizon};
    }
    static AnnealSchedule log_fade(int horizon) { return {ScheduleKind::LogFade, 1.0, horizon}; }
};

inline double gamma_at(const AnnealSchedule& s, int t) {
    if (s.kind == ScheduleKind::Constant) return s.constant;
    if (t < 1 || t > s.horizon) throw ScheduleError("gamma: t outside [1, horizon]");
    const double v = std::log(static_cast<double>(s.horizon) / static_cast<double>(t));
    if (s.kind == ScheduleKind::LogClamped) return std::max(v, 1.0);
    return std::max(v, 0.0);
}

// Adaptive-moment (Adam) state over the particle matrix; `plain_sgd` falls
// back to x += lr * dir.
struct OptimizerState {
    double lr = 0.1;
    bool plain_sgd = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    Eigen::MatrixXd m, v;

    static OptimizerState adam(double lr, Eigen::Index n, Eigen::Index d) {
        OptimizerState o;
        o.lr = lr;
        o.m = Eigen::MatrixXd::Zero(n, d);
        o.v = Eigen::MatrixXd::Zero(n, d);
        return o;
    }

    static OptimizerState sgd(double lr, Eigen::Index n, Eigen::Index d) {
        OptimizerState o = adam(lr, n, d);
        o.plain_sgd = true;
        return o;
    }
};

// phi row i = (1/n) sum_j [ grad log p(x_j) k(x_j, x_i) + gamma grad_{x_j} k(x_j, x_i) ]
// with grad log p = -grad f.
inline Eigen::MatrixXd svgd_direction(const ParticleSet& ps, const TargetDensity& target,
                                      const KernelSpec& kernel, double gamma) {
    if (!target.has_grad())
        throw GradientUnavailable("svgd_direction: target lacks a closed-form gradient");
    const Eigen::Index n = ps.n();
    const double h = kernel.h();
    Eigen::MatrixXd scores(n, ps.dim());
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd g;
        target.energy_grad(ps.x.row(j).transpose(), g);
        scores.row(j) = -g.transpose();
    }
    Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(n, ps.dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::VectorXd diff = ps.x.row(j).transpose() - ps.x.row(i).transpose();
            const double k = std::exp(-diff.squaredNorm() / (2.0 * h));
            dir.row(i) += k * scores.row(j) + gamma * (-diff.transpose() / h) * k;
        }
        dir.row(i) /= static_cast<double>(n);
    }
    return dir;
}

// One optimizer step along `dir`; advances the optimizer clock even for a
// zero direction.
inline void svgd_step(ParticleSet& ps, const Eigen::MatrixXd& dir, OptimizerState& opt) {
    if (dir.rows() != ps.x.rows() || dir.cols() != ps.x.cols())
        throw DimError("svgd_step: direction shape mismatch");
    ++opt.step;
    if (opt.plain_sgd) {
        ps.x += opt.lr * dir;
        return;
    }
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * dir;
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * dir.array().square().matrix();
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    ps.x += (opt.lr * (opt.m / bc1).array() / ((opt.v / bc2).array().sqrt() + opt.eps)).matrix();
}

// GF-SVGD configuration: isotropic Gaussian surrogate N(0, prior_var I)
// shared between the score and the importance weights.
struct GfSvgdConfig {
    double prior_var = 1.0;
    // When set, gamma also scales the (weighted) driving term, mirroring the
    // open question of whether the baseline anneals both terms.
    bool anneal_drive = false;
};

// Surrogate-score SVGD: w_j = rho(x_j)/p~(x_j) self-normalized to mean one,
// direction row i = (1/n) sum_j w_j [ grad log rho(x_j) k_ji + gamma grad k_ji ].
// Weights are formed in log space.
inline Eigen::MatrixXd gfsvgd_direction(const ParticleSet& ps, const TargetDensity& target,
                                        const GfSvgdConfig& cfg, const KernelSpec& kernel,
                                        double gamma) {
    if (!(cfg.prior_var > 0.0)) throw ConfigError("gfsvgd: prior_var must be positive");
    const Eigen::Index n = ps.n();
    const Eigen::Index d = ps.dim();
    const double h = kernel.h();

    // log w_j = log rho(x_j) + f(x_j), up to a shared constant.
    Eigen::VectorXd logw(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::VectorXd xj = ps.x.row(j).transpose();
        logw[j] = -xj.squaredNorm() / (2.0 * cfg.prior_var) + target.energy(xj);
    }
    const double shift = logw.maxCoeff();
    if (!std::isfinite(shift)) throw DegenerateWeights("gfsvgd: non-finite importance weights");
    Eigen::VectorXd w = (logw.array() - shift).exp();
    const double total = w.sum();
    if (!(total > 0.0) || !std::isfinite(total))
        throw DegenerateWeights("gfsvgd: importance weights degenerate");
    w *= static_cast<double>(n) / total;  // self-normalize to mean 1

    const double drive_scale = cfg.anneal_drive ? gamma : 1.0;
    Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::VectorXd diff = ps.x.row(j).transpose() - ps.x.row(i).transpose();
            const double k = std::exp(-diff.squaredNorm() / (2.0 * h));
            const Eigen::VectorXd score = -ps.x.row(j).transpose() / cfg.prior_var;
            dir.row(i) += w[j] * (drive_scale * k * score.transpose() +
                                  gamma * (-diff.transpose() / h) * k);
        }
        dir.row(i) /= static_cast<double>(n);
    }
    return dir;
}

inline void gfsvgd_step(ParticleSet& ps, const TargetDensity& target, const GfSvgdConfig& cfg,
                        const KernelSpec& kernel, double gamma, OptimizerState& opt) {
    svgd_step(ps, gfsvgd_direction(ps, target, cfg, kernel, gamma), opt);
}

}  // namespace sves
