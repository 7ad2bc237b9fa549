#pragma once

// Evaluation stack: biased (V-statistic) MMD^2, moment-error metrics,
// random-walk Metropolis ground-truth sampling with pilot-tuned proposal
// scale, and the central finite-difference gradient oracle.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sves/errors.hpp"
#include "sves/kernels.hpp"
#include "sves/parallel.hpp"
#include "sves/rng.hpp"
#include "sves/targets.hpp"

namespace sves {

struct SampleSet {
    Eigen::MatrixXd samples;  // k x d
    std::string source;

    Eigen::Index k() const { return samples.rows(); }
    Eigen::Index dim() const { return samples.cols(); }
};

struct MmdReport {
    double mmd2 = 0.0;
    double bandwidth = 0.0;
    Eigen::Index k_x = 0;
    Eigen::Index k_y = 0;
};

// Biased V-statistic over full Gram matrices (diagonal included):
// mean_ii' k(x,x') + mean_jj' k(y,y') - 2 mean_ij k(x,y). Non-negative up
// to rounding.
inline MmdReport mmd2_biased(const SampleSet& x, const SampleSet& y, double h) {
    if (x.k() == 0 || y.k() == 0) throw DegenerateSamples("mmd2: empty sample set");
    if (x.dim() != y.dim()) throw DimError("mmd2: sample sets have different dimensions");

    auto gram_mean = [h](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < b.rows(); ++j)
                acc += std::exp(-(a.row(i) - b.row(j)).squaredNorm() / (2.0 * h));
        return acc / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
    };

    MmdReport report;
    report.bandwidth = h;
    report.k_x = x.k();
    report.k_y = y.k();
    report.mmd2 = gram_mean(x.samples, x.samples) + gram_mean(y.samples, y.samples) -
                  2.0 * gram_mean(x.samples, y.samples);
    return report;
}

// MSE of empirical mean and per-coordinate unbiased variance against the
// given truth, averaged over coordinates.
inline std::pair<double, double> moment_mse(const SampleSet& x, const Eigen::VectorXd& truth_mean,
                                            const Eigen::VectorXd& truth_var) {
    if (x.k() == 0) throw DegenerateSamples("moment_mse: empty sample set");
    if (truth_mean.size() != x.dim() || truth_var.size() != x.dim())
        throw DimError("moment_mse: truth dimension mismatch");
    const Eigen::VectorXd mean = x.samples.colwise().mean();
    const double mse_mean = (mean - truth_mean).squaredNorm() / static_cast<double>(x.dim());
    if (x.k() < 2) throw SingleSample("moment_mse: variance undefined for a single sample");
    const Eigen::VectorXd var =
        (x.samples.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() /
        static_cast<double>(x.k() - 1);
    const double mse_var = (var - truth_var).squaredNorm() / static_cast<double>(x.dim());
    return {mse_mean, mse_var};
}

struct MhReport {
    SampleSet samples;
    double acceptance_rate = 0.0;
    double proposal_scale = 0.0;
};

// Random-walk Metropolis: one independent chain per returned sample, Gaussian
// proposals, acceptance min(1, exp(f(x) - f(x'))). Chains start from
// N(0, init_scale^2 I) and run burn_in steps each.
inline MhReport mh_sample(const TargetDensity& target, int n_chains, int burn_in,
                          double proposal_scale, RngStream rng, double init_scale = 1.0,
                          unsigned threads = 1) {
    const int d = target.dim();
    MhReport report;
    report.proposal_scale = proposal_scale;
    report.samples.samples.resize(n_chains, d);
    report.samples.source = "mh:" + target.name();
    std::vector<std::uint64_t> accepted(static_cast<std::size_t>(n_chains), 0);

    parallel_for(static_cast<std::size_t>(n_chains), threads, [&](std::size_t c) {
        RngStream chain_rng = rng.derive({0x6d68, static_cast<std::uint64_t>(c)});
        Eigen::VectorXd x(d);
        for (int k = 0; k < d; ++k) x[k] = init_scale * chain_rng.normal();
        double fx = target.energy(x);
        for (int step = 0; step < burn_in; ++step) {
            Eigen::VectorXd prop = x;
            for (int k = 0; k < d; ++k) prop[k] += proposal_scale * chain_rng.normal();
            const double fp = target.energy(prop);
            if (chain_rng.uniform() < std::exp(fx - fp)) {
                x = prop;
                fx = fp;
                ++accepted[c];
            }
        }
        report.samples.samples.row(static_cast<Eigen::Index>(c)) = x.transpose();
    });

    std::uint64_t total = 0;
    for (auto a : accepted) total += a;
    report.acceptance_rate =
        burn_in > 0 ? static_cast<double>(total) / (static_cast<double>(n_chains) * burn_in) : 0.0;
    return report;
}

// Short pilot chains targeting an acceptance rate in [0.2, 0.5]; doubles or
// halves the scale until the window is hit.
inline double tune_proposal_scale(const TargetDensity& target, RngStream rng,
                                  double initial_scale = 1.0, int pilot_steps = 1000,
                                  int max_rounds = 30) {
    double scale = initial_scale;
    for (int round = 0; round < max_rounds; ++round) {
        const MhReport pilot =
            mh_sample(target, 4, pilot_steps / 4, scale, rng.derive(static_cast<std::uint64_t>(round)));
        if (pilot.acceptance_rate > 0.5)
            scale *= 2.0;
        else if (pilot.acceptance_rate < 0.2)
            scale *= 0.5;
        else
            return scale;
    }
    return scale;
}

// Central finite differences of the energy, coordinate by coordinate.
inline Eigen::VectorXd finite_diff_grad(const TargetDensity& target, const Eigen::VectorXd& x,
                                        double step = 1e-5) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        probe[k] = x[k] + step;
        const double fp = target.energy(probe);
        probe[k] = x[k] - step;
        const double fm = target.energy(probe);
        probe[k] = x[k];
        g[k] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// Unit Gaussian displaced so its mean sits `distance` away from the origin;
// the sanity baseline that any reasonable sampler must beat on MMD.
inline SampleSet displaced_prior_samples(int dim, int k, RngStream& rng, double distance = 5.0) {
    SampleSet set;
    set.source = "displaced_prior";
    set.samples.resize(k, dim);
    const double offset = distance / std::sqrt(static_cast<double>(dim));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < dim; ++j) set.samples(i, j) = offset + rng.normal();
    return set;
}

}  // namespace sves
