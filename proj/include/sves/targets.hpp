#pragma once

// Unnormalized target densities. Each target exposes an energy f with
// p(x) = exp(-f(x))/Z; Z is never computed. Closed-form gradients are
// provided where they exist so gradient-based SVGD can run on the same
// objects the ES-based samplers see.

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "sves/errors.hpp"
#include "sves/rng.hpp"

namespace sves {

class TargetDensity {
public:
    virtual ~TargetDensity() = default;

    int dim() const { return dim_; }
    const std::string& name() const { return name_; }

    double energy(const Eigen::VectorXd& x) const {
        check_dim(x);
        evals_.fetch_add(1, std::memory_order_relaxed);
        return energy_impl(x);
    }

    // Metric probe that does not count against the evaluation budget.
    double energy_nocount(const Eigen::VectorXd& x) const {
        check_dim(x);
        return energy_impl(x);
    }

    virtual bool has_grad() const { return true; }

    // Energy and closed-form gradient in one query. Counts once.
    double energy_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
        check_dim(x);
        if (!has_grad()) throw GradientUnavailable(name_ + ": no closed-form gradient");
        evals_.fetch_add(1, std::memory_order_relaxed);
        return energy_grad_impl(x, grad);
    }

    Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
        Eigen::VectorXd g(dim_);
        energy_grad(x, g);
        return g;
    }

    std::uint64_t eval_count() const { return evals_.load(std::memory_order_relaxed); }
    void reset_eval_count() const { evals_.store(0, std::memory_order_relaxed); }

protected:
    TargetDensity(int dim, std::string name) : dim_(dim), name_(std::move(name)) {}
    // The atomic counter is the only non-copyable member; carry its value.
    TargetDensity(const TargetDensity& other)
        : dim_(other.dim_), name_(other.name_), evals_(other.eval_count()) {}
    TargetDensity& operator=(const TargetDensity& other) {
        dim_ = other.dim_;
        name_ = other.name_;
        evals_.store(other.eval_count(), std::memory_order_relaxed);
        return *this;
    }

    virtual double energy_impl(const Eigen::VectorXd& x) const = 0;
    virtual double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
        (void)x;
        (void)grad;
        throw GradientUnavailable(name_ + ": no closed-form gradient");
    }

    void check_dim(const Eigen::VectorXd& x) const {
        if (x.size() != dim_) throw DimError(name_ + ": point has wrong dimension");
    }

    int dim_;
    std::string name_;
    mutable std::atomic<std::uint64_t> evals_{0};
};

// ---------------------------------------------------------------------------
// Gaussian mixture p(x) = (1/K) sum_i w_i N(x; mu_i, I), K = sum w_i.

class GaussianMixtureTarget final : public TargetDensity {
public:
    GaussianMixtureTarget(std::vector<Eigen::VectorXd> means, std::vector<double> weights)
        : TargetDensity(static_cast<int>(means.at(0).size()), "gmm"),
          means_(std::move(means)),
          weights_(std::move(weights)) {
        if (means_.size() != weights_.size())
            throw ConfigError("gmm: means/weights size mismatch");
        log_k_ = 0.0;
        for (double w : weights_) {
            if (!(w > 0.0)) throw ConfigError("gmm: weights must be positive");
            log_k_ += w;
        }
        log_k_ = std::log(log_k_);
    }

    // Modes uniform on [-6, 6]^2, weights uniform on [0, 10].
    static GaussianMixtureTarget sample_construction(int n_modes, RngStream rng, int dim = 2) {
        std::vector<Eigen::VectorXd> means;
        std::vector<double> weights;
        for (int i = 0; i < n_modes; ++i) {
            Eigen::VectorXd mu(dim);
            for (int d = 0; d < dim; ++d) mu[d] = rng.uniform(-6.0, 6.0);
            means.push_back(mu);
            weights.push_back(rng.uniform(0.0, 10.0));
        }
        return GaussianMixtureTarget(std::move(means), std::move(weights));
    }

    const std::vector<Eigen::VectorXd>& means() const { return means_; }
    const std::vector<double>& weights() const { return weights_; }

    // Ancestral draw from the mixture itself (used for MMD ground truth).
    Eigen::VectorXd sample(RngStream& rng) const {
        double total = 0.0;
        for (double w : weights_) total += w;
        double u = rng.uniform() * total;
        std::size_t pick = weights_.size() - 1;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            if (u < weights_[i]) {
                pick = i;
                break;
            }
            u -= weights_[i];
        }
        Eigen::VectorXd x = means_[pick];
        for (Eigen::Index d = 0; d < x.size(); ++d) x[d] += rng.normal();
        return x;
    }

    // Exact first two moments of the mixture, per coordinate.
    void moments(Eigen::VectorXd& mean, Eigen::VectorXd& var) const {
        double total = 0.0;
        for (double w : weights_) total += w;
        mean = Eigen::VectorXd::Zero(dim_);
        for (std::size_t i = 0; i < means_.size(); ++i) mean += (weights_[i] / total) * means_[i];
        var = Eigen::VectorXd::Ones(dim_);
        for (std::size_t i = 0; i < means_.size(); ++i)
            var += (weights_[i] / total) * (means_[i] - mean).array().square().matrix();
    }

private:
    // log-sum-exp over components of log w_i - ||x - mu_i||^2 / 2.
    double logsumexp_terms(const Eigen::VectorXd& x, Eigen::VectorXd* resp) const {
        Eigen::VectorXd t(static_cast<Eigen::Index>(means_.size()));
        for (std::size_t i = 0; i < means_.size(); ++i)
            t[static_cast<Eigen::Index>(i)] =
                std::log(weights_[i]) - 0.5 * (x - means_[i]).squaredNorm();
        const double tmax = t.maxCoeff();
        const double lse = tmax + std::log((t.array() - tmax).exp().sum());
        if (resp) *resp = (t.array() - lse).exp();
        return lse;
    }

    double energy_impl(const Eigen::VectorXd& x) const override {
        const double lse = logsumexp_terms(x, nullptr);
        return -lse + log_k_ + 0.5 * dim_ * std::log(2.0 * std::numbers::pi);
    }

    double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        Eigen::VectorXd resp;
        const double lse = logsumexp_terms(x, &resp);
        grad = Eigen::VectorXd::Zero(dim_);
        for (std::size_t i = 0; i < means_.size(); ++i)
            grad += resp[static_cast<Eigen::Index>(i)] * (x - means_[i]);
        return -lse + log_k_ + 0.5 * dim_ * std::log(2.0 * std::numbers::pi);
    }

    std::vector<Eigen::VectorXd> means_;
    std::vector<double> weights_;
    double log_k_;
};

// ---------------------------------------------------------------------------
// Double banana: f(x) = ||x||^2/(2 s1) + (y - F(x))^2/(2 s2) with
// F(x) = log((1-x1)^2 + 100 (x2 - x1^2)^2). F diverges at (1,1); the energy
// is capped there so rank-based selection stays total.

class DoubleBananaTarget final : public TargetDensity {
public:
    explicit DoubleBananaTarget(double y = std::log(30.0), double sigma1 = 1.0,
                                double sigma2 = 0.09)
        : TargetDensity(2, "banana"), y_(y), s1_(sigma1), s2_(sigma2) {}

    static constexpr double energy_cap = 1e12;

    double y() const { return y_; }
    double sigma1() const { return s1_; }
    double sigma2() const { return s2_; }

private:
    double energy_impl(const Eigen::VectorXd& x) const override {
        const double g = rosen_arg(x);
        if (g <= 0.0) return energy_cap;
        const double fx = std::log(g);
        return x.squaredNorm() / (2.0 * s1_) + (y_ - fx) * (y_ - fx) / (2.0 * s2_);
    }

    double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        const double g = rosen_arg(x);
        if (g <= 0.0) {
            grad = Eigen::VectorXd::Zero(2);
            return energy_cap;
        }
        const double fx = std::log(g);
        const double x1 = x[0], x2 = x[1];
        Eigen::VectorXd dF(2);
        dF[0] = (-2.0 * (1.0 - x1) - 400.0 * x1 * (x2 - x1 * x1)) / g;
        dF[1] = 200.0 * (x2 - x1 * x1) / g;
        grad = x / s1_ - (y_ - fx) / s2_ * dF;
        return x.squaredNorm() / (2.0 * s1_) + (y_ - fx) * (y_ - fx) / (2.0 * s2_);
    }

    static double rosen_arg(const Eigen::VectorXd& x) {
        const double a = 1.0 - x[0];
        const double b = x[1] - x[0] * x[0];
        return a * a + 100.0 * b * b;
    }

    double y_, s1_, s2_;
};

// ---------------------------------------------------------------------------
// Halton radical inverse (standard low-discrepancy sequence).

inline double halton(std::uint64_t index, std::uint64_t base) {
    if (base < 2) throw InvalidBase("halton: base must be >= 2");
    double result = 0.0;
    double f = 1.0 / static_cast<double>(base);
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= static_cast<double>(base);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Motion planning over T free 2D waypoints between fixed endpoints. The
// density exponent is taken exactly as printed (obstacle bumps are rewarded);
// `negate_exponent` flips the sign for the alternative reading.

class MotionPlanningTarget final : public TargetDensity {
public:
    MotionPlanningTarget(int n_waypoints = 5, double obstacle_scale = 0.25,
                         double smoothness = 1.0,
                         Eigen::Vector2d start = Eigen::Vector2d(-0.9, -0.9),
                         Eigen::Vector2d goal = Eigen::Vector2d(0.9, 0.9),
                         bool negate_exponent = false, int n_obstacles = 15)
        : TargetDensity(2 * n_waypoints, "motionplan"),
          t_(n_waypoints),
          sigma_(obstacle_scale),
          alpha_(smoothness),
          start_(start),
          goal_(goal),
          sign_(negate_exponent ? 1.0 : -1.0) {
        // Obstacles from the (2,3) Halton sequence, mapped onto [-1, 1)^2.
        for (int i = 1; i <= n_obstacles; ++i) {
            Eigen::Vector2d mu(2.0 * halton(static_cast<std::uint64_t>(i), 2) - 1.0,
                               2.0 * halton(static_cast<std::uint64_t>(i), 3) - 1.0);
            obstacles_.push_back(mu);
        }
    }

    const std::vector<Eigen::Vector2d>& obstacles() const { return obstacles_; }
    double obstacle_scale() const { return sigma_; }
    double smoothness_weight() const { return alpha_; }
    Eigen::Vector2d start() const { return start_; }
    Eigen::Vector2d goal() const { return goal_; }

    double collision_density(const Eigen::Vector2d& p) const {
        const double norm =
            1.0 / (static_cast<double>(obstacles_.size()) * 2.0 * std::numbers::pi * sigma_ * sigma_);
        double acc = 0.0;
        for (const auto& mu : obstacles_)
            acc += std::exp(-(p - mu).squaredNorm() / (2.0 * sigma_ * sigma_));
        return norm * acc;
    }

private:
    Eigen::Vector2d waypoint(const Eigen::VectorXd& x, int t) const {
        if (t == 0) return start_;
        if (t == t_ + 1) return goal_;
        return x.segment<2>(2 * (t - 1));
    }

    double energy_impl(const Eigen::VectorXd& x) const override {
        double exponent = 0.0;
        for (int t = 1; t <= t_; ++t) exponent += collision_density(waypoint(x, t));
        for (int t = 1; t <= t_ + 1; ++t)
            exponent += alpha_ * (waypoint(x, t) - waypoint(x, t - 1)).norm();
        return sign_ * exponent;
    }

    double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        grad = Eigen::VectorXd::Zero(dim_);
        const double gauss_norm =
            1.0 / (static_cast<double>(obstacles_.size()) * 2.0 * std::numbers::pi * sigma_ * sigma_);
        for (int t = 1; t <= t_; ++t) {
            const Eigen::Vector2d p = waypoint(x, t);
            Eigen::Vector2d g = Eigen::Vector2d::Zero();
            for (const auto& mu : obstacles_)
                g += std::exp(-(p - mu).squaredNorm() / (2.0 * sigma_ * sigma_)) *
                     (-(p - mu) / (sigma_ * sigma_));
            grad.segment<2>(2 * (t - 1)) += sign_ * gauss_norm * g;
        }
        // ||.||_2 smoothness terms; subgradient 0 at coincident waypoints.
        for (int t = 1; t <= t_ + 1; ++t) {
            const Eigen::Vector2d d = waypoint(x, t) - waypoint(x, t - 1);
            const double len = d.norm();
            if (len == 0.0) continue;
            const Eigen::Vector2d unit = d / len;
            if (t <= t_) grad.segment<2>(2 * (t - 1)) += sign_ * alpha_ * unit;
            if (t >= 2) grad.segment<2>(2 * (t - 2)) -= sign_ * alpha_ * unit;
        }
        return energy_impl(x);
    }

    int t_;
    double sigma_;
    double alpha_;
    Eigen::Vector2d start_, goal_;
    double sign_;
    std::vector<Eigen::Vector2d> obstacles_;
};

// ---------------------------------------------------------------------------
// Smooth test objectives for optimizer validation.

class SphereTarget final : public TargetDensity {
public:
    explicit SphereTarget(int dim) : TargetDensity(dim, "sphere") {}

private:
    double energy_impl(const Eigen::VectorXd& x) const override { return x.squaredNorm(); }
    double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        grad = 2.0 * x;
        return x.squaredNorm();
    }
};

class RosenbrockTarget final : public TargetDensity {
public:
    explicit RosenbrockTarget(int dim) : TargetDensity(dim, "rosenbrock") {
        if (dim < 2) throw ConfigError("rosenbrock: dim must be >= 2");
    }

private:
    double energy_impl(const Eigen::VectorXd& x) const override {
        double f = 0.0;
        for (int i = 0; i + 1 < dim_; ++i) {
            const double a = x[i + 1] - x[i] * x[i];
            const double b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
        }
        return f;
    }

    double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        grad = Eigen::VectorXd::Zero(dim_);
        for (int i = 0; i + 1 < dim_; ++i) {
            const double a = x[i + 1] - x[i] * x[i];
            grad[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
            grad[i + 1] += 200.0 * a;
        }
        return energy_impl(x);
    }
};

// Shifted view of another target: f(x) = base_f(x - c). Used by the
// translation-equivariance checks.
class ShiftedTarget final : public TargetDensity {
public:
    ShiftedTarget(std::shared_ptr<const TargetDensity> base, Eigen::VectorXd shift)
        : TargetDensity(base->dim(), base->name() + "_shifted"),
          base_(std::move(base)),
          shift_(std::move(shift)) {}

    bool has_grad() const override { return base_->has_grad(); }

private:
    double energy_impl(const Eigen::VectorXd& x) const override {
        return base_->energy(x - shift_);
    }
    double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        return base_->energy_grad(x - shift_, grad);
    }

    std::shared_ptr<const TargetDensity> base_;
    Eigen::VectorXd shift_;
};

// Monotone-transformed view g(f(x)) with g strictly increasing; rank-based
// samplers must be invariant to it.
class MonotoneTransformedTarget final : public TargetDensity {
public:
    template <typename Fn>
    MonotoneTransformedTarget(std::shared_ptr<const TargetDensity> base, Fn g)
        : TargetDensity(base->dim(), base->name() + "_mono"),
          base_(std::move(base)),
          g_(std::move(g)) {}

    bool has_grad() const override { return false; }

private:
    double energy_impl(const Eigen::VectorXd& x) const override { return g_(base_->energy(x)); }

    std::shared_ptr<const TargetDensity> base_;
    std::function<double(double)> g_;
};

}  // namespace sves
