#pragma once

// Native classic-control objectives: Pendulum and continuous MountainCar
// dynamics, a fixed-topology MLP policy (two hidden layers of 16, rectifier
// hidden / tanh output), and the episodic-return energy f(theta) = -J(theta).

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <string>
#include <vector>

#include "sves/errors.hpp"
#include "sves/rng.hpp"
#include "sves/targets.hpp"

namespace sves {

enum class EnvName { Pendulum, MountainCarContinuous };

struct EnvSpec {
    EnvName name = EnvName::Pendulum;
    int obs_dim = 3;
    int act_dim = 1;
    int state_dim = 2;
    int max_steps = 200;
    double dt = 0.05;  // pendulum integrator step

    static EnvSpec pendulum() { return {EnvName::Pendulum, 3, 1, 2, 200, 0.05}; }
    static EnvSpec mountaincar() { return {EnvName::MountainCarContinuous, 2, 1, 2, 500, 0.0}; }
};

struct StepResult {
    Eigen::VectorXd state;
    double reward = 0.0;
    bool done = false;
};

inline double wrap_angle(double theta) {
    double w = std::fmod(theta + std::numbers::pi, 2.0 * std::numbers::pi);
    if (w < 0.0) w += 2.0 * std::numbers::pi;
    return w - std::numbers::pi;
}

// Deterministic transition; actions arrive in [-1, 1] and are scaled to the
// native ranges inside (pendulum torque +/-2, mountaincar force +/-1).
inline StepResult env_step(const EnvSpec& spec, const Eigen::VectorXd& state,
                           const Eigen::VectorXd& action) {
    StepResult r;
    const double a = std::clamp(action[0], -1.0, 1.0);
    if (spec.name == EnvName::Pendulum) {
        constexpr double g = 10.0, mass = 1.0, length = 1.0, max_torque = 2.0,
                         max_speed = 8.0;
        const double th = state[0], thdot = state[1];
        const double u = max_torque * a;
        const double cost =
            wrap_angle(th) * wrap_angle(th) + 0.1 * thdot * thdot + 0.001 * u * u;
        double new_thdot =
            thdot + (3.0 * g / (2.0 * length) * std::sin(th) +
                     3.0 / (mass * length * length) * u) *
                        spec.dt;
        new_thdot = std::clamp(new_thdot, -max_speed, max_speed);
        const double new_th = th + new_thdot * spec.dt;
        r.state = Eigen::Vector2d(new_th, new_thdot);
        r.reward = -cost;
        r.done = false;
    } else {
        constexpr double power = 0.0015, goal_position = 0.45;
        double pos = state[0], vel = state[1];
        vel += a * power - 0.0025 * std::cos(3.0 * pos);
        vel = std::clamp(vel, -0.07, 0.07);
        pos += vel;
        pos = std::clamp(pos, -1.2, 0.6);
        if (pos <= -1.2 && vel < 0.0) vel = 0.0;
        r.state = Eigen::Vector2d(pos, vel);
        r.done = pos >= goal_position;
        r.reward = -0.1 * a * a + (r.done ? 100.0 : 0.0);
    }
    return r;
}

inline Eigen::VectorXd env_reset(const EnvSpec& spec, RngStream& rng) {
    if (spec.name == EnvName::Pendulum)
        return Eigen::Vector2d(rng.uniform(-std::numbers::pi, std::numbers::pi),
                               rng.uniform(-1.0, 1.0));
    return Eigen::Vector2d(rng.uniform(-0.6, -0.4), 0.0);
}

inline Eigen::VectorXd env_observe(const EnvSpec& spec, const Eigen::VectorXd& state) {
    if (spec.name == EnvName::Pendulum)
        return Eigen::Vector3d(std::cos(state[0]), std::sin(state[0]), state[1]);
    return state;
}

// Parameter layout: per layer, row-major weight matrix followed by the bias.
struct MlpPolicy {
    int obs_dim = 0;
    int act_dim = 0;
    static constexpr int hidden = 16;

    explicit MlpPolicy(int obs, int act) : obs_dim(obs), act_dim(act) {}

    int param_count() const {
        return (obs_dim + 1) * hidden + (hidden + 1) * hidden + (hidden + 1) * act_dim;
    }

    Eigen::VectorXd forward(const Eigen::VectorXd& theta, const Eigen::VectorXd& obs) const {
        if (obs.size() != obs_dim) throw DimError("mlp_forward: observation dimension mismatch");
        if (theta.size() != param_count()) throw DimError("mlp_forward: parameter count mismatch");
        const double* p = theta.data();
        auto dense = [&p](const Eigen::VectorXd& in, int out_dim) {
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>
                w(p, out_dim, in.size());
            p += out_dim * in.size();
            Eigen::Map<const Eigen::VectorXd> b(p, out_dim);
            p += out_dim;
            return Eigen::VectorXd(w * in + b);
        };
        const Eigen::VectorXd h1 = dense(obs, hidden).cwiseMax(0.0);
        const Eigen::VectorXd h2 = dense(h1, hidden).cwiseMax(0.0);
        return dense(h2, act_dim).array().tanh();
    }
};

// One seeded episode; the return is a pure function of (theta, rng state).
inline double rollout(const EnvSpec& spec, const MlpPolicy& policy, const Eigen::VectorXd& theta,
                      RngStream rng) {
    Eigen::VectorXd state = env_reset(spec, rng);
    double ret = 0.0;
    for (int step = 0; step < spec.max_steps; ++step) {
        const Eigen::VectorXd action = policy.forward(theta, env_observe(spec, state));
        StepResult r = env_step(spec, state, action);
        ret += r.reward;
        state = std::move(r.state);
        if (r.done) break;
    }
    return ret;
}

inline double expected_return(const EnvSpec& spec, const MlpPolicy& policy,
                              const Eigen::VectorXd& theta, int n_rollouts, const RngStream& rng) {
    double acc = 0.0;
    for (int r = 0; r < n_rollouts; ++r)
        acc += rollout(spec, policy, theta, rng.derive({0x7270, static_cast<std::uint64_t>(r)}));
    return acc / static_cast<double>(n_rollouts);
}

// Episodic-return energy f(theta) = -J(theta). Episode seeds derive from
// (base seed, generation, candidate bytes, rollout), so evaluation is
// deterministic under any evaluation order or thread count; the harness
// advances the generation once per iteration.
class RlTarget final : public TargetDensity {
public:
    RlTarget(EnvSpec spec, int n_rollouts, std::uint64_t seed)
        : TargetDensity(MlpPolicy(spec.obs_dim, spec.act_dim).param_count(),
                        spec.name == EnvName::Pendulum ? "pendulum" : "mountaincar"),
          spec_(spec),
          policy_(spec.obs_dim, spec.act_dim),
          n_rollouts_(n_rollouts),
          base_(seed) {}

    bool has_grad() const override { return false; }

    void set_generation(long g) { generation_ = g; }
    const EnvSpec& env() const { return spec_; }
    const MlpPolicy& policy() const { return policy_; }

    double expected_return_of(const Eigen::VectorXd& theta) const {
        return expected_return(spec_, policy_, theta, n_rollouts_, eval_stream(theta));
    }

private:
    RngStream eval_stream(const Eigen::VectorXd& theta) const {
        // Candidate identity via a byte hash of theta.
        std::uint64_t h = 0xcbf29ce484222325ULL;
        const auto* bytes = reinterpret_cast<const unsigned char*>(theta.data());
        for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(theta.size()); ++i)
            h = (h ^ bytes[i]) * 0x100000001b3ULL;
        return base_.derive({static_cast<std::uint64_t>(generation_), h});
    }

    double energy_impl(const Eigen::VectorXd& x) const override {
        return -expected_return_of(x);
    }

    EnvSpec spec_;
    MlpPolicy policy_;
    int n_rollouts_;
    RngStream base_;
    long generation_ = 0;
};

}  // namespace sves
