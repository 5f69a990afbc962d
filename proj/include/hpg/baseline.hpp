#pragma once

// Value-function baseline b_t(s, g) ~ V_t(s, g), fit by one-step TD.

#include "hpg/env.hpp"
#include "hpg/nnet.hpp"
#include "hpg/trajectory.hpp"

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <vector>

namespace hpg {

struct StateGoalTime {
    State state;
    Goal goal;
    int t; // 1-based time step; states[t - 1]
};

class ValueNet {
public:
    ValueNet(EnvSpec spec, Mlp net) : spec_(std::move(spec)), net_(std::move(net)) {
        if (net_.input_size() != input_size(spec_)) throw std::invalid_argument("value network input size mismatch");
        if (net_.output_size() != 1) throw std::invalid_argument("value network must have a single output");
    }

    static int input_size(const EnvSpec& spec) { return 2 * env::feature_size(spec) + 1; }

    static ValueNet make(const EnvSpec& spec, Rng& rng, const std::vector<int>& hidden = {256, 256}) {
        std::vector<int> sizes{input_size(spec)};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        return ValueNet(spec, init_gaussian_truncated(sizes, rng));
    }

    // All-zero network; value() is identically 0.
    static ValueNet zero(const EnvSpec& spec, const std::vector<int>& hidden = {}) {
        std::vector<int> sizes{input_size(spec)};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        return ValueNet(spec, Mlp(sizes));
    }

    const EnvSpec& spec() const { return spec_; }
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }

    Eigen::MatrixXd encode_batch(std::span<const StateGoalTime> items) const {
        const auto f = static_cast<std::size_t>(env::feature_size(spec_));
        Eigen::MatrixXd x(net_.input_size(), static_cast<Eigen::Index>(items.size()));
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto& it = items[i];
            if (it.t < 1 || it.t > spec_.horizon + 1) throw std::out_of_range("value: time step outside [1, H+1]");
            std::span<double> col{x.col(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(x.rows())};
            env::encode(spec_, it.state, col.subspan(0, f));
            env::encode(spec_, it.goal, col.subspan(f, f));
            col[2 * f] = static_cast<double>(it.t) / spec_.horizon;
        }
        return x;
    }

    Eigen::VectorXd values(std::span<const StateGoalTime> items) const {
        if (items.empty()) return {};
        return net_.forward(encode_batch(items)).row(0).transpose();
    }

    double value(State s, Goal g, int t) const {
        StateGoalTime item{s, g, t};
        return values({&item, 1})[0];
    }

private:
    EnvSpec spec_;
    Mlp net_;
};

inline double value(const ValueNet& vnet, State s, Goal g, int t) { return vnet.value(s, g, t); }

// One Adam step on the mean squared one-step TD error over every transition
// in the batch, under the original goals. Targets are held constant; the
// bootstrap term is zero at terminal states (goal reached with termination,
// or no actions left). Returns the loss before the step.
inline double td_fit_step(ValueNet& vnet, const Batch& batch, Adam& adam) {
    if (batch.empty()) throw std::invalid_argument("td_fit_step: empty batch");
    const EnvSpec& spec = vnet.spec();
    std::vector<StateGoalTime> current, next;
    std::vector<double> rewards;
    std::vector<bool> bootstrap;
    for (const auto& traj : batch.trajectories) {
        for (int t = 1; t <= traj.length(); ++t) {
            current.push_back({traj.states[t - 1], traj.goal, t});
            const bool reached = spec.terminate_on_goal && traj.achieved_at && *traj.achieved_at == t;
            const bool terminal = reached || t + 1 > spec.horizon;
            bootstrap.push_back(!terminal);
            next.push_back({traj.states[t], traj.goal, t + 1});
            rewards.push_back(traj.rewards[t - 1]);
        }
    }
    if (current.empty()) return 0.0;
    Mlp::Tape tape;
    const Eigen::MatrixXd v = vnet.net().forward(vnet.encode_batch(current), tape);
    const Eigen::VectorXd v_next = vnet.values(next);
    const auto n = static_cast<double>(current.size());
    Eigen::MatrixXd dv(1, v.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < v.cols(); ++i) {
        const double target = rewards[i] + (bootstrap[i] ? v_next[i] : 0.0);
        const double delta = target - v(0, i);
        loss += delta * delta / n;
        dv(0, i) = -2.0 * delta / n;
    }
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(vnet.net().num_params());
    vnet.net().backward(tape, dv, grad);
    adam.step(vnet.net().params(), grad);
    return loss;
}

} // namespace hpg
