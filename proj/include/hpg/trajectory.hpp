#pragma once

// Episodes, batches, rollouts and the active-goal machinery shared by every
// gradient estimator.

#include "hpg/env.hpp"
#include "hpg/policy.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace hpg {

// One episode. Indices are 0-based in storage: states[u] is the state after
// u actions (states[0] = s_1), actions[u - 1] / rewards[u - 1] / log_probs[u - 1]
// belong to the u-th action.
struct Trajectory {
    Goal goal;
    std::vector<State> states;
    std::vector<Action> actions;
    std::vector<double> rewards;
    std::vector<double> log_probs; // under the original goal
    std::optional<int> achieved_at; // first u >= 1 with states[u] == goal

    int length() const { return static_cast<int>(actions.size()); }
    State initial() const { return states.front(); }
    double total_return() const {
        double sum = 0.0;
        for (double r : rewards) sum += r;
        return sum;
    }
};

struct Batch {
    std::vector<Trajectory> trajectories;
    std::size_t size() const { return trajectories.size(); }
    bool empty() const { return trajectories.empty(); }
};

struct RewardEvent {
    int step;      // u: number of completed actions, reward paid at states[u]
    double reward;
};

// Rewards the trajectory would have produced had `goal` been pursued. With
// goal termination, the hindsight episode ends at the first achievement, so at
// most one event is returned; without it every visit pays.
inline std::vector<RewardEvent> reward_events(const EnvSpec& spec, const Trajectory& traj, Goal goal) {
    std::vector<RewardEvent> events;
    if (!env::is_valid_goal(spec, traj.initial(), goal)) return events;
    for (int u = 1; u <= traj.length(); ++u) {
        if (!env::achieved(traj.states[u], goal)) continue;
        events.push_back({u, env::reward(spec, traj.states[u], goal, u)});
        if (spec.terminate_on_goal) break;
    }
    return events;
}

struct ActiveGoal {
    Goal goal;
    int first_step; // first u >= 1 with states[u] == goal
};

// Valid goals with a nonzero reward somewhere along the trajectory, in order
// of first visit.
struct ActiveGoalSet {
    std::vector<ActiveGoal> goals;
    std::size_t size() const { return goals.size(); }
    bool empty() const { return goals.empty(); }
    bool contains(Goal g) const {
        return std::any_of(goals.begin(), goals.end(), [g](const ActiveGoal& a) { return a.goal == g; });
    }
};

inline ActiveGoalSet active_goals(const Trajectory& traj, const EnvSpec& spec) {
    ActiveGoalSet set;
    std::unordered_map<std::uint32_t, bool> seen;
    for (int u = 1; u <= traj.length(); ++u) {
        const State s = traj.states[u];
        if (!env::is_valid_goal(spec, traj.initial(), s)) continue;
        if (seen.emplace(s.code, true).second) set.goals.push_back({s, u});
    }
    return set;
}

// Uniform sample without replacement of min(max_k, |set|) goals; nullopt
// means no limit. Relative order is preserved.
inline ActiveGoalSet subsample_goals(const ActiveGoalSet& set, std::optional<std::size_t> max_k, Rng& rng) {
    if (max_k && *max_k < 1) throw std::invalid_argument("max active goals must be at least 1");
    if (!max_k || *max_k >= set.size()) return set;
    ActiveGoalSet out;
    std::sample(set.goals.begin(), set.goals.end(), std::back_inserter(out.goals), *max_k, rng);
    return out;
}

// Rolls out `n` episodes in lockstep, sampling actions from the policy.
// Initial states and goals are drawn first for every episode, then actions
// and transitions step by step in episode order.
inline Batch collect_batch(const Policy& policy, const EnvSpec& spec, std::size_t n, Rng& rng,
                           std::span<const Goal> goals = {}) {
    if (!goals.empty() && goals.size() != n) throw std::invalid_argument("one goal per episode expected");
    Batch batch;
    batch.trajectories.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& t = batch.trajectories[i];
        t.states.push_back(env::initial_state(spec, rng));
        t.goal = goals.empty() ? env::sample_goal(spec, t.states[0], rng) : goals[i];
    }
    std::vector<std::size_t> running(n);
    for (std::size_t i = 0; i < n; ++i) running[i] = i;
    std::vector<StateGoal> pairs;
    for (int u = 1; u <= spec.horizon && !running.empty(); ++u) {
        pairs.clear();
        for (auto i : running) pairs.push_back({batch.trajectories[i].states.back(), batch.trajectories[i].goal});
        const Eigen::MatrixXd lp = policy.log_probs(pairs);
        std::vector<std::size_t> still;
        std::vector<double> probs(lp.rows());
        for (std::size_t r = 0; r < running.size(); ++r) {
            auto& t = batch.trajectories[running[r]];
            for (Eigen::Index a = 0; a < lp.rows(); ++a) probs[a] = std::exp(lp(a, static_cast<Eigen::Index>(r)));
            const Action a = sample_action(probs, rng);
            const State next = env::transition(spec, t.states.back(), a, rng);
            t.actions.push_back(a);
            t.log_probs.push_back(lp(a, static_cast<Eigen::Index>(r)));
            t.states.push_back(next);
            const bool hit = env::is_valid_goal(spec, t.states[0], t.goal) && env::achieved(next, t.goal);
            t.rewards.push_back(hit ? env::reward(spec, next, t.goal, u) : 0.0);
            if (hit && !t.achieved_at) t.achieved_at = u;
            if (!(hit && spec.terminate_on_goal)) still.push_back(running[r]);
        }
        running = std::move(still);
    }
    return batch;
}

inline Trajectory collect_trajectory(const Policy& policy, const EnvSpec& spec, Goal goal, Rng& rng) {
    return std::move(collect_batch(policy, spec, 1, rng, {&goal, 1}).trajectories.front());
}

} // namespace hpg
