#pragma once

// Policy-gradient estimators for goal-conditional policies.
//
//   gcpg_gradient              (1/N) sum_i sum_t grad log p(a_t | s_t, g_i) G_t
//   gcpg_baseline_gradient     same with G_t - b_t(s_t, g_i)
//   hpg_gradient               per-decision hindsight estimator (unweighted)
//   hpg_weighted_gradient      per-decision hindsight estimator with the
//                              likelihood ratios self-normalised across the batch
//   weighted_baseline_term     self-normalised baseline correction; subtract it
//                              from hpg_weighted_gradient
//
// All estimators return the ascent direction. Hindsight sums for a goal g stop
// at g's first achievement when the environment terminates on the goal: the
// episode would have ended there had g been pursued.

#include "hpg/baseline.hpp"
#include "hpg/env.hpp"
#include "hpg/policy.hpp"
#include "hpg/trajectory.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace hpg {

enum class GoalSelection {
    active, // goals with a nonzero reward along the trajectory (then subsampled)
    all,    // every valid goal; only matters for the baseline term
};

struct EstimatorOptions {
    std::optional<std::size_t> max_active; // nullopt: keep every active goal
    GoalSelection selection = GoalSelection::active;
    bool record_weights = false;
};

// Normalised likelihood ratio of trajectory `trajectory` for (goal, t').
// `active` marks ratios that multiply a nonzero reward.
struct WeightRecord {
    std::size_t trajectory;
    Goal goal;
    int step; // t' = u + 1, the 1-based index of the rewarded state
    double weight;
    double log_ratio;
    bool active;
};

struct GradientEstimate {
    Eigen::VectorXd gradient;
    std::vector<WeightRecord> weights;
    std::size_t active_goals = 0;
};

namespace detail {

inline void require_batch(const Batch& batch) {
    if (batch.empty()) throw std::invalid_argument("estimator: empty batch");
}

// Batched log p(a | s, g) lookups, one forward pass per distinct (s, g).
class LogProbCache {
public:
    explicit LogProbCache(const Policy& policy) : policy_(policy) {}

    void request(State s, Goal g) { pairs_.insert({s, g}); }

    void evaluate() { table_ = policy_.log_probs(pairs_.pairs()); }

    double operator()(State s, Goal g, Action a) const {
        return table_(a, static_cast<Eigen::Index>(pairs_.at({s, g})));
    }

    // Requests every pair needed for ratios of `traj` under `goal` up to `k_max` actions.
    void request_ratio(const Trajectory& traj, Goal goal, int k_max) {
        if (goal == traj.goal) return;
        for (int k = 1; k <= k_max; ++k) {
            request(traj.states[k - 1], goal);
            request(traj.states[k - 1], traj.goal);
        }
    }

    // c[m] = sum_{k <= m} log p(a_k | s_k, goal) - log p(a_k | s_k, g_orig); c[0] = 0.
    std::vector<double> cumulative_log_ratio(const Trajectory& traj, Goal goal, int k_max) const {
        std::vector<double> c(static_cast<std::size_t>(k_max) + 1, 0.0);
        if (goal == traj.goal) return c;
        for (int k = 1; k <= k_max; ++k) {
            const State s = traj.states[k - 1];
            const Action a = traj.actions[k - 1];
            c[k] = c[k - 1] + ((*this)(s, goal, a) - (*this)(s, traj.goal, a));
        }
        return c;
    }

private:
    const Policy& policy_;
    PairIndex pairs_;
    Eigen::MatrixXd table_;
};

struct GoalTerms {
    Goal goal;
    std::vector<RewardEvent> events; // empty for inactive goals
    int horizon;                     // last action index of the hindsight episode
};

// Goals entering the hindsight sums of one trajectory.
inline std::vector<GoalTerms> considered_goals(const Trajectory& traj, const EnvSpec& spec,
                                               const EstimatorOptions& options, Rng& rng) {
    std::vector<GoalTerms> out;
    if (options.selection == GoalSelection::all) {
        for (Goal g : env::valid_goals(spec, traj.initial())) {
            auto events = reward_events(spec, traj, g);
            const int h = (spec.terminate_on_goal && !events.empty()) ? events.front().step : traj.length();
            out.push_back({g, std::move(events), h});
        }
        return out;
    }
    const auto chosen = subsample_goals(active_goals(traj, spec), options.max_active, rng);
    for (const auto& ag : chosen.goals) {
        auto events = reward_events(spec, traj, ag.goal);
        const int h = spec.terminate_on_goal ? ag.first_step : traj.length();
        out.push_back({ag.goal, std::move(events), h});
    }
    return out;
}

inline double log_sum_exp(const std::vector<double>& xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

} // namespace detail

// sum_{k=1}^{k_max} log p(a_k | s_k, alt_goal) - log p(a_k | s_k, g_orig).
inline double log_ratio(const Trajectory& traj, Goal alt_goal, int k_max, const Policy& policy) {
    if (k_max < 0 || k_max > traj.length()) throw std::out_of_range("log_ratio: k_max outside [0, L]");
    detail::LogProbCache cache(policy);
    cache.request_ratio(traj, alt_goal, k_max);
    cache.evaluate();
    return cache.cumulative_log_ratio(traj, alt_goal, k_max).back();
}

inline GradientEstimate gcpg_gradient(const Batch& batch, const Policy& policy) {
    detail::require_batch(batch);
    ScoreTable scores(policy.num_actions());
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& traj : batch.trajectories) {
        double to_go = 0.0;
        for (int t = traj.length(); t >= 1; --t) {
            to_go += traj.rewards[t - 1];
            if (to_go != 0.0) scores.add(traj.states[t - 1], traj.goal, traj.actions[t - 1], to_go * inv_n);
        }
    }
    GradientEstimate est;
    est.gradient = Eigen::VectorXd::Zero(policy.num_params());
    policy.accumulate(scores, est.gradient);
    return est;
}

inline GradientEstimate gcpg_baseline_gradient(const Batch& batch, const Policy& policy, const ValueNet& vnet) {
    detail::require_batch(batch);
    std::vector<StateGoalTime> items;
    for (const auto& traj : batch.trajectories)
        for (int t = 1; t <= traj.length(); ++t) items.push_back({traj.states[t - 1], traj.goal, t});
    const Eigen::VectorXd b = vnet.values(items);
    ScoreTable scores(policy.num_actions());
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::size_t offset = 0;
    for (const auto& traj : batch.trajectories) {
        std::vector<double> to_go(traj.length() + 1, 0.0);
        for (int t = traj.length(); t >= 1; --t) to_go[t - 1] = to_go[t] + traj.rewards[t - 1];
        for (int t = 1; t <= traj.length(); ++t) {
            const double c = (to_go[t - 1] - b[static_cast<Eigen::Index>(offset + t - 1)]) * inv_n;
            scores.add(traj.states[t - 1], traj.goal, traj.actions[t - 1], c);
        }
        offset += traj.length();
    }
    GradientEstimate est;
    est.gradient = Eigen::VectorXd::Zero(policy.num_params());
    policy.accumulate(scores, est.gradient);
    return est;
}

inline GradientEstimate hpg_gradient(const Batch& batch, const Policy& policy, const EnvSpec& spec,
                                     const EstimatorOptions& options, Rng& rng) {
    detail::require_batch(batch);
    const double pg = env::goal_probability(spec);
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    std::vector<std::vector<detail::GoalTerms>> goals(batch.size());
    detail::LogProbCache cache(policy);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& traj = batch.trajectories[i];
        goals[i] = detail::considered_goals(traj, spec, options, rng);
        for (const auto& gt : goals[i])
            if (!gt.events.empty()) cache.request_ratio(traj, gt.goal, gt.events.back().step);
    }
    cache.evaluate();

    GradientEstimate est;
    ScoreTable scores(policy.num_actions());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& traj = batch.trajectories[i];
        for (const auto& gt : goals[i]) {
            if (gt.events.empty()) continue;
            ++est.active_goals;
            const auto c = cache.cumulative_log_ratio(traj, gt.goal, gt.events.back().step);
            // weight on grad log p(a_t | s_t, g): sum over events u >= t of ratio(1..u) r
            std::vector<double> coef(gt.events.back().step + 1, 0.0);
            for (const auto& ev : gt.events) {
                const double w = std::exp(c[ev.step]);
                coef[ev.step] += pg * inv_n * w * ev.reward;
                if (options.record_weights) est.weights.push_back({i, gt.goal, ev.step + 1, w, c[ev.step], true});
            }
            for (int t = gt.events.back().step - 1; t >= 1; --t) coef[t] += coef[t + 1];
            for (int t = 1; t <= gt.events.back().step; ++t)
                scores.add(traj.states[t - 1], gt.goal, traj.actions[t - 1], coef[t]);
        }
    }
    est.gradient = Eigen::VectorXd::Zero(policy.num_params());
    policy.accumulate(scores, est.gradient);
    return est;
}

namespace detail {

// Considered goals of every trajectory plus the batch-wide union, in
// first-seen order. `max_step[g]` is the longest ratio any term needs.
struct GoalPlan {
    std::vector<std::vector<GoalTerms>> per_trajectory;
    std::vector<Goal> goal_union;
    std::unordered_map<std::uint32_t, std::size_t> union_index;
    std::vector<int> max_step;

    std::size_t index(Goal g) const { return union_index.at(g.code); }
};

// `with_baseline` extends the ratio lengths to each goal's hindsight horizon.
inline GoalPlan plan_goals(const Batch& batch, const EnvSpec& spec, const EstimatorOptions& options, Rng& rng,
                           bool with_baseline) {
    GoalPlan plan;
    plan.per_trajectory.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (auto& gt : considered_goals(batch.trajectories[i], spec, options, rng)) {
            const int needed = with_baseline ? gt.horizon : (gt.events.empty() ? 0 : gt.events.back().step);
            auto [it, fresh] = plan.union_index.try_emplace(gt.goal.code, plan.goal_union.size());
            if (fresh) {
                plan.goal_union.push_back(gt.goal);
                plan.max_step.push_back(0);
            }
            plan.max_step[it->second] = std::max(plan.max_step[it->second], needed);
            plan.per_trajectory[i].push_back(std::move(gt));
        }
    return plan;
}

// Cumulative log ratios c_j(g, m), m <= min(L_j, max_step(g)), for every
// trajectory j and every union goal g: c[g][j][m].
class BatchRatios {
public:
    BatchRatios(const Batch& batch, const Policy& policy, const GoalPlan& plan) {
        LogProbCache cache(policy);
        for (std::size_t gi = 0; gi < plan.goal_union.size(); ++gi)
            for (const auto& traj : batch.trajectories)
                cache.request_ratio(traj, plan.goal_union[gi], std::min(traj.length(), plan.max_step[gi]));
        cache.evaluate();
        c_.resize(plan.goal_union.size());
        normaliser_.resize(plan.goal_union.size());
        for (std::size_t gi = 0; gi < plan.goal_union.size(); ++gi) {
            c_[gi].reserve(batch.size());
            for (const auto& traj : batch.trajectories)
                c_[gi].push_back(cache.cumulative_log_ratio(traj, plan.goal_union[gi],
                                                            std::min(traj.length(), plan.max_step[gi])));
        }
    }

    // c_j(g, min(m, L_j)): a trajectory that ended before m contributes its
    // full-length ratio.
    double log_ratio(std::size_t g, std::size_t j, int m) const {
        const auto& cj = c_[g][j];
        return cj[std::min<std::size_t>(static_cast<std::size_t>(m), cj.size() - 1)];
    }

    // log sum_j exp c_j(g, m), memoised per (g, m).
    double log_normaliser(std::size_t g, int m) {
        auto [it, fresh] = normaliser_[g].try_emplace(m, 0.0);
        if (fresh) {
            std::vector<double> terms;
            terms.reserve(c_[g].size());
            for (std::size_t j = 0; j < c_[g].size(); ++j) terms.push_back(log_ratio(g, j, m));
            it->second = log_sum_exp(terms);
        }
        return it->second;
    }

    double weight(std::size_t g, std::size_t j, int m) { return std::exp(log_ratio(g, j, m) - log_normaliser(g, m)); }

    std::vector<int> normalised_steps(std::size_t g) const {
        std::vector<int> steps;
        for (const auto& [m, lz] : normaliser_[g]) steps.push_back(m);
        std::sort(steps.begin(), steps.end());
        return steps;
    }

private:
    std::vector<std::vector<std::vector<double>>> c_;
    std::vector<std::unordered_map<int, double>> normaliser_;
};

inline std::size_t count_active(const GoalPlan& plan) {
    std::size_t n = 0;
    for (const auto& goals : plan.per_trajectory)
        for (const auto& gt : goals) n += gt.events.empty() ? 0 : 1;
    return n;
}

// Adds the self-normalised numerator terms, scaled by `sign`, to `scores`.
inline void add_weighted_terms(const Batch& batch, const GoalPlan& plan, BatchRatios& ratios, double pg,
                               double sign, ScoreTable& scores) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& traj = batch.trajectories[i];
        for (const auto& gt : plan.per_trajectory[i]) {
            if (gt.events.empty()) continue;
            const std::size_t gi = plan.index(gt.goal);
            const int last = gt.events.back().step;
            std::vector<double> coef(last + 1, 0.0);
            for (const auto& ev : gt.events) coef[ev.step] += sign * pg * ratios.weight(gi, i, ev.step) * ev.reward;
            for (int t = last - 1; t >= 1; --t) coef[t] += coef[t + 1];
            for (int t = 1; t <= last; ++t) scores.add(traj.states[t - 1], gt.goal, traj.actions[t - 1], coef[t]);
        }
    }
}

// Adds the weighted baseline terms, scaled by `sign`, to `scores`.
inline void add_baseline_terms(const Batch& batch, const GoalPlan& plan, BatchRatios& ratios, const ValueNet& vnet,
                               double pg, double sign, ScoreTable& scores) {
    std::vector<StateGoalTime> items;
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (const auto& gt : plan.per_trajectory[i])
            for (int t = 1; t <= gt.horizon; ++t) items.push_back({batch.trajectories[i].states[t - 1], gt.goal, t});
    const Eigen::VectorXd b = vnet.values(items);
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& traj = batch.trajectories[i];
        for (const auto& gt : plan.per_trajectory[i]) {
            const std::size_t gi = plan.index(gt.goal);
            for (int t = 1; t <= gt.horizon; ++t)
                scores.add(traj.states[t - 1], gt.goal, traj.actions[t - 1],
                           sign * pg * ratios.weight(gi, i, t) * b[offset++]);
        }
    }
}

// Every (goal, t') pair a numerator term used, with the normalised ratio of
// every trajectory. Entries flagged active multiply a reward.
inline void record_weights(const Batch& batch, const GoalPlan& plan, const BatchRatios& ratios,
                           std::vector<WeightRecord>& out) {
    for (std::size_t gi = 0; gi < plan.goal_union.size(); ++gi) {
        const Goal g = plan.goal_union[gi];
        std::vector<std::unordered_map<int, bool>> rewarded(batch.size());
        std::vector<int> steps;
        for (std::size_t j = 0; j < batch.size(); ++j)
            for (const auto& gt : plan.per_trajectory[j])
                if (gt.goal == g)
                    for (const auto& ev : gt.events) {
                        rewarded[j][ev.step] = true;
                        steps.push_back(ev.step);
                    }
        std::sort(steps.begin(), steps.end());
        steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
        for (int u : steps) {
            std::vector<double> terms;
            for (std::size_t j = 0; j < batch.size(); ++j) terms.push_back(ratios.log_ratio(gi, j, u));
            const double lz = log_sum_exp(terms);
            for (std::size_t j = 0; j < batch.size(); ++j)
                out.push_back({j, g, u + 1, std::exp(terms[j] - lz), terms[j], rewarded[j].contains(u)});
        }
    }
}

} // namespace detail

inline GradientEstimate hpg_weighted_gradient(const Batch& batch, const Policy& policy, const EnvSpec& spec,
                                              const EstimatorOptions& options, Rng& rng) {
    detail::require_batch(batch);
    const auto plan = detail::plan_goals(batch, spec, options, rng, false);
    detail::BatchRatios ratios(batch, policy, plan);
    ScoreTable scores(policy.num_actions());
    detail::add_weighted_terms(batch, plan, ratios, env::goal_probability(spec), 1.0, scores);
    GradientEstimate est;
    est.active_goals = detail::count_active(plan);
    if (options.record_weights) detail::record_weights(batch, plan, ratios, est.weights);
    est.gradient = Eigen::VectorXd::Zero(policy.num_params());
    policy.accumulate(scores, est.gradient);
    return est;
}

// sum_i sum_g p(g) sum_t grad log p(a_t | s_t, g) w_i(g, t) b_t(s_t, g), with
// w_i(g, t) the ratio over actions 1..t normalised across the batch. For a
// goal g the sum over t stops at g's hindsight horizon.
inline GradientEstimate weighted_baseline_term(const Batch& batch, const Policy& policy, const ValueNet& vnet,
                                               const EnvSpec& spec, const EstimatorOptions& options, Rng& rng) {
    detail::require_batch(batch);
    const auto plan = detail::plan_goals(batch, spec, options, rng, true);
    detail::BatchRatios ratios(batch, policy, plan);
    ScoreTable scores(policy.num_actions());
    detail::add_baseline_terms(batch, plan, ratios, vnet, env::goal_probability(spec), 1.0, scores);
    GradientEstimate est;
    est.active_goals = detail::count_active(plan);
    est.gradient = Eigen::VectorXd::Zero(policy.num_params());
    policy.accumulate(scores, est.gradient);
    return est;
}

// hpg_weighted_gradient - weighted_baseline_term over one shared goal
// subsample.
inline GradientEstimate hpg_weighted_baseline_gradient(const Batch& batch, const Policy& policy,
                                                       const ValueNet& vnet, const EnvSpec& spec,
                                                       const EstimatorOptions& options, Rng& rng) {
    detail::require_batch(batch);
    const auto plan = detail::plan_goals(batch, spec, options, rng, true);
    detail::BatchRatios ratios(batch, policy, plan);
    const double pg = env::goal_probability(spec);
    ScoreTable scores(policy.num_actions());
    detail::add_weighted_terms(batch, plan, ratios, pg, 1.0, scores);
    detail::add_baseline_terms(batch, plan, ratios, vnet, pg, -1.0, scores);
    GradientEstimate est;
    est.active_goals = detail::count_active(plan);
    if (options.record_weights) detail::record_weights(batch, plan, ratios, est.weights);
    est.gradient = Eigen::VectorXd::Zero(policy.num_params());
    policy.accumulate(scores, est.gradient);
    return est;
}

} // namespace hpg
