#pragma once

// Ground truth for tiny environments by exhaustive trajectory enumeration:
// exact returns, exact gradients, Q/V/A tables, finite differences, exact
// evaluation of the gradient identities (conventional, every-decision,
// per-decision, advantage and hindsight forms), optimal constant baselines,
// and Monte Carlo estimator statistics.
//
// Supported instances have a single initial state: bitflip (k <= 3) and the
// chain environment. The fixed-length identities apply to the variant without
// goal termination (EnvSpec::without_termination).

#include "hpg/env.hpp"
#include "hpg/policy.hpp"
#include "hpg/trajectory.hpp"

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace hpg::oracle {

inline constexpr double max_entries = 1e7;

struct Entry {
    Trajectory traj;
    double prob; // p(tau | g, theta), including p(s_1)
};

struct EnumeratedMDP {
    Goal goal;
    std::vector<Entry> entries;
};

// Upper bound on the number of trajectories per goal.
inline double size_bound(const EnvSpec& spec) {
    double branch = 1.0;
    if (spec.kind == EnvKind::chain) branch = 2.0;
    if (spec.is_grid()) branch = spec.noise_prob > 0.0 ? 5.0 : 1.0;
    const double per_step = env::num_actions(spec) * branch;
    return static_cast<double>(env::initial_states(spec).size()) * std::pow(per_step, spec.horizon) *
           static_cast<double>(env::num_states(spec));
}

inline void require_enumerable(const EnvSpec& spec) {
    if (size_bound(spec) > max_entries) throw std::length_error("oracle: instance too large to enumerate");
    if (env::initial_states(spec).size() != 1) throw std::invalid_argument("oracle: single initial state required");
}

// log p(a | s, g) for every state code s, one goal.
inline std::vector<std::vector<double>> log_prob_table(const Policy& policy, Goal goal) {
    const auto n = env::num_states(policy.spec());
    std::vector<StateGoal> pairs;
    for (std::uint32_t s = 0; s < n; ++s) pairs.push_back({State{s}, goal});
    const Eigen::MatrixXd lp = policy.log_probs(pairs);
    std::vector<std::vector<double>> out(n, std::vector<double>(lp.rows()));
    for (std::uint32_t s = 0; s < n; ++s)
        for (Eigen::Index a = 0; a < lp.rows(); ++a) out[s][a] = lp(a, s);
    return out;
}

inline EnumeratedMDP enumerate(const EnvSpec& spec, const Policy& policy, Goal goal) {
    require_enumerable(spec);
    const auto lp = log_prob_table(policy, goal);
    const State start = env::initial_states(spec).front();
    const bool valid = env::is_valid_goal(spec, start, goal);
    EnumeratedMDP out{goal, {}};
    Trajectory partial;
    partial.goal = goal;
    partial.states.push_back(start);
    std::function<void(double)> expand = [&](double prob) {
        const int u = partial.length();
        const bool done = u == spec.horizon || (spec.terminate_on_goal && partial.achieved_at.has_value());
        if (done) {
            out.entries.push_back({partial, prob});
            return;
        }
        const State s = partial.states.back();
        for (Action a = 0; a < env::num_actions(spec); ++a) {
            const double pa = std::exp(lp[s.code][a]);
            for (auto [next, pn] : env::transition_distribution(spec, s, a)) {
                const bool hit = valid && env::achieved(next, goal);
                const auto saved_achieved = partial.achieved_at;
                partial.actions.push_back(a);
                partial.log_probs.push_back(lp[s.code][a]);
                partial.states.push_back(next);
                partial.rewards.push_back(hit ? env::reward(spec, next, goal, u + 1) : 0.0);
                if (hit && !partial.achieved_at) partial.achieved_at = u + 1;
                expand(prob * pa * pn);
                partial.actions.pop_back();
                partial.log_probs.pop_back();
                partial.states.pop_back();
                partial.rewards.pop_back();
                partial.achieved_at = saved_achieved;
            }
        }
    };
    expand(1.0);
    return out;
}

inline std::vector<Goal> goal_space(const EnvSpec& spec) {
    return env::valid_goals(spec, env::initial_states(spec).front());
}

inline double exact_return(const EnvSpec& spec, const Policy& policy) {
    require_enumerable(spec);
    const double pg = env::goal_probability(spec);
    double eta = 0.0;
    for (Goal g : goal_space(spec))
        for (const auto& e : enumerate(spec, policy, g).entries) eta += pg * e.prob * e.traj.total_return();
    return eta;
}

// grad log p(a | s, g) through the single-pair path, memoised.
class ScoreCache {
public:
    explicit ScoreCache(const Policy& policy) : policy_(policy) {}

    const Eigen::VectorXd& operator()(State s, Goal g, Action a) {
        const std::uint64_t key = (StateGoal{s, g}.key() << 8) | static_cast<std::uint64_t>(a);
        auto it = cache_.find(key);
        if (it == cache_.end()) it = cache_.emplace(key, policy_.grad_log_prob(s, g, a)).first;
        return it->second;
    }

private:
    const Policy& policy_;
    std::unordered_map<std::uint64_t, Eigen::VectorXd> cache_;
};

// Conventional goal-conditional gradient, by exact summation.
inline Eigen::VectorXd exact_gradient(const EnvSpec& spec, const Policy& policy) {
    require_enumerable(spec);
    const double pg = env::goal_probability(spec);
    ScoreCache score(policy);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
    for (Goal g : goal_space(spec))
        for (const auto& e : enumerate(spec, policy, g).entries) {
            double to_go = 0.0;
            for (int t = e.traj.length(); t >= 1; --t) {
                to_go += e.traj.rewards[t - 1];
                if (to_go != 0.0) grad += pg * e.prob * to_go * score(e.traj.states[t - 1], g, e.traj.actions[t - 1]);
            }
        }
    return grad;
}

inline Eigen::VectorXd finite_diff_gradient(const EnvSpec& spec, const Policy& policy, double eps = 1e-5) {
    require_enumerable(spec);
    Policy probe = policy;
    Eigen::VectorXd grad(policy.num_params());
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
        const double saved = probe.net().params()[j];
        probe.net().params()[j] = saved + eps;
        const double up = exact_return(spec, probe);
        probe.net().params()[j] = saved - eps;
        const double down = exact_return(spec, probe);
        probe.net().params()[j] = saved;
        grad[j] = (up - down) / (2.0 * eps);
    }
    return grad;
}

// Q_t, V_t, A_t for one goal; t is 1-based, q[t] is num_states x num_actions
// for t in 1..H, v[t] for t in 1..H+1 (v[H+1] = 0). Index 0 is unused.
struct QvaTables {
    std::vector<Eigen::MatrixXd> q;
    std::vector<Eigen::VectorXd> v;
    std::vector<Eigen::MatrixXd> a;
};

// Backward recursion over time.
inline QvaTables exact_qva(const EnvSpec& spec, const Policy& policy, Goal goal) {
    require_enumerable(spec);
    const auto ns = static_cast<Eigen::Index>(env::num_states(spec));
    const int na = env::num_actions(spec);
    const int h = spec.horizon;
    const auto lp = log_prob_table(policy, goal);
    const bool valid = env::is_valid_goal(spec, env::initial_states(spec).front(), goal);
    QvaTables out;
    out.q.assign(h + 1, Eigen::MatrixXd::Zero(ns, na));
    out.a.assign(h + 1, Eigen::MatrixXd::Zero(ns, na));
    out.v.assign(h + 2, Eigen::VectorXd::Zero(ns));
    for (int t = h; t >= 1; --t) {
        for (Eigen::Index s = 0; s < ns; ++s) {
            double vs = 0.0;
            for (Action a = 0; a < na; ++a) {
                double q = 0.0;
                for (auto [next, pn] : env::transition_distribution(spec, State{static_cast<std::uint32_t>(s)}, a)) {
                    const bool hit = valid && env::achieved(next, goal);
                    const double r = hit ? env::reward(spec, next, goal, t) : 0.0;
                    const bool stop = hit && spec.terminate_on_goal;
                    q += pn * (r + (stop ? 0.0 : out.v[t + 1][next.code]));
                }
                out.q[t](s, a) = q;
                vs += std::exp(lp[s][a]) * q;
            }
            out.v[t][s] = vs;
            for (Action a = 0; a < na; ++a) out.a[t](s, a) = out.q[t](s, a) - vs;
        }
    }
    return out;
}

// Q_t and V_t as conditional expectations of the return-to-go over the
// enumerated trajectories. Entries for unreachable (t, s) are NaN.
inline QvaTables conditional_qv(const EnvSpec& spec, const Policy& policy, Goal goal) {
    const auto ns = static_cast<Eigen::Index>(env::num_states(spec));
    const int na = env::num_actions(spec);
    const int h = spec.horizon;
    std::vector<Eigen::MatrixXd> qn(h + 1, Eigen::MatrixXd::Zero(ns, na)), qd = qn;
    std::vector<Eigen::VectorXd> vn(h + 2, Eigen::VectorXd::Zero(ns)), vd = vn;
    for (const auto& e : enumerate(spec, policy, goal).entries) {
        double to_go = 0.0;
        for (int t = e.traj.length(); t >= 1; --t) {
            to_go += e.traj.rewards[t - 1];
            const auto s = e.traj.states[t - 1].code;
            qn[t](s, e.traj.actions[t - 1]) += e.prob * to_go;
            qd[t](s, e.traj.actions[t - 1]) += e.prob;
            vn[t][s] += e.prob * to_go;
            vd[t][s] += e.prob;
        }
    }
    QvaTables out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.q.assign(h + 1, Eigen::MatrixXd::Constant(ns, na, nan));
    out.v.assign(h + 2, Eigen::VectorXd::Constant(ns, nan));
    out.v[h + 1].setZero();
    for (int t = 1; t <= h; ++t) {
        for (Eigen::Index s = 0; s < ns; ++s) {
            if (vd[t][s] > 0.0) out.v[t][s] = vn[t][s] / vd[t][s];
            for (int a = 0; a < na; ++a)
                if (qd[t](s, a) > 0.0) out.q[t](s, a) = qn[t](s, a) / qd[t](s, a);
        }
    }
    out.a.assign(h + 1, Eigen::MatrixXd::Constant(ns, na, nan));
    for (int t = 1; t <= h; ++t) out.a[t] = out.q[t] - out.v[t].replicate(1, na);
    return out;
}

// Largest |A_t(s, a) - E[r(S_{t+1}) + V_{t+1}(S_{t+1}) - V_t(s) | s, a]| over
// reachable (t, s, a), all tables taken from the enumeration route.
inline double advantage_transition_residual(const EnvSpec& spec, const Policy& policy, Goal goal) {
    const auto tables = conditional_qv(spec, policy, goal);
    const bool valid = env::is_valid_goal(spec, env::initial_states(spec).front(), goal);
    double worst = 0.0;
    for (int t = 1; t <= spec.horizon; ++t)
        for (Eigen::Index s = 0; s < tables.a[t].rows(); ++s)
            for (Action a = 0; a < tables.a[t].cols(); ++a) {
                if (std::isnan(tables.a[t](s, a))) continue;
                double expected = -tables.v[t][s];
                for (auto [next, pn] : env::transition_distribution(spec, State{static_cast<std::uint32_t>(s)}, a)) {
                    const bool hit = valid && env::achieved(next, goal);
                    const double r = hit ? env::reward(spec, next, goal, t) : 0.0;
                    const bool stop = hit && spec.terminate_on_goal;
                    expected += pn * (r + (stop ? 0.0 : tables.v[t + 1][next.code]));
                }
                worst = std::max(worst, std::abs(tables.a[t](s, a) - expected));
            }
    return worst;
}

namespace detail {

// Per-goal log-prob tables and QVA tables for the identity expressions.
struct GoalTables {
    std::vector<Goal> goals;
    std::vector<std::vector<std::vector<double>>> log_probs; // [goal][state][action]
    std::vector<QvaTables> qva;
    std::unordered_map<std::uint32_t, std::size_t> index;

    GoalTables(const EnvSpec& spec, const Policy& policy, bool with_qva) : goals(goal_space(spec)) {
        for (std::size_t i = 0; i < goals.size(); ++i) {
            index[goals[i].code] = i;
            log_probs.push_back(log_prob_table(policy, goals[i]));
            if (with_qva) qva.push_back(exact_qva(spec, policy, goals[i]));
        }
    }

    // log prod_{k=1}^{m} p(a_k | s_k, g) / p(a_k | s_k, g')
    double log_ratio(const Trajectory& traj, std::size_t g, std::size_t g_orig, int m) const {
        double sum = 0.0;
        for (int k = 1; k <= m; ++k) {
            const auto s = traj.states[k - 1].code;
            const auto a = traj.actions[k - 1];
            sum += log_probs[g][s][a] - log_probs[g_orig][s][a];
        }
        return sum;
    }
};

enum class RatioForm { every_decision, per_decision };

inline Eigen::VectorXd hindsight_return_expression(const EnvSpec& spec, const Policy& policy, Goal original,
                                                   RatioForm form) {
    require_enumerable(spec);
    const double pg = env::goal_probability(spec);
    GoalTables tables(spec, policy, false);
    ScoreCache score(policy);
    const auto go = tables.index.at(original.code);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
    for (const auto& e : enumerate(spec, policy, original).entries) {
        const auto& traj = e.traj;
        for (std::size_t gi = 0; gi < tables.goals.size(); ++gi) {
            const auto events = reward_events(spec, traj, tables.goals[gi]);
            if (events.empty()) continue;
            const double full = std::exp(tables.log_ratio(traj, gi, go, traj.length()));
            for (int t = 1; t <= traj.length(); ++t) {
                double weight = 0.0;
                for (const auto& ev : events) {
                    if (ev.step < t) continue;
                    const double ratio =
                        form == RatioForm::every_decision ? full : std::exp(tables.log_ratio(traj, gi, go, ev.step));
                    weight += ratio * ev.reward;
                }
                if (weight != 0.0)
                    grad += e.prob * pg * weight * score(traj.states[t - 1], tables.goals[gi], traj.actions[t - 1]);
            }
        }
    }
    return grad;
}

} // namespace detail

// Every-decision hindsight expression for original goal g'.
inline Eigen::VectorXd every_decision_expression(const EnvSpec& spec, const Policy& policy, Goal original) {
    return detail::hindsight_return_expression(spec, policy, original, detail::RatioForm::every_decision);
}

// Per-decision hindsight expression for original goal g'.
inline Eigen::VectorXd per_decision_expression(const EnvSpec& spec, const Policy& policy, Goal original) {
    return detail::hindsight_return_expression(spec, policy, original, detail::RatioForm::per_decision);
}

// sum_g p(g) sum_tau p(tau | g) sum_t grad log p(a_t | s_t, g) A_t(s_t, a_t, g).
inline Eigen::VectorXd advantage_expression(const EnvSpec& spec, const Policy& policy) {
    require_enumerable(spec);
    const double pg = env::goal_probability(spec);
    detail::GoalTables tables(spec, policy, true);
    ScoreCache score(policy);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
    for (std::size_t gi = 0; gi < tables.goals.size(); ++gi)
        for (const auto& e : enumerate(spec, policy, tables.goals[gi]).entries)
            for (int t = 1; t <= e.traj.length(); ++t) {
                const auto s = e.traj.states[t - 1];
                const auto a = e.traj.actions[t - 1];
                grad += pg * e.prob * tables.qva[gi].a[t](s.code, a) * score(s, tables.goals[gi], a);
            }
    return grad;
}

// Baseline function b_t(s, g) for the hindsight baseline identity.
using BaselineFn = std::function<double(int t, State s, Goal g)>;

namespace detail {

// sum_tau p(tau | g') sum_g p(g) sum_t grad log p(a_t | s_t, g) ratio(1..t) x(t, s_t, a_t, g)
template <class Weight>
Eigen::VectorXd hindsight_step_expression(const EnvSpec& spec, const Policy& policy, Goal original,
                                          const GoalTables& tables, Weight weight) {
    const double pg = env::goal_probability(spec);
    ScoreCache score(policy);
    const auto go = tables.index.at(original.code);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
    for (const auto& e : enumerate(spec, policy, original).entries) {
        const auto& traj = e.traj;
        for (std::size_t gi = 0; gi < tables.goals.size(); ++gi)
            for (int t = 1; t <= traj.length(); ++t) {
                const auto s = traj.states[t - 1];
                const auto a = traj.actions[t - 1];
                const double w = weight(gi, t, s, a);
                if (w == 0.0) continue;
                grad += e.prob * pg * std::exp(tables.log_ratio(traj, gi, go, t)) * w * score(s, tables.goals[gi], a);
            }
    }
    return grad;
}

} // namespace detail

// Hindsight advantage expression for original goal g'.
inline Eigen::VectorXd hindsight_advantage_expression(const EnvSpec& spec, const Policy& policy, Goal original) {
    require_enumerable(spec);
    detail::GoalTables tables(spec, policy, true);
    return detail::hindsight_step_expression(spec, policy, original, tables,
                                             [&](std::size_t gi, int t, State s, Action a) {
                                                 return tables.qva[gi].a[t](s.code, a);
                                             });
}

// Hindsight baseline expression for original goal g'; zero for every b.
inline Eigen::VectorXd hindsight_baseline_expression(const EnvSpec& spec, const Policy& policy, Goal original,
                                                     const BaselineFn& baseline) {
    require_enumerable(spec);
    detail::GoalTables tables(spec, policy, false);
    return detail::hindsight_step_expression(spec, policy, original, tables,
                                             [&](std::size_t gi, int t, State s, Action) {
                                                 return baseline(t, s, tables.goals[gi]);
                                             });
}

// Outcomes (probability, f, h) of the scalar estimator f - b h for one
// coordinate j.
struct BaselineSamples {
    std::vector<double> prob, f, h;

    double expectation(const std::function<double(double, double)>& fn) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < prob.size(); ++i) sum += prob[i] * fn(f[i], h[i]);
        return sum;
    }

    // b = E[f h] / E[h^2]
    double optimal() const {
        const double hh = expectation([](double, double h) { return h * h; });
        if (!(hh > 1e-300)) throw std::domain_error("optimal baseline: E[h^2] is zero");
        return expectation([](double f, double h) { return f * h; }) / hh;
    }

    double variance(double b) const {
        const double mean = expectation([b](double f, double h) { return f - b * h; });
        return expectation([b, mean](double f, double h) { return (f - b * h - mean) * (f - b * h - mean); });
    }
};

// f(tau, g) = sum_t d_j log p(a_t | s_t, g) G_t, h = sum_t d_j log p(a_t | s_t, g),
// under p(g) p(tau | g).
inline BaselineSamples conventional_baseline_samples(const EnvSpec& spec, const Policy& policy, Eigen::Index j) {
    require_enumerable(spec);
    const double pg = env::goal_probability(spec);
    ScoreCache score(policy);
    BaselineSamples out;
    for (Goal g : goal_space(spec))
        for (const auto& e : enumerate(spec, policy, g).entries) {
            double f = 0.0, h = 0.0, to_go = 0.0;
            for (int t = e.traj.length(); t >= 1; --t) {
                to_go += e.traj.rewards[t - 1];
                const double d = score(e.traj.states[t - 1], g, e.traj.actions[t - 1])[j];
                f += d * to_go;
                h += d;
            }
            out.prob.push_back(pg * e.prob);
            out.f.push_back(f);
            out.h.push_back(h);
        }
    return out;
}

// Hindsight f and h for original goal g', under p(tau | g').
inline BaselineSamples hindsight_baseline_samples(const EnvSpec& spec, const Policy& policy, Eigen::Index j,
                                                  Goal original) {
    require_enumerable(spec);
    const double pg = env::goal_probability(spec);
    detail::GoalTables tables(spec, policy, false);
    ScoreCache score(policy);
    const auto go = tables.index.at(original.code);
    BaselineSamples out;
    for (const auto& e : enumerate(spec, policy, original).entries) {
        const auto& traj = e.traj;
        double f = 0.0, h = 0.0;
        for (std::size_t gi = 0; gi < tables.goals.size(); ++gi) {
            const auto events = reward_events(spec, traj, tables.goals[gi]);
            for (int t = 1; t <= traj.length(); ++t) {
                const double d = score(traj.states[t - 1], tables.goals[gi], traj.actions[t - 1])[j];
                if (d == 0.0) continue;
                double weight = 0.0;
                for (const auto& ev : events)
                    if (ev.step >= t) weight += std::exp(tables.log_ratio(traj, gi, go, ev.step)) * ev.reward;
                f += pg * d * weight;
                h += pg * d * std::exp(tables.log_ratio(traj, gi, go, t));
            }
        }
        out.prob.push_back(e.prob);
        out.f.push_back(f);
        out.h.push_back(h);
    }
    return out;
}

struct OptimalBaselines {
    double conventional;
    std::vector<double> hindsight; // per original goal, in goal_space order
};

inline OptimalBaselines optimal_constant_baseline(const EnvSpec& spec, const Policy& policy, Eigen::Index j) {
    OptimalBaselines out;
    out.conventional = conventional_baseline_samples(spec, policy, j).optimal();
    for (Goal g : goal_space(spec)) out.hindsight.push_back(hindsight_baseline_samples(spec, policy, j, g).optimal());
    return out;
}

using BatchEstimator = std::function<Eigen::VectorXd(const Batch&)>;

// E[estimator(single-trajectory batch)] by exact summation over (g, tau).
inline Eigen::VectorXd exact_estimator_mean(const BatchEstimator& estimator, const EnvSpec& spec,
                                            const Policy& policy) {
    require_enumerable(spec);
    const double pg = env::goal_probability(spec);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(policy.num_params());
    for (Goal g : goal_space(spec))
        for (auto& e : enumerate(spec, policy, g).entries) {
            Batch batch;
            batch.trajectories.push_back(std::move(e.traj));
            mean += pg * e.prob * estimator(batch);
        }
    return mean;
}

struct MeanEstimate {
    Eigen::VectorXd mean;
    Eigen::VectorXd standard_error;
};

// Empirical mean and standard error of an estimator over independent batches.
inline MeanEstimate estimator_mean(const BatchEstimator& estimator, const EnvSpec& spec, const Policy& policy,
                                   std::size_t n_samples, std::size_t batch_size, Rng& rng) {
    if (n_samples < 2) throw std::invalid_argument("estimator_mean: need at least two samples");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(policy.num_params());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(policy.num_params());
    for (std::size_t n = 1; n <= n_samples; ++n) {
        const Eigen::VectorXd x = estimator(collect_batch(policy, spec, batch_size, rng));
        const Eigen::VectorXd delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2.array() += delta.array() * (x - mean).array();
    }
    const double n = static_cast<double>(n_samples);
    return {mean, (m2 / (n - 1.0) / n).cwiseSqrt()};
}

// Residuals of every exact identity on one instance, for the verify report.
struct IdentityReport {
    double every_decision = 0.0;  // max |every-decision - exact|
    double per_decision = 0.0;    // max |per-decision - exact|
    double advantage = 0.0;       // max |advantage form - exact|
    double hindsight_advantage = 0.0;
    double hindsight_baseline = 0.0;  // max |hindsight baseline expression|
    double advantage_transition = 0.0;
    double finite_difference_rel = 0.0; // max relative |exact - fd|
};

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1e-12, b.cwiseAbs().maxCoeff());
}

inline IdentityReport verify_identities(const EnvSpec& spec, const Policy& policy, const BaselineFn& baseline) {
    IdentityReport r;
    const Eigen::VectorXd exact = exact_gradient(spec, policy);
    auto gap = [&exact](const Eigen::VectorXd& v) { return (v - exact).cwiseAbs().maxCoeff(); };
    r.advantage = gap(advantage_expression(spec, policy));
    for (Goal g : goal_space(spec)) {
        r.every_decision = std::max(r.every_decision, gap(every_decision_expression(spec, policy, g)));
        r.per_decision = std::max(r.per_decision, gap(per_decision_expression(spec, policy, g)));
        r.hindsight_advantage =
            std::max(r.hindsight_advantage, gap(hindsight_advantage_expression(spec, policy, g)));
        r.hindsight_baseline = std::max(
            r.hindsight_baseline, hindsight_baseline_expression(spec, policy, g, baseline).cwiseAbs().maxCoeff());
        r.advantage_transition = std::max(r.advantage_transition, advantage_transition_residual(spec, policy, g));
    }
    r.finite_difference_rel = relative_error(exact, finite_diff_gradient(spec, policy));
    return r;
}

} // namespace hpg::oracle
