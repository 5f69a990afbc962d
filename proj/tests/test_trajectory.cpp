#include "hpg/trajectory.hpp"

#include <gtest/gtest.h>

#include <bit>

using namespace hpg;

namespace {

// Tabular policy that picks `choose(s, g)` with probability ~1.
template <class Choose>
Policy deterministic_tabular(const EnvSpec& spec, Choose choose) {
    Policy p = Policy::tabular(spec);
    const auto n = static_cast<std::uint32_t>(env::num_states(spec));
    for (std::uint32_t s = 0; s < n; ++s)
        for (std::uint32_t g = 0; g < n; ++g) p.net().weight(0)(choose(State{s}, Goal{g}), s * n + g) = 40.0;
    return p;
}

Trajectory manual(const EnvSpec& spec, Goal goal, std::vector<std::uint32_t> codes) {
    Trajectory t;
    t.goal = goal;
    for (auto c : codes) t.states.push_back(State{c});
    for (std::size_t u = 1; u < codes.size(); ++u) {
        t.actions.push_back(0);
        t.log_probs.push_back(0.0);
        const bool hit = env::achieved(t.states[u], goal);
        t.rewards.push_back(hit ? env::reward(spec, t.states[u], goal, static_cast<int>(u)) : 0.0);
        if (hit && !t.achieved_at) t.achieved_at = static_cast<int>(u);
    }
    return t;
}

} // namespace

TEST(trajectory, lowest_differing_bit_policy_reaches_goal) {
    const auto spec = EnvSpec::bitflip(3);
    const Policy p = deterministic_tabular(spec, [](State s, Goal g) {
        const auto diff = s.code ^ g.code;
        return diff == 0 ? 0 : std::countr_zero(diff);
    });
    Rng rng(1);
    for (std::uint32_t g = 1; g < 8; ++g) {
        const auto t = collect_trajectory(p, spec, Goal{g}, rng);
        const int dist = std::popcount(g);
        EXPECT_EQ(t.length(), dist);
        ASSERT_TRUE(t.achieved_at);
        EXPECT_EQ(*t.achieved_at, dist);
        EXPECT_EQ(t.rewards.back(), spec.horizon - dist + 1);
        EXPECT_EQ(t.total_return(), spec.horizon - dist + 1);
        for (double lp : t.log_probs) EXPECT_NEAR(lp, 0.0, 1e-15);
    }
}

TEST(trajectory, timeout_when_goal_unreachable) {
    const auto spec = EnvSpec::empty_room();
    const Policy p = deterministic_tabular(spec, [](State, Goal) { return Action{north}; });
    Rng rng(2);
    const auto t = collect_trajectory(p, spec, env::from_cell({10, 10}), rng);
    EXPECT_EQ(t.length(), spec.horizon);
    EXPECT_EQ(t.total_return(), 0.0);
    EXPECT_FALSE(t.achieved_at);
    EXPECT_TRUE(active_goals(t, spec).empty());
}

TEST(trajectory, batch_invariants) {
    const auto spec = EnvSpec::bitflip(4);
    const Policy p = Policy::tabular(spec);
    Rng rng(3);
    const Batch b = collect_batch(p, spec, 500, rng);
    ASSERT_EQ(b.size(), 500u);
    int successes = 0;
    for (const auto& t : b.trajectories) {
        EXPECT_GE(t.length(), 1);
        EXPECT_LE(t.length(), spec.horizon);
        EXPECT_EQ(t.states.size(), t.actions.size() + 1);
        EXPECT_EQ(t.achieved_at.has_value(), active_goals(t, spec).contains(t.goal));
        if (t.achieved_at) {
            ++successes;
            EXPECT_EQ(*t.achieved_at, t.length());
            EXPECT_EQ(t.rewards.back(), spec.horizon - t.length() + 1);
        } else {
            EXPECT_EQ(t.length(), spec.horizon);
        }
        for (int u = 1; u < t.length(); ++u) EXPECT_EQ(t.rewards[u - 1], 0.0);
    }
    EXPECT_GT(successes, 0);
    EXPECT_LT(successes, 500);
}

TEST(trajectory, no_termination_pays_every_visit) {
    const auto spec = EnvSpec::bitflip(3).without_termination();
    const Policy p = Policy::tabular(spec);
    Rng rng(4);
    for (const auto& t : collect_batch(p, spec, 200, rng).trajectories) {
        EXPECT_EQ(t.length(), spec.horizon);
        for (int u = 1; u <= t.length(); ++u)
            EXPECT_EQ(t.rewards[u - 1], env::reward(spec, t.states[u], t.goal, u));
    }
}

TEST(trajectory, active_goals_skip_start) {
    const auto spec = EnvSpec::bitflip(3);
    // 000 -> 100 -> 110, bit i of the vector is bit i of the code
    const auto t = manual(spec, Goal{7}, {0, 1, 3});
    const auto set = active_goals(t, spec);
    ASSERT_EQ(set.size(), 2u);
    EXPECT_EQ(set.goals[0].goal, State{1});
    EXPECT_EQ(set.goals[0].first_step, 1);
    EXPECT_EQ(set.goals[1].goal, State{3});
    EXPECT_EQ(set.goals[1].first_step, 2);

    // a revisited start state pays, so it is active from its first revisit
    const auto back = manual(spec, Goal{7}, {0, 1, 0});
    EXPECT_TRUE(active_goals(back, spec).contains(State{0}));

    const auto room = EnvSpec::empty_room();
    EXPECT_TRUE(active_goals(manual(room, Goal{50}, {0, 0, 0}), room).empty());
}

TEST(trajectory, reward_events_truncate_with_termination) {
    const auto spec = EnvSpec::bitflip(3);
    const auto t = manual(spec, Goal{7}, {0, 1, 0, 1});
    const auto once = reward_events(spec, t, Goal{1});
    ASSERT_EQ(once.size(), 1u);
    EXPECT_EQ(once[0].step, 1);
    EXPECT_EQ(once[0].reward, spec.horizon);

    const auto open = spec.without_termination();
    const auto all = reward_events(open, manual(open, Goal{7}, {0, 1, 0, 1}), Goal{1});
    ASSERT_EQ(all.size(), 2u);
    EXPECT_EQ(all[1].step, 3);
    EXPECT_EQ(all[1].reward, open.horizon - 2);
    EXPECT_TRUE(reward_events(spec, t, Goal{6}).empty());
}

TEST(trajectory, subsample_goals) {
    Rng rng(5);
    ActiveGoalSet set;
    for (std::uint32_t g = 0; g < 5; ++g) set.goals.push_back({State{g + 10}, static_cast<int>(g) + 1});
    EXPECT_EQ(subsample_goals(set, std::nullopt, rng).size(), 5u);
    EXPECT_TRUE(subsample_goals(ActiveGoalSet{}, 3, rng).empty());
    EXPECT_THROW(subsample_goals(set, 0, rng), std::invalid_argument);

    std::vector<int> counts(5, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto s = subsample_goals(set, 3, rng);
        ASSERT_EQ(s.size(), 3u);
        for (std::size_t k = 1; k < s.size(); ++k) EXPECT_LT(s.goals[k - 1].first_step, s.goals[k].first_step);
        for (const auto& g : s.goals) ++counts[g.goal.code - 10];
    }
    for (int c : counts) EXPECT_NEAR(c / double(n), 0.6, 0.01);
}

TEST(trajectory, same_seed_same_batch) {
    const auto spec = EnvSpec::four_rooms();
    Rng rng(6);
    const Policy p = Policy::make(spec, rng, {8});
    Rng a(7), b(7);
    const auto x = collect_batch(p, spec, 20, a);
    const auto y = collect_batch(p, spec, 20, b);
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_EQ(x.trajectories[i].states, y.trajectories[i].states);
        EXPECT_EQ(x.trajectories[i].actions, y.trajectories[i].actions);
    }
}
