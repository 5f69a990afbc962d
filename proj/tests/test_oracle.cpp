#include "hpg/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hpg;

namespace {

Policy random_tabular(const EnvSpec& spec, std::uint64_t seed) {
    Policy p = Policy::tabular(spec);
    Rng rng(seed);
    std::normal_distribution<double> normal;
    for (auto& w : p.net().params()) w = normal(rng);
    return p;
}

const oracle::BaselineFn some_baseline = [](int t, State s, Goal g) {
    return 0.3 * t + 0.1 * s.code - 0.2 * g.code;
};

} // namespace

TEST(oracle, enumeration_normalised) {
    for (const auto& spec : {EnvSpec::bitflip(3), EnvSpec::bitflip(3).without_termination(), EnvSpec::chain()}) {
        const Policy p = random_tabular(spec, 1);
        for (Goal g : oracle::goal_space(spec)) {
            double total = 0.0;
            for (const auto& e : oracle::enumerate(spec, p, g).entries) {
                total += e.prob;
                EXPECT_LE(e.traj.length(), spec.horizon);
            }
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
}

TEST(oracle, deterministic_policy_has_one_likely_trajectory) {
    const auto spec = EnvSpec::bitflip(3);
    Policy p = Policy::tabular(spec);
    for (std::uint32_t s = 0; s < 8; ++s) p.net().weight(0)(0, s * 8 + 6) = 40.0;
    int likely = 0;
    for (const auto& e : oracle::enumerate(spec, p, Goal{6}).entries)
        if (e.prob > 0.5) {
            ++likely;
            EXPECT_EQ(e.traj.length(), spec.horizon);
            EXPECT_EQ(e.traj.total_return(), 0.0);
        }
    EXPECT_EQ(likely, 1);
}

TEST(oracle, refuses_large_instances) {
    const Policy p = Policy::tabular(EnvSpec::bitflip(8));
    EXPECT_THROW(oracle::exact_return(EnvSpec::bitflip(8), p), std::length_error);
    Rng rng(1);
    const Policy g = Policy::make(EnvSpec::four_rooms(), rng, {4});
    EXPECT_THROW(oracle::exact_return(EnvSpec::four_rooms(), g), std::length_error);
}

TEST(oracle, hand_computed_returns) {
    const auto spec = EnvSpec::bitflip(2);
    // uniform policy, H = 2: goals 00 and 11 pay 1 with probability 1/2 at
    // u = 2, goals 01 and 10 pay 2 w.p. 1/2 at u = 1 and are out of reach after a miss
    EXPECT_NEAR(oracle::exact_return(spec, Policy::tabular(spec)), (0.5 + 1.0 + 1.0 + 0.5) / 4, 1e-15);

    Policy never = Policy::tabular(EnvSpec::bitflip(3));
    // always toggle bit 0, so goals other than 000 and 100 are never reached;
    // 100 pays at u = 1 and 000 at u = 2
    for (std::uint32_t c = 0; c < 64; ++c) never.net().weight(0)(0, c) = 40.0;
    EXPECT_NEAR(oracle::exact_return(EnvSpec::bitflip(3), never), (3.0 + 2.0) / 8, 1e-12);
}

TEST(oracle, gradient_ascent_improves_return) {
    const auto spec = EnvSpec::bitflip(3);
    Policy p = random_tabular(spec, 2);
    const double before = oracle::exact_return(spec, p);
    p.net().params() += 1e-2 * oracle::exact_gradient(spec, p);
    EXPECT_GT(oracle::exact_return(spec, p), before);
}

TEST(oracle, gradient_matches_finite_differences) {
    for (const auto& spec : {EnvSpec::bitflip(2), EnvSpec::bitflip(3), EnvSpec::bitflip(3).without_termination(),
                             EnvSpec::chain()}) {
        const Policy p = random_tabular(spec, 3);
        const Eigen::VectorXd exact = oracle::exact_gradient(spec, p);
        EXPECT_LE(oracle::relative_error(exact, oracle::finite_diff_gradient(spec, p)), 1e-6);
        EXPECT_LE(oracle::relative_error(exact, oracle::finite_diff_gradient(spec, p, 1e-4)), 1e-4);
    }
    Rng rng(4);
    const auto spec = EnvSpec::bitflip(2);
    const Policy net = Policy::make(spec, rng, {6});
    EXPECT_LE(oracle::relative_error(oracle::exact_gradient(spec, net), oracle::finite_diff_gradient(spec, net)),
              1e-6);
}

TEST(oracle, identities_hold) {
    for (const auto& spec : {EnvSpec::bitflip(2).without_termination(), EnvSpec::bitflip(3).without_termination(),
                             EnvSpec::chain().without_termination()}) {
        const auto r = oracle::verify_identities(spec, random_tabular(spec, 5), some_baseline);
        EXPECT_LE(r.every_decision, 1e-10);
        EXPECT_LE(r.per_decision, 1e-10);
        EXPECT_LE(r.advantage, 1e-10);
        EXPECT_LE(r.hindsight_advantage, 1e-10);
        EXPECT_LE(r.hindsight_baseline, 1e-10);
        EXPECT_LE(r.advantage_transition, 1e-10);
        EXPECT_LE(r.finite_difference_rel, 1e-6);
    }
}

TEST(oracle, value_tables) {
    for (const auto& spec : {EnvSpec::bitflip(3), EnvSpec::chain()}) {
        const Policy p = random_tabular(spec, 6);
        for (Goal g : oracle::goal_space(spec)) {
            const auto dp = oracle::exact_qva(spec, p, g);
            const auto cond = oracle::conditional_qv(spec, p, g);
            EXPECT_TRUE(dp.v[spec.horizon + 1].isZero(0.0));
            for (int t = 1; t <= spec.horizon; ++t)
                for (std::uint32_t s = 0; s < env::num_states(spec); ++s) {
                    const auto d = p.distribution(State{s}, g);
                    double mean_adv = 0.0;
                    for (Action a = 0; a < env::num_actions(spec); ++a) {
                        mean_adv += d.probs[a] * dp.a[t](s, a);
                        if (!std::isnan(cond.q[t](s, a))) {
                            EXPECT_NEAR(cond.q[t](s, a), dp.q[t](s, a), 1e-12);
                        }
                    }
                    EXPECT_NEAR(mean_adv, 0.0, 1e-12);
                    if (!std::isnan(cond.v[t][s])) {
                        EXPECT_NEAR(cond.v[t][s], dp.v[t][s], 1e-12);
                    }
                }
            EXPECT_LE(oracle::advantage_transition_residual(spec, p, g), 1e-12);
        }
    }
}

TEST(oracle, optimal_constant_baseline) {
    const auto spec = EnvSpec::bitflip(2);
    const Policy p = random_tabular(spec, 7);
    // coordinate of logit (action 1, state 01, goal 10)
    const Eigen::Index j = 1 + 2 * (1 * 4 + 2);
    const auto samples = oracle::conventional_baseline_samples(spec, p, j);
    const double b = samples.optimal();
    EXPECT_LE(samples.variance(b), samples.variance(0.0));
    EXPECT_LE(samples.variance(b), samples.variance(b + 0.1));
    EXPECT_LE(samples.variance(b), samples.variance(b - 0.1));
    // the baseline does not move the mean
    EXPECT_NEAR(samples.expectation([b](double f, double h) { return f - b * h; }),
                samples.expectation([](double f, double) { return f; }), 1e-12);

    const auto h = oracle::hindsight_baseline_samples(spec, p, j, Goal{2});
    const double hb = h.optimal();
    EXPECT_LE(h.variance(hb), h.variance(0.0));

    // with termination, state 11 never acts under goal 11
    EXPECT_THROW(oracle::conventional_baseline_samples(spec, p, 2 * (3 * 4 + 3)).optimal(), std::domain_error);
}

TEST(oracle, exact_and_sampled_estimator_means_agree) {
    const auto spec = EnvSpec::bitflip(2);
    const Policy p = random_tabular(spec, 8);
    const oracle::BatchEstimator returns_only = [&](const Batch& b) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(p.num_params());
        v[0] = b.trajectories[0].total_return();
        return v;
    };
    const double exact = oracle::exact_estimator_mean(returns_only, spec, p)[0];
    EXPECT_NEAR(exact, oracle::exact_return(spec, p), 1e-12);
    Rng rng(9);
    const auto m = oracle::estimator_mean(returns_only, spec, p, 20000, 1, rng);
    EXPECT_NEAR(m.mean[0], exact, 4 * m.standard_error[0]);
    EXPECT_THROW(oracle::estimator_mean(returns_only, spec, p, 1, 1, rng), std::invalid_argument);
}
