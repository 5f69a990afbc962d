#include "hpg/harness.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hpg;

namespace {

RunConfig small_config(EstimatorKind kind) {
    RunConfig c;
    c.env = EnvSpec::bitflip(4);
    c.estimator = kind;
    c.batch_size = 4;
    c.batches = 12;
    c.eval_every = 4;
    c.eval_episodes = 16;
    c.hidden = {8};
    c.bootstrap_resamples = 50;
    if (uses_baseline(kind)) c.baseline_lr = 1e-3;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hpg_harness_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST(harness, bootstrap_ci) {
    Rng rng(1);
    const std::vector<double> flat(50, 3.5);
    const auto [lo, hi] = bootstrap_ci(flat, rng);
    EXPECT_EQ(lo, 3.5);
    EXPECT_EQ(hi, 3.5);

    std::normal_distribution<double> normal(2.0, 1.0);
    std::vector<double> few(20), many(2000);
    for (auto& x : few) x = normal(rng);
    for (auto& x : many) x = normal(rng);
    const auto a = bootstrap_ci(few, rng);
    const auto b = bootstrap_ci(many, rng);
    const double few_mean = std::accumulate(few.begin(), few.end(), 0.0) / few.size();
    EXPECT_LE(a.first, few_mean);
    EXPECT_GE(a.second, few_mean);
    EXPECT_LT(b.second - b.first, a.second - a.first);
    // 95% interval of a mean of 2000 unit normals is about +-1.96 / sqrt(2000)
    EXPECT_NEAR(b.second - b.first, 2 * 1.96 / std::sqrt(2000.0), 0.01);

    EXPECT_THROW(bootstrap_ci(std::vector<double>{1.0}, rng), std::invalid_argument);
    EXPECT_THROW(bootstrap_ci(few, 1.0, 100, rng), std::invalid_argument);
}

TEST(harness, average_performance_and_summary) {
    LearningCurve c;
    EXPECT_THROW(average_performance(c), std::invalid_argument);
    for (int i = 1; i <= 4; ++i) c.points.push_back({i, i * 16LL, double(i), 0.0, 0.0});
    EXPECT_DOUBLE_EQ(average_performance(c), 2.5);
    const std::vector<double> xs{1.0, 2.0, 3.0};
    EXPECT_DOUBLE_EQ(summarize(xs).mean, 2.0);
    EXPECT_DOUBLE_EQ(summarize(xs).std, 1.0);
    EXPECT_EQ(summarize(std::vector<double>{4.0}).std, 0.0);
}

TEST(harness, lr_grid_and_selection) {
    const auto grid = default_lr_grid();
    ASSERT_EQ(grid.size(), 8u);
    EXPECT_DOUBLE_EQ(grid.front(), 1e-5);
    EXPECT_DOUBLE_EQ(grid.back(), 5e-2);
    EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));

    std::vector<GridPoint> pts(1);
    pts[0].lr = 1e-3;
    EXPECT_EQ(select_best(pts), 0u);
    pts.push_back({5e-4, std::nullopt, {}, 0.0, 0.0, 0.0});
    EXPECT_EQ(select_best(pts), 1u); // tie goes to the lower lr
    pts.push_back({1e-2, std::nullopt, {}, 1.0, 0.0, 0.5});
    EXPECT_EQ(select_best(pts), 2u);
    EXPECT_THROW(select_best(std::span<const GridPoint>{}), std::invalid_argument);
}

TEST(harness, evaluate_perfect_and_random_policies) {
    const auto spec = EnvSpec::bitflip(4);
    Policy perfect = Policy::tabular(spec);
    for (std::uint32_t s = 0; s < 16; ++s)
        for (std::uint32_t g = 0; g < 16; ++g)
            if (s != g) perfect.net().weight(0)(std::countr_zero(s ^ g), s * 16 + g) = 40.0;
    Rng rng(2);
    const auto ev = evaluate(perfect, spec, 200, rng);
    for (double r : ev.returns) {
        // every goal is reached after popcount(g) steps, except the start itself
        EXPECT_TRUE(r == 0.0 || (r >= 1.0 && r <= spec.horizon));
    }
    double expected = 0.0;
    for (std::uint32_t g = 1; g < 16; ++g) expected += (spec.horizon - std::popcount(g) + 1) / 16.0;
    EXPECT_NEAR(ev.mean, expected, 0.4);

    Rng init(3);
    const auto big = EnvSpec::bitflip(16);
    const Policy untrained = Policy::make(big, init, {16});
    EXPECT_LT(evaluate(untrained, big, 256, rng).mean, 0.1);
    EXPECT_THROW(evaluate(untrained, big, 0, rng), std::invalid_argument);
}

TEST(harness, config_json_round_trip) {
    RunConfig c = small_config(EstimatorKind::hpg_baseline);
    c.max_active = 3;
    c.env.horizon = 6;
    const RunConfig back = from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.env.horizon, 6);
    EXPECT_EQ(back.max_active, std::optional<std::size_t>{3});

    EXPECT_THROW(from_json(nlohmann::json{{"learning-rate", 1.0}}), std::invalid_argument);
    EXPECT_EQ(from_json(nlohmann::json{{"max-active", "inf"}}).max_active, std::nullopt);
    EXPECT_EQ(from_json(nlohmann::json{{"env", "four-rooms"}}).env.noise_prob, 0.2);
}

TEST(harness, validation) {
    RunConfig c = small_config(EstimatorKind::gcpg);
    EXPECT_NO_THROW(validate(c));
    c.baseline_lr = 1e-3;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = small_config(EstimatorKind::hpg_baseline);
    c.baseline_lr.reset();
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = small_config(EstimatorKind::hpg);
    c.eval_episodes = 1;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = small_config(EstimatorKind::hpg);
    c.lr = 0.0;
    EXPECT_THROW(validate(c), std::invalid_argument);
    EXPECT_EQ(parse_estimator(estimator_name(EstimatorKind::hpg_baseline)), EstimatorKind::hpg_baseline);
    EXPECT_THROW(parse_estimator("reinforce"), std::invalid_argument);
}

TEST(harness, training_diagnostics) {
    RunConfig c = small_config(EstimatorKind::hpg);
    c.batches = 30;
    c.eval_every = 10;
    const RunResult r = train(c);
    ASSERT_EQ(r.curve.points.size(), 3u);
    EXPECT_EQ(r.curve.points.back().episodes, 120);
    for (const auto& p : r.curve.points) {
        EXPECT_LE(p.ci_low, p.mean_return);
        EXPECT_GE(p.ci_high, p.mean_return);
    }
    EXPECT_EQ(r.diagnostics.max_original_log_ratio, 0.0);
    EXPECT_LE(r.diagnostics.max_weight_sum_error, 1e-12);
    EXPECT_GT(r.diagnostics.weight_groups, 0u);
    EXPECT_GT(r.diagnostics.histogram.total(), 0u);
}

TEST(harness, histogram_holds_active_weights_only) {
    Batch b;
    b.trajectories.resize(2);
    b.trajectories[0].goal = State{1};
    b.trajectories[1].goal = State{2};
    const std::vector<WeightRecord> recs{{0, State{3}, 2, 0.75, -0.1, true},
                                         {1, State{3}, 2, 0.25, -1.2, false},
                                         {1, State{2}, 3, 1.0, 0.0, true}};
    RunDiagnostics d;
    observe_weights(b, recs, d);
    EXPECT_EQ(d.histogram.total(), 2u);
    EXPECT_EQ(d.histogram.counts.at(2)[15], 1u);
    EXPECT_EQ(d.histogram.counts.at(3)[19], 1u);
    EXPECT_EQ(d.weight_groups, 2u);
    EXPECT_NEAR(d.max_weight_sum_error, 0.0, 1e-15);

    const std::string csv = histogram_csv(d.histogram);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,bin_low,bin_high,count");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * RatioHistogram::bins);
}

TEST(harness, outputs_and_determinism) {
    for (auto kind : {EstimatorKind::gcpg, EstimatorKind::gcpg_baseline, EstimatorKind::hpg, EstimatorKind::hpg_baseline}) {
        RunConfig c = small_config(kind);
        c.dump_weights = is_hindsight(kind);
        const auto a = scratch("a"), b = scratch("b");
        emit_outputs(a, train(c));
        emit_outputs(b, train(c));
        for (const char* f : {"curve.csv", "config.json", "policy.ckpt", "curve.svg"}) {
            ASSERT_TRUE(std::filesystem::exists(a / f)) << f;
            EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
        }
        EXPECT_EQ(std::filesystem::exists(a / "baseline.ckpt"), uses_baseline(kind));
        EXPECT_EQ(std::filesystem::exists(a / "ratio_histogram.csv"), is_hindsight(kind));
        EXPECT_EQ(std::filesystem::exists(a / "weights.csv"), is_hindsight(kind));
        const std::string csv = slurp(a / "curve.csv");
        EXPECT_EQ(csv.substr(0, csv.find('\n')), "batch,episodes,mean_return,ci_low,ci_high");
        EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
        for (const auto& e : std::filesystem::directory_iterator(a)) EXPECT_NE(e.path().extension(), ".tmp");
        std::filesystem::remove_all(a);
        std::filesystem::remove_all(b);
    }
    RunConfig c = small_config(EstimatorKind::hpg);
    const std::string first = curve_csv(train(c).curve);
    c.seed = 2;
    EXPECT_NE(curve_csv(train(c).curve), first);
}

TEST(harness, parallel_runs_match_serial) {
    RunConfig c = small_config(EstimatorKind::gcpg);
    c.runs = 3;
    const auto configs = seed_sweep(c);
    ASSERT_EQ(configs.size(), 3u);
    EXPECT_EQ(configs[2].seed, 3u);
    const auto serial = train_all(configs, 1);
    const auto parallel = train_all(configs, 3);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(curve_csv(serial[i].curve), curve_csv(parallel[i].curve));
}

TEST(harness, write_atomic_replaces) {
    const auto dir = scratch("atomic");
    std::filesystem::create_directories(dir);
    write_atomic(dir / "x.txt", "one");
    write_atomic(dir / "x.txt", "two");
    EXPECT_EQ(slurp(dir / "x.txt"), "two");
    EXPECT_FALSE(std::filesystem::exists(dir / "x.txt.tmp"));
    std::filesystem::remove_all(dir);
    EXPECT_EQ(format_double(1.0 / 3.0), "0.333333");
}
