// hpg: train, grid-search and verify subcommands.

#include "hpg/hpg.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace hpg;
namespace fs = std::filesystem;

struct RunFlags {
    std::string config_file;
    std::optional<std::string> env;
    std::optional<int> k;
    std::optional<int> horizon;
    std::optional<std::string> estimator;
    std::optional<int> batch_size;
    std::optional<double> lr;
    std::optional<double> baseline_lr;
    std::optional<std::string> max_active;
    std::optional<int> batches;
    std::optional<int> eval_every;
    std::optional<int> eval_episodes;
    std::optional<std::uint64_t> seed;
    std::vector<int> hidden;
    std::optional<int> runs;
    bool dump_weights = false;
    std::string out;
    int jobs = 0;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--config", f.config_file, "JSON config; keys are the flag names")->check(CLI::ExistingFile);
    app->add_option("--env", f.env, "bitflip | empty-room | four-rooms | chain");
    app->add_option("--k", f.k, "number of bits (bitflip)");
    app->add_option("--horizon", f.horizon, "maximum actions per episode (default: environment's)");
    app->add_option("--estimator", f.estimator, "gcpg | gcpg+b | hpg | hpg+b");
    app->add_option("--batch-size", f.batch_size, "episodes per batch");
    app->add_option("--lr", f.lr, "policy learning rate");
    app->add_option("--baseline-lr", f.baseline_lr, "baseline learning rate (+b estimators)");
    app->add_option("--max-active", f.max_active, "max active goals per episode, or inf");
    app->add_option("--batches", f.batches, "training batches");
    app->add_option("--eval-every", f.eval_every, "batches between evaluations");
    app->add_option("--eval-episodes", f.eval_episodes, "episodes per evaluation");
    app->add_option("--seed", f.seed, "seed of the first run");
    app->add_option("--hidden", f.hidden, "hidden layer widths");
    app->add_option("--runs", f.runs, "runs with consecutive seeds");
    app->add_flag("--dump-weights", f.dump_weights, "write per-batch normalised weights (hpg runs)");
    app->add_option("--out", f.out, "output directory")->required();
    app->add_option("--jobs", f.jobs, "concurrent runs (0: one per core)");
}

RunConfig resolve(const RunFlags& f, RunConfig base) {
    if (!f.config_file.empty()) {
        std::ifstream in(f.config_file);
        base = from_json(nlohmann::json::parse(in), base);
    }
    nlohmann::json j;
    if (f.env) j["env"] = *f.env;
    if (f.k) j["k"] = *f.k;
    if (f.horizon) j["horizon"] = *f.horizon;
    if (f.estimator) j["estimator"] = *f.estimator;
    if (f.batch_size) j["batch-size"] = *f.batch_size;
    if (f.lr) j["lr"] = *f.lr;
    if (f.baseline_lr) j["baseline-lr"] = *f.baseline_lr;
    if (f.max_active) j["max-active"] = *f.max_active;
    if (f.batches) j["batches"] = *f.batches;
    if (f.eval_every) j["eval-every"] = *f.eval_every;
    if (f.eval_episodes) j["eval-episodes"] = *f.eval_episodes;
    if (f.seed) j["seed"] = *f.seed;
    if (!f.hidden.empty()) j["hidden"] = f.hidden;
    if (f.runs) j["runs"] = *f.runs;
    if (f.dump_weights) j["dump-weights"] = true;
    RunConfig c = from_json(j, base);
    // A config without a baseline estimator silently drops an inherited baseline lr.
    if (!uses_baseline(c.estimator) && !f.baseline_lr) c.baseline_lr.reset();
    validate(c);
    return c;
}

int cmd_train(const RunFlags& f) {
    RunConfig base;
    base.runs = 1;
    const RunConfig config = resolve(f, base);
    const auto results = train_all(seed_sweep(config), f.jobs);
    const fs::path out(f.out);
    std::vector<double> perf;
    std::string summary = "seed,average_performance,final_mean_return\n";
    for (const auto& r : results) {
        const fs::path dir = results.size() == 1 ? out : out / ("seed_" + std::to_string(r.config.seed));
        emit_outputs(dir, r);
        perf.push_back(average_performance(r.curve));
        summary += std::to_string(r.config.seed) + ',' + format_double(perf.back()) + ',' +
                   format_double(r.curve.points.back().mean_return) + '\n';
        std::printf("seed %llu: average performance %.4f\n", static_cast<unsigned long long>(r.config.seed),
                    perf.back());
    }
    if (results.size() > 1) {
        const Summary s = summarize(perf);
        write_atomic(out / "summary.csv", summary);
        std::printf("mean %.4f  std %.4f over %zu runs\n", s.mean, s.std, perf.size());
    }
    return 0;
}

int cmd_grid_search(const RunFlags& f, std::vector<double> lrs, std::vector<double> baseline_lrs) {
    RunConfig base;
    if (uses_baseline(parse_estimator(f.estimator.value_or("hpg"))) && !f.baseline_lr) base.baseline_lr = 1e-3;
    const RunConfig config = resolve(f, base);
    if (lrs.empty()) lrs = default_lr_grid();
    if (baseline_lrs.empty()) baseline_lrs = default_lr_grid();
    const auto result = grid_search(config, lrs, baseline_lrs, f.jobs);
    const fs::path out(f.out);
    fs::create_directories(out);
    std::string csv = "lr,baseline_lr,mean,std,score\n";
    for (const auto& p : result.points) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%g,%s,%.6f,%.6f,%.6f\n", p.lr,
                      p.baseline_lr ? std::to_string(*p.baseline_lr).c_str() : "", p.mean, p.std, p.score);
        csv += buf;
        std::fputs(buf, stdout);
    }
    write_atomic(out / "grid.csv", csv);
    write_atomic(out / "best.json", to_json(result.best).dump(2) + "\n");
    std::printf("best lr %g", result.best.lr);
    if (result.best.baseline_lr) std::printf(", baseline lr %g", *result.best.baseline_lr);
    std::printf("\n");
    return 0;
}

// Identity residuals on tabular policies with random logits, fixed-length episodes.
int cmd_verify(const std::vector<int>& ks, int instances, std::uint64_t seed, double tolerance) {
    std::printf("%-4s %-4s %-12s %-12s %-12s %-12s %-12s %-12s %-12s\n", "k", "inst", "every-dec", "per-dec",
                "advantage", "hind-adv", "baseline", "adv-trans", "fd-rel");
    bool ok = true;
    Rng rng(seed);
    std::normal_distribution<double> logit(0.0, 1.0);
    for (int k : ks) {
        const EnvSpec spec = EnvSpec::bitflip(k).without_termination();
        for (int i = 0; i < instances; ++i) {
            Policy policy = Policy::tabular(spec);
            for (auto& p : policy.net().params()) p = logit(rng);
            const oracle::BaselineFn baseline = [](int t, State s, Goal g) {
                return 0.3 * t + 0.1 * s.code - 0.2 * g.code;
            };
            const auto r = oracle::verify_identities(spec, policy, baseline);
            std::printf("%-4d %-4d %-12.3e %-12.3e %-12.3e %-12.3e %-12.3e %-12.3e %-12.3e\n", k, i,
                        r.every_decision, r.per_decision, r.advantage, r.hindsight_advantage,
                        r.hindsight_baseline, r.advantage_transition, r.finite_difference_rel);
            ok = ok && std::max({r.every_decision, r.per_decision, r.advantage, r.hindsight_advantage,
                                 r.hindsight_baseline, r.advantage_transition}) <= tolerance &&
                 r.finite_difference_rel <= 1e-6;
        }
    }
    std::printf("%s\n", ok ? "all identities hold" : "identity check FAILED");
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Goal-conditional policy gradients with hindsight"};
    app.require_subcommand(1);

    RunFlags train_flags;
    auto* train = app.add_subcommand("train", "train one or more runs and write curves");
    add_run_flags(train, train_flags);

    RunFlags grid_flags;
    std::vector<double> lrs, baseline_lrs;
    auto* grid = app.add_subcommand("grid-search", "pick learning rates by mean minus std of average performance");
    add_run_flags(grid, grid_flags);
    grid->add_option("--lrs", lrs, "policy learning rates (default: 1e-5 5e-5 ... 5e-2)");
    grid->add_option("--baseline-lrs", baseline_lrs, "baseline learning rates (+b estimators)");

    std::vector<int> ks{1, 2, 3};
    int instances = 5;
    std::uint64_t verify_seed = 1;
    double tolerance = 1e-10;
    auto* verify = app.add_subcommand("verify", "check the exact gradient identities by enumeration");
    verify->add_option("--k", ks, "bit counts");
    verify->add_option("--instances", instances, "random policies per k");
    verify->add_option("--seed", verify_seed, "seed for the random policies");
    verify->add_option("--tolerance", tolerance, "max absolute residual");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return cmd_train(train_flags);
        if (*grid) return cmd_grid_search(grid_flags, lrs, baseline_lrs);
        if (*verify) return cmd_verify(ks, instances, verify_seed, tolerance);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
