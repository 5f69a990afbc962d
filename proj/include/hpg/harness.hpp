#pragma once

// Training loop, greedy evaluation, bootstrap confidence intervals, learning
// rate grid search and result files (CSV, SVG, ratio histograms).

#include "hpg/baseline.hpp"
#include "hpg/env.hpp"
#include "hpg/estimators.hpp"
#include "hpg/nnet.hpp"
#include "hpg/policy.hpp"
#include "hpg/trajectory.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hpg {

enum class EstimatorKind { gcpg, gcpg_baseline, hpg, hpg_baseline };

inline std::string estimator_name(EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::gcpg: return "gcpg";
    case EstimatorKind::gcpg_baseline: return "gcpg+b";
    case EstimatorKind::hpg: return "hpg";
    case EstimatorKind::hpg_baseline: return "hpg+b";
    }
    return "?";
}

inline EstimatorKind parse_estimator(const std::string& name) {
    if (name == "gcpg") return EstimatorKind::gcpg;
    if (name == "gcpg+b") return EstimatorKind::gcpg_baseline;
    if (name == "hpg") return EstimatorKind::hpg;
    if (name == "hpg+b") return EstimatorKind::hpg_baseline;
    throw std::invalid_argument("unknown estimator: " + name);
}

inline bool uses_baseline(EstimatorKind kind) {
    return kind == EstimatorKind::gcpg_baseline || kind == EstimatorKind::hpg_baseline;
}

inline bool is_hindsight(EstimatorKind kind) {
    return kind == EstimatorKind::hpg || kind == EstimatorKind::hpg_baseline;
}

struct RunConfig {
    EnvSpec env = EnvSpec::bitflip(8);
    EstimatorKind estimator = EstimatorKind::hpg;
    int batch_size = 16;
    double lr = 1e-3;
    std::optional<double> baseline_lr;
    std::optional<std::size_t> max_active; // nullopt: every active goal
    int batches = 1400;
    int eval_every = 14;
    int eval_episodes = 256;
    std::uint64_t seed = 1;
    std::vector<int> hidden{256, 256};
    int bootstrap_resamples = 1000;
    int runs = 10;           // seeds seed, seed + 1, ... for multi-run commands
    bool dump_weights = false; // per-batch normalised weights, hindsight runs only
};

inline void validate(const RunConfig& c) {
    env::validate(c.env);
    if (c.batch_size < 1 || c.batches < 1 || c.eval_every < 1 || c.runs < 1)
        throw std::invalid_argument("config: counts must be at least 1");
    if (c.eval_episodes < 2) throw std::invalid_argument("config: at least 2 evaluation episodes");
    if (c.bootstrap_resamples < 1) throw std::invalid_argument("config: bootstrap resamples must be at least 1");
    if (!(c.lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (uses_baseline(c.estimator) != c.baseline_lr.has_value())
        throw std::invalid_argument("config: baseline lr is required exactly for gcpg+b and hpg+b");
    if (c.baseline_lr && !(*c.baseline_lr > 0.0)) throw std::invalid_argument("config: baseline lr must be positive");
    if (c.max_active && *c.max_active < 1) throw std::invalid_argument("config: max active goals must be at least 1");
    for (int h : c.hidden)
        if (h < 1) throw std::invalid_argument("config: hidden widths must be at least 1");
}

// JSON keys are the CLI flag names.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["env"] = env_name(c.env.kind);
    if (c.env.kind == EnvKind::bitflip) j["k"] = c.env.bits;
    j["horizon"] = c.env.horizon;
    j["estimator"] = estimator_name(c.estimator);
    j["batch-size"] = c.batch_size;
    j["lr"] = c.lr;
    if (c.baseline_lr) j["baseline-lr"] = *c.baseline_lr;
    if (c.max_active) j["max-active"] = *c.max_active;
    else j["max-active"] = "inf";
    j["batches"] = c.batches;
    j["eval-every"] = c.eval_every;
    j["eval-episodes"] = c.eval_episodes;
    j["seed"] = c.seed;
    j["hidden"] = c.hidden;
    j["bootstrap-resamples"] = c.bootstrap_resamples;
    j["runs"] = c.runs;
    j["dump-weights"] = c.dump_weights;
    return j;
}

inline EnvSpec make_env(const std::string& name, int k) {
    switch (parse_env_kind(name)) {
    case EnvKind::bitflip: return EnvSpec::bitflip(k);
    case EnvKind::empty_room: return EnvSpec::empty_room();
    case EnvKind::four_rooms: return EnvSpec::four_rooms();
    case EnvKind::chain: return EnvSpec::chain();
    }
    throw std::invalid_argument("unknown environment: " + name);
}

inline std::optional<std::size_t> parse_max_active(const std::string& text) {
    if (text == "inf") return std::nullopt;
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v < 1) throw std::invalid_argument("max-active must be a positive integer or inf");
    return static_cast<std::size_t>(v);
}

// Keys missing from `j` keep their value in `base`.
inline RunConfig from_json(const nlohmann::json& j, RunConfig base = {}) {
    static const std::vector<std::string> known{
        "env",   "k",   "horizon",       "estimator", "batch-size", "lr",     "baseline-lr",         "max-active", "batches",
        "eval-every", "eval-episodes", "seed", "hidden", "bootstrap-resamples", "runs", "dump-weights", "out"};
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("config: unknown key " + key);
    RunConfig c = std::move(base);
    if (j.contains("env") || j.contains("k")) {
        const std::string name = j.value("env", env_name(c.env.kind));
        c.env = make_env(name, j.value("k", c.env.bits));
    }
    if (j.contains("horizon")) c.env.horizon = j.at("horizon").get<int>();
    if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator").get<std::string>());
    if (j.contains("batch-size")) c.batch_size = j.at("batch-size").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("baseline-lr")) {
        if (j.at("baseline-lr").is_null()) c.baseline_lr.reset();
        else c.baseline_lr = j.at("baseline-lr").get<double>();
    }
    if (j.contains("max-active")) {
        const auto& v = j.at("max-active");
        if (v.is_string()) c.max_active = parse_max_active(v.get<std::string>());
        else c.max_active = v.get<std::size_t>();
    }
    if (j.contains("batches")) c.batches = j.at("batches").get<int>();
    if (j.contains("eval-every")) c.eval_every = j.at("eval-every").get<int>();
    if (j.contains("eval-episodes")) c.eval_episodes = j.at("eval-episodes").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
    if (j.contains("bootstrap-resamples")) c.bootstrap_resamples = j.at("bootstrap-resamples").get<int>();
    if (j.contains("runs")) c.runs = j.at("runs").get<int>();
    if (j.contains("dump-weights")) c.dump_weights = j.at("dump-weights").get<bool>();
    return c;
}

// Independent generator for one purpose within a run.
inline Rng stream_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return Rng(seq);
}

struct Evaluation {
    double mean = 0.0;
    std::vector<double> returns;
};

// Greedy rollouts (ties to the lowest action), fresh goal per episode.
inline Evaluation evaluate(const Policy& policy, const EnvSpec& spec, int episodes, Rng& rng) {
    if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be at least 1");
    const auto n = static_cast<std::size_t>(episodes);
    std::vector<State> initial(n), state(n);
    std::vector<Goal> goal(n);
    for (std::size_t i = 0; i < n; ++i) {
        initial[i] = state[i] = env::initial_state(spec, rng);
        goal[i] = env::sample_goal(spec, state[i], rng);
    }
    Evaluation out;
    out.returns.assign(n, 0.0);
    std::vector<std::size_t> running(n);
    std::iota(running.begin(), running.end(), std::size_t{0});
    std::vector<StateGoal> pairs;
    for (int u = 1; u <= spec.horizon && !running.empty(); ++u) {
        pairs.clear();
        for (auto i : running) pairs.push_back({state[i], goal[i]});
        const Eigen::MatrixXd lp = policy.log_probs(pairs);
        std::vector<std::size_t> still;
        for (std::size_t r = 0; r < running.size(); ++r) {
            const auto i = running[r];
            const auto col = lp.col(static_cast<Eigen::Index>(r));
            const Action a = greedy_action(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
            state[i] = env::transition(spec, state[i], a, rng);
            const bool hit = env::is_valid_goal(spec, initial[i], goal[i]) && env::achieved(state[i], goal[i]);
            if (hit) out.returns[i] += env::reward(spec, state[i], goal[i], u);
            if (!(hit && spec.terminate_on_goal)) still.push_back(i);
        }
        running = std::move(still);
    }
    out.mean = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) / static_cast<double>(n);
    return out;
}

// Percentile bootstrap of the mean. The interval is widened to contain the
// sample mean when resampling noise puts it just outside.
inline std::pair<double, double> bootstrap_ci(std::span<const double> samples, double level, int resamples,
                                              Rng& rng) {
    if (samples.size() < 2) throw std::invalid_argument("bootstrap_ci: need at least two samples");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must be in (0, 1)");
    if (resamples < 1) throw std::invalid_argument("bootstrap_ci: resamples must be at least 1");
    const auto n = samples.size();
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += samples[pick(rng)];
        m = s / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&means](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, means.size() - 1);
        return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    const double alpha = 1.0 - level;
    return {std::min(mean, quantile(alpha / 2.0)), std::max(mean, quantile(1.0 - alpha / 2.0))};
}

inline std::pair<double, double> bootstrap_ci(std::span<const double> samples, Rng& rng) {
    return bootstrap_ci(samples, 0.95, 1000, rng);
}

struct CurvePoint {
    int batch;
    long long episodes;
    double mean_return;
    double ci_low;
    double ci_high;
};

struct LearningCurve {
    std::vector<CurvePoint> points;
};

inline double average_performance(const LearningCurve& curve) {
    if (curve.points.empty()) throw std::invalid_argument("average_performance: empty curve");
    double s = 0.0;
    for (const auto& p : curve.points) s += p.mean_return;
    return s / static_cast<double>(curve.points.size());
}

// Counts of active normalised weights per t', over equal-width bins on [0, 1].
struct RatioHistogram {
    static constexpr int bins = 20;
    std::map<int, std::vector<std::uint64_t>> counts;

    void add(int step, double weight) {
        auto& row = counts[step];
        if (row.empty()) row.assign(bins, 0);
        const int b = std::clamp(static_cast<int>(weight * bins), 0, bins - 1);
        ++row[static_cast<std::size_t>(b)];
    }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (const auto& [step, row] : counts) n += std::accumulate(row.begin(), row.end(), std::uint64_t{0});
        return n;
    }
};

struct RunDiagnostics {
    double max_original_log_ratio = 0.0; // max |log ratio| with the original goal as alternative
    double max_weight_sum_error = 0.0;   // max |sum_j w_j(g, t') - 1|
    std::uint64_t weight_groups = 0;     // number of (batch, g, t') groups checked
    std::uint64_t inactive_in_histogram = 0;
    RatioHistogram histogram;
};

struct WeightRow {
    int batch;
    WeightRecord record;
};

// Folds one batch of weight records into the diagnostics.
inline void observe_weights(const Batch& batch, std::span<const WeightRecord> records, RunDiagnostics& diag) {
    std::map<std::pair<std::uint32_t, int>, double> sums;
    for (const auto& r : records) {
        if (batch.trajectories.at(r.trajectory).goal == r.goal)
            diag.max_original_log_ratio = std::max(diag.max_original_log_ratio, std::abs(r.log_ratio));
        sums[{r.goal.code, r.step}] += r.weight;
        if (r.active) diag.histogram.add(r.step, r.weight);
    }
    for (const auto& [key, s] : sums) diag.max_weight_sum_error = std::max(diag.max_weight_sum_error, std::abs(s - 1.0));
    diag.weight_groups += sums.size();
}

struct RunResult {
    RunConfig config;
    LearningCurve curve;
    Policy policy;
    std::optional<ValueNet> baseline;
    RunDiagnostics diagnostics;
    std::vector<WeightRow> weight_rows;
};

inline RunResult train(const RunConfig& config) {
    validate(config);
    const EnvSpec& spec = config.env;
    Rng init_rng = stream_rng(config.seed, 0);
    Rng train_rng = stream_rng(config.seed, 1);
    Rng eval_rng = stream_rng(config.seed, 2);
    Rng boot_rng = stream_rng(config.seed, 3);

    RunResult result{config, {}, Policy::make(spec, init_rng, config.hidden), std::nullopt, {}, {}};
    if (uses_baseline(config.estimator)) result.baseline = ValueNet::make(spec, init_rng, config.hidden);
    Adam policy_opt(config.lr);
    Adam baseline_opt(config.baseline_lr.value_or(1.0));

    EstimatorOptions options;
    options.max_active = config.max_active;
    options.record_weights = is_hindsight(config.estimator);

    for (int b = 1; b <= config.batches; ++b) {
        const Batch batch = collect_batch(result.policy, spec, static_cast<std::size_t>(config.batch_size), train_rng);
        GradientEstimate est;
        switch (config.estimator) {
        case EstimatorKind::gcpg: est = gcpg_gradient(batch, result.policy); break;
        case EstimatorKind::gcpg_baseline: est = gcpg_baseline_gradient(batch, result.policy, *result.baseline); break;
        case EstimatorKind::hpg: est = hpg_weighted_gradient(batch, result.policy, spec, options, train_rng); break;
        case EstimatorKind::hpg_baseline:
            est = hpg_weighted_baseline_gradient(batch, result.policy, *result.baseline, spec, options, train_rng);
            break;
        }
        if (options.record_weights) {
            observe_weights(batch, est.weights, result.diagnostics);
            if (config.dump_weights)
                for (const auto& r : est.weights) result.weight_rows.push_back({b, r});
        }
        // Adam minimises; the estimators return the ascent direction.
        policy_opt.step(result.policy.net().params(), -est.gradient);
        if (result.baseline) td_fit_step(*result.baseline, batch, baseline_opt);

        if (b % config.eval_every == 0) {
            const Evaluation ev = evaluate(result.policy, spec, config.eval_episodes, eval_rng);
            const auto [lo, hi] = bootstrap_ci(ev.returns, 0.95, config.bootstrap_resamples, boot_rng);
            result.curve.points.push_back(
                {b, static_cast<long long>(b) * config.batch_size, ev.mean, lo, hi});
        }
    }
    return result;
}

// Runs `configs` on up to `jobs` threads; results keep the input order.
inline std::vector<RunResult> train_all(const std::vector<RunConfig>& configs, int jobs = 0) {
    if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::optional<RunResult>> slots(configs.size());
    for (std::size_t start = 0; start < configs.size(); start += static_cast<std::size_t>(jobs)) {
        const auto stop = std::min(configs.size(), start + static_cast<std::size_t>(jobs));
        std::vector<std::future<RunResult>> pending;
        for (auto i = start; i < stop; ++i) pending.push_back(std::async(std::launch::async, train, configs[i]));
        for (auto i = start; i < stop; ++i) slots[i].emplace(pending[i - start].get());
    }
    std::vector<RunResult> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

// config.runs copies of `config` with seeds seed, seed + 1, ...
inline std::vector<RunConfig> seed_sweep(const RunConfig& config) {
    std::vector<RunConfig> out;
    for (int r = 0; r < config.runs; ++r) {
        RunConfig c = config;
        c.seed = config.seed + static_cast<std::uint64_t>(r);
        out.push_back(std::move(c));
    }
    return out;
}

struct Summary {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation across runs; 0 for a single run
};

inline Summary summarize(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("summarize: no values");
    Summary s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

// {a * 10^-k : a in {1, 5}, k = 2..5}, ascending.
inline std::vector<double> default_lr_grid() {
    std::vector<double> grid;
    for (int k = 5; k >= 2; --k)
        for (double a : {1.0, 5.0}) grid.push_back(a * std::pow(10.0, -k));
    return grid;
}

struct GridPoint {
    double lr;
    std::optional<double> baseline_lr;
    std::vector<double> performances; // average performance per run
    double mean = 0.0;
    double std = 0.0;
    double score = 0.0; // mean - std
};

// Highest score; ties go to the lower policy lr, then the lower baseline lr.
inline std::size_t select_best(std::span<const GridPoint> points) {
    if (points.empty()) throw std::invalid_argument("grid search: empty grid");
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const auto& p = points[i];
        const auto& q = points[best];
        const auto key = [](const GridPoint& g) { return std::pair{g.lr, g.baseline_lr.value_or(0.0)}; };
        if (p.score > q.score || (p.score == q.score && key(p) < key(q))) best = i;
    }
    return best;
}

struct GridSearchResult {
    RunConfig best;
    std::vector<GridPoint> points;
};

// Every (lr, baseline lr) pair over config.runs seeds. `baseline_lrs` is
// ignored for estimators without a baseline.
inline GridSearchResult grid_search(const RunConfig& base, const std::vector<double>& lrs,
                                    const std::vector<double>& baseline_lrs, int jobs = 0) {
    if (lrs.empty() || (uses_baseline(base.estimator) && baseline_lrs.empty()))
        throw std::invalid_argument("grid search: empty grid");
    std::vector<GridPoint> points;
    std::vector<RunConfig> configs;
    for (double lr : lrs) {
        std::vector<std::optional<double>> blrs{std::nullopt};
        if (uses_baseline(base.estimator)) blrs.assign(baseline_lrs.begin(), baseline_lrs.end());
        for (const auto& blr : blrs) {
            points.push_back({lr, blr, {}});
            RunConfig c = base;
            c.lr = lr;
            c.baseline_lr = blr;
            for (auto& s : seed_sweep(c)) configs.push_back(std::move(s));
        }
    }
    const auto results = train_all(configs, jobs);
    const auto runs = static_cast<std::size_t>(base.runs);
    for (std::size_t p = 0; p < points.size(); ++p) {
        for (std::size_t r = 0; r < runs; ++r) points[p].performances.push_back(average_performance(results[p * runs + r].curve));
        const Summary s = summarize(points[p].performances);
        points[p].mean = s.mean;
        points[p].std = s.std;
        points[p].score = s.mean - s.std;
    }
    GridSearchResult out{base, std::move(points)};
    const auto& best = out.points[select_best(out.points)];
    out.best.lr = best.lr;
    out.best.baseline_lr = best.baseline_lr;
    return out;
}

// ---- result files ----

inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
        if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

inline std::string curve_csv(const LearningCurve& curve) {
    std::string s = "batch,episodes,mean_return,ci_low,ci_high\n";
    for (const auto& p : curve.points)
        s += std::to_string(p.batch) + ',' + std::to_string(p.episodes) + ',' + format_double(p.mean_return) + ',' +
             format_double(p.ci_low) + ',' + format_double(p.ci_high) + '\n';
    return s;
}

inline std::string histogram_csv(const RatioHistogram& h) {
    std::string s = "step,bin_low,bin_high,count\n";
    for (const auto& [step, row] : h.counts)
        for (int b = 0; b < RatioHistogram::bins; ++b)
            s += std::to_string(step) + ',' + format_double(static_cast<double>(b) / RatioHistogram::bins) + ',' +
                 format_double(static_cast<double>(b + 1) / RatioHistogram::bins) + ',' +
                 std::to_string(row[static_cast<std::size_t>(b)]) + '\n';
    return s;
}

inline std::string weights_csv(std::span<const WeightRow> rows) {
    std::string s = "batch,trajectory,goal,step,weight,active\n";
    for (const auto& [batch, r] : rows) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%d,%zu,%u,%d,%.12g,%d\n", batch, r.trajectory, r.goal.code, r.step, r.weight,
                      r.active ? 1 : 0);
        s += buf;
    }
    return s;
}

// Mean return against episodes, with the CI as a shaded band.
inline std::string curve_svg(const LearningCurve& curve, const std::string& title) {
    constexpr double w = 640, h = 400, left = 60, right = 20, top = 40, bottom = 50;
    double x_max = 1, y_min = 0, y_max = 1;
    for (const auto& p : curve.points) {
        x_max = std::max(x_max, static_cast<double>(p.episodes));
        y_min = std::min(y_min, p.ci_low);
        y_max = std::max(y_max, p.ci_high);
    }
    auto px = [&](double x) { return left + (w - left - right) * x / x_max; };
    auto py = [&](double y) { return h - bottom - (h - top - bottom) * (y - y_min) / (y_max - y_min); };
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\">episodes</text>\n"
      << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << h / 2 << ")\">average return</text>\n";
    for (double y : {y_min, y_max})
        s << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          << "font-size=\"10\">" << y << "</text>\n";
    s << "<text x=\"" << px(x_max) << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"end\" "
      << "font-family=\"sans-serif\" font-size=\"10\">" << static_cast<long long>(x_max) << "</text>\n";
    if (!curve.points.empty()) {
        s << "<polygon fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
        for (const auto& p : curve.points) s << px(static_cast<double>(p.episodes)) << ',' << py(p.ci_high) << ' ';
        for (auto it = curve.points.rbegin(); it != curve.points.rend(); ++it)
            s << px(static_cast<double>(it->episodes)) << ',' << py(it->ci_low) << ' ';
        s << "\"/>\n<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : curve.points) s << px(static_cast<double>(p.episodes)) << ',' << py(p.mean_return) << ' ';
        s << "\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

inline std::string run_title(const RunConfig& c) {
    std::string t = env_name(c.env.kind);
    if (c.env.kind == EnvKind::bitflip) t += " k=" + std::to_string(c.env.bits);
    return t + ", " + estimator_name(c.estimator) + ", N=" + std::to_string(c.batch_size) +
           ", seed " + std::to_string(c.seed);
}

// curve.csv, curve.svg, config.json, policy.ckpt; baseline.ckpt for +B runs;
// ratio_histogram.csv for hindsight runs; weights.csv when dumped.
inline void emit_outputs(const std::filesystem::path& dir, const RunResult& run) {
    std::filesystem::create_directories(dir);
    write_atomic(dir / "curve.csv", curve_csv(run.curve));
    write_atomic(dir / "curve.svg", curve_svg(run.curve, run_title(run.config)));
    write_atomic(dir / "config.json", to_json(run.config).dump(2) + "\n");
    checkpoint::save(dir / "policy.ckpt", run.policy.net());
    if (run.baseline) checkpoint::save(dir / "baseline.ckpt", run.baseline->net());
    if (is_hindsight(run.config.estimator)) write_atomic(dir / "ratio_histogram.csv", histogram_csv(run.diagnostics.histogram));
    if (!run.weight_rows.empty()) write_atomic(dir / "weights.csv", weights_csv(run.weight_rows));
}

} // namespace hpg
