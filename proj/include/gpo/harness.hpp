#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "gpo/gpomcp.hpp"
#include "gpo/guard.hpp"
#include "gpo/pomdp.hpp"
#include "gpo/support_game.hpp"

namespace gpo {

struct InfeasibleThresholdError : Error {
    using Error::Error;
};

/// One simulated episode. Payoff is reported as a certified interval:
/// exact when the episode is provably absorbed in a zero-reward class,
/// otherwise the truncated sum plus a tail interval covering any safe
/// continuation beyond the horizon.
struct EpisodeRecord {
    double threshold = 0.0;
    int episode = 0;
    int steps = 0;
    double payoff_lb = 0.0;
    double payoff_ub = 0.0;
    bool guarantee_ok = false;
    double mean_latency_ms = 0.0;
    std::uint64_t seed = 0;
    bool failed = false;    // infeasibility fault or guard desync
    std::string fault;      // reason when failed
    int safety_violations = 0;  // steps with rem > Psi(B); must stay 0
    std::vector<double> decision_latencies_ms;  // not serialized to CSV
};

/// Smallest horizon whose discounted tail is below 1e-6 in payoff units.
inline int default_horizon(const PomdpModel& m) {
    const double gamma = m.discount;
    const double max_r = m.max_abs_reward();
    if (gamma <= 0.0 || max_r <= 0.0) return 1;
    double tail = max_r / (1.0 - gamma);
    int h = 1;
    while (tail * gamma >= 1e-6 && h < 100000) {
        tail *= gamma;
        ++h;
    }
    return h;
}

struct RunOptions {
    int horizon = 0;  // 0: default_horizon(model)
    // Called after every committed step; used by tests to inspect or
    // perturb the planner mid-episode.
    std::function<void(GpomcpPlanner&, int step)> observer;
};

/// Runs one guarded episode: plan, act in the sampled environment, commit,
/// until absorption in a zero-reward class or the horizon. The guard
/// invariant rem <= Psi(B) is checked after every step; faults are
/// recorded, not thrown. Deterministic for a fixed seed and config apart
/// from the latency fields.
inline EpisodeRecord run_episode(const PomdpModel& model, const SupportGame& game,
                                 const FutureValueTable& table, double threshold,
                                 const PlannerConfig& cfg, std::uint64_t seed,
                                 const RunOptions& options = {}) {
    if (!check_feasible(game, table, threshold))
        throw InfeasibleThresholdError("threshold " + std::to_string(threshold) +
                                       " exceeds the guaranteed value of an initial "
                                       "support");

    EpisodeRecord rec;
    rec.threshold = threshold;
    rec.seed = seed;

    const int horizon = options.horizon > 0 ? options.horizon : default_horizon(model);
    const double gamma = model.discount;

    Rng env_rng(seed ^ 0xd1b54a32d192ed03ull);
    int state = -1;
    {
        double u = env_rng.uniform();
        for (int s = 0; s < model.num_states(); ++s) {
            const double p = model.initial_belief[s];
            if (p <= 0.0) continue;
            state = s;
            if (u < p) break;
            u -= p;
        }
    }

    PlannerConfig planner_cfg = cfg;
    planner_cfg.seed = seed;
    GpomcpPlanner planner(model, game, table, planner_cfg, threshold);
    planner.start_episode(seed, model.obs_map[state]);

    // The allowed-action test itself compares exactly; this check only
    // reports on the invariant, so it absorbs the ulp-level drift that
    // (rem - r) / gamma accumulates under a non-dyadic discount.
    auto safety_ok = [&](const GuardState& g) {
        const double psi = table.values[g.support];
        const double slack =
            1e-9 * std::max({1.0, std::abs(psi), std::abs(g.rem)});
        return g.rem <= psi + slack;
    };
    if (!safety_ok(planner.root_guard())) ++rec.safety_violations;

    double accumulated = 0.0, scale = 1.0;
    bool absorbed = false;
    try {
        while (rec.steps < horizon) {
            const GuardState& guard = planner.root_guard();
            if (game.zero_terminal[guard.support]) {
                absorbed = true;
                break;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const int action = planner.plan_action();
            const auto t1 = std::chrono::steady_clock::now();
            rec.decision_latencies_ms.push_back(
                std::chrono::duration<double, std::milli>(t1 - t0).count());

            const StepResult step = sample_step(model, state, action, env_rng);
            accumulated += scale * step.reward;
            scale *= gamma;
            planner.commit(action, step.observation);
            state = step.state;
            ++rec.steps;
            if (!safety_ok(planner.root_guard())) ++rec.safety_violations;
            if (options.observer) options.observer(planner, rec.steps);
        }
    } catch (const InfeasibilityFault& e) {
        rec.failed = true;
        rec.fault = e.what();
    } catch (const GuardDesyncError& e) {
        rec.failed = true;
        rec.fault = e.what();
    }

    if (absorbed) {
        rec.payoff_lb = rec.payoff_ub = accumulated;
    } else {
        const double tail_lb = scale * model.min_reward() / (1.0 - gamma);
        const double tail_ub = scale * model.max_reward() / (1.0 - gamma);
        rec.payoff_lb = accumulated + tail_lb;
        rec.payoff_ub = accumulated + tail_ub;
        if (!rec.failed && rec.safety_violations == 0) {
            // Continued allowed play earns at least rem of the final guard.
            rec.payoff_lb =
                std::max(rec.payoff_lb, accumulated + scale * planner.root_guard().rem);
        }
    }
    if (!rec.decision_latencies_ms.empty()) {
        double total = 0.0;
        for (double v : rec.decision_latencies_ms) total += v;
        rec.mean_latency_ms = total / rec.decision_latencies_ms.size();
    }
    rec.guarantee_ok =
        !rec.failed && rec.safety_violations == 0 && rec.payoff_lb >= threshold;
    return rec;
}

namespace harness_detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace harness_detail

inline const char* kCsvHeader =
    "threshold,episode,steps,payoff_lb,payoff_ub,guarantee_ok,mean_latency_ms,seed";

inline void write_csv_row(std::ostream& out, const EpisodeRecord& r) {
    using harness_detail::format_double;
    out << format_double(r.threshold) << ',' << r.episode << ',' << r.steps << ','
        << format_double(r.payoff_lb) << ',' << format_double(r.payoff_ub) << ','
        << (r.guarantee_ok ? 1 : 0) << ','
        << harness_detail::format_fixed(r.mean_latency_ms, 3) << ',' << r.seed << '\n';
}

struct SweepConfig {
    std::vector<double> thresholds;
    int episodes_per_threshold = 100;
    PlannerConfig planner;
    std::uint64_t base_seed = 1;
    int horizon = 0;
    int threads = 0;  // 0: GPO_THREADS env var, then hardware concurrency
};

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("GPO_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs episodes_per_threshold episodes per threshold, writing one CSV row
/// per episode plus a `#summary` row per threshold. Episode i always runs
/// with seed base_seed + i, so results are reproducible regardless of the
/// worker count. Infeasible thresholds are skipped with a `#warning` row.
inline std::vector<EpisodeRecord> run_sweep(const PomdpModel& model,
                                            const SupportGame& game,
                                            const FutureValueTable& table,
                                            const SweepConfig& cfg, std::ostream& out) {
    using harness_detail::format_double;
    out << kCsvHeader << '\n';
    std::vector<EpisodeRecord> all;
    const int threads = resolve_threads(cfg.threads);

    for (double t : cfg.thresholds) {
        if (!check_feasible(game, table, t)) {
            double root_min = std::numeric_limits<double>::infinity();
            for (const auto& [obs, root] : game.roots) {
                (void)obs;
                root_min = std::min(root_min, table.values[root]);
            }
            out << "#warning," << format_double(t) << ",infeasible,guaranteed-max="
                << format_double(root_min) << '\n';
            continue;
        }
        const int n = cfg.episodes_per_threshold;
        std::vector<EpisodeRecord> records(n);
        std::atomic<int> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&]() {
            RunOptions options;
            options.horizon = cfg.horizon;
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    records[i] = run_episode(model, game, table, t, cfg.planner,
                                             cfg.base_seed + i, options);
                    records[i].episode = i;
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    break;
                }
            }
        };
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        if (error) std::rethrow_exception(error);

        double sum = 0.0, sum_sq = 0.0, latency = 0.0;
        for (const auto& r : records) {
            write_csv_row(out, r);
            sum += r.payoff_lb;
            sum_sq += r.payoff_lb * r.payoff_lb;
            latency += r.mean_latency_ms;
        }
        const double mean = sum / n;
        const double var = std::max(0.0, sum_sq / n - mean * mean);
        out << "#summary," << format_double(t) << ',' << n << ',' << format_double(mean)
            << ',' << format_double(std::sqrt(var)) << ','
            << harness_detail::format_fixed(latency / n, 3) << '\n';
        for (auto& r : records) all.push_back(std::move(r));
    }
    return all;
}

struct LatencySummary {
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double p99_ms = 0.0;
    std::size_t decisions = 0;
    double preprocess_seconds = 0.0;  // filled by the caller
};

/// Aggregates per-decision latencies over the non-failed records.
inline LatencySummary latency_report(const std::vector<EpisodeRecord>& records) {
    std::vector<double> samples;
    for (const auto& r : records) {
        if (r.failed) continue;
        samples.insert(samples.end(), r.decision_latencies_ms.begin(),
                       r.decision_latencies_ms.end());
    }
    if (samples.empty()) throw Error("latency report needs at least one decision");
    std::sort(samples.begin(), samples.end());
    LatencySummary s;
    s.decisions = samples.size();
    double total = 0.0;
    for (double v : samples) total += v;
    s.mean_ms = total / samples.size();
    s.median_ms = samples[samples.size() / 2];
    s.p99_ms = samples[std::min(samples.size() - 1,
                                static_cast<std::size_t>(samples.size() * 0.99))];
    return s;
}

}  // namespace gpo
