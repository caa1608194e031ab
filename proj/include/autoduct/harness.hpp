// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/evaluation.hpp"
#include "autoduct/pipeline.hpp"
#include "autoduct/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace autoduct {

struct TrialRun {
    int index = 0;
    fs::path workspace;
    RunSummary summary;
    std::string error; // empty when the run completed
};

struct TrialReport {
    std::string mode;
    std::vector<TrialRun> runs;
    TrialStats stats;
};

/// Column heading used in the text table.
inline std::string mode_label(const std::string& mode)
{
    if (mode == "multi_agent")
        return "Multi-agent";
    if (mode == "react")
        return "ReAct";
    return "Direct";
}

/// Per-trial configuration: own workspace and member seeds; the dataset
/// and split are shared so runs differ only in their agent trajectory.
inline RunConfig trial_config(const RunConfig& base, int index, const std::vector<agents::FaultPlan>& fault_plan)
{
    char name[32];
    std::snprintf(name, sizeof name, "trial_%02d", index);
    RunConfig c = base;
    c.workspace = base.workspace / name;
    c.run_id = name;
    c.seed = derive_seed(base.seed, static_cast<std::uint64_t>(index));
    c.faults = index < base.fault_runs ? fault_plan : std::vector<agents::FaultPlan>{};
    return c;
}

/// Runs `base.trials` isolated runs, up to `base.jobs` at a time, and
/// aggregates them. A failing run is recorded and the harness continues.
/// Runs 0..fault_runs-1 get `fault_plan` (default: the first evaluate
/// execution fails once).
inline TrialReport run_trials(const RunConfig& base, std::vector<agents::FaultPlan> fault_plan = {},
                              const std::function<void(const TrialRun&)>& on_run = {})
{
    base.validate();
    if (fault_plan.empty())
        fault_plan.push_back(agents::FaultPlan{});
    TrialReport report;
    report.mode = base.mode;
    report.runs.resize(static_cast<std::size_t>(base.trials));

    const unsigned workers = std::clamp<unsigned>(base.jobs, 1u, static_cast<unsigned>(base.trials));
    std::atomic<int> next{0};
    std::mutex report_mutex;
    auto work = [&] {
        for (int i = next++; i < base.trials; i = next++) {
            auto cfg = trial_config(base, i, fault_plan);
            // Concurrent trials split the cores; member training stays serial.
            if (workers > 1)
                cfg.jobs = 1;
            TrialRun run;
            run.index = i;
            run.workspace = cfg.workspace;
            try {
                const auto out = run_pipeline(cfg);
                run.summary = {out.completed, out.test_rmse.value_or(0.0), out.state.total_errors(),
                               out.progress.tokens.total()};
            } catch (const std::exception& e) {
                run.error = e.what();
                run.summary.completed = false;
                try {
                    agents::Sandbox sandbox(cfg.workspace);
                    const auto state = agents::load_state(sandbox, cfg.workspace / "state.json");
                    run.summary.error_count = state.total_errors();
                    const auto progress = nlohmann::json::parse(sandbox.read_text(cfg.workspace / "progress.json"));
                    run.summary.tokens = agents::progress_from_json(progress).tokens.total();
                } catch (const std::exception&) {
                    // no persisted state to salvage
                }
            }
            std::lock_guard lock(report_mutex);
            report.runs[static_cast<std::size_t>(i)] = run;
            if (on_run)
                on_run(run);
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < workers; ++w)
            pool.emplace_back(work);
        work();
    }

    std::vector<RunSummary> summaries;
    for (const auto& r : report.runs)
        summaries.push_back(r.summary);
    report.stats = aggregate_trials(summaries);
    return report;
}

inline nlohmann::json to_json(const TrialReport& r)
{
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& t : r.runs)
        runs.push_back({{"index", t.index},
                        {"workspace", t.workspace.filename().string()},
                        {"completed", t.summary.completed},
                        {"test_rmse", t.summary.completed ? nlohmann::json(t.summary.test_rmse) : nlohmann::json(nullptr)},
                        {"error_count", t.summary.error_count},
                        {"token_usage", t.summary.tokens},
                        {"error", t.error}});
    return {{"mode", r.mode}, {"runs", runs}, {"stats", to_json(r.stats)}};
}

inline std::string render_trial_report(const TrialReport& r)
{
    const std::pair<std::string, TrialStats> column{mode_label(r.mode), r.stats};
    return render_trial_table(std::span(&column, 1));
}

} // namespace autoduct
