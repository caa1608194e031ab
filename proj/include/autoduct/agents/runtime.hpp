// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/context.hpp"
#include "autoduct/agents/executor.hpp"
#include "autoduct/agents/planner.hpp"
#include "autoduct/agents/prompts.hpp"
#include "autoduct/agents/state.hpp"
#include "autoduct/agents/task_document.hpp"
#include "autoduct/evaluation.hpp"
#include "autoduct/numeric.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace autoduct::agents {

inline constexpr const char* kDefaultTask =
    "Develop a deep-ensemble neural network that predicts critical heat flux (CHF) in kW/m2 from tube diameter D, "
    "heated length L, pressure P, mass flux G and equilibrium quality X, with aleatory and epistemic uncertainty. "
    "Train it, then evaluate it on the held-out test split and the slice datasets.";

struct AgentRunOptions {
    std::string task = kDefaultTask;
    std::string mode = "multi_agent";
    int max_retries = 3;         // executions per stage before StageExhausted
    int max_steps = 40;          // ReAct step budget
    std::size_t window = 8;      // ReAct short-term memory bound
    std::optional<Stage> halt_after; // stop cleanly once this stage is done (resume testing)
    bool resume = false;
    bool verbose_prompts = false; // store full prompt text next to the digests
    Clock clock = utc_timestamp;
};

/// Workspace layout every run binds up front, relative to the root.
inline void bind_standard_layout(ProjectContext& ctx)
{
    const std::pair<Role, const char*> layout[] = {
        {Role::dataset, "data/dataset.csv"},           {Role::model_spec, "tasks/model.json"},
        {Role::training_spec, "tasks/train.json"},     {Role::evaluation_spec, "tasks/evaluate.json"},
        {Role::ensemble_dir, "artifacts/ensemble"},    {Role::report_dir, "artifacts/report"},
        {Role::state_file, "state.json"},
    };
    for (const auto& [role, rel] : layout)
        if (!ctx.is_bound(role))
            ctx.bind(role, rel);
}

struct TranscriptStep {
    int index = 0;
    std::string thought;
    std::string action; // label, e.g. "execute_task(evaluate)"
    nlohmann::json arguments = nlohmann::json::object();
    std::string observation;
    bool ok = true;
};

/// Full append-only history plus the bounded window fed back to the planner.
class Transcript {
public:
    explicit Transcript(std::size_t bound = 8) : bound_(bound) {}

    void append(TranscriptStep step)
    {
        step.index = static_cast<int>(history_.size());
        history_.push_back(std::move(step));
    }

    [[nodiscard]] std::vector<TranscriptStep> window() const
    {
        const std::size_t n = std::min(bound_, history_.size());
        return {history_.end() - static_cast<std::ptrdiff_t>(n), history_.end()};
    }

    [[nodiscard]] std::vector<WindowEntry> window_entries() const
    {
        std::vector<WindowEntry> out;
        for (const auto& s : window())
            out.push_back({s.thought, s.action, s.observation});
        return out;
    }

    [[nodiscard]] const std::vector<TranscriptStep>& history() const noexcept { return history_; }
    [[nodiscard]] std::size_t bound() const noexcept { return bound_; }

private:
    std::size_t bound_;
    std::vector<TranscriptStep> history_;
};

inline nlohmann::json to_json(const TranscriptStep& s)
{
    return {{"index", s.index},         {"thought", s.thought}, {"action", s.action},
            {"arguments", s.arguments}, {"observation", s.observation}, {"ok", s.ok}};
}

/// Bookkeeping that must survive a restart, persisted as progress.json.
struct Progress {
    TokenUsage tokens;
    int tune_cycles = 0;
    int patch_actions = 0;
    std::vector<std::string> events; // supervisor routing log
    std::vector<TranscriptStep> transcript;
    std::map<std::string, double> stage_seconds;
    std::string last_error_log;
};

inline nlohmann::json to_json(const Progress& p)
{
    nlohmann::json transcript = nlohmann::json::array();
    for (const auto& s : p.transcript)
        transcript.push_back(to_json(s));
    return {{"tokens", to_json(p.tokens)},     {"tune_cycles", p.tune_cycles},
            {"patch_actions", p.patch_actions}, {"events", p.events},
            {"transcript", transcript},        {"stage_seconds", p.stage_seconds},
            {"last_error_log", p.last_error_log}};
}

inline Progress progress_from_json(const nlohmann::json& j)
{
    try {
        Progress p;
        p.tokens = token_usage_from_json(j.at("tokens"));
        p.tune_cycles = j.at("tune_cycles").get<int>();
        p.patch_actions = j.at("patch_actions").get<int>();
        p.events = j.at("events").get<std::vector<std::string>>();
        for (const auto& s : j.at("transcript"))
            p.transcript.push_back({s.at("index").get<int>(), s.at("thought").get<std::string>(),
                                    s.at("action").get<std::string>(), s.at("arguments"),
                                    s.at("observation").get<std::string>(), s.at("ok").get<bool>()});
        p.stage_seconds = j.at("stage_seconds").get<std::map<std::string, double>>();
        p.last_error_log = j.at("last_error_log").get<std::string>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::corrupt_state, std::string("progress file: ") + e.what());
    }
}

/// State as shown to planners: statuses and error counts without the
/// timestamps, so prompts depend only on the run's progress.
inline nlohmann::json planner_view(const WorkflowState& s)
{
    auto j = to_json(s);
    for (auto& [name, stage] : j.at("stages").items())
        stage.erase("updated_at");
    return j;
}

/// Everything one agent run produced.
struct RunOutcome {
    WorkflowState state;
    Progress progress;
    bool completed = false;
    bool halted = false;
    nlohmann::json metrics = nlohmann::json::object();
    std::optional<double> test_rmse;
    std::string summary;
    nlohmann::json report = nlohmann::json::object();
};

/// Shared plumbing of both loops: state/progress persistence, planner calls
/// with token accounting, and document storage.
class RunSession {
public:
    RunSession(ProjectContext& ctx, Sandbox& sandbox, Planner& planner, const AgentRunOptions& options)
        : ctx_(ctx), sandbox_(sandbox), planner_(planner), options_(options)
    {
        bind_standard_layout(ctx_);
        state_.run_id = ctx_.run_id();
        state_.mode = options_.mode;
        if (options_.resume && fs::exists(ctx_.path(Role::state_file))) {
            state_ = load_state(sandbox_, ctx_.path(Role::state_file));
            if (state_.mode != options_.mode)
                throw Error(Errc::corrupt_state, "state was written by mode '" + state_.mode + "'");
            const auto progress_path = ctx_.root() / "progress.json";
            if (fs::exists(progress_path)) {
                try {
                    progress_ = progress_from_json(nlohmann::json::parse(sandbox_.read_text(progress_path)));
                } catch (const nlohmann::json::exception& e) {
                    throw Error(Errc::corrupt_state, std::string("progress file: ") + e.what());
                }
            }
            for (const auto& kind : {"model", "train", "evaluate"}) {
                const auto path = ctx_.path(spec_role(kind));
                if (fs::exists(path))
                    documents_[kind] = task_document_from_json(nlohmann::json::parse(sandbox_.read_text(path)));
            }
        }
        persist();
    }

    [[nodiscard]] WorkflowState& state() noexcept { return state_; }
    [[nodiscard]] Progress& progress() noexcept { return progress_; }
    [[nodiscard]] ProjectContext& ctx() noexcept { return ctx_; }
    [[nodiscard]] const AgentRunOptions& options() const noexcept { return options_; }
    [[nodiscard]] std::string now() const { return options_.clock ? options_.clock() : std::string{}; }

    void persist()
    {
        persist_state(state_, sandbox_, ctx_.path(Role::state_file));
        sandbox_.write_text(ctx_.root() / "context.json", ctx_.to_json().dump(2) + "\n");
        sandbox_.write_text(ctx_.root() / "progress.json", to_json(progress_).dump(2) + "\n");
    }

    void set(Stage s, StageStatus status)
    {
        state_.set(s, status, now());
        persist();
    }

    void add_error(Stage s)
    {
        state_.add_error(s, now());
        persist();
    }

    void event(std::string text) { progress_.events.push_back(std::move(text)); }

    PlannerReply call(const PlannerRequest& req)
    {
        auto reply = planner_.complete(req);
        if (!reply.content.is_object())
            throw Error(Errc::schema_invalid, "planner reply is not a JSON object");
        progress_.tokens.record(req, reply);
        if (options_.verbose_prompts) {
            char name[64];
            std::snprintf(name, sizeof name, "prompts/%03zu_%s_%s.txt", progress_.tokens.calls.size(),
                          req.agent.c_str(), std::string(to_string(req.purpose)).c_str());
            sandbox_.write_text(ctx_.root() / name, req.prompt_text() + "\n--- reply ---\n" + reply.content.dump(2) + "\n");
        }
        return reply;
    }

    /// Wraps a planner payload as a validated document with provenance.
    TaskDocument make_document(const std::string& kind, const nlohmann::json& payload, const PlannerRequest& req,
                               const TaskDocument* patched_from = nullptr)
    {
        TaskDocument d;
        d.kind = kind;
        d.payload = payload;
        d.provenance = {{"planner", planner_.id()},
                        {"prompt_digest", req.digest()},
                        {"template_version", kPromptTemplateVersion}};
        if (patched_from) {
            d.provenance["patch"] = patched_from->provenance.value("patch", 0) + 1;
            d.provenance["patched_from"] = patched_from->provenance.value("prompt_digest", std::string{});
        }
        validate(d);
        return d;
    }

    void store(const TaskDocument& d)
    {
        const auto path = ctx_.path(spec_role(d.kind));
        sandbox_.write_text(path, to_json(d).dump(2) + "\n");
        sandbox_.write_text(path.string() + ".script.txt", render_script(d));
        documents_[d.kind] = d;
    }

    [[nodiscard]] const std::map<std::string, TaskDocument>& documents() const noexcept { return documents_; }

    [[nodiscard]] nlohmann::json documents_json() const
    {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [kind, d] : documents_)
            j[kind] = to_json(d);
        return j;
    }

    /// Report synthesis stage: read the evaluation metrics, ask the planner
    /// for a summary and write report.json, report.txt and timings.json.
    RunOutcome synthesize()
    {
        RunOutcome out;
        if (!state_.done(Stage::report_synthesis)) {
            set(Stage::report_synthesis, StageStatus::in_progress);
            const auto report_dir = ctx_.path(Role::report_dir);
            nlohmann::json metrics;
            try {
                metrics = nlohmann::json::parse(sandbox_.read_text(report_dir / "metrics.json"));
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::corrupt_artifact, std::string("metrics.json: ") + e.what());
            }
            const auto reply = call(synthesize_request(options_.task, metrics, planner_view(state_)));
            const auto summary = reply.content.value("summary", std::string{});
            state_.set(Stage::report_synthesis, StageStatus::done, now());
            const auto report = build_report(metrics, summary);
            sandbox_.write_text(report_dir / "report.json", report.dump(2) + "\n");
            sandbox_.write_text(report_dir / "report.txt", render_report_text(report));
            nlohmann::json timings = progress_.stage_seconds;
            sandbox_.write_text(report_dir / "timings.json", timings.dump(2) + "\n");
            persist();
        }
        const auto report_dir = ctx_.path(Role::report_dir);
        out.report = nlohmann::json::parse(sandbox_.read_text(report_dir / "report.json"));
        out.metrics = out.report.at("metrics");
        if (out.metrics.contains("test") && out.metrics.at("test").contains("rmse"))
            out.test_rmse = out.metrics.at("test").at("rmse").get<double>();
        out.summary = out.report.value("summary", std::string{});
        out.completed = true;
        out.state = state_;
        out.progress = progress_;
        return out;
    }

    RunOutcome halted()
    {
        RunOutcome out;
        out.halted = true;
        out.state = state_;
        out.progress = progress_;
        return out;
    }

    static std::string render_report_text(const nlohmann::json& report)
    {
        std::ostringstream s;
        s << "Run " << report.at("run_id").get<std::string>() << " (" << report.at("mode").get<std::string>()
          << ", planner " << report.at("planner").get<std::string>() << ")\n\n";
        const auto& metrics = report.at("metrics");
        for (const auto& split : {"train", "validation", "test"}) {
            if (!metrics.contains(split))
                continue;
            const auto& m = metrics.at(split);
            s << split << ": n=" << m.at("n").get<long long>();
            for (const auto& key : {"rmse", "mape", "rmspe"})
                if (m.contains(key))
                    s << ' ' << key << '=' << format_fixed(m.at(key).get<double>(), 3);
            s << '\n';
        }
        const auto& t = report.at("run_summary");
        s << "\nTest RMSE: " << (t.at("test_rmse").is_null() ? std::string("n/a") : format_fixed(t.at("test_rmse").get<double>(), 1))
          << "\nErrors: " << t.at("error_count").get<int>() << " (bucket " << t.at("error_bucket").get<std::string>()
          << ")\nToken usage: " << format_thousands(static_cast<double>(t.at("token_usage").get<long long>()))
          << "\n\n" << report.value("summary", std::string{}) << "\n";
        return s.str();
    }

private:
    nlohmann::json build_report(const nlohmann::json& metrics, const std::string& summary) const
    {
        nlohmann::json per_stage = nlohmann::json::object();
        for (Stage s : kAllStages)
            per_stage[std::string(task_kind(s))] = state_.at(s).error_count;
        const int errors = state_.total_errors();
        const auto totals = progress_.tokens.totals();
        nlohmann::json artifacts = nlohmann::json::object();
        for (const auto& [role, path] : ctx_.bindings())
            artifacts[std::string(to_string(role))] = path.lexically_relative(ctx_.root()).generic_string();
        nlohmann::json test_rmse = nullptr;
        if (metrics.contains("test") && metrics.at("test").contains("rmse"))
            test_rmse = metrics.at("test").at("rmse");
        return {{"format_version", 1},
                {"run_id", state_.run_id},
                {"mode", state_.mode},
                {"planner", planner_.id()},
                {"prompt_template_version", kPromptTemplateVersion},
                {"task", options_.task},
                {"status", "completed"},
                {"metrics", metrics},
                {"run_summary",
                 {{"test_rmse", test_rmse},
                  {"completed", true},
                  {"error_count", errors},
                  {"error_bucket", errors == 0 ? "0" : (errors == 1 ? "1" : ">=2")},
                  {"token_usage", totals.total()}}},
                {"errors", {{"total", errors}, {"per_stage", per_stage}}},
                {"recovery", {{"tune_cycles", progress_.tune_cycles}, {"patch_actions", progress_.patch_actions}}},
                {"tokens",
                 {{"calls", progress_.tokens.calls.size()},
                  {"prompt_tokens", totals.prompt},
                  {"completion_tokens", totals.completion},
                  {"total_tokens", totals.total()}}},
                {"artifacts", artifacts},
                {"summary", summary}};
    }

    ProjectContext& ctx_;
    Sandbox& sandbox_;
    Planner& planner_;
    const AgentRunOptions& options_;
    WorkflowState state_;
    Progress progress_;
    std::map<std::string, TaskDocument> documents_;
};

} // namespace autoduct::agents
