// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <string>

namespace autoduct::agents {

struct PlannerDirective {
    std::string thought;
    std::string action;
    nlohmann::json arguments = nlohmann::json::object();
};

inline bool is_registered_tool(const std::string& name)
{
    const auto& tools = react_tools();
    return std::any_of(tools.begin(), tools.end(), [&](const ToolInfo& t) { return t.name == name; });
}

inline PlannerDirective parse_directive(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("action") || !j.at("action").is_string())
        throw Error(Errc::schema_invalid, "directive needs a string field 'action'");
    PlannerDirective d;
    d.action = j.at("action").get<std::string>();
    if (!is_registered_tool(d.action))
        throw Error(Errc::unknown_tool, "directive names unregistered tool '" + d.action + "'");
    if (j.contains("thought") && j.at("thought").is_string())
        d.thought = j.at("thought").get<std::string>();
    if (j.contains("arguments")) {
        if (!j.at("arguments").is_object())
            throw Error(Errc::schema_invalid, "directive 'arguments' must be an object");
        d.arguments = j.at("arguments");
    }
    return d;
}

/// "execute_task(evaluate)" for stage-bound tools, the bare name otherwise.
inline std::string action_label(const PlannerDirective& d)
{
    if (d.arguments.contains("stage") && d.arguments.at("stage").is_string())
        return d.action + "(" + d.arguments.at("stage").get<std::string>() + ")";
    return d.action;
}

struct ActResult {
    ExecutionResult result;
    bool finished = false; // finish_task accepted
    std::string detail;    // key artifact for the observation line
};

inline constexpr std::size_t kObservationCap = 512;

/// One-line summary of a tool result, capped without splitting a UTF-8
/// sequence.
inline std::string observe(const std::string& label, const ActResult& r)
{
    std::string text = r.result.ok ? "ok: " + label + " → " + r.detail
                                   : "error: " + label + " → " + r.result.first_line();
    if (text.size() > kObservationCap) {
        std::size_t cut = kObservationCap - 3;
        while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80)
            --cut;
        text = text.substr(0, cut) + "...";
    }
    return text;
}

/// Single agent interleaving thought, action and observation.
class ReactAgent {
public:
    ReactAgent(RunSession& session, Executor& executor)
        : session_(session), executor_(executor), transcript_(session.options().window)
    {
        for (const auto& step : session_.progress().transcript)
            transcript_.append(step);
    }

    PlannerDirective think()
    {
        last_request_ = think_request(session_.options().task, planner_view(session_.state()),
                                      transcript_.window_entries(), session_.ctx().paths_json(),
                                      session_.documents_json(), session_.progress().last_error_log);
        return parse_directive(session_.call(last_request_).content);
    }

    ActResult act(const PlannerDirective& d)
    {
        ActResult out;
        try {
            if (d.action == "generate_model")
                generate("model", d, out);
            else if (d.action == "generate_training_task")
                generate("train", d, out);
            else if (d.action == "generate_evaluation_task")
                generate("evaluate", d, out);
            else if (d.action == "execute_task")
                execute(d, out);
            else if (d.action == "patch_task")
                patch(d, out);
            else if (d.action == "read_log") {
                out.result.ok = true;
                out.result.log = session_.progress().last_error_log;
                out.detail = out.result.log.empty() ? "no failed execution" : out.result.first_line();
            } else if (d.action == "finish_task") {
                if (!session_.state().done(Stage::evaluation_execution))
                    fail(out, "finish_task: evaluation_execution is not done");
                else {
                    out.result.ok = true;
                    out.finished = true;
                    out.detail = "run complete";
                }
            } else {
                throw Error(Errc::unknown_tool, "unregistered tool '" + d.action + "'");
            }
        } catch (const Error& e) {
            if (e.code() == Errc::unknown_tool)
                throw;
            fail(out, e.what());
        }
        if (!out.result.ok)
            session_.progress().last_error_log = out.result.log;
        return out;
    }

    RunOutcome run()
    {
        const int budget = session_.options().max_steps;
        for (int step = 0; step < budget; ++step) {
            const auto started = std::chrono::steady_clock::now();
            const auto d = think();
            const auto r = act(d);
            const auto label = action_label(d);
            TranscriptStep entry{0, d.thought, label, d.arguments, observe(label, r), r.result.ok};
            transcript_.append(entry);
            entry.index = static_cast<int>(transcript_.history().size()) - 1;
            session_.progress().transcript.push_back(entry);
            if (!r.result.ok && d.action == "execute_task")
                session_.event(label + ": execution failed");
            if (d.arguments.contains("stage") && d.arguments.at("stage").is_string())
                session_.progress().stage_seconds[d.arguments.at("stage").get<std::string>()] +=
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            session_.persist();
            if (r.finished) {
                auto out = session_.synthesize();
                out.progress = session_.progress();
                return out;
            }
            if (const auto halt = session_.options().halt_after; halt && session_.state().done(*halt))
                return session_.halted();
        }
        throw Error(Errc::step_budget_exhausted,
                    "no finish_task after " + std::to_string(budget) + " steps");
    }

    [[nodiscard]] const Transcript& transcript() const noexcept { return transcript_; }

private:
    static Stage stage_for(const std::string& kind)
    {
        if (kind == "model")
            return Stage::model_generation;
        if (kind == "train")
            return Stage::training_execution;
        if (kind == "evaluate")
            return Stage::evaluation_execution;
        throw Error(Errc::invalid_argument, "unknown stage '" + kind + "'");
    }

    static std::string stage_argument(const PlannerDirective& d)
    {
        if (!d.arguments.contains("stage") || !d.arguments.at("stage").is_string())
            throw Error(Errc::schema_invalid, d.action + " needs a string argument 'stage'");
        return d.arguments.at("stage").get<std::string>();
    }

    static const nlohmann::json& payload_argument(const PlannerDirective& d)
    {
        if (!d.arguments.contains("payload"))
            throw Error(Errc::schema_invalid, d.action + " needs an argument 'payload'");
        return d.arguments.at("payload");
    }

    static void fail(ActResult& out, const std::string& message)
    {
        out.result.ok = false;
        out.result.log = message + "\n";
    }

    static std::string noun(const std::string& kind)
    {
        return kind == "model" ? "model" : (kind == "train" ? "training" : "evaluation");
    }

    void generate(const std::string& kind, const PlannerDirective& d, ActResult& out)
    {
        const Stage stage = stage_for(kind);
        if (session_.state().done(stage))
            return fail(out, "the " + kind + " stage is already done");
        TaskDocument doc;
        try {
            doc = session_.make_document(kind, payload_argument(d), last_request_);
        } catch (const Error&) {
            session_.add_error(stage);
            throw;
        }
        session_.store(doc);
        session_.set(stage, StageStatus::in_progress);
        out.result.ok = true;
        out.detail = noun(kind) + " spec registered";
    }

    void execute(const PlannerDirective& d, ActResult& out)
    {
        const auto kind = stage_argument(d);
        const Stage stage = stage_for(kind);
        if (stage != Stage::model_generation && !session_.state().done(static_cast<Stage>(static_cast<int>(stage) - 1)))
            return fail(out, "execute_task: the stage before " + kind + " is not done");
        const auto it = session_.documents().find(kind);
        if (it == session_.documents().end())
            return fail(out, "execute_task: no " + kind + " task document has been written");
        if (session_.state().at(stage).status != StageStatus::in_progress)
            session_.set(stage, StageStatus::in_progress);
        out.result = executor_.execute(it->second);
        if (!out.result.ok) {
            session_.add_error(stage);
            return;
        }
        session_.set(stage, StageStatus::done);
        out.detail = out.result.artifacts.empty()
                         ? kind + " executed"
                         : std::string(to_string(out.result.artifacts.begin()->first)) + " registered";
    }

    void patch(const PlannerDirective& d, ActResult& out)
    {
        const auto kind = stage_argument(d);
        const Stage stage = stage_for(kind);
        const auto it = session_.documents().find(kind);
        if (it == session_.documents().end())
            return fail(out, "patch_task: no " + kind + " task document to patch");
        const TaskDocument previous = it->second;
        TaskDocument doc;
        try {
            doc = session_.make_document(kind, payload_argument(d), last_request_, &previous);
        } catch (const Error&) {
            session_.add_error(stage);
            throw;
        }
        session_.store(doc);
        ++session_.progress().patch_actions;
        out.result.ok = true;
        out.detail = noun(kind) + " spec patched";
    }

    RunSession& session_;
    Executor& executor_;
    Transcript transcript_;
    PlannerRequest last_request_; // produced the directive being acted on
};

/// Think, act and observe until finish_task or the step budget runs out;
/// throws StepBudgetExhausted with the state persisted and resumable.
inline RunOutcome run_react(ProjectContext& ctx, Sandbox& sandbox, Planner& planner, Executor& executor,
                            AgentRunOptions options = {})
{
    options.mode = "react";
    RunSession session(ctx, sandbox, planner, options);
    ReactAgent agent(session, executor);
    return agent.run();
}

} // namespace autoduct::agents
