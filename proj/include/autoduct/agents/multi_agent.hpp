// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/runtime.hpp"

#include <chrono>
#include <string>

namespace autoduct::agents {

/// Writes task documents from the stage template and the context paths.
class CodingAgent {
public:
    explicit CodingAgent(RunSession& session) : session_(session) {}

    TaskDocument generate(const std::string& kind)
    {
        const auto req = generate_request(session_.options().task, kind, session_.ctx().paths_json());
        const auto reply = session_.call(req);
        return session_.make_document(kind, reply.content, req);
    }

private:
    RunSession& session_;
};

/// Returns a corrected document given the failed one and its error log.
class TuningAgent {
public:
    explicit TuningAgent(RunSession& session) : session_(session) {}

    TaskDocument tune(const TaskDocument& doc, const std::string& error_log)
    {
        if (error_log.empty())
            throw Error(Errc::invalid_argument, "tuning needs a non-empty error log");
        const auto req = tune_request(to_json(doc), error_log, session_.ctx().paths_json());
        const auto reply = session_.call(req);
        return session_.make_document(doc.kind, reply.content, req, &doc);
    }

private:
    RunSession& session_;
};

/// Runs documents in the sandboxed engine and hands results back.
class ExecutionAgent {
public:
    explicit ExecutionAgent(Executor& executor) : executor_(executor) {}

    ExecutionResult run(const TaskDocument& doc) { return executor_.execute(doc); }

private:
    Executor& executor_;
};

/// Hub of the multi-agent loop. Every document, result and error log passes
/// through here; the subordinate agents never see each other.
class Supervisor {
public:
    Supervisor(RunSession& session, Executor& executor)
        : session_(session), coding_(session), tuning_(session), execution_(executor)
    {
    }

    RunOutcome run()
    {
        const Stage stages[] = {Stage::model_generation, Stage::training_execution, Stage::evaluation_execution};
        for (Stage stage : stages) {
            if (session_.state().done(stage))
                continue;
            run_stage(stage);
            if (session_.options().halt_after == stage)
                return session_.halted();
        }
        auto out = session_.synthesize();
        session_.event("report: synthesized");
        session_.persist();
        out.progress = session_.progress();
        return out;
    }

private:
    void run_stage(Stage stage)
    {
        const std::string kind(task_kind(stage));
        const auto started = std::chrono::steady_clock::now();
        session_.set(stage, StageStatus::in_progress);

        auto doc = coding_.generate(kind);
        session_.store(doc);
        session_.event(kind + ": coding agent wrote the task document");
        auto result = execution_.run(doc);

        int errors = 0;
        while (!result.ok) {
            ++errors;
            session_.event(kind + ": execution failed: " + result.first_line());
            session_.add_error(stage);
            if (errors >= session_.options().max_retries) {
                session_.set(stage, StageStatus::failed);
                throw Error(Errc::stage_exhausted, std::string(to_string(stage)) + " failed " + std::to_string(errors) +
                                                       " times; last error: " + result.first_line());
            }
            doc = tuning_.tune(doc, result.log);
            ++session_.progress().tune_cycles;
            session_.store(doc);
            session_.event(kind + ": tuning agent patched the task document");
            session_.persist();
            result = execution_.run(doc);
        }
        session_.event(kind + ": execution succeeded");
        session_.progress().stage_seconds[kind] +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        session_.set(stage, StageStatus::done);
    }

    RunSession& session_;
    CodingAgent coding_;
    TuningAgent tuning_;
    ExecutionAgent execution_;
};

/// Generate, execute and tune each stage in order, then synthesize the
/// report. Throws StageExhausted with the stage left failed and resumable.
inline RunOutcome run_multi_agent(ProjectContext& ctx, Sandbox& sandbox, Planner& planner, Executor& executor,
                                  AgentRunOptions options = {})
{
    options.mode = "multi_agent";
    RunSession session(ctx, sandbox, planner, options);
    Supervisor supervisor(session, executor);
    return supervisor.run();
}

} // namespace autoduct::agents
