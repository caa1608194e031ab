// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/planner.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace autoduct::agents {

/// Bumped whenever a template's wording changes; recorded in reports.
inline constexpr int kPromptTemplateVersion = 1;

struct ToolInfo {
    std::string name;
    std::string description;
};

inline const std::vector<ToolInfo>& react_tools()
{
    static const std::vector<ToolInfo> tools{
        {"generate_model", "write the model task document; arguments: {\"payload\": <model payload>}"},
        {"generate_training_task", "write the training task document; arguments: {\"payload\": <train payload>}"},
        {"generate_evaluation_task", "write the evaluation task document; arguments: {\"payload\": <evaluate payload>}"},
        {"execute_task", "run a written task document; arguments: {\"stage\": \"model\"|\"train\"|\"evaluate\"}"},
        {"patch_task", "replace a task document after a failure; arguments: {\"stage\": ..., \"payload\": ...}"},
        {"read_log", "return the log of the most recent failed execution; no arguments"},
        {"finish_task", "end the run once evaluation is done; no arguments"},
    };
    return tools;
}

namespace detail {

inline std::string schema_hint(const std::string& stage)
{
    if (stage == "model")
        return "{\"config\": {\"hidden_layers\": int, \"hidden_units\": int, \"activation\": "
               "\"relu|leaky_relu|gelu|selu|elu|softplus\", \"dropout_rate\": number in [0, 0.3]}, "
               "\"ensemble_size\": int, \"base_seed\": int}";
    if (stage == "train")
        return "{\"train\": {\"learning_rate\", \"weight_decay\", \"batch_size\", \"epochs\", \"patience\"}, "
               "\"split\": {\"fractions\": [train, validation, test], \"seed\": int}, "
               "\"inputs\": {\"dataset\": path, \"model_spec\": path}, \"outputs\": {\"ensemble_dir\": path}}";
    return "{\"metrics\": [\"rmse\", \"mape\", \"rmspe\", \"ratio\"], \"level\": number in (0, 1), "
           "\"slices\": [slice specs], \"inputs\": {\"dataset\": path, \"ensemble_dir\": path}, "
           "\"outputs\": {\"report_dir\": path}}";
}

inline std::string render_paths(const nlohmann::json& paths)
{
    std::string out;
    for (const auto& [role, p] : paths.items())
        out += "  " + role + ": " + p.get<std::string>() + "\n";
    return out;
}

} // namespace detail

/// Coding-agent request for one stage's task document.
inline PlannerRequest generate_request(const std::string& task, const std::string& stage, const nlohmann::json& paths)
{
    PlannerRequest r;
    r.purpose = Purpose::generate;
    r.agent = "coding";
    r.stage = stage;
    r.context = {{"task", task}, {"stage", stage}, {"paths", paths}};
    r.messages = {
        {"system", "You are the Coding Agent of a supervised modeling pipeline. You write declarative task documents "
                   "that a fixed execution engine runs. Reply with one JSON object and nothing else."},
        {"user", "Overall task: " + task + "\n\nWrite the payload of the '" + stage +
                     "' task document. Schema:\n" + detail::schema_hint(stage) +
                     "\n\nUse exactly these absolute artifact paths:\n" + detail::render_paths(paths)}};
    return r;
}

/// Tuning-agent request: the failed document plus its error log.
inline PlannerRequest tune_request(const nlohmann::json& document, const std::string& error_log,
                                   const nlohmann::json& paths)
{
    PlannerRequest r;
    r.purpose = Purpose::tune;
    r.agent = "tuning";
    r.stage = document.value("kind", std::string{});
    r.context = {{"document", document}, {"error_log", error_log}, {"paths", paths}};
    r.messages = {
        {"system", "You are the Tuning Agent. You receive a task document that failed to execute and its error log, "
                   "and return a corrected payload as one JSON object. Change only what the error requires."},
        {"user", "Failed document:\n" + document.dump(2) + "\n\nError log:\n" + error_log +
                     "\n\nAuthoritative artifact paths:\n" + detail::render_paths(paths)}};
    return r;
}

struct WindowEntry {
    std::string thought;
    std::string action;
    std::string observation;
};

/// ReAct reasoning request: task, state, tools, paths and the recent window.
inline PlannerRequest think_request(const std::string& task, const nlohmann::json& state,
                                   const std::vector<WindowEntry>& window, const nlohmann::json& paths,
                                   const nlohmann::json& documents, const std::string& last_error_log)
{
    PlannerRequest r;
    r.purpose = Purpose::think;
    r.agent = "react";
    nlohmann::json win = nlohmann::json::array();
    std::string memory;
    for (const auto& w : window) {
        win.push_back({{"thought", w.thought}, {"action", w.action}, {"observation", w.observation}});
        memory += "Thought: " + w.thought + "\nAction: " + w.action + "\nObservation: " + w.observation + "\n";
    }
    std::string tools;
    nlohmann::json tool_names = nlohmann::json::array();
    for (const auto& t : react_tools()) {
        tools += "  " + t.name + ": " + t.description + "\n";
        tool_names.push_back(t.name);
    }
    r.context = {{"task", task},           {"state", state},           {"window", win},
                 {"paths", paths},         {"tools", tool_names},      {"documents", documents},
                 {"last_error_log", last_error_log}};
    std::string user = "Task: " + task + "\n\nWorkflow state:\n" + state.dump(2) + "\n\nTools:\n" + tools +
                       "\nCritical paths:\n" + detail::render_paths(paths) + "\nRecent steps:\n" +
                       (memory.empty() ? std::string("  (none)\n") : memory);
    if (!documents.empty())
        user += "\nCurrent task documents:\n" + documents.dump(2) + "\n";
    user += "\nPayload schemas:\n  model: " + detail::schema_hint("model") + "\n  train: " + detail::schema_hint("train") +
            "\n  evaluate: " + detail::schema_hint("evaluate") +
            "\n\nReply with one JSON object {\"thought\": text, \"action\": tool name, \"arguments\": object}.";
    r.messages = {{"system", "You are a single ReAct agent building a deep-ensemble regression model. Think about the "
                             "next step, then choose exactly one tool."},
                  {"user", user}};
    return r;
}

/// Supervisor request for the closing summary.
inline PlannerRequest synthesize_request(const std::string& task, const nlohmann::json& metrics,
                                         const nlohmann::json& state)
{
    PlannerRequest r;
    r.purpose = Purpose::synthesize;
    r.agent = "supervisor";
    r.context = {{"task", task}, {"metrics", metrics}, {"state", state}};
    r.messages = {
        {"system", "You are the Supervisor. Summarize the finished pipeline run for an engineer in a few sentences. "
                   "Reply with one JSON object {\"summary\": text}."},
        {"user", "Task: " + task + "\n\nFinal state:\n" + state.dump(2) + "\n\nMetrics:\n" + metrics.dump(2)}};
    return r;
}

} // namespace autoduct::agents
