// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/context.hpp"
#include "autoduct/agents/planner.hpp"
#include "autoduct/dataset.hpp"
#include "autoduct/evaluation.hpp"
#include "autoduct/neural_net.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace autoduct::agents {

/// The known-good pipeline the scripted backend writes documents for.
struct PipelineRecipe {
    MLPConfig mlp{static_cast<int>(kFeatureCount), 3, 64, Activation::relu, 0.0};
    int ensemble_size = 5;
    std::uint64_t base_seed = 0;
    TrainConfig train{1e-3, 1e-4, 128, 300, 30, 0};
    SplitFractions fractions;
    std::uint64_t split_seed = 0;
    double level = 0.9545;
    std::vector<std::string> metrics{"rmse", "mape", "rmspe", "ratio"};
    std::vector<SliceSpec> slices;

    [[nodiscard]] nlohmann::json model_payload() const
    {
        return {{"config", to_json(mlp)}, {"ensemble_size", ensemble_size}, {"base_seed", base_seed}};
    }

    [[nodiscard]] nlohmann::json train_payload(const nlohmann::json& paths) const
    {
        return {{"train",
                 {{"learning_rate", train.learning_rate},
                  {"weight_decay", train.weight_decay},
                  {"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"patience", train.patience}}},
                {"split", {{"fractions", {fractions.train, fractions.validation, fractions.test}}, {"seed", split_seed}}},
                {"inputs", {{"dataset", paths.at("dataset")}, {"model_spec", paths.at("model_spec")}}},
                {"outputs", {{"ensemble_dir", paths.at("ensemble_dir")}}}};
    }

    [[nodiscard]] nlohmann::json evaluate_payload(const nlohmann::json& paths) const
    {
        nlohmann::json s = nlohmann::json::array();
        for (const auto& spec : slices)
            s.push_back(to_json(spec));
        return {{"metrics", metrics},
                {"level", level},
                {"slices", s},
                {"inputs", {{"dataset", paths.at("dataset")}, {"ensemble_dir", paths.at("ensemble_dir")}}},
                {"outputs", {{"report_dir", paths.at("report_dir")}}}};
    }

    [[nodiscard]] nlohmann::json payload(const std::string& stage, const nlohmann::json& paths) const
    {
        if (stage == "model")
            return model_payload();
        if (stage == "train")
            return train_payload(paths);
        if (stage == "evaluate")
            return evaluate_payload(paths);
        throw Error(Errc::invalid_argument, "no recipe for stage '" + stage + "'");
    }
};

/// Tuning rule shared by both loops: an injected fault leaves the document
/// unchanged; a log naming an artifact role has that role's path restored
/// from the project context.
inline nlohmann::json scripted_patch(const nlohmann::json& document, const std::string& error_log,
                                     const nlohmann::json& paths)
{
    nlohmann::json payload = document.value("payload", nlohmann::json::object());
    if (error_log.find("InjectedFault") != std::string::npos)
        return payload;
    for (const char* section : {"inputs", "outputs"}) {
        if (!payload.contains(section) || !payload.at(section).is_object())
            continue;
        for (auto& [role, value] : payload.at(section).items()) {
            if (!paths.contains(role))
                continue;
            const bool named = error_log.find("role " + role) != std::string::npos ||
                               (value.is_string() && !value.get<std::string>().empty() &&
                                error_log.find(value.get<std::string>()) != std::string::npos);
            if (named)
                value = paths.at(role);
        }
    }
    return payload;
}

/// Deterministic synthetic token counts per call. With `fixed_tokens_per_call`
/// every call reports exactly that many prompt tokens and no completion tokens.
struct ScriptedTokenModel {
    std::optional<long long> fixed_tokens_per_call;

    [[nodiscard]] TokenCount count(const PlannerRequest& r, const nlohmann::json& reply) const
    {
        if (fixed_tokens_per_call)
            return {*fixed_tokens_per_call, 0};
        switch (r.purpose) {
        case Purpose::generate: return {850, 420};
        case Purpose::tune: return {1150, 480};
        case Purpose::synthesize: return {900, 350};
        case Purpose::think: {
            const auto window = static_cast<long long>(r.context.value("window", nlohmann::json::array()).size());
            const bool writes_payload = reply.contains("arguments") && reply.at("arguments").contains("payload");
            return {1250 + 160 * window, writes_payload ? 420 : 90};
        }
        }
        return {};
    }
};

/// Rule-table backend: document generation from a recipe, patching by
/// `scripted_patch`, and a ReAct policy keyed on the workflow state and the
/// last observation.
class ScriptedPlanner : public Planner {
public:
    explicit ScriptedPlanner(PipelineRecipe recipe, ScriptedTokenModel tokens = {})
        : recipe_(std::move(recipe)), tokens_(tokens)
    {
    }

    [[nodiscard]] std::string id() const override { return "scripted"; }

    PlannerReply complete(const PlannerRequest& r) override
    {
        PlannerReply reply;
        switch (r.purpose) {
        case Purpose::generate:
            reply.content = recipe_.payload(r.context.at("stage").get<std::string>(), r.context.at("paths"));
            break;
        case Purpose::tune:
            reply.content = scripted_patch(r.context.at("document"), r.context.at("error_log").get<std::string>(),
                                           r.context.at("paths"));
            break;
        case Purpose::think: reply.content = think(r.context); break;
        case Purpose::synthesize: reply.content = {{"summary", summarize(r.context)}}; break;
        }
        reply.tokens = tokens_.count(r, reply.content);
        return reply;
    }

    [[nodiscard]] const PipelineRecipe& recipe() const noexcept { return recipe_; }

private:
    [[nodiscard]] nlohmann::json think(const nlohmann::json& c) const
    {
        const auto& window = c.at("window");
        const auto& stages = c.at("state").at("stages");
        if (!window.empty()) {
            const auto& last = window.back();
            const auto action = last.at("action").get<std::string>();
            const auto observation = last.at("observation").get<std::string>();
            const bool failed = observation.rfind("error:", 0) == 0;
            if (failed && action.rfind("execute_task", 0) == 0) {
                const auto stage = stage_of(action);
                const auto& doc = c.at("documents").at(stage);
                return {{"thought", "The " + stage + " execution failed: " + first_line(c.at("last_error_log")) +
                                        ". Patch the " + stage + " task and run it again."},
                        {"action", "patch_task"},
                        {"arguments",
                         {{"stage", stage},
                          {"payload", scripted_patch(doc, c.at("last_error_log").get<std::string>(), c.at("paths"))}}}};
            }
            if (!failed && action.rfind("patch_task", 0) == 0) {
                const auto stage = stage_of(action);
                return {{"thought", "The " + stage + " task is patched; execute it again."},
                        {"action", "execute_task"},
                        {"arguments", {{"stage", stage}}}};
            }
        }
        static const std::pair<const char*, const char*> order[] = {
            {"model_generation", "model"}, {"training_execution", "train"}, {"evaluation_execution", "evaluate"}};
        static const std::map<std::string, std::string> generator{
            {"model", "generate_model"}, {"train", "generate_training_task"}, {"evaluate", "generate_evaluation_task"}};
        for (const auto& [name, stage] : order) {
            const auto status = stages.at(name).at("status").get<std::string>();
            if (status == "done")
                continue;
            if (status == "pending" || !c.at("documents").contains(stage))
                return {{"thought", "The " + std::string(stage) + " task has not been written yet; write it."},
                        {"action", generator.at(stage)},
                        {"arguments", {{"payload", recipe_.payload(stage, c.at("paths"))}}}};
            return {{"thought", "The " + std::string(stage) + " task is written; execute it."},
                    {"action", "execute_task"},
                    {"arguments", {{"stage", stage}}}};
        }
        return {{"thought", "Model, training and evaluation are complete; finish."},
                {"action", "finish_task"},
                {"arguments", nlohmann::json::object()}};
    }

    /// Window actions are rendered "execute_task(evaluate)".
    static std::string stage_of(const std::string& action)
    {
        const auto open = action.find('(');
        const auto close = action.find(')');
        if (open == std::string::npos || close == std::string::npos || close < open)
            return {};
        return action.substr(open + 1, close - open - 1);
    }

    static std::string first_line(const nlohmann::json& log)
    {
        const auto text = log.is_string() ? log.get<std::string>() : std::string{};
        return text.substr(0, text.find('\n'));
    }

    static std::string summarize(const nlohmann::json& c)
    {
        const auto& m = c.at("metrics");
        std::string text = "Pipeline finished.";
        if (m.contains("test")) {
            const auto& t = m.at("test");
            text += " Test RMSE " + format_fixed(t.at("rmse").get<double>(), 1) + " kW/m2, MAPE " +
                    format_fixed(t.at("mape").get<double>(), 2) + "%, RMSPE " +
                    format_fixed(t.at("rmspe").get<double>(), 2) + "%.";
        }
        return text;
    }

    PipelineRecipe recipe_;
    ScriptedTokenModel tokens_;
};

} // namespace autoduct::agents
