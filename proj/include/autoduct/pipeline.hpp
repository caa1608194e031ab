// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/llm_planner.hpp"
#include "autoduct/agents/multi_agent.hpp"
#include "autoduct/agents/react.hpp"
#include "autoduct/agents/scripted_planner.hpp"
#include "autoduct/dataset.hpp"
#include "autoduct/ensemble.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace autoduct {

namespace fs = std::filesystem;

/// Everything a command needs to set up and drive one run. Accepted as a
/// JSON file; command-line flags override individual fields.
struct RunConfig {
    fs::path workspace = "workspace";
    std::string run_id; // defaults to "run-<seed>"
    std::optional<fs::path> dataset_csv; // synthetic data when unset
    SyntheticConfig synthetic{2000, 1.0, 0, {}};
    SplitFractions fractions;
    std::uint64_t split_seed = 0;
    std::string mode = "multi_agent"; // multi_agent | react | direct
    std::string planner = "scripted"; // scripted | llm
    std::string endpoint;
    std::string model = "gpt-4.1";
    int ensemble_size = 5;
    MLPConfig mlp;
    TrainConfig train;
    std::uint64_t seed = 0; // ensemble base seed
    int hpo_runs = 5;
    int hpo_sobol = 16;
    int hpo_bo = 32;
    int top_k = 15;
    double level = 0.9545;
    bool slices = true;
    std::size_t slice_points = 101;
    int trials = 10;
    int fault_runs = 0; // harness: runs 0..fault_runs-1 get the fault plan
    unsigned jobs = 1;
    std::vector<agents::FaultPlan> faults;
    int max_retries = 3;
    int max_steps = 40;
    std::size_t window = 8;
    bool verbose_prompts = false;

    [[nodiscard]] std::string effective_run_id() const
    {
        return run_id.empty() ? "run-" + std::to_string(seed) : run_id;
    }

    void validate() const
    {
        if (mode != "multi_agent" && mode != "react" && mode != "direct")
            throw Error(Errc::invalid_argument, "mode must be multi_agent, react or direct");
        if (planner != "scripted" && planner != "llm")
            throw Error(Errc::invalid_argument, "planner must be scripted or llm");
        if (planner == "llm" && endpoint.empty())
            throw Error(Errc::invalid_argument, "the llm planner needs an endpoint");
        if (dataset_csv && !fs::is_regular_file(*dataset_csv))
            throw Error(Errc::io_failure, "dataset '" + dataset_csv->string() + "' does not exist");
        if (ensemble_size < 1 || ensemble_size > 64)
            throw Error(Errc::invalid_argument, "ensemble size must be in [1, 64]");
        const double sum = fractions.train + fractions.validation + fractions.test;
        if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 || std::abs(sum - 1.0) > 1e-9)
            throw Error(Errc::fraction_sum_invalid, "split fractions must be non-negative and sum to 1");
        if (trials < 1)
            throw Error(Errc::invalid_argument, "trial count must be at least 1");
        if (fault_runs < 0 || fault_runs > trials)
            throw Error(Errc::invalid_argument, "fault runs must be in [0, trials]");
        if (hpo_runs < 1 || hpo_sobol < 0 || hpo_bo < 0 || top_k < 1)
            throw Error(Errc::invalid_argument, "HPO budgets must be non-negative with at least one run");
        if (!(level > 0.0 && level < 1.0))
            throw Error(Errc::invalid_argument, "interval level must be in (0, 1)");
        if (max_retries < 1 || max_steps < 1 || window < 1)
            throw Error(Errc::invalid_argument, "retry, step and window bounds must be positive");
    }
};

/// Accepts "multi" as shorthand for "multi_agent".
inline std::string normalize_mode(const std::string& mode) { return mode == "multi" ? "multi_agent" : mode; }

inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c = {})
{
    try {
        if (j.contains("workspace")) c.workspace = j.at("workspace").get<std::string>();
        if (j.contains("run_id")) c.run_id = j.at("run_id").get<std::string>();
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            if (d.is_string())
                c.dataset_csv = d.get<std::string>();
            else {
                c.dataset_csv.reset();
                c.synthetic.count = d.value("count", c.synthetic.count);
                c.synthetic.noise_scale = d.value("noise_scale", c.synthetic.noise_scale);
                c.synthetic.seed = d.value("seed", c.synthetic.seed);
            }
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            if (s.contains("fractions")) {
                const auto& f = s.at("fractions");
                c.fractions = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()};
            }
            c.split_seed = s.value("seed", c.split_seed);
        }
        if (j.contains("mode")) c.mode = normalize_mode(j.at("mode").get<std::string>());
        if (j.contains("planner")) {
            const auto& p = j.at("planner");
            if (p.is_string())
                c.planner = p.get<std::string>();
            else {
                c.planner = p.value("kind", c.planner);
                c.endpoint = p.value("endpoint", c.endpoint);
                c.model = p.value("model", c.model);
            }
        }
        if (j.contains("ensemble_size")) c.ensemble_size = j.at("ensemble_size").get<int>();
        if (j.contains("model")) c.mlp = mlp_config_from_json(j.at("model"));
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("hpo")) {
            const auto& h = j.at("hpo");
            c.hpo_runs = h.value("runs", c.hpo_runs);
            c.hpo_sobol = h.value("sobol", c.hpo_sobol);
            c.hpo_bo = h.value("bo", c.hpo_bo);
            c.top_k = h.value("top_k", c.top_k);
        }
        if (j.contains("level")) c.level = j.at("level").get<double>();
        if (j.contains("slices")) c.slices = j.at("slices").get<bool>();
        if (j.contains("slice_points")) c.slice_points = j.at("slice_points").get<std::size_t>();
        if (j.contains("trials")) c.trials = j.at("trials").get<int>();
        if (j.contains("fault_runs")) c.fault_runs = j.at("fault_runs").get<int>();
        if (j.contains("jobs")) c.jobs = j.at("jobs").get<unsigned>();
        if (j.contains("faults")) {
            c.faults.clear();
            for (const auto& f : j.at("faults"))
                c.faults.push_back(agents::parse_fault_spec(f.get<std::string>()));
        }
        if (j.contains("max_retries")) c.max_retries = j.at("max_retries").get<int>();
        if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<int>();
        if (j.contains("window")) c.window = j.at("window").get<std::size_t>();
        if (j.contains("verbose_prompts")) c.verbose_prompts = j.at("verbose_prompts").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("run config: ") + e.what());
    }
    return c;
}

inline agents::PipelineRecipe recipe_from(const RunConfig& c)
{
    agents::PipelineRecipe r;
    r.mlp = c.mlp;
    r.ensemble_size = c.ensemble_size;
    r.base_seed = c.seed;
    r.train = c.train;
    r.fractions = c.fractions;
    r.split_seed = c.split_seed;
    r.level = c.level;
    if (c.slices)
        r.slices = reference_slices(c.slice_points);
    return r;
}

inline std::unique_ptr<agents::Planner> make_planner(const RunConfig& c)
{
    if (c.planner == "llm") {
        agents::LlmPlannerConfig lc;
        lc.base_url = c.endpoint;
        lc.model = c.model;
        return std::make_unique<agents::LlmPlanner>(lc);
    }
    // Direct mode makes a single summary call; it reports no tokens.
    agents::ScriptedTokenModel tokens;
    if (c.mode == "direct")
        tokens.fixed_tokens_per_call = 0;
    return std::make_unique<agents::ScriptedPlanner>(recipe_from(c), tokens);
}

/// Places the dataset into the workspace unless it is already there.
inline void stage_dataset(const RunConfig& c, agents::ProjectContext& ctx, agents::Sandbox& sandbox)
{
    const auto target = sandbox.check(ctx.path(agents::Role::dataset), agents::Sandbox::Access::write);
    if (fs::exists(target))
        return;
    fs::create_directories(target.parent_path());
    if (c.dataset_csv)
        save_csv(load_csv(*c.dataset_csv), target);
    else
        save_csv(generate_synthetic(c.synthetic), target);
}

namespace detail {

/// Straight-through train and evaluate from the recipe, no agent loop.
class DirectRunner {
public:
    DirectRunner(agents::RunSession& session, agents::Executor& executor, const agents::PipelineRecipe& recipe)
        : session_(session), executor_(executor), recipe_(recipe)
    {
    }

    agents::RunOutcome run()
    {
        using agents::Stage;
        for (Stage stage : {Stage::model_generation, Stage::training_execution, Stage::evaluation_execution}) {
            if (session_.state().done(stage))
                continue;
            const std::string kind(agents::task_kind(stage));
            session_.set(stage, agents::StageStatus::in_progress);
            agents::PlannerRequest req;
            req.stage = kind;
            req.agent = "direct";
            const auto doc =
                session_.make_document(kind, recipe_.payload(kind, session_.ctx().paths_json()), req);
            session_.store(doc);
            const auto result = executor_.execute(doc);
            if (!result.ok) {
                session_.add_error(stage);
                session_.set(stage, agents::StageStatus::failed);
                throw Error(Errc::stage_exhausted, kind + " failed: " + result.first_line());
            }
            session_.progress().stage_seconds[kind] += result.wall_time_s;
            session_.set(stage, agents::StageStatus::done);
            if (session_.options().halt_after == stage)
                return session_.halted();
        }
        return session_.synthesize();
    }

private:
    agents::RunSession& session_;
    agents::Executor& executor_;
    const agents::PipelineRecipe& recipe_;
};

} // namespace detail

/// Sets up the workspace and runs the configured mode end to end.
inline agents::RunOutcome run_pipeline(const RunConfig& c, bool resume = false,
                                       std::optional<agents::Stage> halt_after = std::nullopt,
                                       agents::Planner* planner_override = nullptr)
{
    c.validate();
    fs::create_directories(c.workspace);
    agents::ProjectContext ctx(c.workspace, c.effective_run_id());
    agents::Sandbox sandbox(ctx.root());
    agents::bind_standard_layout(ctx);
    stage_dataset(c, ctx, sandbox);

    std::unique_ptr<agents::Planner> owned;
    agents::Planner* planner = planner_override;
    if (planner == nullptr) {
        owned = make_planner(c);
        planner = owned.get();
    }
    agents::Executor executor(ctx, sandbox, c.faults, {c.jobs});

    agents::AgentRunOptions options;
    options.max_retries = c.max_retries;
    options.max_steps = c.max_steps;
    options.window = c.window;
    options.halt_after = halt_after;
    options.resume = resume;
    options.verbose_prompts = c.verbose_prompts;
    options.clock = agents::utc_timestamp;

    if (c.mode == "react")
        return agents::run_react(ctx, sandbox, *planner, executor, options);
    if (c.mode == "multi_agent")
        return agents::run_multi_agent(ctx, sandbox, *planner, executor, options);
    options.mode = "direct";
    agents::RunSession session(ctx, sandbox, *planner, options);
    const auto recipe = recipe_from(c);
    detail::DirectRunner runner(session, executor, recipe);
    return runner.run();
}

} // namespace autoduct
