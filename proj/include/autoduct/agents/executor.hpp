// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/context.hpp"
#include "autoduct/agents/task_document.hpp"
#include "autoduct/dataset.hpp"
#include "autoduct/ensemble.hpp"
#include "autoduct/error.hpp"
#include "autoduct/evaluation.hpp"
#include "autoduct/neural_net.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace autoduct::agents {

/// Fails execution attempt `attempt` (1-based) of tasks of kind `stage`,
/// or every attempt when `every` is set.
struct FaultPlan {
    std::string stage = "evaluate";
    int attempt = 1;
    bool every = false;

    [[nodiscard]] bool fires(const std::string& kind, int attempt_number) const noexcept
    {
        return kind == stage && (every || attempt_number == attempt);
    }

    friend bool operator==(const FaultPlan&, const FaultPlan&) = default;
};

/// Parses "stage=evaluate,attempt=1" or "stage=train,every".
inline FaultPlan parse_fault_spec(const std::string& spec)
{
    FaultPlan f;
    bool have_stage = false;
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        const auto key = item.substr(0, eq);
        const auto value = eq == std::string::npos ? std::string{} : item.substr(eq + 1);
        if (key == "stage") {
            if (value != "model" && value != "train" && value != "evaluate")
                throw Error(Errc::invalid_argument, "fault stage must be model, train or evaluate");
            f.stage = value;
            have_stage = true;
        } else if (key == "attempt") {
            try {
                f.attempt = std::stoi(value);
            } catch (const std::exception&) {
                throw Error(Errc::invalid_argument, "fault attempt must be an integer");
            }
            if (f.attempt < 1)
                throw Error(Errc::invalid_argument, "fault attempt must be at least 1");
        } else if (key == "every" && eq == std::string::npos) {
            f.every = true;
        } else {
            throw Error(Errc::invalid_argument, "unknown fault field '" + item + "'");
        }
    }
    if (!have_stage)
        throw Error(Errc::invalid_argument, "fault spec needs stage=<model|train|evaluate>");
    return f;
}

inline nlohmann::json to_json(const FaultPlan& f)
{
    return {{"stage", f.stage}, {"attempt", f.attempt}, {"every", f.every}};
}

struct ExecutionResult {
    bool ok = false;
    std::string log;
    std::map<Role, fs::path> artifacts;
    double wall_time_s = 0.0;
    bool injected_fault = false;
    nlohmann::json summary = nlohmann::json::object();

    [[nodiscard]] std::string first_line() const { return log.substr(0, log.find('\n')); }
};

struct EngineOptions {
    unsigned jobs = 1; // concurrent member training
};

/// Runs validated task documents with the built-in engine. Every file path
/// passes through the sandbox first; errors come back inside the result.
class Executor {
public:
    Executor(ProjectContext& ctx, Sandbox& sandbox, std::vector<FaultPlan> faults = {}, EngineOptions options = {})
        : ctx_(ctx), sandbox_(sandbox), faults_(std::move(faults)), options_(options)
    {
    }

    ExecutionResult execute(const TaskDocument& doc)
    {
        const auto started = std::chrono::steady_clock::now();
        const int attempt = ++attempts_[doc.kind];
        ExecutionResult r;
        for (const auto& f : faults_)
            if (f.fires(doc.kind, attempt)) {
                r.injected_fault = true;
                r.log = "InjectedFault: simulated FileNotFoundError while executing the " + doc.kind +
                        " task (attempt " + std::to_string(attempt) + ")\n"
                        "the fault injector failed this execution before the engine ran\n";
                r.wall_time_s = elapsed(started);
                return r;
            }
        std::ostringstream log;
        try {
            validate(doc);
            if (doc.kind == "model")
                run_model(doc, r, log);
            else if (doc.kind == "train")
                run_train(doc, r, log);
            else
                run_evaluate(doc, r, log);
            for (const auto& [role, path] : r.artifacts)
                ctx_.bind(role, path);
            r.ok = true;
            r.log = log.str();
        } catch (const Error& e) {
            r.ok = false;
            r.log = std::string(e.what()) + "\n" + log.str();
        } catch (const std::exception& e) {
            r.ok = false;
            r.log = std::string("InternalError: ") + e.what() + "\n" + log.str();
        }
        if (!r.ok)
            r.artifacts.clear();
        r.wall_time_s = elapsed(started);
        return r;
    }

    [[nodiscard]] int attempts(const std::string& kind) const
    {
        const auto it = attempts_.find(kind);
        return it == attempts_.end() ? 0 : it->second;
    }

private:
    static double elapsed(std::chrono::steady_clock::time_point since)
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
    }

    /// Sandbox check plus an existence test whose message names the role.
    fs::path require(const fs::path& p, Role role, bool directory)
    {
        const auto path = sandbox_.check(p, Sandbox::Access::read);
        std::error_code ec;
        const bool exists = directory ? fs::is_directory(path, ec) : fs::is_regular_file(path, ec);
        if (!exists)
            throw Error(Errc::io_failure, "FileNotFoundError: role " + std::string(to_string(role)) + " path '" +
                                              path.string() + "' does not exist");
        return path;
    }

    void run_model(const TaskDocument& doc, ExecutionResult& r, std::ostringstream& log)
    {
        const auto task = parse_model_task(doc);
        log << "model: " << task.members.size() << " members\n";
        for (std::size_t i = 0; i < task.members.size(); ++i) {
            const auto& m = task.members[i];
            const auto params = init_params(m.config, m.seed);
            std::size_t count = 0;
            for (const auto& t : params.tensors)
                count += static_cast<std::size_t>(t.size());
            log << "  member " << i << ": " << m.config.hidden_layers << "x" << m.config.hidden_units << " "
                << to_string(m.config.activation) << ", " << count << " parameters\n";
        }
        if (ctx_.is_bound(Role::model_spec))
            r.artifacts[Role::model_spec] = ctx_.path(Role::model_spec);
        r.summary = {{"members", task.members.size()}};
    }

    void run_train(const TaskDocument& doc, ExecutionResult& r, std::ostringstream& log)
    {
        const auto task = parse_train_task(doc);
        const auto data_path = require(task.dataset, Role::dataset, false);
        const auto spec_path = require(task.model_spec, Role::model_spec, false);
        const auto out_dir = sandbox_.check(task.ensemble_dir, Sandbox::Access::write);

        nlohmann::json spec_json;
        try {
            spec_json = nlohmann::json::parse(sandbox_.read_text(spec_path));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::corrupt_artifact, "model spec '" + spec_path.string() + "': " + e.what());
        }
        const auto model = parse_model_task(task_document_from_json(spec_json));
        const auto data = load_csv(data_path);
        const auto splits = split(data, task.fractions, task.split_seed);
        const auto norm = fit_normalizer(splits.train);
        log << "train: " << splits.train.size() << " / " << splits.validation.size() << " / " << splits.test.size()
            << " points (split seed " << task.split_seed << ")\n";

        std::vector<MemberSpec> specs;
        for (std::size_t i = 0; i < model.members.size(); ++i) {
            TrainConfig tc = task.train;
            tc.seed = model.members[i].seed;
            specs.push_back({model.members[i].config, tc, "member " + std::to_string(i)});
        }
        const auto ens = train_ensemble(splits, norm, specs, options_.jobs);
        for (std::size_t i = 0; i < ens.members.size(); ++i) {
            const auto& h = ens.members[i].history;
            log << "  member " << i << ": best epoch " << h.best_epoch << " of " << h.epochs_run() << ", val NLL "
                << format_g17(h.val_loss.at(static_cast<std::size_t>(h.best_epoch))) << "\n";
        }
        save_ensemble(ens, out_dir);
        const nlohmann::json split_info{
            {"fractions", {task.fractions.train, task.fractions.validation, task.fractions.test}},
            {"seed", task.split_seed},
            {"dataset_digest", content_digest(sandbox_.read_text(data_path))}};
        sandbox_.write_text(out_dir / "split.json", split_info.dump(2) + "\n");
        r.artifacts[Role::ensemble_dir] = out_dir;
        r.summary = {{"members", ens.size()}, {"train_points", splits.train.size()}};
    }

    void run_evaluate(const TaskDocument& doc, ExecutionResult& r, std::ostringstream& log)
    {
        const auto task = parse_evaluate_task(doc);
        const auto data_path = require(task.dataset, Role::dataset, false);
        const auto ens_dir = require(task.ensemble_dir, Role::ensemble_dir, true);
        require(ens_dir / "manifest.json", Role::ensemble_dir, false);
        const auto out_dir = sandbox_.check(task.report_dir, Sandbox::Access::write);
        for (const auto& s : task.slices)
            if (s.reference_csv)
                sandbox_.check(*s.reference_csv, Sandbox::Access::read);

        const auto ens = load_ensemble(ens_dir);
        nlohmann::json split_info;
        try {
            split_info = nlohmann::json::parse(sandbox_.read_text(ens_dir / "split.json"));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::corrupt_artifact, std::string("split.json: ") + e.what());
        }
        const auto& f = split_info.at("fractions");
        const SplitFractions fractions{f[0].get<double>(), f[1].get<double>(), f[2].get<double>()};
        const auto data = load_csv(data_path);
        const auto splits = split(data, fractions, split_info.at("seed").get<std::uint64_t>());

        EvaluationReport report;
        const std::pair<const Dataset*, const char*> parts[] = {
            {&splits.train, "train"}, {&splits.validation, "validation"}, {&splits.test, "test"}};
        nlohmann::json metrics = nlohmann::json::object();
        for (const auto& [ds, label] : parts) {
            if (ds->empty())
                continue;
            report.splits.push_back(evaluate_model(ens, *ds, label));
            const auto& m = report.splits.back().metrics;
            nlohmann::json entry{{"n", m.n}};
            for (const auto& name : task.metrics) {
                if (name == "rmse")
                    entry["rmse"] = m.rmse;
                else if (name == "mape")
                    entry["mape"] = m.mape;
                else if (name == "rmspe")
                    entry["rmspe"] = m.rmspe;
                else if (name == "ratio")
                    entry["ratio"] = {{"mean", m.ratio.mean}, {"std", m.ratio.std}, {"inside_frac", m.ratio.inside_frac}};
            }
            metrics[label] = entry;
            log << "evaluate " << label << ": n=" << m.n << " rmse=" << format_g17(m.rmse) << "\n";
        }
        if (!task.slices.empty())
            report.slices = evaluate_slices(ens, task.slices, task.level);
        export_report(report, out_dir);
        sandbox_.write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
        r.artifacts[Role::report_dir] = out_dir;
        r.summary = {{"metrics", metrics}};
    }

    ProjectContext& ctx_;
    Sandbox& sandbox_;
    std::vector<FaultPlan> faults_;
    EngineOptions options_;
    std::map<std::string, int> attempts_;
};

} // namespace autoduct::agents
