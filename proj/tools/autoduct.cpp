// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: data operations, tuning, training, agent runs,
// the trial harness and evaluation.

#include "autoduct/autoduct.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace autoduct;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitFindings = 2;

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    detail::write_text_file(path, text);
}

SplitFractions parse_fractions(const std::string& text)
{
    std::vector<double> v;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        v.push_back(std::stod(item));
    if (v.size() != 3)
        throw Error(Errc::invalid_argument, "--fracs needs three comma-separated values");
    return {v[0], v[1], v[2]};
}

/// Flags shared by the commands that build a RunConfig. Only flags given on
/// the command line override the config file.
struct ConfigFlags {
    std::string config_file;
    std::string workspace;
    std::string data;
    std::size_t n = 0;
    std::uint64_t data_seed = 0;
    double noise = 1.0;
    std::string fracs;
    std::uint64_t split_seed = 0;
    std::string mode;
    std::string planner;
    std::string endpoint;
    std::string model;
    int ensemble_size = 0;
    int epochs = 0;
    int patience = 0;
    int batch_size = 0;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::vector<std::string> faults;
    int max_retries = 0;
    int max_steps = 0;
    bool no_slices = false;
    std::size_t slice_points = 0;
    bool verbose_prompts = false;

    std::vector<std::pair<std::string, CLI::Option*>> opts;

    void add(CLI::App* app, bool agent_flags)
    {
        auto reg = [&](CLI::Option* o) { opts.emplace_back(o->get_name(), o); };
        app->add_option("--config", config_file, "JSON run configuration; flags take precedence")->check(CLI::ExistingFile);
        reg(app->add_option("--workspace", workspace, "workspace directory"));
        reg(app->add_option("--data", data, "dataset CSV (synthetic data when omitted)")->check(CLI::ExistingFile));
        reg(app->add_option("--n", n, "synthetic sample count"));
        reg(app->add_option("--data-seed", data_seed, "synthetic generator seed"));
        reg(app->add_option("--noise", noise, "synthetic noise scale"));
        reg(app->add_option("--fracs", fracs, "split fractions, e.g. 0.72,0.18,0.10"));
        reg(app->add_option("--split-seed", split_seed, "split shuffle seed"));
        reg(app->add_option("--ensemble-size", ensemble_size, "ensemble members"));
        reg(app->add_option("--epochs", epochs, "maximum training epochs"));
        reg(app->add_option("--patience", patience, "early-stopping patience"));
        reg(app->add_option("--batch-size", batch_size, "mini-batch size"));
        reg(app->add_option("--seed", seed, "ensemble base seed"));
        reg(app->add_option("--jobs", jobs, "concurrent workers"));
        reg(app->add_flag("--no-slices", no_slices, "skip the slice evaluation"));
        reg(app->add_option("--slice-points", slice_points, "points per slice grid"));
        if (!agent_flags)
            return;
        reg(app->add_option("--mode", mode, "multi | react | direct")
                ->check(CLI::IsMember({"multi", "multi_agent", "react", "direct"})));
        reg(app->add_option("--planner", planner, "scripted | llm")->check(CLI::IsMember({"scripted", "llm"})));
        reg(app->add_option("--endpoint", endpoint, "chat-completion base URL for the llm planner"));
        reg(app->add_option("--model", model, "model name for the llm planner"));
        reg(app->add_option("--inject-fault", faults, "fault plan, e.g. stage=evaluate,attempt=1 (repeatable)"));
        reg(app->add_option("--max-retries", max_retries, "executions per stage before giving up"));
        reg(app->add_option("--max-steps", max_steps, "ReAct step budget"));
        reg(app->add_flag("--verbose-prompts", verbose_prompts, "store full prompts in the workspace"));
    }

    [[nodiscard]] bool given(const std::string& name) const
    {
        for (const auto& [n, o] : opts)
            if (n == name)
                return o->count() > 0;
        return false;
    }

    [[nodiscard]] RunConfig build() const
    {
        RunConfig c;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            try {
                c = run_config_from_json(nlohmann::json::parse(in));
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::invalid_argument, "config '" + config_file + "': " + e.what());
            }
        }
        if (given("--workspace")) c.workspace = workspace;
        if (given("--data")) c.dataset_csv = fs::path(data);
        if (given("--n")) c.synthetic.count = n;
        if (given("--data-seed")) c.synthetic.seed = data_seed;
        if (given("--noise")) c.synthetic.noise_scale = noise;
        if (given("--fracs")) c.fractions = parse_fractions(fracs);
        if (given("--split-seed")) c.split_seed = split_seed;
        if (given("--mode")) c.mode = normalize_mode(mode);
        if (given("--planner")) c.planner = planner;
        if (given("--endpoint")) c.endpoint = endpoint;
        if (given("--model")) c.model = model;
        if (given("--ensemble-size")) c.ensemble_size = ensemble_size;
        if (given("--epochs")) c.train.epochs = epochs;
        if (given("--patience")) c.train.patience = patience;
        if (given("--batch-size")) c.train.batch_size = batch_size;
        if (given("--seed")) c.seed = seed;
        if (given("--jobs")) c.jobs = jobs;
        if (given("--no-slices")) c.slices = !no_slices;
        if (given("--slice-points")) c.slice_points = slice_points;
        if (given("--inject-fault")) {
            c.faults.clear();
            for (const auto& f : faults)
                c.faults.push_back(agents::parse_fault_spec(f));
        }
        if (given("--max-retries")) c.max_retries = max_retries;
        if (given("--max-steps")) c.max_steps = max_steps;
        if (given("--verbose-prompts")) c.verbose_prompts = verbose_prompts;
        return c;
    }
};

Dataset load_or_generate(const RunConfig& c)
{
    return c.dataset_csv ? load_csv(*c.dataset_csv) : generate_synthetic(c.synthetic);
}

void print_outcome(const agents::RunOutcome& out, const fs::path& workspace)
{
    if (out.halted) {
        std::cout << "halted; resume with --resume (workspace " << workspace.string() << ")\n";
        return;
    }
    std::cout << agents::RunSession::render_report_text(out.report);
    std::cout << "report: " << (workspace / "artifacts" / "report" / "report.json").string() << "\n";
}

std::string version_text()
{
    std::ostringstream s;
    s << "autoduct " << AUTODUCT_VERSION << "\n"
      << "state format " << agents::kStateFormatVersion << ", task format " << agents::kTaskFormatVersion
      << ", ensemble format " << kEnsembleFormatVersion << ", network format " << kNetworkFormatVersion
      << ", prompt templates " << agents::kPromptTemplateVersion << "\n";
    return s.str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Deep-ensemble CHF regression pipeline driven by agent loops"};
    app.require_subcommand(0, 1);
    bool show_version = false;
    app.add_flag("--version", show_version, "print artifact and schema versions");

    // data
    auto* data = app.add_subcommand("data", "generate, validate, split and slice datasets");
    data->require_subcommand(1);
    std::string out_path, in_path, fracs = "0.72,0.18,0.10";
    std::size_t gen_n = 5000, slice_points = 101;
    std::uint64_t gen_seed = 0, split_seed = 0;
    double gen_noise = 1.0;
    auto* gen = data->add_subcommand("gen", "write a synthetic CSV");
    gen->add_option("--n", gen_n, "rows");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--noise", gen_noise, "noise scale");
    gen->add_option("--out", out_path, "output CSV")->required();
    auto* val = data->add_subcommand("validate", "report values outside the reference envelope");
    val->add_option("--in", in_path, "CSV file")->required()->check(CLI::ExistingFile);
    auto* spl = data->add_subcommand("split", "write train/validation/test CSVs");
    spl->add_option("--in", in_path, "CSV file")->required()->check(CLI::ExistingFile);
    spl->add_option("--fracs", fracs, "fractions");
    spl->add_option("--seed", split_seed, "shuffle seed");
    spl->add_option("--out-dir", out_path, "output directory")->required();
    auto* sli = data->add_subcommand("slices", "write the reference slice specs (JSON) or one grid (CSV)");
    int slice_id = 0;
    sli->add_option("--out", out_path, "output file")->required();
    sli->add_option("--points", slice_points, "points per grid");
    sli->add_option("--grid", slice_id, "write the grid CSV of this slice id instead");

    // tune
    auto* tune = app.add_subcommand("tune", "Bayesian hyperparameter search over parallel runs");
    ConfigFlags tune_flags;
    tune_flags.add(tune, false);
    int runs = 5, sobol = 16, bo = 32, top_k = 15;
    std::size_t candidates = 2048;
    bool tune_resume = false;
    tune->add_option("--runs", runs, "independent runs");
    tune->add_option("--sobol", sobol, "Sobol trials per run");
    tune->add_option("--bo", bo, "BO trials per run");
    tune->add_option("--top-k", top_k, "configs in the manifest");
    tune->add_option("--candidates", candidates, "EI candidates per proposal");
    tune->add_option("--out-dir", out_path, "output directory")->required();
    tune->add_flag("--resume", tune_resume, "reuse results from an existing trial log");

    // train
    auto* trn = app.add_subcommand("train", "train an ensemble (default recipe or a top-k manifest)");
    ConfigFlags train_flags;
    train_flags.add(trn, false);
    std::string manifest;
    trn->add_option("--manifest", manifest, "top-k manifest from `tune`")->check(CLI::ExistingFile);
    trn->add_option("--out-dir", out_path, "ensemble directory")->required();

    // agent
    auto* agent = app.add_subcommand("agent", "run the pipeline under an agent loop");
    ConfigFlags agent_flags;
    agent_flags.add(agent, true);
    bool resume = false;
    std::string halt_after;
    agent->add_flag("--resume", resume, "continue from the persisted state");
    agent->add_option("--halt-after", halt_after, "stop once this stage is done")->group("");

    // trials
    auto* trials = app.add_subcommand("trials", "repeated isolated runs with aggregate statistics");
    ConfigFlags trial_flags;
    trial_flags.add(trials, true);
    int trial_n = 10, fault_runs = 0;
    auto* trial_n_opt = trials->add_option("--trials", trial_n, "number of runs");
    auto* fault_runs_opt = trials->add_option("--fault-runs", fault_runs, "runs (from the first) that get the fault plan");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "metrics, plots and slices for a trained ensemble");
    std::string ens_dir, slices_file;
    double level = 0.9545;
    bool whole = false;
    eval->add_option("--ensemble", ens_dir, "ensemble directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--data", in_path, "dataset CSV")->check(CLI::ExistingFile);
    eval->add_option("--slices", slices_file, "slice spec JSON")->check(CLI::ExistingFile);
    eval->add_option("--level", level, "interval level for slice bands");
    eval->add_option("--out-dir", out_path, "report directory")->required();
    eval->add_flag("--whole", whole, "evaluate the whole file instead of re-creating the training split");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitError;
    }

    try {
        if (show_version) {
            std::cout << version_text();
            return kExitOk;
        }
        if (gen->parsed()) {
            const auto ds = generate_synthetic({gen_n, gen_noise, gen_seed, {}});
            fs::path out(out_path);
            if (out.has_parent_path())
                fs::create_directories(out.parent_path());
            save_csv(ds, out);
            std::cout << "wrote " << ds.size() << " rows to " << out.string() << "\n";
            return kExitOk;
        }
        if (val->parsed()) {
            const auto report = validate_ranges(load_csv(in_path));
            std::cout << report.to_text();
            return report.violations() == 0 ? kExitOk : kExitFindings;
        }
        if (spl->parsed()) {
            const auto s = split(load_csv(in_path), parse_fractions(fracs), split_seed);
            fs::create_directories(out_path);
            save_csv(s.train, fs::path(out_path) / "train.csv");
            save_csv(s.validation, fs::path(out_path) / "validation.csv");
            save_csv(s.test, fs::path(out_path) / "test.csv");
            std::cout << "train " << s.train.size() << ", validation " << s.validation.size() << ", test "
                      << s.test.size() << "\n";
            return kExitOk;
        }
        if (sli->parsed()) {
            const auto specs = reference_slices(slice_points);
            if (slice_id == 0) {
                write_file(out_path, slices_to_json(specs).dump(2) + "\n");
                std::cout << "wrote " << specs.size() << " slice specs to " << out_path << "\n";
                return kExitOk;
            }
            const auto it = std::find_if(specs.begin(), specs.end(), [&](const auto& s) { return s.id == slice_id; });
            if (it == specs.end())
                throw Error(Errc::invalid_argument, "no slice with id " + std::to_string(slice_id));
            const auto grid = build_slice_grid(*it);
            if (fs::path(out_path).has_parent_path())
                fs::create_directories(fs::path(out_path).parent_path());
            save_csv(grid, out_path);
            std::cout << "wrote " << grid.size() << " grid points to " << out_path << "\n";
            return kExitOk;
        }
        if (tune->parsed()) {
            const auto cfg = tune_flags.build();
            const auto data_set = load_or_generate(cfg);
            const auto splits = split(data_set, cfg.fractions, cfg.split_seed);
            const auto norm = fit_normalizer(splits.train);
            TrialBudget budget{cfg.train.epochs, cfg.train.patience, cfg.seed};
            const auto evaluator = make_training_evaluator(splits, norm, budget);

            fs::create_directories(out_path);
            const auto log_path = fs::path(out_path) / "trials.jsonl";
            BoHooks hooks;
            if (tune_resume && fs::exists(log_path))
                hooks.resume = TrialLog::load(log_path);
            else if (fs::exists(log_path))
                fs::remove(log_path);
            TrialLog log(log_path);
            std::mutex print_mutex;
            hooks.on_result = [&](const TrialResult& r) {
                log.append(r);
                std::lock_guard lock(print_mutex);
                std::cerr << "run " << r.config.run_id << " trial " << r.config.trial_id << " ("
                          << to_string(r.config.origin) << "): "
                          << (r.status == TrialStatus::ok ? format_fixed(r.val_rmse, 2) : std::string("diverged"))
                          << "\n";
            };
            BoSettings settings;
            settings.n_sobol = sobol;
            settings.n_bo = bo;
            settings.candidate_count = candidates;
            std::vector<std::uint64_t> seeds;
            for (int i = 0; i < runs; ++i)
                seeds.push_back(derive_seed(cfg.seed, 0x7000 + static_cast<std::uint64_t>(i)));
            const auto board = run_parallel_bo(SearchSpace::standard(), settings, seeds, evaluator, cfg.jobs, hooks);
            // The log holds exactly the board, in run and trial order.
            {
                std::string text;
                auto ordered = board.results();
                std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
                    return std::pair(a.config.run_id, a.config.trial_id) < std::pair(b.config.run_id, b.config.trial_id);
                });
                for (const auto& r : ordered)
                    text += to_json(r).dump() + "\n";
                write_file(log_path, text);
            }
            nlohmann::json leaderboard = nlohmann::json::array();
            for (const auto& r : board.sorted())
                leaderboard.push_back(to_json(r));
            write_file(fs::path(out_path) / "leaderboard.json", leaderboard.dump(2) + "\n");
            const auto top = select_top_k(board, static_cast<std::size_t>(top_k));
            nlohmann::json configs = nlohmann::json::array();
            for (const auto& tc : top)
                configs.push_back({{"run_id", tc.run_id}, {"trial_id", tc.trial_id}, {"config", to_json(tc)}});
            const nlohmann::json manifest_json{{"k", top_k},
                                               {"budget", {{"epochs", budget.epochs}, {"patience", budget.patience}, {"seed", budget.seed}}},
                                               {"configs", configs}};
            write_file(fs::path(out_path) / "top_k.json", manifest_json.dump(2) + "\n");
            std::cout << board.size() << " trials; best validation RMSE "
                      << format_fixed(board.best() ? board.best()->val_rmse : 0.0, 2) << "; manifest "
                      << (fs::path(out_path) / "top_k.json").string() << "\n";
            return kExitOk;
        }
        if (trn->parsed()) {
            const auto cfg = train_flags.build();
            cfg.validate();
            const auto data_set = load_or_generate(cfg);
            const auto splits = split(data_set, cfg.fractions, cfg.split_seed);
            const auto norm = fit_normalizer(splits.train);
            std::vector<MemberSpec> specs;
            if (!manifest.empty()) {
                std::ifstream in(manifest);
                const auto m = nlohmann::json::parse(in);
                std::vector<TrialConfig> configs;
                for (const auto& c : m.at("configs")) {
                    auto tc = trial_config_from_json(c.at("config"));
                    tc.run_id = c.at("run_id").get<int>();
                    tc.trial_id = c.at("trial_id").get<int>();
                    configs.push_back(tc);
                }
                specs = member_specs_from_trials(configs, {cfg.train.epochs, cfg.train.patience, cfg.seed});
            } else {
                for (int i = 0; i < cfg.ensemble_size; ++i) {
                    TrainConfig tc = cfg.train;
                    tc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
                    specs.push_back({cfg.mlp, tc, "member " + std::to_string(i)});
                }
            }
            const auto ens = train_ensemble(splits, norm, specs, cfg.jobs);
            save_ensemble(ens, out_path);
            const nlohmann::json split_info{
                {"fractions", {cfg.fractions.train, cfg.fractions.validation, cfg.fractions.test}},
                {"seed", cfg.split_seed}};
            write_file(fs::path(out_path) / "split.json", split_info.dump(2) + "\n");
            std::cout << "trained " << ens.size() << " members into " << out_path << "\n";
            return kExitOk;
        }
        if (agent->parsed()) {
            const auto cfg = agent_flags.build();
            std::optional<agents::Stage> halt;
            if (!halt_after.empty())
                halt = agents::stage_from_string(halt_after);
            const auto out = run_pipeline(cfg, resume, halt);
            print_outcome(out, cfg.workspace);
            return kExitOk;
        }
        if (trials->parsed()) {
            auto cfg = trial_flags.build();
            if (trial_n_opt->count() > 0)
                cfg.trials = trial_n;
            if (fault_runs_opt->count() > 0)
                cfg.fault_runs = fault_runs;
            std::vector<agents::FaultPlan> plan = cfg.faults;
            cfg.faults.clear();
            const auto report = run_trials(cfg, plan, [](const TrialRun& r) {
                std::cerr << "trial " << r.index << ": "
                          << (r.summary.completed ? "completed, test RMSE " + format_fixed(r.summary.test_rmse, 1)
                                                  : "failed: " + r.error)
                          << ", errors " << r.summary.error_count << ", tokens " << r.summary.tokens << "\n";
            });
            fs::create_directories(cfg.workspace);
            write_file(cfg.workspace / "trials.json", to_json(report).dump(2) + "\n");
            const auto table = render_trial_report(report);
            write_file(cfg.workspace / "trials.txt", table);
            std::cout << table;
            return kExitOk;
        }
        if (eval->parsed()) {
            const auto ens = load_ensemble(ens_dir);
            EvaluationReport report;
            if (!in_path.empty()) {
                const auto data_set = load_csv(in_path);
                const auto split_file = fs::path(ens_dir) / "split.json";
                if (!whole && fs::exists(split_file)) {
                    const auto info = detail::read_json_file(split_file, Errc::corrupt_artifact);
                    const auto& f = info.at("fractions");
                    const auto s = split(data_set, {f[0].get<double>(), f[1].get<double>(), f[2].get<double>()},
                                         info.at("seed").get<std::uint64_t>());
                    for (const auto& [ds, label] : {std::pair{&s.train, "train"}, std::pair{&s.validation, "validation"},
                                                    std::pair{&s.test, "test"}})
                        if (!ds->empty())
                            report.splits.push_back(evaluate_model(ens, *ds, label));
                } else {
                    report.splits.push_back(evaluate_model(ens, data_set, "test"));
                }
            }
            if (!slices_file.empty())
                report.slices = evaluate_slices(ens, load_slice_specs(slices_file), level);
            const auto files = export_report(report, out_path);
            for (const auto& m : report.splits)
                std::cout << m.metrics.split << ": n=" << m.metrics.n << " rmse=" << format_fixed(m.metrics.rmse, 2)
                          << " mape=" << format_fixed(m.metrics.mape, 2) << "% rmspe=" << format_fixed(m.metrics.rmspe, 2)
                          << "%\n";
            std::cout << "wrote " << files.size() << " files to " << out_path << "\n";
            return kExitOk;
        }
        std::cout << app.help();
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
