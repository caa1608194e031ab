// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one check per criterion, each printed as a single
// [PASS]/[FAIL] line. `--only N` runs one criterion; the exit code is
// non-zero when any selected criterion fails.

#include "oracles.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace autoduct;
using testing_support::TempDir;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(double v, const char* spec = "%.3g")
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// -- 1: variance decomposition ----------------------------------------------

Verdict variance_decomposition()
{
    Verdict v;
    Rng rng(0xA1);
    double worst_identity = 0.0, worst_mc = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t m = 1 + rng.below(32);
        std::vector<GaussianPrediction> members;
        for (std::size_t i = 0; i < m; ++i)
            members.push_back({rng.uniform(-50, 50), std::exp(rng.uniform(-4, 5))});
        const auto ep = aggregate(members);
        worst_identity =
            std::max(worst_identity, oracles::relative_error(ep.aleatory_var + ep.epistemic_var, ep.total_var));
        const double mc = oracles::monte_carlo_mixture_variance(members, 1'000'000, 0xA100 + t);
        worst_mc = std::max(worst_mc, oracles::relative_error(mc, ep.total_var));
    }
    v.require(worst_identity <= 1e-12, "identity error " + fmt(worst_identity));
    v.require(worst_mc <= 0.01, "Monte-Carlo error " + fmt(worst_mc));
    v.detail = "1000 ensembles, max identity rel " + fmt(worst_identity) + ", max MC rel " + fmt(worst_mc) +
               (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 2: gradient check ------------------------------------------------------

Verdict gradient_correctness()
{
    Verdict v;
    Rng rng(0xA2);
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    std::set<Activation> seen;
    for (int t = 0; t < 20; ++t) {
        const auto act = kAllActivations[static_cast<std::size_t>(t) % std::size(kAllActivations)];
        seen.insert(act);
        const MLPConfig cfg{5, 1 + static_cast<int>(rng.below(3)), 3 + static_cast<int>(rng.below(8)), act, 0.0};
        const auto p = init_params(cfg, rng.next());
        const auto batch = oracles::random_batch(5, 2 + static_cast<int>(rng.below(8)), rng);
        const auto check = oracles::check_gradient(p, cfg, batch);
        worst = std::max(worst, check.rel_max_error);
        checked += check.checked;
        skipped += check.skipped;
    }
    v.require(worst <= 1e-4, "max relative error " + fmt(worst));
    v.require(seen.size() == std::size(kAllActivations), "not every activation covered");
    v.require(skipped * 20 < checked, "too many kink-crossing coordinates skipped");
    v.detail = "20 pairs, 6 activations, max rel " + fmt(worst) + " over " + std::to_string(checked) +
               " coordinates (" + std::to_string(skipped) + " at kinks)" + (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 3: calibration ---------------------------------------------------------

Verdict uq_calibration()
{
    Verdict v;
    const auto data = generate_synthetic({5000, 1.0, 0xA3, {}});
    const auto s = split(data, {0.8, 0.2, 0.0}, 3);
    const auto norm = fit_normalizer(s.train);
    std::vector<MemberSpec> specs;
    for (std::uint64_t i = 0; i < 5; ++i) {
        TrainConfig t{3e-3, 1e-4, 128, 250, 30, derive_seed(0xA3, i)};
        specs.push_back({{5, 3, 64, Activation::gelu, 0.0}, t, "member " + std::to_string(i)});
    }
    const auto ens = train_ensemble(s, norm, specs, 1);

    const auto held_out = generate_synthetic({10000, 1.0, 0xA3A3, {}});
    const auto preds = predict(ens, held_out.points);
    std::size_t inside = 0;
    std::vector<double> y, mu;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double target = *held_out.points[i].chf;
        const auto band = interval(preds[i], 0.95);
        inside += target >= band.lo && target <= band.hi;
        y.push_back(target);
        mu.push_back(preds[i].mean);
    }
    const double coverage = static_cast<double>(inside) / static_cast<double>(preds.size());
    double mean = 0.0, var = 0.0;
    for (double t : y)
        mean += t / static_cast<double>(y.size());
    for (double t : y)
        var += (t - mean) * (t - mean) / static_cast<double>(y.size());
    const double err = rmse(y, mu);
    v.require(coverage >= 0.90 && coverage <= 0.98, "coverage " + fmt(coverage));
    v.require(err < std::sqrt(var), "RMSE not below target sd");
    v.detail = "95% coverage " + fmt(100 * coverage, "%.2f") + "% on 10000 points, test RMSE " + fmt(err, "%.1f") +
               " vs target sd " + fmt(std::sqrt(var), "%.1f") + (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 4: BO against Sobol ----------------------------------------------------

Verdict bo_effectiveness()
{
    Verdict v;
    const auto data = generate_synthetic({800, 1.0, 0xA4, {}});
    const auto s = split(data, {0.72, 0.18, 0.10}, 4);
    const auto norm = fit_normalizer(s.train);
    const auto evaluator = make_training_evaluator(s, norm, {12, 4, 0xA4});
    const auto space = SearchSpace::standard();

    std::vector<double> bo_best, sobol_best;
    std::size_t distinct = 0;
    for (std::uint64_t h = 0; h < 5; ++h) {
        std::vector<std::uint64_t> seeds;
        for (std::uint64_t r = 0; r < 5; ++r)
            seeds.push_back(derive_seed(0xA400 + h, r));
        BoSettings bo;
        bo.n_sobol = 16;
        bo.n_bo = 32;
        BoSettings sobol = bo;
        sobol.n_sobol = 48;
        sobol.n_bo = 0;
        const auto a = run_parallel_bo(space, bo, seeds, evaluator, 1, {});
        const auto b = run_parallel_bo(space, sobol, seeds, evaluator, 1, {});
        bo_best.push_back(a.best()->val_rmse);
        sobol_best.push_back(b.best()->val_rmse);
        if (h == 0) {
            const auto top = select_top_k(a, 15);
            for (std::size_t i = 0; i < top.size(); ++i) {
                bool unique = true;
                for (std::size_t k = 0; k < i; ++k)
                    unique = unique && !top[i].same_assignment(top[k]);
                distinct += unique;
            }
        }
    }
    const double m_bo = median(bo_best), m_sobol = median(sobol_best);
    v.require(m_bo <= m_sobol, "BO median above Sobol median");
    v.require(distinct == 15, "top-15 has " + std::to_string(distinct) + " distinct configs");
    v.detail = "median best validation RMSE: BO " + fmt(m_bo, "%.2f") + " vs Sobol " + fmt(m_sobol, "%.2f") +
               " over 5 seeds; top-15 distinct " + std::to_string(distinct) + (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 5: Sobol and EI oracles ------------------------------------------------

Verdict sobol_and_ei()
{
    Verdict v;
    const auto ours = sobol_points(5, 8);
    const auto ref = oracles::reference_sobol(5, 8);
    v.require(ours == ref, "Sobol prefix differs from the reference recurrence");
    Rng rng(0xA5);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const double mean = rng.uniform(-1, 1), sd = rng.uniform(0.01, 0.3), inc = rng.uniform(-1, 1);
        const double mc = oracles::monte_carlo_improvement(mean, sd, inc, 1'000'000, 0xA500 + t);
        worst = std::max(worst, std::abs(expected_improvement(mean, sd, inc) - mc));
    }
    v.require(worst <= 1e-3, "EI error " + fmt(worst));
    v.detail = "8 Sobol points exact; EI max abs error " + fmt(worst) + " over 20 triples" +
               (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 6: multi-agent trace ---------------------------------------------------

Verdict multi_agent_trace()
{
    Verdict v;
    TempDir dir;
    auto cfg = testing_support::quick_config(dir / "one");
    cfg.faults = {agents::FaultPlan{"evaluate", 1, false}};
    const auto one = run_pipeline(cfg);
    v.require(one.completed && one.progress.tune_cycles == 1, "one fault: " + std::to_string(one.progress.tune_cycles) +
                                                                  " tune cycles");

    cfg.workspace = dir / "none";
    cfg.faults.clear();
    const auto none = run_pipeline(cfg);
    v.require(none.completed && none.progress.tune_cycles == 0, "no fault: tune cycles present");

    cfg.workspace = dir / "all";
    cfg.faults = {agents::FaultPlan{"evaluate", 1, true}};
    int errors = -1;
    bool exhausted = false;
    try {
        (void)run_pipeline(cfg);
    } catch (const Error& e) {
        exhausted = e.code() == Errc::stage_exhausted;
        agents::Sandbox sb(cfg.workspace);
        errors = agents::load_state(sb, cfg.workspace / "state.json").total_errors();
    }
    v.require(exhausted && errors == 3, "persistent fault: error count " + std::to_string(errors));
    v.detail = "tune cycles 1 / 0, persistent fault gives StageExhausted with " + std::to_string(errors) + " errors" +
               (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 7: ReAct trace ---------------------------------------------------------

class WindowProbe : public agents::Planner {
public:
    explicit WindowProbe(agents::Planner& inner) : inner_(inner) {}
    [[nodiscard]] std::string id() const override { return inner_.id(); }
    agents::PlannerReply complete(const agents::PlannerRequest& r) override
    {
        if (r.purpose == agents::Purpose::think)
            largest = std::max(largest, r.context.at("window").size());
        return inner_.complete(r);
    }
    std::size_t largest = 0;

private:
    agents::Planner& inner_;
};

Verdict react_trace()
{
    Verdict v;
    TempDir dir;
    auto cfg = testing_support::quick_config(dir / "ws");
    cfg.mode = "react";
    cfg.window = 4;
    cfg.faults = {agents::FaultPlan{"evaluate", 1, false}};
    agents::ScriptedPlanner inner(recipe_from(cfg));
    WindowProbe probe(inner);
    const auto out = run_pipeline(cfg, false, std::nullopt, &probe);
    const auto& steps = out.progress.transcript;
    std::vector<std::size_t> errors;
    for (std::size_t i = 0; i < steps.size(); ++i)
        if (steps[i].observation.rfind("error:", 0) == 0)
            errors.push_back(i);
    v.require(out.completed, "run did not complete");
    v.require(errors.size() == 1, std::to_string(errors.size()) + " error observations");
    v.require(!errors.empty() && errors[0] + 1 < steps.size() && steps[errors[0] + 1].action.rfind("patch_task", 0) == 0,
              "error not followed by a patch action");
    v.require(out.progress.patch_actions == 1, std::to_string(out.progress.patch_actions) + " patch actions");
    v.require(probe.largest <= cfg.window, "window reached " + std::to_string(probe.largest));
    v.detail = std::to_string(steps.size()) + " steps, 1 error observation then patch, largest window " +
               std::to_string(probe.largest) + " of " + std::to_string(cfg.window) + (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 8: trial harness -------------------------------------------------------

Verdict trial_harness()
{
    Verdict v;
    TempDir dir;
    auto cfg = testing_support::quick_config(dir / "trials");
    cfg.trials = 10;
    cfg.fault_runs = 3;
    const auto report = run_trials(cfg, {agents::FaultPlan{"evaluate", 1, false}});
    const auto& st = report.stats;
    v.require(st.completed_without_error == 7 && st.completed_with_one_error == 3 &&
                  st.completed_with_two_or_more_errors == 0 && st.failed_to_complete == 0,
              "buckets differ");
    v.require(st.avg_rmse && st.min_rmse && st.max_rmse && *st.min_rmse <= *st.avg_rmse && *st.avg_rmse <= *st.max_rmse,
              "RMSE statistics missing or unordered");
    v.require(st.avg_tokens > 0, "no token totals");

    static const char* labels[] = {"Metric",
                                   "Average CHF RMSE on testing data",
                                   "Minimum CHF RMSE on testing data",
                                   "Maximum CHF RMSE on testing data",
                                   "Completed without error",
                                   "Completed with one error",
                                   "Completed with >= 2 error",
                                   "Fail to complete",
                                   "Average token usage"};
    std::istringstream table(render_trial_report(report));
    std::size_t row = 0;
    for (std::string line; std::getline(table, line); ++row)
        v.require(row < std::size(labels) && line.rfind(labels[row], 0) == 0, "table row " + std::to_string(row));
    v.require(row == std::size(labels), "table has " + std::to_string(row) + " rows");
    const auto j = to_json(report);
    for (const char* key : {"average_test_rmse", "minimum_test_rmse", "maximum_test_rmse", "completed_without_error",
                            "completed_with_one_error", "completed_with_two_or_more_errors", "failed_to_complete",
                            "average_token_usage"})
        v.require(j.at("stats").contains(key), std::string("missing field ") + key);
    v.detail = "buckets 0:" + std::to_string(st.completed_without_error) + " 1:" +
               std::to_string(st.completed_with_one_error) + " >=2:" +
               std::to_string(st.completed_with_two_or_more_errors) + " fail:" + std::to_string(st.failed_to_complete) +
               ", RMSE avg " + fmt(st.avg_rmse.value_or(0), "%.1f") + ", avg tokens " + format_thousands(st.avg_tokens) +
               (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 9: metrics oracles -----------------------------------------------------

Verdict metrics_oracles()
{
    Verdict v;
    Rng rng(0xA9);
    double worst = 0.0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 1 + rng.below(500);
        std::vector<double> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(50, 16000);
            p[i] = y[i] * rng.uniform(0.5, 1.5);
        }
        worst = std::max({worst, oracles::relative_error(rmse(y, p), oracles::brute_rmse(y, p)),
                          oracles::relative_error(mape(y, p), oracles::brute_mape(y, p)),
                          oracles::relative_error(rmspe(y, p), oracles::brute_rmspe(y, p))});
    }
    v.require(worst <= 1e-12, "randomized relative error " + fmt(worst));
    const std::vector<double> y{100, 200}, p{110, 180};
    v.require(mape(y, p) == 10.0, "MAPE fixture " + fmt(mape(y, p), "%.17g"));
    v.require(rmse(y, p) == std::sqrt(250.0), "RMSE fixture");
    v.require(std::abs(rmspe(y, p) - 10.0) <= 1e-12 * 10.0, "RMSPE fixture");
    v.detail = "500 random fixtures, max rel " + fmt(worst) + "; MAPE {100,200} vs {110,180} = " +
               fmt(mape(y, p), "%.17g") + "%" + (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 10: resume and determinism ---------------------------------------------

Verdict resume_and_determinism()
{
    Verdict v;
    TempDir dir;
    auto cfg = testing_support::quick_config(dir / "full");
    const auto full = run_pipeline(cfg);

    cfg.workspace = dir / "resumed";
    const auto halted = run_pipeline(cfg, false, agents::Stage::training_execution);
    v.require(halted.halted, "run did not halt after training");
    const auto resumed = run_pipeline(cfg, true);
    v.require(resumed.completed && resumed.metrics == full.metrics, "resumed metrics differ");

    cfg.workspace = dir / "again";
    (void)run_pipeline(cfg);
    const auto a = testing_support::read_file(dir / "full/artifacts/report/report.json");
    const auto b = testing_support::read_file(dir / "again/artifacts/report/report.json");
    v.require(!a.empty() && a == b, "reports of identical runs differ");
    v.detail = "resumed test RMSE " + fmt(resumed.test_rmse.value_or(0), "%.6f") + " equals uninterrupted " +
               fmt(full.test_rmse.value_or(0), "%.6f") + "; report.json byte-identical" +
               (v.pass ? "" : " -- " + v.detail);
    return v;
}

// -- 11: slice protocol -----------------------------------------------------

struct ConstantOracleModel {
    [[nodiscard]] std::vector<std::vector<GaussianPrediction>> member_predictions(std::span<const DataPoint> pts) const
    {
        std::vector<std::vector<GaussianPrediction>> out;
        for (const auto& p : pts) {
            const double q = testing_support::clamped_oracle(p);
            out.push_back({{q, 25.0}, {0.9 * q, 16.0}, {1.1 * q, 9.0}});
        }
        return out;
    }
};

Verdict slice_protocol()
{
    Verdict v;
    const auto specs = reference_slices();
    v.require(specs.size() == 8, "expected 8 slices");
    for (std::size_t i = 0; i < specs.size() && i < std::size(oracles::kSourceSlices); ++i) {
        const auto& row = oracles::kSourceSlices[i];
        const char* cells[] = {row.D, row.L, row.P, row.G, row.X};
        const auto& spec = specs[i];
        const auto grid = build_slice_grid(spec);
        const bool mm = spec.varying == Feature::D;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (std::string(cells[f]) == "*") {
                v.require(spec.varying == static_cast<Feature>(f), "slice " + std::to_string(spec.id) + " varying");
                continue;
            }
            for (const auto& p : grid.points)
                if (p.inputs()[f] != oracles::parse_cell(cells[f], f == 0)) {
                    v.require(false, "slice " + std::to_string(spec.id) + " constant " + std::string(kFeatureNames[f]));
                    break;
                }
        }
        v.require(grid.points.front().feature(spec.varying) == oracles::parse_cell(row.lo, mm) &&
                      grid.points.back().feature(spec.varying) == oracles::parse_cell(row.hi, mm),
                  "slice " + std::to_string(spec.id) + " endpoints");
    }

    // Members are evaluated on the full grids, which leave the data envelope.
    std::size_t points = 0;
    const auto report = evaluate_slices(ConstantOracleModel{}, specs);
    for (const auto& s : report.slices)
        for (std::size_t k = 0; k < s.grid.size(); ++k) {
            ++points;
            const bool ok = std::isfinite(s.predictions[k].mean) && std::isfinite(s.bands[k].lo) &&
                            std::isfinite(s.bands[k].hi) && s.bands[k].hi - s.bands[k].lo >= 0.0;
            if (!ok) {
                v.require(false, "slice " + std::to_string(s.spec.id) + " point " + std::to_string(k));
                break;
            }
        }

    // Same check through a trained ensemble.
    const auto data = generate_synthetic({400, 1.0, 0xB1, {}});
    const auto sp = split(data, {}, 1);
    std::vector<MemberSpec> member_specs;
    for (std::uint64_t i = 0; i < 2; ++i)
        member_specs.push_back({{5, 2, 16, Activation::relu, 0.0}, {1e-3, 1e-4, 64, 5, 5, 700 + i}, ""});
    const auto ens = train_ensemble(sp, fit_normalizer(sp.train), member_specs, 1);
    const auto trained = evaluate_slices(ens, specs);
    for (const auto& s : trained.slices)
        for (std::size_t k = 0; k < s.grid.size(); ++k) {
            ++points;
            if (!(std::isfinite(s.predictions[k].mean) && s.bands[k].hi - s.bands[k].lo >= 0.0)) {
                v.require(false, "trained slice " + std::to_string(s.spec.id) + " point " + std::to_string(k));
                break;
            }
        }
    v.detail = "8 grids match the source table; " + std::to_string(points) +
               " grid predictions finite with non-negative bands" + (v.pass ? "" : " -- " + v.detail);
    return v;
}

struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance criteria runner"};
    int only = 0;
    app.add_option("--only", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {1, "variance decomposition", variance_decomposition},
        {2, "gradient correctness", gradient_correctness},
        {3, "UQ calibration", uq_calibration},
        {4, "BO effectiveness", bo_effectiveness},
        {5, "Sobol and EI oracles", sobol_and_ei},
        {6, "multi-agent trace", multi_agent_trace},
        {7, "ReAct trace", react_trace},
        {8, "trial harness schema", trial_harness},
        {9, "metrics oracles", metrics_oracles},
        {10, "resume and determinism", resume_and_determinism},
        {11, "slice protocol", slice_protocol},
    };

    bool all = true;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only)
            continue;
        const auto started = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        all = all && v.pass;
        std::cout << (v.pass ? "[PASS] AC" : "[FAIL] AC") << c.id << " " << c.name << ": " << v.detail << " ("
                  << fmt(secs, "%.1f") << " s)" << std::endl;
    }
    return all ? 0 : 1;
}
