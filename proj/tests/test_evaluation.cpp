// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace autoduct;
using testing_support::TempDir;

namespace {

// Two members bracketing the synthetic oracle; never trained.
struct StubModel {
    double offset = 0.05;

    [[nodiscard]] std::vector<std::vector<GaussianPrediction>> member_predictions(std::span<const DataPoint> pts) const
    {
        std::vector<std::vector<GaussianPrediction>> out;
        for (const auto& p : pts) {
            const double q = testing_support::clamped_oracle(p);
            const double v = std::pow(0.05 * std::abs(q) + 1.0, 2);
            out.push_back({{q * (1 - offset), v}, {q * (1 + offset), v}});
        }
        return out;
    }
};

} // namespace

TEST(Metrics, WorkedFixture)
{
    const std::vector<double> y{100, 200}, p{110, 180};
    EXPECT_EQ(mape(y, p), 10.0);
    EXPECT_EQ(rmse(y, p), std::sqrt(250.0));
    EXPECT_DOUBLE_EQ(rmspe(y, p), 10.0);
    const std::vector<double> exact{100, 200};
    EXPECT_EQ(rmse(y, exact), 0.0);
    EXPECT_EQ(mape(y, exact), 0.0);
}

TEST(Metrics, MatchBruteForce)
{
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(300);
        std::vector<double> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(50, 16000) * (rng.uniform() < 0.1 ? -1 : 1);
            p[i] = y[i] * rng.uniform(0.5, 1.5) + rng.normal(0, 20);
        }
        EXPECT_LE(oracles::relative_error(rmse(y, p), oracles::brute_rmse(y, p)), 1e-12);
        EXPECT_LE(oracles::relative_error(mape(y, p), oracles::brute_mape(y, p)), 1e-12);
        EXPECT_LE(oracles::relative_error(rmspe(y, p), oracles::brute_rmspe(y, p)), 1e-12);
    }
}

TEST(Metrics, InputErrors)
{
    const std::vector<double> y{1, 0, 3}, p{1, 2, 3}, short_p{1, 2};
    auto code = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::corrupt_state;
    };
    EXPECT_EQ(code([&] { (void)mape(y, p); }), Errc::zero_target);
    EXPECT_EQ(code([&] { (void)rmspe(y, p); }), Errc::zero_target);
    EXPECT_EQ(code([&] { (void)rmse(y, p); }), Errc::corrupt_state);
    EXPECT_EQ(code([&] { (void)rmse(y, short_p); }), Errc::length_mismatch);
    EXPECT_EQ(code([&] { (void)rmse(std::vector<double>{}, std::vector<double>{}); }), Errc::empty_input);
}

TEST(Ratios, StatsAndClosedInterval)
{
    const double r[] = {0.5, 1.0, 2.0, 2.5};
    const auto s = ratio_stats(r);
    EXPECT_DOUBLE_EQ(s.mean, 1.5);
    EXPECT_DOUBLE_EQ(s.inside_frac, 0.75);
    EXPECT_DOUBLE_EQ(s.std, std::sqrt((1.0 + 0.25 + 0.25 + 1.0) / 4));
}

TEST(Ratios, SeriesNormalizeEachFeature)
{
    std::vector<DataPoint> pts{{1, 1, 100, 10, 0.0, 10.0}, {3, 1, 300, 20, 0.5, 20.0}, {2, 1, 200, 30, 1.0, 30.0}};
    const std::vector<double> y{10, 20, 30}, p{11, 18, 30};
    const auto a = ratio_analysis(y, p, pts);
    ASSERT_EQ(a.series.size(), kFeatureCount);
    EXPECT_EQ(a.series[0].normalized_feature, (std::vector<double>{0.0, 1.0, 0.5}));
    EXPECT_EQ(a.series[1].normalized_feature, (std::vector<double>{0.0, 0.0, 0.0})); // constant L
    EXPECT_DOUBLE_EQ(a.ratios[0], 1.1);
    EXPECT_DOUBLE_EQ(a.ratios[1], 0.9);
}

TEST(ModelEval, StubModelMetrics)
{
    const auto ds = generate_synthetic({500, 0.0, 3, {}});
    const auto ev = evaluate_model(StubModel{}, ds, "test");
    EXPECT_EQ(ev.metrics.n, 500u);
    EXPECT_EQ(ev.metrics.split, "test");
    EXPECT_NEAR(ev.metrics.mape, 0.0, 1e-9); // members cancel around the oracle
    for (const auto& p : ev.predictions)
        EXPECT_GT(p.epistemic_var, 0.0);
    EXPECT_THROW((void)evaluate_model(StubModel{}, Dataset{}, "test"), Error);
}

TEST(SliceEval, FiniteMeansAndBandsEverywhere)
{
    const auto report = evaluate_slices(StubModel{}, reference_slices(21), 0.9545);
    ASSERT_EQ(report.slices.size(), 8u);
    for (const auto& s : report.slices) {
        ASSERT_EQ(s.grid.size(), 21u);
        EXPECT_EQ(s.grid.front(), s.spec.lo);
        EXPECT_EQ(s.grid.back(), s.spec.hi);
        for (std::size_t i = 0; i < s.grid.size(); ++i) {
            EXPECT_TRUE(std::isfinite(s.predictions[i].mean));
            EXPECT_GE(s.bands[i].hi - s.bands[i].lo, 0.0);
            EXPECT_FALSE(s.reference[i].has_value());
        }
    }
    EXPECT_THROW((void)evaluate_slices(StubModel{}, reference_slices(3), 1.5), Error);
}

TEST(SliceEval, ReferenceCurveInterpolation)
{
    TempDir dir;
    testing_support::write_file(dir / "ref.csv", "varying_value,reference\n10,200\n0,100\n");
    const std::vector<double> grid{-1, 0, 2.5, 10, 11};
    const auto ref = load_reference_curve(dir / "ref.csv", grid);
    EXPECT_FALSE(ref[0]);
    EXPECT_EQ(*ref[1], 100.0);
    EXPECT_DOUBLE_EQ(*ref[2], 125.0);
    EXPECT_EQ(*ref[3], 200.0);
    EXPECT_FALSE(ref[4]);

    auto spec = reference_slices(11)[0];
    spec.reference_csv = dir / "ref.csv";
    const SliceSpec one[] = {spec};
    const auto report = evaluate_slices(StubModel{}, one);
    EXPECT_TRUE(report.slices[0].reference[5]);
    EXPECT_FALSE(report.slices[0].reference[10]);
}

TEST(TrialStatsTest, BucketsAndRmseOverCompletedRuns)
{
    const RunSummary runs[] = {{true, 250.0, 0, 1000}, {true, 230.0, 1, 1200}, {true, 300.0, 2, 1500},
                               {false, 0.0, 3, 900}};
    const auto s = aggregate_trials(runs);
    EXPECT_EQ(s.runs, 4u);
    EXPECT_EQ(s.completed_without_error, 1);
    EXPECT_EQ(s.completed_with_one_error, 1);
    EXPECT_EQ(s.completed_with_two_or_more_errors, 1);
    EXPECT_EQ(s.failed_to_complete, 1);
    EXPECT_DOUBLE_EQ(*s.avg_rmse, 260.0);
    EXPECT_EQ(*s.min_rmse, 230.0);
    EXPECT_EQ(*s.max_rmse, 300.0);
    EXPECT_DOUBLE_EQ(s.avg_tokens, 1150.0);

    const RunSummary failed[] = {{false, 0.0, 3, 10}};
    EXPECT_FALSE(aggregate_trials(failed).avg_rmse);
    EXPECT_EQ(aggregate_trials(std::span<const RunSummary>()).runs, 0u);
}

TEST(TrialStatsTest, JsonFields)
{
    const RunSummary runs[] = {{true, 250.0, 0, 1000}};
    const auto j = to_json(aggregate_trials(runs));
    for (const char* key : {"runs", "average_test_rmse", "minimum_test_rmse", "maximum_test_rmse",
                            "completed_without_error", "completed_with_one_error", "completed_with_two_or_more_errors",
                            "failed_to_complete", "average_token_usage"})
        EXPECT_TRUE(j.contains(key)) << key;
}

TEST(TrialTable, RowLayout)
{
    TrialStats a;
    a.avg_rmse = 250.44;
    a.min_rmse = 230.2;
    a.max_rmse = 301.9;
    a.completed_without_error = 7;
    a.completed_with_one_error = 3;
    a.avg_tokens = 11287;
    TrialStats b = a;
    b.avg_tokens = 35311.4;
    const std::pair<std::string, TrialStats> cols[] = {{"Multi-agent", a}, {"ReAct", b}};
    const auto text = render_trial_table(cols);
    std::istringstream in(text);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        lines.push_back(line);
    ASSERT_EQ(lines.size(), 9u);
    EXPECT_EQ(lines[0].rfind("Metric", 0), 0u);
    EXPECT_NE(lines[0].find("| Multi-agent |"), std::string::npos);
    EXPECT_EQ(lines[0].substr(lines[0].size() - 5), "ReAct");
    EXPECT_NE(lines[1].find("250.4"), std::string::npos);
    EXPECT_NE(lines[8].find("11,287 | 35,311"), std::string::npos);
    EXPECT_EQ(lines[6].rfind("Completed with >= 2 error", 0), 0u);
}

TEST(TrialTable, ThousandsSeparator)
{
    EXPECT_EQ(format_thousands(0), "0");
    EXPECT_EQ(format_thousands(999), "999");
    EXPECT_EQ(format_thousands(1000), "1,000");
    EXPECT_EQ(format_thousands(1234567.6), "1,234,568");
    EXPECT_EQ(format_thousands(-4200), "-4,200");
}

TEST(Histogram, OutermostBinsCollectTails)
{
    ModelEvaluation ev;
    for (double pred : {10.0, 99.0, 100.0, 104.9, 500.0}) {
        ev.points.push_back(DataPoint{1, 1, 1, 1, 0, 100.0});
        EnsemblePrediction ep;
        ep.mean = pred;
        ev.predictions.push_back(ep);
    }
    const auto counts = error_histogram_counts(ev);
    ASSERT_EQ(counts.size(), 20u);
    EXPECT_EQ(counts[0], 1.0);  // -90%
    EXPECT_EQ(counts[9], 1.0);  // -1%
    EXPECT_EQ(counts[10], 2.0); // 0% and 4.9%
    EXPECT_EQ(counts[19], 1.0); // +400%
}

TEST(Export, FilesAreDeterministic)
{
    const auto ds = generate_synthetic({60, 1.0, 4, {}});
    EvaluationReport report;
    report.splits.push_back(evaluate_model(StubModel{}, ds, "test"));
    report.slices = evaluate_slices(StubModel{}, reference_slices(9));
    TempDir a, b;
    const auto written = export_report(report, a / "out");
    (void)export_report(report, b / "out");
    EXPECT_EQ(written.size(), 4u + 16u);
    for (const auto& p : written) {
        const auto other = b / "out" / p.filename().string();
        EXPECT_EQ(testing_support::read_file(p), testing_support::read_file(other)) << p;
    }
    const auto metrics = testing_support::read_file(a / "out" / "metrics.csv");
    EXPECT_EQ(metrics.rfind("split,n,rmse_kw_m2", 0), 0u);
    const auto slice = testing_support::read_file(a / "out" / "slice_3.csv");
    EXPECT_EQ(std::count(slice.begin(), slice.end(), '\n'), 10);
    EXPECT_NE(testing_support::read_file(a / "out" / "parity_test.svg").find("<svg"), std::string::npos);
}
