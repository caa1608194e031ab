// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/dataset.hpp"
#include "autoduct/ensemble.hpp"
#include "autoduct/error.hpp"
#include "autoduct/numeric.hpp"
#include "autoduct/svg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace autoduct {

// ---------------------------------------------------------------------------
// Point metrics

namespace detail {

inline void check_pair(std::span<const double> y, std::span<const double> yhat)
{
    if (y.size() != yhat.size())
        throw Error(Errc::length_mismatch, std::to_string(y.size()) + " targets vs " + std::to_string(yhat.size()) +
                                               " predictions");
    if (y.empty())
        throw Error(Errc::empty_input, "metrics need at least one point");
}

inline void check_nonzero(std::span<const double> y)
{
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == 0.0)
            throw Error(Errc::zero_target, "target at index " + std::to_string(i) + " is zero");
}

} // namespace detail

/// sqrt(mean((y - yhat)^2)), in the units of y.
inline double rmse(std::span<const double> y, std::span<const double> yhat)
{
    detail::check_pair(y, yhat);
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        ss += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return std::sqrt(ss / static_cast<double>(y.size()));
}

/// 100/n * sum |(y - yhat) / y|, in percent.
inline double mape(std::span<const double> y, std::span<const double> yhat)
{
    detail::check_pair(y, yhat);
    detail::check_nonzero(y);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        sum += std::abs((y[i] - yhat[i]) / y[i]);
    return 100.0 * sum / static_cast<double>(y.size());
}

/// 100 * sqrt(mean(((y - yhat) / y)^2)), in percent.
inline double rmspe(std::span<const double> y, std::span<const double> yhat)
{
    detail::check_pair(y, yhat);
    detail::check_nonzero(y);
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = (y[i] - yhat[i]) / y[i];
        ss += r * r;
    }
    return 100.0 * std::sqrt(ss / static_cast<double>(y.size()));
}

// ---------------------------------------------------------------------------
// Ratio analysis

inline constexpr double kRatioLow = 0.5;
inline constexpr double kRatioHigh = 2.0;

struct RatioStats {
    double mean = 0.0;
    double std = 0.0; // population
    double inside_frac = 0.0; // share of ratios in the closed interval [0.5, 2.0]
};

/// yhat/y against one input feature min-max normalized over the analysed points.
struct RatioSeries {
    Feature feature = Feature::D;
    std::vector<double> normalized_feature;
    std::vector<double> ratio;
};

struct RatioAnalysis {
    std::vector<double> ratios;
    RatioStats stats;
    std::vector<RatioSeries> series; // one per input feature, in D, L, P, G, X order
};

inline RatioStats ratio_stats(std::span<const double> ratios)
{
    if (ratios.empty())
        throw Error(Errc::empty_input, "ratio statistics need at least one ratio");
    RatioStats s;
    std::size_t inside = 0;
    for (double r : ratios) {
        s.mean += r;
        inside += (r >= kRatioLow && r <= kRatioHigh) ? 1 : 0;
    }
    const auto n = static_cast<double>(ratios.size());
    s.mean /= n;
    for (double r : ratios)
        s.std += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(s.std / n);
    s.inside_frac = static_cast<double>(inside) / n;
    return s;
}

inline RatioAnalysis ratio_analysis(std::span<const double> y, std::span<const double> yhat,
                                    std::span<const DataPoint> features)
{
    detail::check_pair(y, yhat);
    detail::check_nonzero(y);
    if (features.size() != y.size())
        throw Error(Errc::length_mismatch, "feature rows do not match targets");
    RatioAnalysis out;
    out.ratios.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        out.ratios.push_back(yhat[i] / y[i]);
    out.stats = ratio_stats(out.ratios);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        RatioSeries s;
        s.feature = static_cast<Feature>(f);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& p : features) {
            lo = std::min(lo, p.feature(s.feature));
            hi = std::max(hi, p.feature(s.feature));
        }
        for (const auto& p : features)
            s.normalized_feature.push_back(hi > lo ? (p.feature(s.feature) - lo) / (hi - lo) : 0.0);
        s.ratio = out.ratios;
        out.series.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model evaluation

struct MetricsReport {
    std::string split;
    std::size_t n = 0;
    double rmse = 0.0;  // kW/m2
    double mape = 0.0;  // %
    double rmspe = 0.0; // %
    RatioStats ratio;
};

struct ModelEvaluation {
    MetricsReport metrics;
    std::vector<DataPoint> points;
    std::vector<EnsemblePrediction> predictions;
};

/// Anything that yields physical-unit member predictions per point
/// (an Ensemble, or a stub in tests).
template <class M>
concept MemberPredictor = requires(const M& m, std::span<const DataPoint> pts) {
    { m.member_predictions(pts) } -> std::convertible_to<std::vector<std::vector<GaussianPrediction>>>;
};

template <MemberPredictor Model>
std::vector<EnsemblePrediction> predict_points(const Model& model, std::span<const DataPoint> points)
{
    const auto per_point = model.member_predictions(points);
    std::vector<EnsemblePrediction> out;
    out.reserve(per_point.size());
    for (const auto& preds : per_point)
        out.push_back(aggregate(preds));
    return out;
}

template <MemberPredictor Model>
ModelEvaluation evaluate_model(const Model& model, const Dataset& ds, std::string split_label = "test")
{
    if (ds.empty())
        throw Error(Errc::empty_input, "cannot evaluate on an empty dataset");
    const auto y = ds.targets();
    ModelEvaluation out;
    out.points = ds.points;
    out.predictions = predict_points(model, ds.points);
    std::vector<double> yhat;
    yhat.reserve(out.predictions.size());
    for (const auto& p : out.predictions)
        yhat.push_back(p.mean);
    out.metrics.split = std::move(split_label);
    out.metrics.n = y.size();
    out.metrics.rmse = rmse(y, yhat);
    out.metrics.mape = mape(y, yhat);
    out.metrics.rmspe = rmspe(y, yhat);
    out.metrics.ratio = ratio_analysis(y, yhat, ds.points).stats;
    return out;
}

// ---------------------------------------------------------------------------
// Slices

struct SliceEvaluation {
    SliceSpec spec;
    std::vector<double> grid; // varying-feature values, ascending
    std::vector<EnsemblePrediction> predictions;
    std::vector<Interval> bands;
    std::vector<std::optional<double>> reference;
};

struct SliceReport {
    double level = 0.9545;
    std::vector<SliceEvaluation> slices;
};

/// Reference curve CSV with header `varying_value,reference`, linearly
/// interpolated onto the grid; grid points outside its span get no value.
inline std::vector<std::optional<double>> load_reference_curve(const std::filesystem::path& path,
                                                               std::span<const double> grid)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::io_failure, "cannot open reference curve '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<double, double>> curve;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty())
            continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() < 2)
            throw Error(Errc::missing_column, "reference curve row " + std::to_string(row) + " needs two columns");
        curve.emplace_back(detail::parse_finite(cells[0], row, "varying_value"),
                           detail::parse_finite(cells[1], row, "reference"));
    }
    std::sort(curve.begin(), curve.end());
    std::vector<std::optional<double>> out(grid.size());
    for (std::size_t i = 0; i < grid.size() && !curve.empty(); ++i) {
        const double x = grid[i];
        if (x < curve.front().first || x > curve.back().first)
            continue;
        auto hi = std::lower_bound(curve.begin(), curve.end(), std::make_pair(x, -std::numeric_limits<double>::infinity()));
        if (hi->first == x) {
            out[i] = hi->second;
            continue;
        }
        const auto lo = hi - 1;
        const double t = (x - lo->first) / (hi->first - lo->first);
        out[i] = lo->second + t * (hi->second - lo->second);
    }
    return out;
}

template <MemberPredictor Model>
SliceReport evaluate_slices(const Model& model, std::span<const SliceSpec> specs, double level = 0.9545)
{
    SliceReport report;
    report.level = level;
    central_z(level); // validates the level up front
    for (const auto& spec : specs) {
        SliceEvaluation s;
        s.spec = spec;
        const auto grid = build_slice_grid(spec);
        for (const auto& p : grid.points)
            s.grid.push_back(p.feature(spec.varying));
        s.predictions = predict_points(model, grid.points);
        for (const auto& ep : s.predictions)
            s.bands.push_back(interval(ep, level));
        s.reference = spec.reference_csv ? load_reference_curve(*spec.reference_csv, s.grid)
                                         : std::vector<std::optional<double>>(s.grid.size());
        report.slices.push_back(std::move(s));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Multi-run statistics

/// Outcome of one agent run as seen by the trial harness.
struct RunSummary {
    bool completed = false;
    double test_rmse = 0.0;
    int error_count = 0;
    long long tokens = 0;
};

struct TrialStats {
    std::size_t runs = 0;
    std::optional<double> avg_rmse;
    std::optional<double> min_rmse;
    std::optional<double> max_rmse;
    int completed_without_error = 0;
    int completed_with_one_error = 0;
    int completed_with_two_or_more_errors = 0;
    int failed_to_complete = 0;
    double avg_tokens = 0.0;
};

/// RMSE statistics cover completed runs; token usage averages over all runs.
inline TrialStats aggregate_trials(std::span<const RunSummary> runs)
{
    TrialStats s;
    s.runs = runs.size();
    if (runs.empty())
        return s;
    double sum = 0.0, tokens = 0.0;
    std::size_t completed = 0;
    for (const auto& r : runs) {
        tokens += static_cast<double>(r.tokens);
        if (!r.completed) {
            ++s.failed_to_complete;
            continue;
        }
        if (r.error_count == 0)
            ++s.completed_without_error;
        else if (r.error_count == 1)
            ++s.completed_with_one_error;
        else
            ++s.completed_with_two_or_more_errors;
        ++completed;
        sum += r.test_rmse;
        s.min_rmse = s.min_rmse ? std::min(*s.min_rmse, r.test_rmse) : r.test_rmse;
        s.max_rmse = s.max_rmse ? std::max(*s.max_rmse, r.test_rmse) : r.test_rmse;
    }
    if (completed > 0)
        s.avg_rmse = sum / static_cast<double>(completed);
    s.avg_tokens = tokens / static_cast<double>(runs.size());
    return s;
}

inline nlohmann::json to_json(const TrialStats& s)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"runs", s.runs},
            {"average_test_rmse", opt(s.avg_rmse)},
            {"minimum_test_rmse", opt(s.min_rmse)},
            {"maximum_test_rmse", opt(s.max_rmse)},
            {"completed_without_error", s.completed_without_error},
            {"completed_with_one_error", s.completed_with_one_error},
            {"completed_with_two_or_more_errors", s.completed_with_two_or_more_errors},
            {"failed_to_complete", s.failed_to_complete},
            {"average_token_usage", s.avg_tokens}};
}

/// Groups digits of a rounded count: 11287 -> "11,287".
inline std::string format_thousands(double value)
{
    auto n = static_cast<long long>(std::llround(value));
    const bool negative = n < 0;
    std::string digits = std::to_string(negative ? -n : n);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0)
            out += ',';
        out += digits[i];
    }
    return negative ? "-" + out : out;
}

/// Text table with the row layout of the agent comparison: RMSE spread,
/// completion buckets and average token usage, one column per system.
inline std::string render_trial_table(std::span<const std::pair<std::string, TrialStats>> columns)
{
    auto rmse = [](const std::optional<double>& v) { return v ? format_fixed(*v, 1) : std::string("n/a"); };
    struct Row {
        std::string label;
        std::vector<std::string> cells;
    };
    std::vector<Row> rows{{"Metric", {}},
                          {"Average CHF RMSE on testing data", {}},
                          {"Minimum CHF RMSE on testing data", {}},
                          {"Maximum CHF RMSE on testing data", {}},
                          {"Completed without error", {}},
                          {"Completed with one error", {}},
                          {"Completed with >= 2 error", {}},
                          {"Fail to complete", {}},
                          {"Average token usage", {}}};
    for (const auto& [name, s] : columns) {
        rows[0].cells.push_back(name);
        rows[1].cells.push_back(rmse(s.avg_rmse));
        rows[2].cells.push_back(rmse(s.min_rmse));
        rows[3].cells.push_back(rmse(s.max_rmse));
        rows[4].cells.push_back(std::to_string(s.completed_without_error));
        rows[5].cells.push_back(std::to_string(s.completed_with_one_error));
        rows[6].cells.push_back(std::to_string(s.completed_with_two_or_more_errors));
        rows[7].cells.push_back(std::to_string(s.failed_to_complete));
        rows[8].cells.push_back(format_thousands(s.avg_tokens));
    }
    std::size_t label_width = 0;
    for (const auto& r : rows)
        label_width = std::max(label_width, r.label.size());
    std::vector<std::size_t> widths(columns.size(), 0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.cells.size(); ++c)
            widths[c] = std::max(widths[c], r.cells[c].size());
    std::ostringstream out;
    for (const auto& r : rows) {
        out << r.label << std::string(label_width - r.label.size(), ' ');
        for (std::size_t c = 0; c < r.cells.size(); ++c)
            out << " | " << std::string(widths[c] - r.cells[c].size(), ' ') << r.cells[c];
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Export

/// Relative-error histogram bins in percent: 20 bins of 5% over [-50, 50];
/// values beyond either end are counted in the outermost bin.
inline std::vector<double> error_histogram_edges()
{
    std::vector<double> edges;
    for (int i = 0; i <= 20; ++i)
        edges.push_back(-50.0 + 5.0 * i);
    return edges;
}

inline std::vector<double> error_histogram_counts(const ModelEvaluation& ev)
{
    const auto edges = error_histogram_edges();
    std::vector<double> counts(edges.size() - 1, 0.0);
    for (std::size_t i = 0; i < ev.points.size(); ++i) {
        const double y = *ev.points[i].chf;
        const double e = 100.0 * (ev.predictions[i].mean - y) / y;
        auto bin = static_cast<long>(std::floor((e - edges.front()) / 5.0));
        bin = std::clamp<long>(bin, 0, static_cast<long>(counts.size()) - 1);
        counts[static_cast<std::size_t>(bin)] += 1.0;
    }
    return counts;
}

struct EvaluationReport {
    std::vector<ModelEvaluation> splits;
    std::optional<SliceReport> slices;
};

namespace detail {

inline std::string metrics_csv(std::span<const ModelEvaluation> splits)
{
    std::string out = "split,n,rmse_kw_m2,mape_pct,rmspe_pct,ratio_mean,ratio_std,ratio_inside_frac\n";
    for (const auto& s : splits) {
        const auto& m = s.metrics;
        out += m.split + "," + std::to_string(m.n) + "," + format_g17(m.rmse) + "," + format_g17(m.mape) + "," +
               format_g17(m.rmspe) + "," + format_g17(m.ratio.mean) + "," + format_g17(m.ratio.std) + "," +
               format_g17(m.ratio.inside_frac) + "\n";
    }
    return out;
}

inline std::string predictions_csv(const ModelEvaluation& ev)
{
    std::string out = "D,L,P,G,X,y_true,y_pred,aleatory_var,epistemic_var,total_var\n";
    for (std::size_t i = 0; i < ev.points.size(); ++i) {
        const auto& p = ev.points[i];
        const auto& q = ev.predictions[i];
        for (double v : p.inputs())
            out += format_g17(v) + ",";
        out += format_g17(*p.chf) + "," + format_g17(q.mean) + "," + format_g17(q.aleatory_var) + "," +
               format_g17(q.epistemic_var) + "," + format_g17(q.total_var) + "\n";
    }
    return out;
}

inline std::string slice_csv(const SliceEvaluation& s)
{
    const bool with_reference = s.spec.reference_csv.has_value();
    std::string out = "slice_id,varying_feature,varying_value,y_pred,total_std,band_lo,band_hi";
    out += with_reference ? ",reference\n" : "\n";
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
        out += std::to_string(s.spec.id) + "," + std::string(to_string(s.spec.varying)) + "," + format_g17(s.grid[i]) +
               "," + format_g17(s.predictions[i].mean) + "," + format_g17(std::sqrt(s.predictions[i].total_var)) + "," +
               format_g17(s.bands[i].lo) + "," + format_g17(s.bands[i].hi);
        if (with_reference)
            out += "," + (s.reference[i] ? format_g17(*s.reference[i]) : std::string());
        out += "\n";
    }
    return out;
}

inline std::string parity_svg(const ModelEvaluation& ev)
{
    std::vector<double> y, yhat;
    for (std::size_t i = 0; i < ev.points.size(); ++i) {
        y.push_back(*ev.points[i].chf);
        yhat.push_back(ev.predictions[i].mean);
    }
    std::vector<double> both = y;
    both.insert(both.end(), yhat.begin(), yhat.end());
    const auto range = svg::AxisRange::covering(both);
    svg::Chart chart("Parity (" + ev.metrics.split + ")", "measured CHF [kW/m2]", "predicted CHF [kW/m2]", range, range);
    const double diag[] = {range.lo, range.hi};
    chart.line(diag, diag, "black", "reference", true);
    chart.markers(y, yhat, "#1f77b4");
    return chart.str();
}

inline std::string histogram_svg(const ModelEvaluation& ev)
{
    const auto edges = error_histogram_edges();
    const auto counts = error_histogram_counts(ev);
    const double peak = *std::max_element(counts.begin(), counts.end());
    svg::Chart chart("Relative error (" + ev.metrics.split + ")", "(predicted - measured) / measured [%]", "count",
                     {edges.front(), edges.back()}, {0.0, std::max(1.0, peak) * 1.05});
    chart.bars(edges, counts, "#2ca02c");
    return chart.str();
}

inline std::string slice_svg(const SliceEvaluation& s, double level)
{
    std::vector<double> mean, lo, hi, values;
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
        mean.push_back(s.predictions[i].mean);
        lo.push_back(s.bands[i].lo);
        hi.push_back(s.bands[i].hi);
    }
    values = lo;
    values.insert(values.end(), hi.begin(), hi.end());
    std::vector<double> ref_x, ref_y;
    for (std::size_t i = 0; i < s.grid.size(); ++i)
        if (s.reference[i]) {
            ref_x.push_back(s.grid[i]);
            ref_y.push_back(*s.reference[i]);
            values.push_back(*s.reference[i]);
        }
    svg::Chart chart("Slice " + std::to_string(s.spec.id), std::string(to_string(s.spec.varying)), "CHF [kW/m2]",
                     svg::AxisRange::covering(s.grid), svg::AxisRange::covering(values));
    chart.band(s.grid, lo, hi, "#ff7f0e");
    chart.line(s.grid, mean, "#d62728");
    chart.legend("predicted mean", "#d62728");
    chart.legend(format_fixed(100.0 * level, 2) + "% band", "#ff7f0e");
    if (!ref_x.empty()) {
        chart.line(ref_x, ref_y, "black", "reference", true);
        chart.legend("reference", "black");
    }
    return chart.str();
}

} // namespace detail

/// Writes metrics.csv, predictions_<split>.csv, parity_<split>.svg and
/// error_hist_<split>.svg per split, plus slice_<id>.csv/.svg per slice.
/// Output depends only on the report content.
inline std::vector<std::filesystem::path> export_report(const EvaluationReport& report,
                                                        const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error(Errc::io_failure, "cannot create '" + dir.string() + "': " + ec.message());
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        detail::write_text_file(dir / name, text);
        written.push_back(dir / name);
    };
    emit("metrics.csv", detail::metrics_csv(report.splits));
    for (const auto& s : report.splits) {
        emit("predictions_" + s.metrics.split + ".csv", detail::predictions_csv(s));
        emit("parity_" + s.metrics.split + ".svg", detail::parity_svg(s));
        emit("error_hist_" + s.metrics.split + ".svg", detail::histogram_svg(s));
    }
    if (report.slices)
        for (const auto& s : report.slices->slices) {
            emit("slice_" + std::to_string(s.spec.id) + ".csv", detail::slice_csv(s));
            emit("slice_" + std::to_string(s.spec.id) + ".svg", detail::slice_svg(s, report.slices->level));
        }
    return written;
}

inline nlohmann::json to_json(const MetricsReport& m)
{
    return {{"split", m.split},          {"n", m.n},
            {"rmse", m.rmse},            {"mape", m.mape},
            {"rmspe", m.rmspe},          {"ratio_mean", m.ratio.mean},
            {"ratio_std", m.ratio.std},  {"ratio_inside_frac", m.ratio.inside_frac}};
}

} // namespace autoduct
