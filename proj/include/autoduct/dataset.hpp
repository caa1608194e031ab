// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/error.hpp"
#include "autoduct/numeric.hpp"
#include "autoduct/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace autoduct {

inline constexpr std::size_t kFeatureCount = 5;

enum class Feature { D = 0, L = 1, P = 2, G = 3, X = 4 };

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{"D", "L", "P", "G", "X"};
inline constexpr std::string_view kTargetName = "CHF";

inline std::string_view to_string(Feature f) noexcept { return kFeatureNames[static_cast<std::size_t>(f)]; }

inline Feature feature_from_string(std::string_view name)
{
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (kFeatureNames[i] == name)
            return static_cast<Feature>(i);
    throw Error(Errc::invalid_argument, "unknown feature '" + std::string(name) + "'");
}

/// One observation. Units: D and L in m, P in kPa, G in kg/m^2/s, X
/// dimensionless, chf in kW/m^2. Input-only grid points carry no chf.
struct DataPoint {
    double D = 0.0;
    double L = 0.0;
    double P = 0.0;
    double G = 0.0;
    double X = 0.0;
    std::optional<double> chf;

    [[nodiscard]] std::array<double, kFeatureCount> inputs() const noexcept { return {D, L, P, G, X}; }

    [[nodiscard]] double feature(Feature f) const noexcept { return inputs()[static_cast<std::size_t>(f)]; }

    void set_feature(Feature f, double value) noexcept
    {
        switch (f) {
        case Feature::D: D = value; break;
        case Feature::L: L = value; break;
        case Feature::P: P = value; break;
        case Feature::G: G = value; break;
        case Feature::X: X = value; break;
        }
    }

    static DataPoint from_inputs(std::span<const double, kFeatureCount> x, std::optional<double> target = {})
    {
        return DataPoint{x[0], x[1], x[2], x[3], x[4], target};
    }

    friend bool operator==(const DataPoint&, const DataPoint&) = default;
    friend auto operator<=>(const DataPoint&, const DataPoint&) = default;
};

struct Dataset {
    std::vector<DataPoint> points;
    std::string provenance;

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    [[nodiscard]] bool empty() const noexcept { return points.empty(); }

    [[nodiscard]] bool has_targets() const noexcept
    {
        return !points.empty() && std::all_of(points.begin(), points.end(), [](const DataPoint& p) { return p.chf.has_value(); });
    }

    [[nodiscard]] std::vector<double> targets() const
    {
        std::vector<double> y;
        y.reserve(points.size());
        for (const auto& p : points) {
            if (!p.chf)
                throw Error(Errc::invalid_argument, "dataset point without a target value");
            y.push_back(*p.chf);
        }
        return y;
    }
};

// ---------------------------------------------------------------------------
// Reference envelope

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] bool contains(double v) const noexcept { return v >= lo && v <= hi; }
    friend bool operator==(const Range&, const Range&) = default;
};

/// Operating envelope of the reference CHF corpus.
struct Envelope {
    std::array<Range, kFeatureCount> features{
        Range{2e-3, 16e-3}, Range{0.05, 20.0}, Range{100.0, 20000.0}, Range{8.2, 7964.0}, Range{-0.497, 0.999}};
    Range chf{50.0, 16339.3};

    [[nodiscard]] const Range& operator[](Feature f) const noexcept { return features[static_cast<std::size_t>(f)]; }
};

struct FeatureRangeSummary {
    std::string name;
    std::size_t outside = 0;
    double min = 0.0;
    double max = 0.0;
};

/// Per-column out-of-envelope counts; columns are D, L, P, G, X, CHF.
struct RangeReport {
    std::vector<FeatureRangeSummary> columns;

    [[nodiscard]] std::size_t violations() const noexcept
    {
        std::size_t total = 0;
        for (const auto& c : columns)
            total += c.outside;
        return total;
    }

    [[nodiscard]] const FeatureRangeSummary& column(std::string_view name) const
    {
        for (const auto& c : columns)
            if (c.name == name)
                return c;
        throw Error(Errc::invalid_argument, "no column '" + std::string(name) + "' in range report");
    }

    [[nodiscard]] std::string to_text() const
    {
        std::ostringstream out;
        out << "column  outside  min  max\n";
        for (const auto& c : columns)
            out << c.name << "  " << c.outside << "  " << format_g17(c.min) << "  " << format_g17(c.max) << '\n';
        out << "total violations: " << violations() << '\n';
        return out.str();
    }
};

inline RangeReport validate_ranges(const Dataset& ds, const Envelope& env = {})
{
    RangeReport report;
    auto summarize = [&](std::string_view name, const Range& range, auto&& get) {
        FeatureRangeSummary s;
        s.name = std::string(name);
        bool first = true;
        for (const auto& p : ds.points) {
            const std::optional<double> v = get(p);
            if (!v)
                continue;
            if (first) {
                s.min = s.max = *v;
                first = false;
            }
            s.min = std::min(s.min, *v);
            s.max = std::max(s.max, *v);
            if (!range.contains(*v))
                ++s.outside;
        }
        report.columns.push_back(std::move(s));
    };
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        summarize(kFeatureNames[f], env.features[f],
                  [f](const DataPoint& p) -> std::optional<double> { return p.inputs()[f]; });
    summarize(kTargetName, env.chf, [](const DataPoint& p) { return p.chf; });
    return report;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

inline std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

inline double parse_finite(const std::string& text, std::size_t row, std::string_view column)
{
    const std::string cell = trim(text);
    char* end = nullptr;
    const double value = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(value))
        throw Error(Errc::non_finite_value,
                    "row " + std::to_string(row) + ", column " + std::string(column) + ": '" + cell + "'");
    return value;
}

} // namespace detail

/// Reads `D,L,P,G,X,CHF` (any column order, extra columns ignored). With
/// `require_target` unset a missing CHF column yields an input-only dataset.
inline Dataset load_csv(const std::filesystem::path& path, bool require_target = true)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::io_failure, "cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty())
        throw Error(Errc::empty_file, "'" + path.string() + "' has no header row");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();

    const auto header = detail::split_csv_line(line);
    auto find_column = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (detail::trim(header[i]) == name)
                return i;
        return std::nullopt;
    };

    std::array<std::size_t, kFeatureCount> feature_columns{};
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        const auto col = find_column(kFeatureNames[f]);
        if (!col)
            throw Error(Errc::missing_column, std::string(kFeatureNames[f]));
        feature_columns[f] = *col;
    }
    const auto target_column = find_column(kTargetName);
    if (require_target && !target_column)
        throw Error(Errc::missing_column, std::string(kTargetName));

    Dataset ds;
    ds.provenance = "csv:" + path.string();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (detail::trim(line).empty())
            continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        auto cell = [&](std::size_t col, std::string_view name) -> const std::string& {
            if (col >= cells.size())
                throw Error(Errc::non_finite_value, "row " + std::to_string(row) + ", column " + std::string(name) + ": missing");
            return cells[col];
        };
        std::array<double, kFeatureCount> x{};
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            x[f] = detail::parse_finite(cell(feature_columns[f], kFeatureNames[f]), row, kFeatureNames[f]);
        std::optional<double> target;
        if (target_column)
            target = detail::parse_finite(cell(*target_column, "chf"), row, "chf");
        ds.points.push_back(DataPoint::from_inputs(x, target));
    }
    if (ds.points.empty())
        throw Error(Errc::empty_file, "'" + path.string() + "' has no data rows");
    return ds;
}

inline void save_csv(const Dataset& ds, const std::filesystem::path& path)
{
    const bool with_target = ds.has_targets();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(Errc::io_failure, "cannot write '" + path.string() + "'");
    out << "D,L,P,G,X";
    if (with_target)
        out << ",CHF";
    out << '\n';
    for (const auto& p : ds.points) {
        const auto x = p.inputs();
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            out << (f ? "," : "") << format_g17(x[f]);
        if (with_target)
            out << ',' << format_g17(*p.chf);
        out << '\n';
    }
    if (!out)
        throw Error(Errc::io_failure, "short write to '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Split

struct SplitFractions {
    double train = 0.72;
    double validation = 0.18;
    double test = 0.10;
};

struct SplitDataset {
    Dataset train;
    Dataset validation;
    Dataset test;
    SplitFractions fractions;
    std::uint64_t seed = 0;
};

/// Seeded Fisher-Yates shuffle, then contiguous cuts of floor(n*f_train)
/// and floor(n*f_val); the remainder goes to test.
inline SplitDataset split(const Dataset& ds, SplitFractions fractions, std::uint64_t seed)
{
    const double parts[] = {fractions.train, fractions.validation, fractions.test};
    for (double f : parts)
        if (!(f >= 0.0) || !std::isfinite(f))
            throw Error(Errc::fraction_sum_invalid, "fractions must be finite and non-negative");
    const double sum = fractions.train + fractions.validation + fractions.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(Errc::fraction_sum_invalid, "fractions sum to " + format_g17(sum));

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    const auto n = static_cast<double>(ds.size());
    // The 1e-9 guard keeps e.g. 1000 * 0.72 from flooring to 719 when the
    // product lands one ulp below the integer.
    const auto n_train = std::min(ds.size(), static_cast<std::size_t>(std::floor(n * fractions.train + 1e-9)));
    const auto n_val =
        std::min(ds.size() - n_train, static_cast<std::size_t>(std::floor(n * fractions.validation + 1e-9)));

    SplitDataset out;
    out.fractions = fractions;
    out.seed = seed;
    const std::string tag = ds.provenance + "#split(seed=" + std::to_string(seed) + ")";
    out.train.provenance = tag + ":train";
    out.validation.provenance = tag + ":validation";
    out.test.provenance = tag + ":test";
    for (std::size_t i = 0; i < order.size(); ++i) {
        Dataset& dst = i < n_train ? out.train : (i < n_train + n_val ? out.validation : out.test);
        dst.points.push_back(ds.points[order[i]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalizer

/// z-score standardization fitted on the training split. Slots 0..4 are the
/// inputs (D, L, P, G, X); slot 5 is the target.
struct Normalizer {
    std::array<double, kFeatureCount + 1> shift{0, 0, 0, 0, 0, 0};
    std::array<double, kFeatureCount + 1> scale{1, 1, 1, 1, 1, 1};

    static Normalizer identity() noexcept { return {}; }

    [[nodiscard]] std::array<double, kFeatureCount> apply(const std::array<double, kFeatureCount>& x) const noexcept
    {
        std::array<double, kFeatureCount> z{};
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            z[f] = (x[f] - shift[f]) / scale[f];
        return z;
    }

    [[nodiscard]] std::array<double, kFeatureCount> invert(const std::array<double, kFeatureCount>& z) const noexcept
    {
        std::array<double, kFeatureCount> x{};
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            x[f] = z[f] * scale[f] + shift[f];
        return x;
    }

    [[nodiscard]] double apply_target(double y) const noexcept { return (y - shift[kFeatureCount]) / scale[kFeatureCount]; }
    [[nodiscard]] double invert_target(double z) const noexcept { return z * scale[kFeatureCount] + shift[kFeatureCount]; }
    [[nodiscard]] double target_scale() const noexcept { return scale[kFeatureCount]; }

    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

inline Normalizer fit_normalizer(const Dataset& train)
{
    if (train.empty())
        throw Error(Errc::empty_input, "cannot fit a normalizer on an empty split");
    if (!train.has_targets())
        throw Error(Errc::invalid_argument, "normalizer fitting needs target values");

    Normalizer norm;
    const auto n = static_cast<double>(train.size());
    for (std::size_t c = 0; c <= kFeatureCount; ++c) {
        auto value = [c](const DataPoint& p) { return c < kFeatureCount ? p.inputs()[c] : *p.chf; };
        double mean = 0.0;
        for (const auto& p : train.points)
            mean += value(p);
        mean /= n;
        double ss = 0.0;
        for (const auto& p : train.points) {
            const double d = value(p) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / n);
        const std::string name = c < kFeatureCount ? std::string(kFeatureNames[c]) : std::string(kTargetName);
        if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean)))
            throw Error(Errc::degenerate_feature, name);
        norm.shift[c] = mean;
        norm.scale[c] = sd;
    }
    return norm;
}

inline nlohmann::json to_json(const Normalizer& n)
{
    return {{"shift", n.shift}, {"scale", n.scale}};
}

inline Normalizer normalizer_from_json(const nlohmann::json& j)
{
    Normalizer n;
    const auto shift = j.at("shift").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    if (shift.size() != kFeatureCount + 1 || scale.size() != kFeatureCount + 1)
        throw Error(Errc::corrupt_artifact, "normalizer block must hold 6 shifts and 6 scales");
    for (std::size_t i = 0; i <= kFeatureCount; ++i) {
        if (!(scale[i] > 0.0))
            throw Error(Errc::corrupt_artifact, "normalizer scale must be positive");
        n.shift[i] = shift[i];
        n.scale[i] = scale[i];
    }
    return n;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticConfig {
    std::size_t count = 5000;
    double noise_scale = 1.0;
    std::uint64_t seed = 0;
    Envelope ranges{};
};

/// Smooth stand-in for CHF (kW/m^2), version "chf_oracle_v1":
///
///   q = 50 + 1800 * (G/1000)^0.45 * f_P * (1.1 - X) * (0.008/D)^0.3 * (1 + 0.3 exp(-L/0.5))
///   f_P = 1 + 0.4 r - 0.35 r^2,  r = P/10000
///
/// Increasing in G, decreasing in X, D and L, with a mid-pressure maximum.
inline double synthetic_oracle(const DataPoint& p) noexcept
{
    const double r = p.P / 10000.0;
    const double pressure_factor = 1.0 + 0.4 * r - 0.35 * r * r;
    return 50.0 + 1800.0 * std::pow(p.G / 1000.0, 0.45) * pressure_factor * (1.1 - p.X) *
                      std::pow(0.008 / p.D, 0.3) * (1.0 + 0.3 * std::exp(-p.L / 0.5));
}

/// Heteroscedastic noise law "rel_noise_v1": relative standard deviation
/// growing linearly from 4% at X = -0.5 to 10% at X = 1.
inline double synthetic_noise_std(const DataPoint& p, double noise_scale) noexcept
{
    const double relative = 0.04 + 0.06 * (p.X + 0.5) / 1.5;
    return noise_scale * relative * synthetic_oracle(p);
}

/// D, L and X uniform, P and G log-uniform inside the configured ranges;
/// target = oracle + N(0, noise_std^2), clamped to the CHF envelope.
inline Dataset generate_synthetic(const SyntheticConfig& cfg)
{
    if (cfg.count < 1)
        throw Error(Errc::invalid_argument, "synthetic sample count must be at least 1");
    if (!(cfg.noise_scale >= 0.0))
        throw Error(Errc::invalid_argument, "noise scale must be non-negative");

    Rng rng(cfg.seed);
    const auto& env = cfg.ranges;
    auto log_uniform = [&rng](const Range& r) { return std::exp(rng.uniform(std::log(r.lo), std::log(r.hi))); };

    Dataset ds;
    ds.points.reserve(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        DataPoint p;
        p.D = rng.uniform(env[Feature::D].lo, env[Feature::D].hi);
        p.L = rng.uniform(env[Feature::L].lo, env[Feature::L].hi);
        p.P = log_uniform(env[Feature::P]);
        p.G = log_uniform(env[Feature::G]);
        p.X = rng.uniform(env[Feature::X].lo, env[Feature::X].hi);
        const double noise = rng.normal();
        const double q = synthetic_oracle(p) + synthetic_noise_std(p, cfg.noise_scale) * noise;
        p.chf = cfg.noise_scale == 0.0 ? synthetic_oracle(p) : std::clamp(q, env.chf.lo, env.chf.hi);
        ds.points.push_back(p);
    }
    ds.provenance = "synthetic:oracle=chf_oracle_v1,noise=rel_noise_v1,rng=xoshiro256ss_v" +
                    std::to_string(Rng::algorithm_version) + ",seed=" + std::to_string(cfg.seed) +
                    ",count=" + std::to_string(cfg.count) + ",noise_scale=" + format_g17(cfg.noise_scale);
    return ds;
}

// ---------------------------------------------------------------------------
// Slices

/// A blind evaluation line: one feature swept over [lo, hi], the other four
/// held at `constants` (the swept slot of `constants` is ignored).
struct SliceSpec {
    int id = 0;
    std::array<double, kFeatureCount> constants{};
    Feature varying = Feature::L;
    double lo = 0.0;
    double hi = 1.0;
    std::size_t points = 101;
    std::optional<std::filesystem::path> reference_csv;

    void validate() const
    {
        if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
            throw Error(Errc::invalid_argument, "slice " + std::to_string(id) + ": range must satisfy lo < hi");
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            if (static_cast<Feature>(f) != varying && !std::isfinite(constants[f]))
                throw Error(Errc::invalid_argument, "slice " + std::to_string(id) + ": non-finite constant");
        if (points < 2)
            throw Error(Errc::invalid_argument, "slice " + std::to_string(id) + ": needs at least 2 points");
    }
};

/// The eight blind slices of the reference benchmark (D in metres).
inline std::vector<SliceSpec> reference_slices(std::size_t points = 101)
{
    using F = Feature;
    // constants order: D, L, P, G, X; the swept slot holds 0.
    return {
        SliceSpec{1, {8.01e-3, 0.0, 9806.0, 1000.0, 0.587}, F::L, 0.0, 20.0, points, {}},
        SliceSpec{2, {8.11e-3, 0.0, 2009.0, 752.2, 0.756}, F::L, 0.0, 20.0, points, {}},
        SliceSpec{3, {8.00e-3, 0.998, 0.0, 2006.0, 0.140}, F::P, 0.0, 20000.0, points, {}},
        SliceSpec{4, {13.40e-3, 3.658, 0.0, 2040.2, 0.378}, F::P, 0.0, 20000.0, points, {}},
        SliceSpec{5, {8.14e-3, 1.943, 9831.0, 1519.5, 0.0}, F::X, -0.5, 1.0, points, {}},
        SliceSpec{6, {0.0, 6.000, 9807.0, 1003.3, 0.529}, F::D, 0.0, 16e-3, points, {}},
        SliceSpec{7, {8.00e-3, 1.570, 12750.0, 0.0, 0.144}, F::G, 0.0, 8000.0, points, {}},
        SliceSpec{8, {10.00e-3, 4.966, 16000.0, 0.0, 0.343}, F::G, 0.0, 8000.0, points, {}},
    };
}

/// Equally spaced sweep; the last point is set to `hi` exactly.
inline Dataset build_slice_grid(const SliceSpec& spec)
{
    spec.validate();
    Dataset ds;
    ds.provenance = "slice:" + std::to_string(spec.id);
    ds.points.reserve(spec.points);
    const double step = (spec.hi - spec.lo) / static_cast<double>(spec.points - 1);
    for (std::size_t i = 0; i < spec.points; ++i) {
        auto p = DataPoint::from_inputs(spec.constants);
        const double v = i + 1 == spec.points ? spec.hi : spec.lo + step * static_cast<double>(i);
        p.set_feature(spec.varying, v);
        ds.points.push_back(p);
    }
    return ds;
}

inline nlohmann::json to_json(const SliceSpec& s)
{
    nlohmann::json constants = nlohmann::json::object();
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        if (static_cast<Feature>(f) != s.varying)
            constants[std::string(kFeatureNames[f])] = s.constants[f];
    nlohmann::json j{{"id", s.id},
                     {"varying", std::string(to_string(s.varying))},
                     {"range", {s.lo, s.hi}},
                     {"points", s.points},
                     {"constants", constants}};
    if (s.reference_csv)
        j["reference_csv"] = s.reference_csv->string();
    return j;
}

inline SliceSpec slice_from_json(const nlohmann::json& j)
{
    try {
        SliceSpec s;
        s.id = j.at("id").get<int>();
        s.varying = feature_from_string(j.at("varying").get<std::string>());
        const auto& range = j.at("range");
        if (!range.is_array() || range.size() != 2)
            throw Error(Errc::invalid_argument, "slice range must be [lo, hi]");
        s.lo = range[0].get<double>();
        s.hi = range[1].get<double>();
        s.points = j.value("points", std::size_t{101});
        const auto& constants = j.at("constants");
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (static_cast<Feature>(f) == s.varying)
                continue;
            const std::string name(kFeatureNames[f]);
            if (!constants.contains(name))
                throw Error(Errc::invalid_argument, "slice " + std::to_string(s.id) + " lacks constant " + name);
            s.constants[f] = constants.at(name).get<double>();
        }
        if (j.contains("reference_csv"))
            s.reference_csv = j.at("reference_csv").get<std::string>();
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("malformed slice spec: ") + e.what());
    }
}

inline std::vector<SliceSpec> load_slice_specs(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::io_failure, "cannot open '" + path.string() + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, "slice file '" + path.string() + "': " + e.what());
    }
    const auto& list = doc.is_array() ? doc : doc.at("slices");
    std::vector<SliceSpec> specs;
    for (const auto& item : list)
        specs.push_back(slice_from_json(item));
    return specs;
}

inline nlohmann::json slices_to_json(std::span<const SliceSpec> specs)
{
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : specs)
        list.push_back(to_json(s));
    return {{"slices", list}};
}

} // namespace autoduct
