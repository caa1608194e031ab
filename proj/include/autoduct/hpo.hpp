// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/dataset.hpp"
#include "autoduct/ensemble.hpp"
#include "autoduct/error.hpp"
#include "autoduct/gp.hpp"
#include "autoduct/neural_net.hpp"
#include "autoduct/rng.hpp"
#include "autoduct/sobol.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace autoduct {

struct ContinuousDomain {
    double lo = 0.0;
    double hi = 1.0;
    bool log_scale = false;

    [[nodiscard]] bool contains(double x) const noexcept { return x >= lo && x <= hi; }

    [[nodiscard]] double to_unit(double x) const
    {
        if (log_scale)
            return std::clamp((std::log10(x) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)), 0.0, 1.0);
        return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    }

    [[nodiscard]] double from_unit(double u) const
    {
        u = std::clamp(u, 0.0, 1.0);
        if (u == 0.0)
            return lo;
        if (u == 1.0)
            return hi;
        if (log_scale) {
            const double a = std::log10(lo), b = std::log10(hi);
            return std::clamp(std::pow(10.0, a + u * (b - a)), lo, hi);
        }
        return std::clamp(lo + u * (hi - lo), lo, hi);
    }
};

enum class TrialOrigin { sobol, bo };

inline std::string_view to_string(TrialOrigin o) noexcept { return o == TrialOrigin::sobol ? "sobol" : "bo"; }

inline TrialOrigin trial_origin_from_string(std::string_view s)
{
    if (s == "sobol")
        return TrialOrigin::sobol;
    if (s == "bo")
        return TrialOrigin::bo;
    throw Error(Errc::invalid_argument, "unknown trial origin '" + std::string(s) + "'");
}

struct TrialConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-3;
    double dropout_rate = 0.0;
    int batch_size = 128;
    int hidden_layers = 6;
    int hidden_units = 32;
    Activation activation = Activation::relu;
    int trial_id = 0;
    int run_id = 0;
    TrialOrigin origin = TrialOrigin::sobol;

    [[nodiscard]] MLPConfig mlp(int input_dim = static_cast<int>(kFeatureCount)) const
    {
        return MLPConfig{input_dim, hidden_layers, hidden_units, activation, dropout_rate};
    }

    /// Training settings from this assignment; epochs, patience and seed come from `base`.
    [[nodiscard]] TrainConfig train(const TrainConfig& base) const
    {
        TrainConfig t = base;
        t.learning_rate = learning_rate;
        t.weight_decay = weight_decay;
        t.batch_size = batch_size;
        return t;
    }

    /// Equality of the seven hyperparameter values, ignoring ids and origin.
    [[nodiscard]] bool same_assignment(const TrialConfig& o) const noexcept
    {
        return learning_rate == o.learning_rate && weight_decay == o.weight_decay && dropout_rate == o.dropout_rate &&
               batch_size == o.batch_size && hidden_layers == o.hidden_layers && hidden_units == o.hidden_units &&
               activation == o.activation;
    }

    friend bool operator==(const TrialConfig&, const TrialConfig&) = default;
};

/// Unit-cube embedding: 3 continuous coordinates followed by one-hot blocks
/// for batch size, depth, width and activation.
struct EncodedPoint {
    Eigen::VectorXd coords;
};

struct SearchSpace {
    ContinuousDomain learning_rate{1e-4, 1e-2, true};
    ContinuousDomain weight_decay{1e-4, 1e-2, true};
    ContinuousDomain dropout_rate{0.0, 0.3, false};
    std::vector<int> batch_sizes{128, 256, 512};
    std::vector<int> hidden_layers{6, 7};
    std::vector<int> hidden_units{8, 16, 24, 32, 48, 64, 96};
    std::vector<Activation> activations{kAllActivations.begin(), kAllActivations.end()};

    static SearchSpace standard() { return {}; }

    static constexpr std::size_t unit_dimensions = 7;

    [[nodiscard]] std::size_t encoded_dimensions() const noexcept
    {
        return 3 + batch_sizes.size() + hidden_layers.size() + hidden_units.size() + activations.size();
    }

    void check(const TrialConfig& tc) const
    {
        auto fail = [](const std::string& what) { throw Error(Errc::out_of_domain, what); };
        if (!learning_rate.contains(tc.learning_rate))
            fail("learning_rate " + format_g17(tc.learning_rate) + " outside its domain");
        if (!weight_decay.contains(tc.weight_decay))
            fail("weight_decay " + format_g17(tc.weight_decay) + " outside its domain");
        if (!dropout_rate.contains(tc.dropout_rate))
            fail("dropout_rate " + format_g17(tc.dropout_rate) + " outside its domain");
        if (index_of(batch_sizes, tc.batch_size) < 0)
            fail("batch_size " + std::to_string(tc.batch_size) + " is not a listed choice");
        if (index_of(hidden_layers, tc.hidden_layers) < 0)
            fail("hidden_layers " + std::to_string(tc.hidden_layers) + " is not a listed choice");
        if (index_of(hidden_units, tc.hidden_units) < 0)
            fail("hidden_units " + std::to_string(tc.hidden_units) + " is not a listed choice");
        if (index_of(activations, tc.activation) < 0)
            fail("activation " + std::string(to_string(tc.activation)) + " is not a listed choice");
    }

    /// Maps a point of the raw 7-D cube (one coordinate per dimension) to a
    /// config. Categorical coordinates pick choice floor(u * k).
    [[nodiscard]] TrialConfig decode_unit(std::span<const double> u) const
    {
        if (u.size() != unit_dimensions)
            throw Error(Errc::dimension_mismatch, "decode_unit expects 7 coordinates");
        TrialConfig tc;
        tc.learning_rate = learning_rate.from_unit(u[0]);
        tc.weight_decay = weight_decay.from_unit(u[1]);
        tc.dropout_rate = dropout_rate.from_unit(u[2]);
        tc.batch_size = batch_sizes[bucket(u[3], batch_sizes.size())];
        tc.hidden_layers = hidden_layers[bucket(u[4], hidden_layers.size())];
        tc.hidden_units = hidden_units[bucket(u[5], hidden_units.size())];
        tc.activation = activations[bucket(u[6], activations.size())];
        return tc;
    }

    [[nodiscard]] EncodedPoint encode(const TrialConfig& tc) const
    {
        check(tc);
        EncodedPoint p;
        p.coords = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(encoded_dimensions()));
        p.coords(0) = learning_rate.to_unit(tc.learning_rate);
        p.coords(1) = weight_decay.to_unit(tc.weight_decay);
        p.coords(2) = dropout_rate.to_unit(tc.dropout_rate);
        Eigen::Index offset = 3;
        auto one_hot = [&](auto const& choices, auto value) {
            p.coords(offset + index_of(choices, value)) = 1.0;
            offset += static_cast<Eigen::Index>(choices.size());
        };
        one_hot(batch_sizes, tc.batch_size);
        one_hot(hidden_layers, tc.hidden_layers);
        one_hot(hidden_units, tc.hidden_units);
        one_hot(activations, tc.activation);
        return p;
    }

    /// Inverse of encode. Each one-hot block decodes to its largest weight,
    /// lowest index on ties. Ids and origin are left at their defaults.
    [[nodiscard]] TrialConfig decode(const EncodedPoint& p) const
    {
        if (static_cast<std::size_t>(p.coords.size()) != encoded_dimensions())
            throw Error(Errc::dimension_mismatch, "encoded point has " + std::to_string(p.coords.size()) +
                                                      " coordinates, expected " + std::to_string(encoded_dimensions()));
        for (Eigen::Index i = 0; i < p.coords.size(); ++i)
            if (!(p.coords(i) >= 0.0 && p.coords(i) <= 1.0))
                throw Error(Errc::out_of_domain, "encoded coordinate " + std::to_string(i) + " outside [0, 1]");
        TrialConfig tc;
        tc.learning_rate = learning_rate.from_unit(p.coords(0));
        tc.weight_decay = weight_decay.from_unit(p.coords(1));
        tc.dropout_rate = dropout_rate.from_unit(p.coords(2));
        Eigen::Index offset = 3;
        auto arg_max = [&](std::size_t k) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < k; ++i)
                if (p.coords(offset + static_cast<Eigen::Index>(i)) > p.coords(offset + static_cast<Eigen::Index>(best)))
                    best = i;
            offset += static_cast<Eigen::Index>(k);
            return best;
        };
        tc.batch_size = batch_sizes[arg_max(batch_sizes.size())];
        tc.hidden_layers = hidden_layers[arg_max(hidden_layers.size())];
        tc.hidden_units = hidden_units[arg_max(hidden_units.size())];
        tc.activation = activations[arg_max(activations.size())];
        return tc;
    }

private:
    template <class T>
    static Eigen::Index index_of(const std::vector<T>& choices, const T& value)
    {
        const auto it = std::find(choices.begin(), choices.end(), value);
        return it == choices.end() ? -1 : static_cast<Eigen::Index>(it - choices.begin());
    }

    static std::size_t bucket(double u, std::size_t k)
    {
        const double scaled = std::floor(std::clamp(u, 0.0, 1.0) * static_cast<double>(k));
        return std::min(static_cast<std::size_t>(scaled), k - 1);
    }
};

/// First `n` Sobol points of the 7-D raw cube decoded into configs, with
/// trial ids 0..n-1 and origin sobol.
inline std::vector<TrialConfig> sample_sobol(const SearchSpace& space, std::uint64_t n,
                                             std::optional<std::uint64_t> scramble_seed = std::nullopt)
{
    if (n < 1)
        throw Error(Errc::invalid_argument, "sample_sobol needs n >= 1");
    if (n > SobolSequence::max_points)
        throw Error(Errc::dimension_overflow, "requested more than 2^31 Sobol points");
    SobolSequence seq(SearchSpace::unit_dimensions, scramble_seed);
    std::vector<TrialConfig> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        auto tc = space.decode_unit(seq.next());
        tc.trial_id = static_cast<int>(i);
        out.push_back(tc);
    }
    return out;
}

inline double expected_improvement(const GaussianProcess& gp, const EncodedPoint& p, double incumbent)
{
    const auto post = gp.predict(p.coords);
    return expected_improvement(post.mean, post.stddev(), incumbent);
}

/// Argmax of EI over explicit candidates, lowest index on ties.
inline std::size_t argmax_expected_improvement(const GaussianProcess& gp, std::span<const EncodedPoint> candidates,
                                               double incumbent)
{
    if (candidates.empty())
        throw Error(Errc::empty_input, "no acquisition candidates");
    std::size_t best = 0;
    double best_ei = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double ei = expected_improvement(gp, candidates[i], incumbent);
        if (ei > best_ei) {
            best_ei = ei;
            best = i;
        }
    }
    return best;
}

/// EI argmax over `candidate_count` scrambled Sobol candidates drawn from
/// the raw cube; the incumbent is the minimum posterior mean at observed points.
inline TrialConfig propose_next(const GaussianProcess& gp, const SearchSpace& space, std::size_t candidate_count,
                                std::uint64_t seed)
{
    if (candidate_count < 1)
        throw Error(Errc::invalid_argument, "candidate_count must be positive");
    SobolSequence seq(SearchSpace::unit_dimensions, seed);
    std::vector<TrialConfig> configs;
    std::vector<EncodedPoint> encoded;
    configs.reserve(candidate_count);
    encoded.reserve(candidate_count);
    for (std::size_t i = 0; i < candidate_count; ++i) {
        configs.push_back(space.decode_unit(seq.next()));
        encoded.push_back(space.encode(configs.back()));
    }
    const auto best = argmax_expected_improvement(gp, encoded, gp.min_observed_mean());
    auto tc = configs[best];
    tc.origin = TrialOrigin::bo;
    return tc;
}

// ---------------------------------------------------------------------------
// Trial bookkeeping

enum class TrialStatus { ok, diverged };

inline std::string_view to_string(TrialStatus s) noexcept { return s == TrialStatus::ok ? "ok" : "diverged"; }

struct TrialResult {
    TrialConfig config;
    double val_rmse = 0.0; // kW/m2
    double wall_time_s = 0.0;
    TrialStatus status = TrialStatus::ok;
};

/// Orders ok results by (RMSE, trial id, run id); diverged results follow by (trial id, run id).
inline bool leaderboard_before(const TrialResult& a, const TrialResult& b) noexcept
{
    if (a.status != b.status)
        return a.status == TrialStatus::ok;
    if (a.status == TrialStatus::ok && a.val_rmse != b.val_rmse)
        return a.val_rmse < b.val_rmse;
    if (a.config.trial_id != b.config.trial_id)
        return a.config.trial_id < b.config.trial_id;
    return a.config.run_id < b.config.run_id;
}

class Leaderboard {
public:
    void add(TrialResult r) { results_.push_back(std::move(r)); }

    void merge(const Leaderboard& other)
    {
        results_.insert(results_.end(), other.results_.begin(), other.results_.end());
    }

    [[nodiscard]] const std::vector<TrialResult>& results() const noexcept { return results_; }
    [[nodiscard]] std::size_t size() const noexcept { return results_.size(); }

    [[nodiscard]] std::vector<TrialResult> sorted() const
    {
        auto out = results_;
        std::stable_sort(out.begin(), out.end(), leaderboard_before);
        return out;
    }

    [[nodiscard]] std::size_t ok_count() const noexcept
    {
        return static_cast<std::size_t>(std::count_if(results_.begin(), results_.end(),
                                                      [](const auto& r) { return r.status == TrialStatus::ok; }));
    }

    /// Best ok result of each run, ordered by run id.
    [[nodiscard]] std::vector<TrialResult> best_per_run() const
    {
        std::vector<TrialResult> best;
        for (const auto& r : sorted()) {
            if (r.status != TrialStatus::ok)
                continue;
            const bool seen = std::any_of(best.begin(), best.end(),
                                          [&](const auto& b) { return b.config.run_id == r.config.run_id; });
            if (!seen)
                best.push_back(r);
        }
        std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) { return a.config.run_id < b.config.run_id; });
        return best;
    }

    [[nodiscard]] std::optional<TrialResult> best() const
    {
        const auto s = sorted();
        if (s.empty() || s.front().status != TrialStatus::ok)
            return std::nullopt;
        return s.front();
    }

private:
    std::vector<TrialResult> results_;
};

inline std::vector<TrialConfig> select_top_k(const Leaderboard& board, std::size_t k = 15)
{
    if (k < 1)
        throw Error(Errc::invalid_argument, "k must be positive");
    if (board.ok_count() < k)
        throw Error(Errc::insufficient_trials, "need " + std::to_string(k) + " ok trials, have " +
                                                   std::to_string(board.ok_count()));
    // Trials share the initialization seed, so a repeated assignment would
    // add an identical member; only its first (best-ranked) copy counts.
    std::vector<TrialConfig> out;
    out.reserve(k);
    for (const auto& r : board.sorted()) {
        if (out.size() == k || r.status != TrialStatus::ok)
            break;
        const bool repeat = std::any_of(out.begin(), out.end(), [&](const auto& c) { return c.same_assignment(r.config); });
        if (!repeat)
            out.push_back(r.config);
    }
    if (out.size() < k)
        throw Error(Errc::insufficient_trials, "need " + std::to_string(k) + " distinct ok trials, have " +
                                                   std::to_string(out.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Trial log (JSON lines)

inline nlohmann::json to_json(const TrialConfig& tc)
{
    return {{"learning_rate", tc.learning_rate}, {"weight_decay", tc.weight_decay},
            {"dropout_rate", tc.dropout_rate},   {"batch_size", tc.batch_size},
            {"hidden_layers", tc.hidden_layers}, {"hidden_units", tc.hidden_units},
            {"activation", std::string(to_string(tc.activation))}};
}

inline nlohmann::json to_json(const TrialResult& r)
{
    return {{"run_id", r.config.run_id},
            {"trial_id", r.config.trial_id},
            {"origin", std::string(to_string(r.config.origin))},
            {"config", to_json(r.config)},
            {"val_rmse", r.status == TrialStatus::ok ? nlohmann::json(r.val_rmse) : nlohmann::json(nullptr)},
            {"status", std::string(to_string(r.status))},
            {"wall_time_s", r.wall_time_s}};
}

/// Reads the assignment fields only; ids and origin stay at their defaults.
inline TrialConfig trial_config_from_json(const nlohmann::json& c)
{
    TrialConfig tc;
    tc.learning_rate = c.at("learning_rate").get<double>();
    tc.weight_decay = c.at("weight_decay").get<double>();
    tc.dropout_rate = c.at("dropout_rate").get<double>();
    tc.batch_size = c.at("batch_size").get<int>();
    tc.hidden_layers = c.at("hidden_layers").get<int>();
    tc.hidden_units = c.at("hidden_units").get<int>();
    tc.activation = activation_from_string(c.at("activation").get<std::string>());
    return tc;
}

inline TrialResult trial_result_from_json(const nlohmann::json& j)
{
    try {
        TrialResult r;
        r.config = trial_config_from_json(j.at("config"));
        r.config.run_id = j.at("run_id").get<int>();
        r.config.trial_id = j.at("trial_id").get<int>();
        r.config.origin = trial_origin_from_string(j.at("origin").get<std::string>());
        const auto status = j.at("status").get<std::string>();
        if (status == "ok")
            r.status = TrialStatus::ok;
        else if (status == "diverged")
            r.status = TrialStatus::diverged;
        else
            throw Error(Errc::corrupt_artifact, "unknown trial status '" + status + "'");
        r.val_rmse = j.at("val_rmse").is_null() ? 0.0 : j.at("val_rmse").get<double>();
        r.wall_time_s = j.value("wall_time_s", 0.0);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::corrupt_artifact, std::string("trial record: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::corrupt_artifact)
            throw;
        throw Error(Errc::corrupt_artifact, "trial record: " + e.detail());
    }
}

/// Append-only JSON-lines file; appends are serialized and flushed per line.
class TrialLog {
public:
    explicit TrialLog(std::filesystem::path path) : path_(std::move(path))
    {
        if (path_.has_parent_path())
            std::filesystem::create_directories(path_.parent_path());
        out_.open(path_, std::ios::app | std::ios::binary);
        if (!out_)
            throw Error(Errc::io_failure, "cannot open trial log '" + path_.string() + "'");
    }

    void append(const TrialResult& r)
    {
        std::lock_guard lock(mutex_);
        out_ << to_json(r).dump() << '\n';
        out_.flush();
        if (!out_)
            throw Error(Errc::io_failure, "write to trial log '" + path_.string() + "' failed");
    }

    /// All complete records; a torn final line (from an interrupted append) is ignored.
    static std::vector<TrialResult> load(const std::filesystem::path& path)
    {
        std::vector<TrialResult> out;
        std::ifstream in(path, std::ios::binary);
        if (!in)
            return out;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            const bool last = in.peek() == std::char_traits<char>::eof();
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                if (last)
                    break;
                throw Error(Errc::corrupt_artifact, "malformed line in trial log '" + path.string() + "'");
            }
            out.push_back(trial_result_from_json(j));
        }
        return out;
    }

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Optimization loop

using TrialEvaluator = std::function<TrialResult(const TrialConfig&)>;

struct BoSettings {
    int n_sobol = 16;
    int n_bo = 32;
    std::size_t candidate_count = 2048;
    std::uint64_t seed = 0;
    int run_id = 0;
    bool scramble_initial = true;
    GpOptions gp;
};

struct BoHooks {
    std::function<void(const TrialResult&)> on_result;
    /// Previously logged results; a trial whose id, run and assignment match is reused instead of re-evaluated.
    std::vector<TrialResult> resume;
};

/// GP objective for a trial: log RMSE; diverged trials count as twice the
/// worst ok RMSE seen so far.
inline std::vector<double> surrogate_objectives(std::span<const TrialResult> trials)
{
    double worst = 0.0;
    bool any_ok = false;
    for (const auto& t : trials)
        if (t.status == TrialStatus::ok) {
            worst = std::max(worst, t.val_rmse);
            any_ok = true;
        }
    std::vector<double> y;
    y.reserve(trials.size());
    for (const auto& t : trials) {
        const double rmse = t.status == TrialStatus::ok ? t.val_rmse : 2.0 * worst;
        y.push_back(std::log(std::max(rmse, 1e-12)));
    }
    if (!any_ok)
        y.assign(trials.size(), 0.0);
    return y;
}

namespace detail {

inline TrialResult evaluate_trial(const TrialEvaluator& evaluator, const TrialConfig& tc)
{
    const auto started = std::chrono::steady_clock::now();
    TrialResult r;
    try {
        r = evaluator(tc);
    } catch (const Error& e) {
        if (e.code() != Errc::diverged_loss && e.code() != Errc::non_positive_variance)
            throw;
        r.status = TrialStatus::diverged;
    }
    r.config = tc;
    if (r.status == TrialStatus::ok && !(r.val_rmse >= 0.0 && std::isfinite(r.val_rmse)))
        r.status = TrialStatus::diverged;
    if (r.status == TrialStatus::diverged)
        r.val_rmse = 0.0;
    if (r.wall_time_s <= 0.0)
        r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return r;
}

} // namespace detail

/// One optimization run: `n_sobol` quasi-random trials, then `n_bo` rounds
/// of GP fit and EI proposal. Runs with fewer than two ok trials keep
/// drawing Sobol points until the surrogate has something to fit.
inline Leaderboard run_bo(const SearchSpace& space, const BoSettings& s, const TrialEvaluator& evaluator,
                          const BoHooks& hooks = {})
{
    if (s.n_sobol < 2)
        throw Error(Errc::invalid_argument, "n_sobol must be at least 2");
    if (s.n_bo < 0)
        throw Error(Errc::invalid_argument, "n_bo must be non-negative");

    SobolSequence initial(SearchSpace::unit_dimensions,
                          s.scramble_initial ? std::optional<std::uint64_t>(derive_seed(s.seed, 0x50B0)) : std::nullopt);
    Leaderboard board;
    std::vector<TrialResult> history;

    auto run_trial = [&](TrialConfig tc) {
        tc.run_id = s.run_id;
        tc.trial_id = static_cast<int>(history.size());
        const auto cached = std::find_if(hooks.resume.begin(), hooks.resume.end(), [&](const TrialResult& r) {
            return r.config.run_id == tc.run_id && r.config.trial_id == tc.trial_id && r.config.origin == tc.origin &&
                   r.config.same_assignment(tc);
        });
        TrialResult r = cached != hooks.resume.end() ? *cached : detail::evaluate_trial(evaluator, tc);
        r.config = tc;
        history.push_back(r);
        board.add(r);
        if (hooks.on_result && cached == hooks.resume.end())
            hooks.on_result(r);
    };

    for (int i = 0; i < s.n_sobol; ++i)
        run_trial(space.decode_unit(initial.next()));

    for (int j = 0; j < s.n_bo; ++j) {
        const auto ok = std::count_if(history.begin(), history.end(),
                                      [](const auto& r) { return r.status == TrialStatus::ok; });
        if (ok < 2) {
            auto tc = space.decode_unit(initial.next());
            tc.origin = TrialOrigin::sobol;
            run_trial(tc);
            continue;
        }
        std::vector<Eigen::VectorXd> x;
        x.reserve(history.size());
        for (const auto& r : history)
            x.push_back(space.encode(r.config).coords);
        const auto y = surrogate_objectives(history);
        const auto gp = GaussianProcess::fit(std::move(x), y, s.gp);
        run_trial(propose_next(gp, space, s.candidate_count, derive_seed(s.seed, 0xB0000 + static_cast<std::uint64_t>(j))));
    }
    return board;
}

/// Independent runs with seeds[i] and run id i, up to `jobs` at once,
/// merged in run order. `on_result` may be called from several threads.
inline Leaderboard run_parallel_bo(const SearchSpace& space, const BoSettings& per_run,
                                   std::span<const std::uint64_t> seeds, const TrialEvaluator& evaluator,
                                   unsigned jobs = 1, const BoHooks& hooks = {})
{
    if (seeds.empty())
        throw Error(Errc::invalid_argument, "run_parallel_bo needs at least one seed");
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t k = 0; k < i; ++k)
            if (seeds[i] == seeds[k])
                throw Error(Errc::duplicate_seed, "run seed " + std::to_string(seeds[i]) + " appears twice");

    std::vector<Leaderboard> boards(seeds.size());
    std::vector<std::exception_ptr> failures(seeds.size());
    auto run_one = [&](std::size_t i) {
        try {
            BoSettings s = per_run;
            s.seed = seeds[i];
            s.run_id = static_cast<int>(i);
            boards[i] = run_bo(space, s, evaluator, hooks);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };

    if (jobs <= 1 || seeds.size() == 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i)
            run_one(i);
    } else {
        std::mutex mutex;
        std::size_t next = 0;
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < std::min<std::size_t>(jobs, seeds.size()); ++w)
            workers.emplace_back([&] {
                for (;;) {
                    std::size_t i = 0;
                    {
                        std::lock_guard lock(mutex);
                        if (next >= seeds.size())
                            return;
                        i = next++;
                    }
                    run_one(i);
                }
            });
    }

    Leaderboard merged;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (failures[i])
            std::rethrow_exception(failures[i]);
        merged.merge(boards[i]);
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Network-training objective

struct TrialBudget {
    int epochs = 300;
    int patience = 30;
    std::uint64_t seed = 0;
};

/// Validation RMSE in kW/m2 of the mean prediction.
inline double validation_rmse(const Parameters& p, const MLPConfig& cfg, const Normalizer& norm, const Dataset& val)
{
    const auto preds = predict_batch(p, cfg, norm, val.points);
    double ss = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i].mean - *val.points[i].chf;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(preds.size()));
}

/// Trains one network per trial on the shared split. The initialization seed
/// depends only on the budget seed, so equal assignments give equal results.
inline TrialEvaluator make_training_evaluator(const SplitDataset& splits, const Normalizer& norm, TrialBudget budget)
{
    return [&splits, norm, budget](const TrialConfig& tc) {
        const TrainConfig base{1e-3, 1e-4, 128, budget.epochs, budget.patience, budget.seed};
        const auto mlp = tc.mlp();
        const auto net = train(splits, norm, mlp, tc.train(base));
        TrialResult r;
        r.config = tc;
        r.val_rmse = validation_rmse(net.params, mlp, norm, splits.validation);
        r.wall_time_s = net.history.wall_time_s;
        r.status = std::isfinite(r.val_rmse) ? TrialStatus::ok : TrialStatus::diverged;
        return r;
    };
}

/// Ensemble member specs for selected configs; member i trains with seed derive_seed(seed, i).
inline std::vector<MemberSpec> member_specs_from_trials(std::span<const TrialConfig> configs, const TrialBudget& budget)
{
    std::vector<MemberSpec> specs;
    specs.reserve(configs.size());
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto& tc = configs[i];
        const TrainConfig base{1e-3, 1e-4, 128, budget.epochs, budget.patience, derive_seed(budget.seed, i)};
        specs.push_back({tc.mlp(), tc.train(base),
                         "run " + std::to_string(tc.run_id) + " trial " + std::to_string(tc.trial_id)});
    }
    return specs;
}

} // namespace autoduct
