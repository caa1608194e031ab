// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/dataset.hpp"
#include "autoduct/error.hpp"
#include "autoduct/neural_net.hpp"
#include "autoduct/numeric.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace autoduct {

struct MemberSpec {
    MLPConfig mlp;
    TrainConfig train;
    std::string provenance;
};

struct EnsembleMember {
    MLPConfig mlp;
    TrainConfig train;
    Parameters params;
    std::string provenance;
    TrainHistory history;
};

/// M independently trained Gaussian-output networks sharing one normalizer.
/// Members may differ in architecture.
struct Ensemble {
    std::vector<EnsembleMember> members;
    Normalizer normalizer;

    [[nodiscard]] std::size_t size() const noexcept { return members.size(); }

    /// Physical-unit member predictions, indexed [point][member].
    [[nodiscard]] std::vector<std::vector<GaussianPrediction>> member_predictions(std::span<const DataPoint> points) const
    {
        if (members.empty())
            throw Error(Errc::empty_ensemble, "ensemble has no members");
        std::vector<std::vector<GaussianPrediction>> out(points.size());
        for (const auto& m : members) {
            const auto preds = predict_batch(m.params, m.mlp, normalizer, points);
            for (std::size_t i = 0; i < points.size(); ++i)
                out[i].push_back(preds[i]);
        }
        return out;
    }
};

struct EnsemblePrediction {
    double mean = 0.0;
    double aleatory_var = 0.0;
    double epistemic_var = 0.0;
    double total_var = 0.0;
    std::vector<double> member_means;
    std::vector<double> member_vars;
};

/// Trains each member independently with `neural_net::train`, up to `jobs`
/// at a time. Member order is preserved and seeds must be pairwise distinct.
inline Ensemble train_ensemble(const SplitDataset& splits, const Normalizer& normalizer,
                               std::span<const MemberSpec> member_specs, unsigned jobs = 0)
{
    if (member_specs.empty())
        throw Error(Errc::empty_ensemble, "train_ensemble needs at least one member");
    std::set<std::uint64_t> seeds;
    for (const auto& s : member_specs)
        if (!seeds.insert(s.train.seed).second)
            throw Error(Errc::duplicate_seed, "member seed " + std::to_string(s.train.seed) + " appears twice");

    Ensemble ens;
    ens.normalizer = normalizer;
    ens.members.resize(member_specs.size());
    std::vector<std::exception_ptr> failures(member_specs.size());

    auto train_one = [&](std::size_t i) {
        try {
            const auto& spec = member_specs[i];
            auto net = train(splits, normalizer, spec.mlp, spec.train);
            ens.members[i] = EnsembleMember{spec.mlp, spec.train, std::move(net.params), spec.provenance, std::move(net.history)};
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };

    if (jobs == 0)
        jobs = std::max(1u, std::thread::hardware_concurrency());
    if (jobs <= 1 || member_specs.size() == 1) {
        for (std::size_t i = 0; i < member_specs.size(); ++i)
            train_one(i);
    } else {
        std::mutex mutex;
        std::size_t next = 0;
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < std::min<std::size_t>(jobs, member_specs.size()); ++w)
            workers.emplace_back([&] {
                for (;;) {
                    std::size_t i = 0;
                    {
                        std::lock_guard lock(mutex);
                        if (next >= member_specs.size())
                            return;
                        i = next++;
                    }
                    train_one(i);
                }
            });
    }

    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i])
            continue;
        try {
            std::rethrow_exception(failures[i]);
        } catch (const Error& e) {
            throw Error(e.code(), "member " + std::to_string(i) + ": " + e.detail());
        }
    }
    return ens;
}

/// Equally weighted mixture moments: mean of member means; aleatory = mean
/// member variance; epistemic = population variance of member means.
inline EnsemblePrediction aggregate(std::span<const GaussianPrediction> member_preds)
{
    if (member_preds.empty())
        throw Error(Errc::empty_ensemble, "aggregate needs at least one member prediction");
    const auto m = static_cast<double>(member_preds.size());
    EnsemblePrediction out;
    for (const auto& p : member_preds) {
        if (!std::isfinite(p.mean) || !std::isfinite(p.var))
            throw Error(Errc::invalid_argument, "member prediction is not finite");
        out.member_means.push_back(p.mean);
        out.member_vars.push_back(p.var);
        out.mean += p.mean;
        out.aleatory_var += p.var;
    }
    out.mean /= m;
    out.aleatory_var /= m;
    for (const auto& p : member_preds) {
        const double d = p.mean - out.mean;
        out.epistemic_var += d * d;
    }
    out.epistemic_var /= m;
    out.total_var = out.aleatory_var + out.epistemic_var;
    return out;
}

/// (1/M) sum_m N(y; mu_m, var_m).
inline double predictive_density(std::span<const GaussianPrediction> member_preds, double y)
{
    if (member_preds.empty())
        throw Error(Errc::empty_ensemble, "predictive_density needs at least one member");
    double sum = 0.0;
    for (const auto& p : member_preds) {
        if (!(p.var > 0.0))
            throw Error(Errc::non_positive_variance, "member variance must be positive");
        const double z = (y - p.mean) / std::sqrt(p.var);
        sum += std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi * p.var);
    }
    return sum / static_cast<double>(member_preds.size());
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Gaussian approximation to the mixture: mean +/- z(level) sqrt(total_var).
inline Interval interval(const EnsemblePrediction& ep, double level)
{
    const double half = central_z(level) * std::sqrt(std::max(ep.total_var, 0.0));
    return {ep.mean - half, ep.mean + half};
}

inline std::vector<EnsemblePrediction> predict(const Ensemble& ens, std::span<const DataPoint> points)
{
    const auto per_point = ens.member_predictions(points);
    std::vector<EnsemblePrediction> out;
    out.reserve(per_point.size());
    for (const auto& preds : per_point)
        out.push_back(aggregate(preds));
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/manifest.json plus <dir>/member_NNN.json per member.

inline constexpr int kEnsembleFormatVersion = 1;

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(Errc::io_failure, "cannot write '" + path.string() + "'");
    out << text;
    if (!out)
        throw Error(Errc::io_failure, "short write to '" + path.string() + "'");
}

inline nlohmann::json read_json_file(const std::filesystem::path& path, Errc on_parse_error)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(on_parse_error == Errc::corrupt_artifact ? Errc::corrupt_artifact : Errc::io_failure,
                    "cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(on_parse_error, "'" + path.string() + "': " + e.what());
    }
}

inline std::string member_file_name(std::size_t i)
{
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "member_%03zu.json", i);
    return buffer;
}

} // namespace detail

inline void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error(Errc::io_failure, "cannot create '" + dir.string() + "': " + ec.message());

    nlohmann::json members = nlohmann::json::array();
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
        const auto& m = ens.members[i];
        const std::string file = detail::member_file_name(i);
        detail::write_text_file(dir / file, network_to_json(m.params, m.mlp, ens.normalizer).dump() + "\n");
        members.push_back({{"file", file},
                           {"seed", m.train.seed},
                           {"config", to_json(m.mlp)},
                           {"train", to_json(m.train)},
                           {"provenance", m.provenance},
                           {"best_epoch", m.history.best_epoch},
                           {"epochs_run", m.history.epochs_run()}});
    }
    const nlohmann::json manifest{{"format_version", kEnsembleFormatVersion},
                                  {"member_count", ens.members.size()},
                                  {"normalizer", to_json(ens.normalizer)},
                                  {"members", std::move(members)}};
    detail::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Ensemble load_ensemble(const std::filesystem::path& dir)
{
    const auto manifest = detail::read_json_file(dir / "manifest.json", Errc::corrupt_artifact);
    if (!manifest.is_object() || !manifest.contains("format_version"))
        throw Error(Errc::corrupt_artifact, "manifest lacks format_version");
    if (manifest.at("format_version") != kEnsembleFormatVersion)
        throw Error(Errc::version_mismatch, "ensemble format " + manifest.at("format_version").dump() + ", expected " +
                                                std::to_string(kEnsembleFormatVersion));
    try {
        Ensemble ens;
        ens.normalizer = normalizer_from_json(manifest.at("normalizer"));
        for (const auto& entry : manifest.at("members")) {
            const auto doc = network_from_json(detail::read_json_file(dir / entry.at("file").get<std::string>(),
                                                                      Errc::corrupt_artifact));
            if (!(doc.normalizer == ens.normalizer))
                throw Error(Errc::corrupt_artifact, "member normalizer differs from the manifest");
            EnsembleMember m;
            m.mlp = doc.config;
            m.params = doc.params;
            m.train = train_config_from_json(entry.at("train"));
            m.provenance = entry.value("provenance", std::string{});
            m.history.best_epoch = entry.value("best_epoch", -1);
            ens.members.push_back(std::move(m));
        }
        if (ens.members.empty() || ens.members.size() != manifest.at("member_count").get<std::size_t>())
            throw Error(Errc::corrupt_artifact, "member count does not match the manifest");
        return ens;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::corrupt_artifact, e.what());
    }
}

} // namespace autoduct
