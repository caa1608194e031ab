// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/context.hpp"
#include "autoduct/error.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <string>
#include <string_view>

namespace autoduct::agents {

enum class Stage { model_generation, training_execution, evaluation_execution, report_synthesis };

inline constexpr std::array<Stage, 4> kAllStages{Stage::model_generation, Stage::training_execution,
                                                 Stage::evaluation_execution, Stage::report_synthesis};

inline std::string_view to_string(Stage s) noexcept
{
    switch (s) {
    case Stage::model_generation: return "model_generation";
    case Stage::training_execution: return "training_execution";
    case Stage::evaluation_execution: return "evaluation_execution";
    case Stage::report_synthesis: return "report_synthesis";
    }
    return "unknown";
}

/// Task kind handled by a pipeline stage ("model", "train", "evaluate"; "report" for synthesis).
inline std::string_view task_kind(Stage s) noexcept
{
    switch (s) {
    case Stage::model_generation: return "model";
    case Stage::training_execution: return "train";
    case Stage::evaluation_execution: return "evaluate";
    case Stage::report_synthesis: return "report";
    }
    return "unknown";
}

inline Stage stage_from_string(std::string_view s)
{
    for (Stage st : kAllStages)
        if (to_string(st) == s || task_kind(st) == s)
            return st;
    throw Error(Errc::invalid_argument, "unknown stage '" + std::string(s) + "'");
}

enum class StageStatus { pending, in_progress, done, failed };

inline std::string_view to_string(StageStatus s) noexcept
{
    switch (s) {
    case StageStatus::pending: return "pending";
    case StageStatus::in_progress: return "in_progress";
    case StageStatus::done: return "done";
    case StageStatus::failed: return "failed";
    }
    return "unknown";
}

inline StageStatus stage_status_from_string(std::string_view s)
{
    for (auto st : {StageStatus::pending, StageStatus::in_progress, StageStatus::done, StageStatus::failed})
        if (to_string(st) == s)
            return st;
    throw Error(Errc::corrupt_state, "unknown stage status '" + std::string(s) + "'");
}

/// UTC wall clock in ISO-8601 with second resolution.
inline std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

using Clock = std::function<std::string()>;

struct StageState {
    StageStatus status = StageStatus::pending;
    int error_count = 0;
    std::string updated_at;

    friend bool operator==(const StageState&, const StageState&) = default;
};

inline constexpr int kStateFormatVersion = 1;

struct WorkflowState {
    int version = kStateFormatVersion;
    std::string run_id;
    std::string mode;
    std::array<StageState, 4> stages{};

    [[nodiscard]] const StageState& at(Stage s) const { return stages[static_cast<std::size_t>(s)]; }
    [[nodiscard]] bool done(Stage s) const { return at(s).status == StageStatus::done; }
    [[nodiscard]] bool complete() const { return done(Stage::report_synthesis); }

    [[nodiscard]] int total_errors() const noexcept
    {
        int n = 0;
        for (const auto& s : stages)
            n += s.error_count;
        return n;
    }

    /// Transition with the monotonicity checks: done never regresses and a
    /// stage becomes done only after all earlier stages are done.
    void set(Stage s, StageStatus status, const std::string& when)
    {
        auto& st = stages[static_cast<std::size_t>(s)];
        if (st.status == StageStatus::done && status != StageStatus::done)
            throw Error(Errc::invalid_argument, "stage " + std::string(to_string(s)) + " is done and cannot regress");
        if (status == StageStatus::done)
            for (std::size_t k = 0; k < static_cast<std::size_t>(s); ++k)
                if (stages[k].status != StageStatus::done)
                    throw Error(Errc::invalid_argument, "stage " + std::string(to_string(s)) +
                                                            " cannot finish before " +
                                                            std::string(to_string(static_cast<Stage>(k))));
        st.status = status;
        st.updated_at = when;
    }

    void add_error(Stage s, const std::string& when)
    {
        auto& st = stages[static_cast<std::size_t>(s)];
        ++st.error_count;
        st.updated_at = when;
    }

    /// Checks the invariants a loaded state must satisfy.
    void validate() const
    {
        bool prefix_done = true;
        for (std::size_t k = 0; k < stages.size(); ++k) {
            if (stages[k].error_count < 0)
                throw Error(Errc::corrupt_state, "negative error count");
            if (stages[k].status == StageStatus::done && !prefix_done)
                throw Error(Errc::corrupt_state, "stage " + std::string(to_string(static_cast<Stage>(k))) +
                                                     " is done while an earlier stage is not");
            prefix_done = prefix_done && stages[k].status == StageStatus::done;
        }
    }

    friend bool operator==(const WorkflowState&, const WorkflowState&) = default;
};

inline nlohmann::json to_json(const WorkflowState& s)
{
    nlohmann::json stages = nlohmann::json::object();
    for (Stage st : kAllStages) {
        const auto& v = s.at(st);
        stages[std::string(to_string(st))] = {
            {"status", std::string(to_string(v.status))}, {"error_count", v.error_count}, {"updated_at", v.updated_at}};
    }
    return {{"version", s.version}, {"run_id", s.run_id}, {"mode", s.mode}, {"stages", stages}};
}

inline WorkflowState workflow_state_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("version") || !j.at("version").is_number_integer())
        throw Error(Errc::corrupt_state, "state lacks an integer version");
    if (j.at("version").get<int>() != kStateFormatVersion)
        throw Error(Errc::version_mismatch, "state version " + j.at("version").dump() + ", expected " +
                                                std::to_string(kStateFormatVersion));
    try {
        WorkflowState s;
        s.run_id = j.at("run_id").get<std::string>();
        s.mode = j.at("mode").get<std::string>();
        const auto& stages = j.at("stages");
        for (Stage st : kAllStages) {
            const auto& v = stages.at(std::string(to_string(st)));
            auto& dst = s.stages[static_cast<std::size_t>(st)];
            dst.status = stage_status_from_string(v.at("status").get<std::string>());
            dst.error_count = v.at("error_count").get<int>();
            dst.updated_at = v.at("updated_at").get<std::string>();
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::corrupt_state, e.what());
    }
}

/// Atomic write (temporary file + rename) through the sandbox.
inline void persist_state(const WorkflowState& s, Sandbox& sandbox, const fs::path& path)
{
    sandbox.write_text(path, to_json(s).dump(2) + "\n");
}

inline WorkflowState load_state(Sandbox& sandbox, const fs::path& path)
{
    std::string text;
    try {
        text = sandbox.read_text(path);
    } catch (const Error& e) {
        if (e.code() == Errc::sandbox_violation)
            throw;
        throw Error(Errc::corrupt_state, "cannot read state '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::corrupt_state, "state '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return workflow_state_from_json(j);
}

} // namespace autoduct::agents
