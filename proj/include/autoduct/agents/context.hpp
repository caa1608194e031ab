// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/error.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autoduct::agents {

namespace fs = std::filesystem;

enum class Role { dataset, model_spec, training_spec, evaluation_spec, ensemble_dir, report_dir, state_file };

inline constexpr std::array<Role, 7> kAllRoles{Role::dataset,      Role::model_spec, Role::training_spec,
                                               Role::evaluation_spec, Role::ensemble_dir, Role::report_dir,
                                               Role::state_file};

inline std::string_view to_string(Role r) noexcept
{
    switch (r) {
    case Role::dataset: return "dataset";
    case Role::model_spec: return "model_spec";
    case Role::training_spec: return "training_spec";
    case Role::evaluation_spec: return "evaluation_spec";
    case Role::ensemble_dir: return "ensemble_dir";
    case Role::report_dir: return "report_dir";
    case Role::state_file: return "state_file";
    }
    return "unknown";
}

inline std::optional<Role> role_from_string(std::string_view s) noexcept
{
    for (Role r : kAllRoles)
        if (to_string(r) == s)
            return r;
    return std::nullopt;
}

/// Lexically normalized absolute form of `p`, relative paths taken against `base`.
inline fs::path normalize_under(const fs::path& base, const fs::path& p)
{
    const fs::path abs = p.is_absolute() ? p : base / p;
    return abs.lexically_normal();
}

/// True when `p` (already normalized) lies at or below `root`.
inline bool path_within(const fs::path& root, const fs::path& p)
{
    const auto rel = p.lexically_relative(root);
    if (rel.empty())
        return false;
    const auto first = *rel.begin();
    return first != ".." && !rel.is_absolute();
}

/// Registry of artifact paths for one run. Every bound path lies under the
/// workspace root; a role binds once (rebinding to the same path is a no-op).
class ProjectContext {
public:
    ProjectContext() = default;

    ProjectContext(const fs::path& root, std::string run_id) : run_id_(std::move(run_id))
    {
        std::error_code ec;
        fs::create_directories(root, ec);
        root_ = fs::weakly_canonical(fs::absolute(root)).lexically_normal();
        if (!root_.has_filename())
            root_ = root_.parent_path();
    }

    [[nodiscard]] const fs::path& root() const noexcept { return root_; }
    [[nodiscard]] const std::string& run_id() const noexcept { return run_id_; }

    /// Absolute path for `p` (relative to the root) or SandboxViolation.
    [[nodiscard]] fs::path resolve(const fs::path& p) const
    {
        const auto n = normalize_under(root_, p);
        if (!path_within(root_, n))
            throw Error(Errc::sandbox_violation, "path '" + p.string() + "' is outside the workspace '" + root_.string() + "'");
        return n;
    }

    [[nodiscard]] bool contains(const fs::path& p) const { return path_within(root_, normalize_under(root_, p)); }

    void bind(Role role, const fs::path& p)
    {
        const auto abs = resolve(p);
        const auto it = bindings_.find(role);
        if (it != bindings_.end() && it->second != abs)
            throw Error(Errc::invalid_argument, "role " + std::string(to_string(role)) + " is already bound to '" +
                                                    it->second.string() + "'");
        bindings_[role] = abs;
    }

    [[nodiscard]] bool is_bound(Role role) const { return bindings_.contains(role); }

    [[nodiscard]] const fs::path& path(Role role) const
    {
        const auto it = bindings_.find(role);
        if (it == bindings_.end())
            throw Error(Errc::unbound_role, "role " + std::string(to_string(role)) + " is not bound");
        return it->second;
    }

    [[nodiscard]] const std::map<Role, fs::path>& bindings() const noexcept { return bindings_; }

    /// Role -> absolute path, as handed to planners.
    [[nodiscard]] nlohmann::json paths_json() const
    {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [role, p] : bindings_)
            j[std::string(to_string(role))] = p.string();
        return j;
    }

    /// Persisted form with workspace-relative paths so a workspace can move.
    [[nodiscard]] nlohmann::json to_json() const
    {
        nlohmann::json roles = nlohmann::json::object();
        for (const auto& [role, p] : bindings_)
            roles[std::string(to_string(role))] = p.lexically_relative(root_).generic_string();
        return {{"run_id", run_id_}, {"roles", roles}};
    }

    static ProjectContext from_json(const fs::path& root, const nlohmann::json& j)
    {
        try {
            ProjectContext ctx(root, j.at("run_id").get<std::string>());
            for (const auto& [name, rel] : j.at("roles").items()) {
                const auto role = role_from_string(name);
                if (!role)
                    throw Error(Errc::corrupt_state, "unknown role '" + name + "' in context file");
                ctx.bind(*role, rel.get<std::string>());
            }
            return ctx;
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::corrupt_state, std::string("context file: ") + e.what());
        }
    }

private:
    fs::path root_;
    std::string run_id_;
    std::map<Role, fs::path> bindings_;
};

/// Workspace-confined file access. Every path the engine touches goes
/// through `check`, which records the access and rejects anything outside
/// the root before the filesystem is reached.
class Sandbox {
public:
    enum class Access { read, write };

    struct Record {
        fs::path path;
        Access access;
        bool allowed;
    };

    explicit Sandbox(fs::path root) : root_(normalize_under(fs::current_path(), root)) {}

    [[nodiscard]] const fs::path& root() const noexcept { return root_; }

    fs::path check(const fs::path& p, Access access)
    {
        const auto n = normalize_under(root_, p);
        const bool ok = path_within(root_, n);
        {
            std::lock_guard lock(mutex_);
            records_.push_back({n, access, ok});
        }
        if (!ok)
            throw Error(Errc::sandbox_violation, std::string(access == Access::read ? "read of '" : "write to '") +
                                                     p.string() + "' outside the workspace '" + root_.string() + "'");
        return n;
    }

    [[nodiscard]] std::vector<Record> records() const
    {
        std::lock_guard lock(mutex_);
        return records_;
    }

    [[nodiscard]] std::string read_text(const fs::path& p)
    {
        const auto path = check(p, Access::read);
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error(Errc::io_failure, "FileNotFoundError: '" + path.string() + "'");
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    /// Write via a sibling temporary and rename, so readers never see a torn file.
    void write_text(const fs::path& p, const std::string& text)
    {
        const auto path = check(p, Access::write);
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                throw Error(Errc::io_failure, "cannot write '" + tmp.string() + "'");
            out << text;
            out.flush();
            if (!out)
                throw Error(Errc::io_failure, "short write to '" + tmp.string() + "'");
        }
        fs::rename(tmp, path, ec);
        if (ec)
            throw Error(Errc::io_failure, "cannot rename into '" + path.string() + "': " + ec.message());
    }

private:
    fs::path root_;
    mutable std::mutex mutex_;
    std::vector<Record> records_;
};

} // namespace autoduct::agents
