// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the test binaries.
#pragma once

#include "autoduct/autoduct.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "autoduct")
    {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = fs::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const noexcept { return path_; }
    [[nodiscard]] fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const fs::path& p, const std::string& text)
{
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Small, quick run configuration for agent and pipeline tests.
inline autoduct::RunConfig quick_config(const fs::path& workspace, std::uint64_t seed = 0)
{
    autoduct::RunConfig c;
    c.workspace = workspace;
    c.synthetic.count = 600;
    c.synthetic.seed = 11;
    c.ensemble_size = 2;
    c.mlp.hidden_layers = 2;
    c.mlp.hidden_units = 16;
    c.train.epochs = 8;
    c.train.patience = 4;
    c.seed = seed;
    c.slice_points = 11;
    return c;
}

/// Synthetic oracle with the inputs clamped to the data envelope, so stub
/// models stay finite on slice grids that start at zero.
inline double clamped_oracle(autoduct::DataPoint p)
{
    const autoduct::Envelope env;
    for (std::size_t f = 0; f < autoduct::kFeatureCount; ++f) {
        const auto feature = static_cast<autoduct::Feature>(f);
        p.set_feature(feature, std::clamp(p.feature(feature), env[feature].lo, env[feature].hi));
    }
    return autoduct::synthetic_oracle(p);
}

/// Quick recipe matching `quick_config`, for driving the loops directly.
inline autoduct::agents::PipelineRecipe quick_recipe()
{
    return autoduct::recipe_from(quick_config("unused"));
}

} // namespace testing_support
