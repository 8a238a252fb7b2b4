#pragma once

// Run configuration: everything a training or evaluation run depends on,
// serializable so a run directory always carries the exact config used.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "iptdet/model.hpp"
#include "iptdet/training.hpp"

namespace iptdet {

struct RunConfig {
    std::filesystem::path corpus_dir;
    std::filesystem::path cache_dir;  // empty disables the feature cache
    std::filesystem::path output_dir; // run directory for cmd_train

    ModelConfig model;
    TrainConfig train;

    std::array<int, 3> split_sizes{79, 10, 10}; // train/valid/test track counts
    std::uint64_t split_seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses a JSON run config. Unknown keys are rejected; missing keys take
/// the defaults above. `origin` names the source in error messages.
RunConfig parse_run_config_text(std::string_view text, const std::string& origin);

/// Reads and parses a JSON run config file.
RunConfig load_run_config(const std::filesystem::path& path);

/// Serializes the config as pretty-printed JSON. parse_run_config_text of
/// the result reproduces the config exactly.
std::string format_run_config(const RunConfig& cfg);

/// Writes format_run_config(cfg) to `path`.
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

} // namespace iptdet
