#pragma once

#include <expected>
#include <filesystem>
#include <string>

#include "nlohmann/json.hpp"

namespace bgrid {

inline constexpr const char* kToolName = "bellman-grid";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// Exit codes of the command-line tool (also returned by run_experiment).
enum ExitCode : int {
    exit_ok = 0,
    exit_bad_config = 1,
    exit_assumptions_failed = 2,
    exit_no_convergence = 3,
};

struct RunOptions {
    std::filesystem::path out_dir;
    std::uint64_t seed = 1;
    int threads = 0;   // 0: resolve from env / hardware
    bool quiet = false;
};

/// Parse and structurally validate a config document. The error message
/// names the offending field.
std::expected<nlohmann::json, std::string> parse_config(const std::string& text);

/// Run one experiment described by a validated config. Writes report.json,
/// any CSV tables, and manifest.json into out_dir; returns the exit code.
/// Everything written is a pure function of (config, seed) - reruns are
/// byte-identical.
int run_experiment(const nlohmann::json& config, const RunOptions& opt);

}  // namespace bgrid
