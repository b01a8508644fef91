#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sdelab {

struct RunOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
    unsigned threads = 1;
    bool overwrite = false;
};

struct RunResult {
    // 0 = pass, 2 = a requested assertion found a certified failure, 1 = error
    // (errors are normally reported by throwing; 1 appears only via main).
    int exit_code = 0;
    std::vector<std::string> files;  // artifact paths written, manifest included
    std::string summary;             // one-line human outcome
};

// Loads a single-experiment JSON config, runs it, and writes its artifacts
// plus a manifest.json into out_dir.  Every artifact is listed in the
// manifest; reruns with identical config, seed, and thread count produce
// byte-identical files.  Throws std::runtime_error / std::invalid_argument on
// config or IO errors; refuses a nonempty out_dir unless overwrite is set.
RunResult run_experiment(const RunOptions& options);

// Validates the config only: returns one "field.path: problem" line per
// violation, empty when the config is well-formed.
std::vector<std::string> validate_config_file(const std::string& path);

// (kind, one-line description) for every experiment kind the runner accepts.
std::vector<std::pair<std::string, std::string>> list_experiments();

}  // namespace sdelab
