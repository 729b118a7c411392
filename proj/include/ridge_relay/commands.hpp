#pragma once

// Subcommands of the ridge_relay tool. Each returns a process exit code:
//   0 success, 2 input/schema/config errors, 3 IRLS non-convergence (state left
//   untouched), 4 penalty-selection or constraint failures, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ridge_relay/model_core.hpp"
#include "ridge_relay/penalty_tuning.hpp"

namespace ridge_relay {

enum ExitCode : int {
    kExitOk = 0,
    kExitOther = 1,
    kExitInput = 2,
    kExitConvergence = 3,
    kExitSelection = 4,
};

struct CliConfig {
    std::string command;
    std::filesystem::path state;
    std::filesystem::path data;
    std::filesystem::path target;  // init: explicit coefficient file
    std::filesystem::path config;  // simulate: scenario file
    std::filesystem::path out;
    std::string response = "y";
    std::optional<Family> family;
    std::vector<std::string> covariates;  // init: zero target over these names
    std::optional<int> k_folds;
    bool loocv = false;
    std::optional<bool> constrained;
    double grid_min = 1e-4;
    double grid_max = 1e6;
    int grid_points = 50;
    std::uint64_t seed = 0;
    bool force = false;

    /// Search settings from the flags; constrained by default for updates.
    PenaltySearchConfig search(bool default_constrained) const;
};

int cmd_init(const CliConfig& cli, std::ostream& out);
int cmd_update(const CliConfig& cli, std::ostream& out);
int cmd_select_lambda(const CliConfig& cli, std::ostream& out);
int cmd_predict(const CliConfig& cli, std::ostream& out);
int cmd_export(const CliConfig& cli, std::ostream& out);
int cmd_simulate(const CliConfig& cli, std::ostream& out);

/// Parses `args` (without the program name), runs the command and maps errors
/// to exit codes, writing diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ridge_relay
