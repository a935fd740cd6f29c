#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskmm/corridor.hpp"

namespace riskmm::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitSolverFailure = 3;

struct CommonOptions {
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;  // key.path=value
  std::string outdir = ".";
};

/// Parses the config file (or the built-in corridor defaults) and applies
/// dot-path overrides. Throws std::invalid_argument on any config problem.
CorridorConfig resolve_config(const CommonOptions& options);

int cmd_solve(const CommonOptions& options);
int cmd_simulate(const CommonOptions& options);
int cmd_sweep_gamma(const CommonOptions& options, const std::vector<double>& gammas,
                    const std::vector<std::string>& formulations);
int cmd_verify(const std::string& only_filter, const std::string& out_path);

/// Concurrency cap from RISKMM_THREADS (>= 1); hardware threads otherwise.
int thread_cap();

}  // namespace riskmm::cli
