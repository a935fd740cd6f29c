#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "riskmm_cli/commands.hpp"
#include "riskmm_cli/csv.hpp"

namespace {

void attach_common(CLI::App* cmd, riskmm::cli::CommonOptions& options,
                   std::vector<std::string>& sets) {
  cmd->add_option("--config", options.config_path, "JSON config file (built-in defaults otherwise)");
  cmd->add_option("--set", sets, "override a config field, dot-path syntax: key.path=value");
  cmd->add_option("-o,--outdir", options.outdir, "output directory");
}

// Convenience flags shared by solve/simulate/sweep; they translate to the
// same dot-path overrides.
struct Shortcuts {
  std::string formulation;
  double gamma = 0;
  int horizon = 0;
  int branching = -1;
  std::uint64_t seed = 0;
  int repeats = 0;
  int steps = -1;
  bool timing = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--formulation", formulation, "optimistic | pessimistic | neutral-proxy");
    cmd->add_option("--gamma", gamma, "risk parameter")->check(CLI::PositiveNumber);
    cmd->add_option("--N", horizon, "prediction horizon (stages)");
    cmd->add_option("--Nb", branching, "branching horizon (stages)");
    cmd->add_option("--seed", seed, "base seed");
    cmd->add_option("--repeats", repeats, "number of seeds");
    cmd->add_option("--steps", steps, "closed-loop steps");
    cmd->add_flag("--timing", timing, "emit real wall-clock columns");
  }

  void apply(const CLI::App* cmd, riskmm::cli::CommonOptions& options) const {
    if (cmd->count("--formulation") > 0) options.overrides.push_back("formulation=" + formulation);
    if (cmd->count("--gamma") > 0)
      options.overrides.push_back("gamma=" + riskmm::cli::format_double(gamma));
    if (cmd->count("--N") > 0) options.overrides.push_back("horizon_steps=" + std::to_string(horizon));
    if (cmd->count("--Nb") > 0)
      options.overrides.push_back("branching_steps=" + std::to_string(branching));
    if (cmd->count("--seed") > 0) options.overrides.push_back("sim.seed=" + std::to_string(seed));
    if (cmd->count("--repeats") > 0)
      options.overrides.push_back("sim.repeats=" + std::to_string(repeats));
    if (cmd->count("--steps") > 0) options.overrides.push_back("sim.steps=" + std::to_string(steps));
    if (cmd->count("--timing") > 0) options.overrides.push_back("timing=true");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"risk-sensitive scenario-tree MPC for softmax-gated switched linear systems"};
  app.require_subcommand(1);

  riskmm::cli::CommonOptions solve_opts, sim_opts, sweep_opts;
  std::vector<std::string> solve_sets, sim_sets, sweep_sets;
  Shortcuts solve_short, sim_short, sweep_short;

  CLI::App* solve = app.add_subcommand("solve", "one open-loop solve; writes solve.csv");
  attach_common(solve, solve_opts, solve_sets);
  solve_short.attach(solve);

  CLI::App* simulate =
      app.add_subcommand("simulate", "closed-loop runs; writes trace.csv and metrics.csv");
  attach_common(simulate, sim_opts, sim_sets);
  sim_short.attach(simulate);

  std::vector<double> gammas;
  std::vector<std::string> formulations = {"optimistic", "pessimistic"};
  CLI::App* sweep =
      app.add_subcommand("sweep-gamma", "closed-loop sweep; writes sweep.csv and sweep.svg");
  attach_common(sweep, sweep_opts, sweep_sets);
  sweep_short.attach(sweep);
  sweep->add_option("--gammas", gammas, "comma-separated gamma values")->delimiter(',');
  sweep->add_option("--formulations", formulations, "formulations to sweep")->delimiter(',');

  std::string only_filter;
  std::string verify_out = "verify.json";
  CLI::App* verify = app.add_subcommand("verify", "run the oracle and invariant checks");
  verify->add_option("--only", only_filter, "run only checks whose name contains this substring");
  verify->add_option("-o,--out", verify_out, "report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : riskmm::cli::kExitConfigError;
  }

  if (solve->parsed()) {
    solve_opts.overrides = solve_sets;
    solve_short.apply(solve, solve_opts);
    return riskmm::cli::cmd_solve(solve_opts);
  }
  if (simulate->parsed()) {
    sim_opts.overrides = sim_sets;
    sim_short.apply(simulate, sim_opts);
    return riskmm::cli::cmd_simulate(sim_opts);
  }
  if (sweep->parsed()) {
    sweep_opts.overrides = sweep_sets;
    sweep_short.apply(sweep, sweep_opts);
    return riskmm::cli::cmd_sweep_gamma(sweep_opts, gammas, formulations);
  }
  if (verify->parsed()) {
    return riskmm::cli::cmd_verify(only_filter, verify_out);
  }
  std::cerr << app.help();
  return riskmm::cli::kExitConfigError;
}
