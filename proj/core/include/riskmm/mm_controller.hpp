#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "riskmm/inner_solver.hpp"
#include "riskmm/objective.hpp"
#include "riskmm/surrogates.hpp"

namespace riskmm {

enum class Formulation { Optimistic, Pessimistic, NeutralProxy };

/// gamma used when a formulation asks for the risk-neutral behaviour via the
/// optimistic pipeline.
inline constexpr double kNeutralProxyGamma = 1e-3;

struct MMConfig {
  double eps_tol = 0.003;   // optimality error of the true loss
  int max_mm_iters = 50;
  std::optional<double> loss_decrease_tol;  // alternative criterion, off by default
  SolveOptions inner;

  void validate() const;
};

enum class MMStatus { Converged, MaxIterations, InnerSolverFailure, Stalled };

struct MMIterationRecord {
  int m = 0;
  double true_loss = 0;
  double surrogate_value = 0;  // value of the majorizer at this iterate
  double optimality_error = 0;
  int inner_iterations = 0;
  double wall_ms = 0;
};

struct SolverReport {
  std::vector<MMIterationRecord> iterations;
  MMStatus status = MMStatus::MaxIterations;
  int total_inner_iterations = 0;
  double final_loss = 0;
  double final_optimality_error = 0;
  std::string termination_reason;
  // State-box duals backing the final optimality error; empty when no state
  // boxes are present or no inner solve ran.
  Eigen::VectorXd final_state_duals_lo, final_state_duals_hi;
};

struct OcpProblem {
  const ScenarioTree* tree = nullptr;
  const MoEModel* model = nullptr;
  const CostSpec* cost = nullptr;
  ConstraintSet constraints;
  double gamma = 1.0;  // risk parameter of the optimistic/pessimistic loss
};

/// Majorization-minimization loop: at each iterate build the convex
/// surrogate of the selected risk loss (closed-form mixture for the
/// optimistic variant; gate linearization for the pessimistic one; collision
/// bounds always expanded at the current states), minimize it over the
/// constraint set, and stop once the true loss's optimality error falls
/// below eps_tol. NeutralProxy runs the optimistic pipeline at gamma = 1e-3.
/// Throws std::invalid_argument when x_t violates the state boxes.
std::pair<TrajectoryBundle, SolverReport> solve_ocp(Formulation formulation,
                                                    const Eigen::VectorXd& x_t,
                                                    const OcpProblem& problem,
                                                    const MMConfig& config,
                                                    const std::vector<Eigen::VectorXd>& initial_inputs);

/// Persistent controller data between receding-horizon steps.
struct ControllerState {
  std::vector<Eigen::VectorXd> warm_inputs;  // per non-leaf node
};

struct StepResult {
  Eigen::VectorXd applied_input;
  int sampled_mode = 0;
  Eigen::VectorXd next_state;
  SolverReport report;
};

/// One receding-horizon step: solve from x_t, apply the root input (clipped
/// to the input box), sample the true mode from the gate at x_t, advance the
/// plant, and shift the solution along the realized subtree as the next warm
/// start (newly exposed tail nodes copy their parent's input).
StepResult mpc_step(Formulation formulation, const Eigen::VectorXd& x_t, const OcpProblem& problem,
                    const MMConfig& config, ControllerState& state, std::mt19937_64& rng);

/// Everything a closed-loop run needs beyond the OCP itself.
struct ClosedLoopSetup {
  Formulation formulation = Formulation::Optimistic;
  Eigen::VectorXd x0;
  int steps = 0;
  // Velocity tracking error |velocity_error_selector * x - velocity_error_offset|_2,
  // accumulated over steps.
  Eigen::MatrixXd velocity_error_selector;
  Eigen::VectorXd velocity_error_offset;
  // Pairwise distance |distance_selector * x|_2, minimized over the trace.
  Eigen::MatrixXd distance_selector;
  double collision_distance = 0.1;
};

struct ClosedLoopTrace {
  std::vector<Eigen::VectorXd> states;  // steps + 1 entries
  std::vector<Eigen::VectorXd> inputs;  // steps entries
  std::vector<int> modes;               // steps entries
  std::vector<SolverReport> reports;    // steps entries
  std::vector<double> solve_ms;         // steps entries
};

struct ClosedLoopMetrics {
  bool defined = false;  // false for empty traces
  double avte = 0;
  double min_distance = 0;
  int collision_count = 0;
};

struct ClosedLoopResult {
  ClosedLoopTrace trace;
  ClosedLoopMetrics metrics;
};

/// Runs `steps` receding-horizon steps from setup.x0; deterministic given the
/// engine's seed. Metrics cover the whole trace including the final state.
ClosedLoopResult run_closed_loop(const ClosedLoopSetup& setup, const OcpProblem& problem,
                                 const MMConfig& config, std::mt19937_64& rng);

}  // namespace riskmm
