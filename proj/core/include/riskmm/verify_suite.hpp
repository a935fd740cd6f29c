#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace riskmm::verify {

struct OracleCheck {
  std::string name;
  double max_violation = 0;
  double tolerance = 0;
  bool pass = false;
  std::string detail;
};

struct OracleReport {
  std::vector<OracleCheck> checks;
  bool all_pass() const;
};

/// Override hook for the closed-form mixture, exercised by the mutation
/// canary in the tests: the grid check must fail when fed a wrong formula.
using PiFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& log_probs,
                                           const Eigen::VectorXd& losses, double gamma)>;

OracleCheck check_tree_structure();
OracleCheck check_gate_shift_invariance();
OracleCheck check_scenario_prob_normalization();
OracleCheck check_scenario_prob_product_oracle();
OracleCheck check_mode_sampling_frequencies();
OracleCheck check_risk_bounds_sandwich(int instances);
OracleCheck check_risk_limits();
OracleCheck check_variance_expansion();
OracleCheck check_collision_bound(int samples);
OracleCheck check_optimal_pi_grid(const PiFn& pi_fn = {});
OracleCheck check_surrogate_majorization(int samples);
OracleCheck check_surrogate_convexity(int instances);
OracleCheck check_gradients_fd(int instances);
OracleCheck check_inner_solver();
OracleCheck check_mm_descent(int instances);
OracleCheck check_warm_start_shift();

/// Runs every check whose name contains `filter` (case-insensitive; empty
/// matches all).
OracleReport run_all_checks(const std::string& filter = "");

}  // namespace riskmm::verify
