#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "riskmm/moe_dynamics.hpp"
#include "riskmm/scenario_tree.hpp"

// Slow, independent reference computations used by tests and the verify
// command. Nothing here calls the library's fast paths (no shared
// softmax/log-sum-exp helpers); everything is plain arithmetic.

namespace riskmm::oracles {

/// Central finite differences, one coordinate at a time.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& point, double step);

struct GridMinResult {
  Eigen::VectorXd point;
  double value = 0;
};

/// Exhaustive evaluation of `objective` over the probability-simplex grid
/// {k/resolution_steps}. Dimension must be <= 4.
GridMinResult simplex_grid_min(const std::function<double(const Eigen::VectorXd&)>& objective,
                               int dim, int resolution_steps);

/// Scenario probabilities as the plain per-edge product of gate
/// probabilities over the branching stages.
Eigen::VectorXd enumerate_scenario_probs(const ScenarioTree& tree, const MoEModel& model,
                                         const std::vector<Eigen::VectorXd>& node_states);

}  // namespace riskmm::oracles
