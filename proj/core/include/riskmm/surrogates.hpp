#pragma once

#include <vector>

#include <Eigen/Core>

#include "riskmm/objective.hpp"

namespace riskmm {

/// Expansion data for one convex majorizer of a risk loss. Both variants
/// share the linearization bundle: collision terms are bounded at x_lin, and
/// the pessimistic gate linearization expands there too.
struct SurrogateParams {
  RiskFormulation variant = RiskFormulation::Optimistic;
  Eigen::VectorXd pi;                   // scenario mixture (optimistic only)
  std::vector<Eigen::VectorXd> x_lin;   // one state per tree node
  double gamma = 1.0;

  void validate(const ScenarioTree& tree) const;
};

/// Mixture minimizing the optimistic majorizer at the expansion point:
/// softmax(log p - gamma L), computed in log space.
Eigen::VectorXd optimal_pi(const Eigen::Ref<const Eigen::VectorXd>& log_probs,
                           const Eigen::Ref<const Eigen::VectorXd>& losses, double gamma);

/// Per-scenario affine-in-x upper bound of the scenario log probability,
/// obtained by linearizing each ancestor's lse term at the matching
/// x_lin state. Equals scenario_log_probs when node_states == x_lin.
Eigen::VectorXd log_prob_linearization(const ScenarioTree& tree, const MoEModel& model,
                                       const std::vector<Eigen::VectorXd>& node_states,
                                       const std::vector<Eigen::VectorXd>& x_lin);

/// Same bound for a single scenario.
double log_prob_linearization(const ScenarioTree& tree, const MoEModel& model,
                              const std::vector<Eigen::VectorXd>& node_states,
                              const std::vector<Eigen::VectorXd>& x_lin, const Scenario& scenario);

/// (1/gamma) KL(pi | P(x)) + pi' L(x,u); collision terms inside L are the
/// convex upper bounds at params.x_lin. Convex in (x, u) and dominates the
/// optimistic risk loss; touches it at the expansion point.
double optimistic_surrogate(const ScenarioTree& tree, const MoEModel& model, const CostSpec& spec,
                            const SurrogateParams& params, const Eigen::VectorXd& x_meas,
                            const TrajectoryBundle& traj);

/// (1/gamma) lse(P_hat(x | x_lin) + gamma L(x,u)) with bounded collision
/// terms. Convex in (x, u), dominates the pessimistic risk loss, touches it
/// at the expansion point.
double pessimistic_surrogate(const ScenarioTree& tree, const MoEModel& model, const CostSpec& spec,
                             const SurrogateParams& params, const Eigen::VectorXd& x_meas,
                             const TrajectoryBundle& traj);

/// Value of the selected surrogate; fills `grad` with its exact gradient
/// over all (x, u) coordinates when non-null.
double surrogate_value_and_gradient(const ScenarioTree& tree, const MoEModel& model,
                                    const CostSpec& spec, const SurrogateParams& params,
                                    const Eigen::VectorXd& x_meas, const TrajectoryBundle& traj,
                                    TreeGradient* grad);

}  // namespace riskmm
