#pragma once

#include <Eigen/Core>

#include "riskmm/objective.hpp"

// Shared internals between the objective and surrogate translation units.

namespace riskmm::detail {

struct OuterPenalty {
  double value = 0;
  double deriv = 0;
};

/// f1 of the penalty composition with its derivative; the inverse-power kind
/// is extended linearly below zero (tangent at 0) so bound arguments stay in
/// a convex decreasing domain.
OuterPenalty collision_outer(const CollisionSpec& spec, double z);

double collision_inner(const CollisionSpec& spec, const Eigen::Vector2d& dp);
Eigen::Vector2d collision_inner_subgradient(const CollisionSpec& spec, const Eigen::Vector2d& dp);

double collision_penalty_grad(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                              Eigen::VectorXd* grad_x);
double collision_bound_grad(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& x_lin, Eigen::VectorXd* grad_x);

/// Per-evaluation scratch: references resolved once per stage, plus reusable
/// buffers for the tracking error and the weighted error.
struct CostEvalContext {
  std::vector<Eigen::VectorXd> refs;  // one per stage 0..horizon
  Eigen::VectorXd err, werr;

  CostEvalContext(const ScenarioTree& tree, const CostSpec& spec, const Eigen::VectorXd& x_meas);
};

/// Stage (u non-null) or terminal (u null) cost, optionally accumulating
/// gradients into grad_x/grad_u.
double node_cost(const CostSpec& spec, CostEvalContext& ctx,
                 const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd* u, int stage,
                 CollisionMode mode, const Eigen::VectorXd* x_lin, Eigen::VectorXd* grad_x,
                 Eigen::VectorXd* grad_u);

Eigen::VectorXd scenario_losses_impl(const ScenarioTree& tree, const TrajectoryBundle& traj,
                                     const CostSpec& spec, const Eigen::VectorXd& x_meas,
                                     CollisionMode mode, const std::vector<Eigen::VectorXd>* x_lin);

/// grad += sum_s loss_weights[s] * dL_s + sum_s prob_weights[s] * dlogp_s,
/// where dlogp uses the gate at the trajectory states (gate_at_lin = false)
/// or frozen at the linearization states (gate_at_lin = true), and loss
/// gradients follow the collision mode.
void accumulate_tree_gradient(const ScenarioTree& tree, const MoEModel& model, const CostSpec& spec,
                              const Eigen::VectorXd& x_meas, const TrajectoryBundle& traj,
                              const Eigen::VectorXd& loss_weights, const Eigen::VectorXd& prob_weights,
                              CollisionMode mode, const std::vector<Eigen::VectorXd>* x_lin,
                              bool gate_at_lin, TreeGradient* grad);

}  // namespace riskmm::detail
