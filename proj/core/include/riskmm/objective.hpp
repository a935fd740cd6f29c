#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "riskmm/moe_dynamics.hpp"
#include "riskmm/scenario_tree.hpp"

namespace riskmm {

enum class CollisionKind {
  ExpNorm,         // alpha * exp(-beta * |dp|)
  ExpSquaredNorm,  // alpha * exp(-beta * |dp|^2)
  InversePower,    // 1 / (alpha + beta * |dp|)^p
};

/// Distance penalty c(x) = f1(f2(dp)) with dp = position_selector * x,
/// f1 convex decreasing and f2 convex, so a subgradient linearization of f2
/// yields a convex upper bound that touches c at the expansion point.
struct CollisionSpec {
  double alpha = 1.0;
  double beta = 1.0;
  CollisionKind kind = CollisionKind::ExpNorm;
  double power = 1.0;                  // exponent p of InversePower
  Eigen::MatrixXd position_selector;   // 2 x state_dim, dp = S x
};

using ReferenceGenerator =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x_meas, int stage)>;

struct CostSpec {
  Eigen::MatrixXd Q;                  // tracking weight (PSD)
  Eigen::MatrixXd R;                  // input weight (PSD)
  Eigen::MatrixXd Qf;                 // terminal weight (PSD)
  Eigen::MatrixXd tracking_selector;  // rows(Q) x state_dim
  ReferenceGenerator reference;       // (measured state, stage) -> reference
  std::optional<CollisionSpec> collision;
};

enum class RiskFormulation { Neutral, Optimistic, Pessimistic };

struct RiskConfig {
  double gamma = 1.0;
  RiskFormulation formulation = RiskFormulation::Neutral;

  /// gamma must be > 0 for any non-neutral formulation.
  void validate() const;
};

enum class CollisionMode { Exact, UpperBound };

/// Scalar losses per leaf scenario.
using ScenarioLossVector = Eigen::VectorXd;

/// Gradient of a scalar over every node state and non-leaf input, indexed
/// like a TrajectoryBundle.
struct TreeGradient {
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> u;

  static TreeGradient zero(const ScenarioTree& tree, int state_dim, int input_dim);
  /// Zeroes in place, reusing storage when the shape already matches.
  void reset(const ScenarioTree& tree, int state_dim, int input_dim);
};

/// Stacks all node states followed by all non-leaf inputs (node id order)
/// into one vector; the inverse rebuilds a bundle of the same shape.
Eigen::VectorXd stack_decision_vector(const ScenarioTree& tree, const TrajectoryBundle& traj);
Eigen::VectorXd stack_decision_vector(const ScenarioTree& tree, const TreeGradient& grad);
TrajectoryBundle unstack_decision_vector(const ScenarioTree& tree, int state_dim, int input_dim,
                                         const Eigen::Ref<const Eigen::VectorXd>& w);

double collision_penalty(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Convex upper bound of the penalty obtained by linearizing f2 at x_lin.
/// Dominates collision_penalty everywhere and equals it at x == x_lin.
/// At the norm kink (dp == 0) the subgradient 0 is used, which majorizes the
/// penalty by the constant f1(0).
double collision_upper_bound(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& x_lin);

/// 0.5|T x - ref(k)|^2_Q + 0.5|u|^2_R + c(x).
double stage_cost(const CostSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& u, int stage,
                  const Eigen::VectorXd& x_meas);

/// 0.5|T x - ref(N)|^2_Qf + c(x).
double terminal_cost(const CostSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, int stage,
                     const Eigen::VectorXd& x_meas);

/// Loss of each scenario: terminal cost at its leaf plus the stage costs of
/// its ancestors. In UpperBound mode every collision term is replaced by
/// collision_upper_bound at the per-node states `x_lin` (required then).
ScenarioLossVector scenario_losses(const ScenarioTree& tree, const TrajectoryBundle& traj,
                                   const CostSpec& spec, const Eigen::VectorXd& x_meas,
                                   CollisionMode mode,
                                   const std::vector<Eigen::VectorXd>* x_lin = nullptr);

/// Risk functional of the scenario losses under the scenario distribution:
///   neutral      sum_s p_s L_s
///   optimistic   -(1/gamma) lse(log p - gamma L)
///   pessimistic  +(1/gamma) lse(log p + gamma L)
double risk_loss(const RiskConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& log_probs,
                 const Eigen::Ref<const Eigen::VectorXd>& losses);

/// Value and exact gradient of the selected risk loss at `traj`, chained
/// through the scenario probabilities and losses (exact collision terms).
/// Throws std::domain_error at a norm kink (coincident positions).
double risk_loss_value_and_gradient(const RiskConfig& cfg, const ScenarioTree& tree,
                                    const MoEModel& model, const CostSpec& spec,
                                    const Eigen::VectorXd& x_meas, const TrajectoryBundle& traj,
                                    TreeGradient* grad);

}  // namespace riskmm
