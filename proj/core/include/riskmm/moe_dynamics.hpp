#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

#include "riskmm/scenario_tree.hpp"

namespace riskmm {

/// Switched linear dynamics whose active mode is drawn from a softmax gate
/// over a linear function of the state:
///   mode ~ softmax(gate * x),  x' = A[mode] x + B[mode] u.
struct MoEModel {
  Eigen::MatrixXd gate;            // mode_count x state_dim
  std::vector<Eigen::MatrixXd> A;  // state_dim x state_dim, one per mode
  std::vector<Eigen::MatrixXd> B;  // state_dim x input_dim, one per mode

  int mode_count() const { return static_cast<int>(A.size()); }
  int state_dim() const { return A.empty() ? 0 : static_cast<int>(A[0].rows()); }
  int input_dim() const { return B.empty() ? 0 : static_cast<int>(B[0].cols()); }

  /// Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;
};

/// One state vector per tree node, one input vector per non-leaf node.
/// Leaf entries of `u` stay empty.
struct TrajectoryBundle {
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> u;
};

/// softmax(gate * x); entries positive, summing to one.
Eigen::VectorXd gate_distribution(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// log softmax(gate * x), evaluated without forming raw probabilities.
Eigen::VectorXd gate_log_distribution(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// A[mode] x + B[mode] u. Throws std::out_of_range on a bad mode index.
Eigen::VectorXd step(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& u, int mode);

/// Propagates x0 through every edge of the tree: each child state is
/// step(parent state, parent input, child's incoming mode). `inputs` is
/// indexed by node id and must be filled for every non-leaf node.
TrajectoryBundle rollout(const ScenarioTree& tree, const MoEModel& model,
                         const Eigen::Ref<const Eigen::VectorXd>& x0,
                         const std::vector<Eigen::VectorXd>& inputs);

/// Per-scenario log probability: the sum over branching ancestors of the
/// log gate probability of the realized child mode. Edges past the branching
/// horizon contribute zero (the frozen mode continues with probability one).
/// `node_states` is indexed by node id.
Eigen::VectorXd scenario_log_probs(const ScenarioTree& tree, const MoEModel& model,
                                   const std::vector<Eigen::VectorXd>& node_states);

/// Draws a mode from gate_distribution(model, x). Deterministic given the
/// engine state; the uniform variate is derived from raw engine output so
/// results do not depend on library distribution internals.
int sample_mode(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x, std::mt19937_64& rng);

}  // namespace riskmm
