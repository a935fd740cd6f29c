#include "riskmm/moe_dynamics.hpp"

#include <stdexcept>

#include "riskmm/numerics.hpp"

namespace riskmm {

void MoEModel::validate() const {
  const int d = mode_count();
  if (d < 1) throw std::invalid_argument("MoEModel: needs at least one mode");
  if (static_cast<int>(B.size()) != d) throw std::invalid_argument("MoEModel: A/B mode counts differ");
  const int nx = state_dim();
  const int nu = input_dim();
  if (nx < 1) throw std::invalid_argument("MoEModel: empty state");
  for (int i = 0; i < d; ++i) {
    if (A[static_cast<std::size_t>(i)].rows() != nx || A[static_cast<std::size_t>(i)].cols() != nx)
      throw std::invalid_argument("MoEModel: A dimension mismatch");
    if (B[static_cast<std::size_t>(i)].rows() != nx || B[static_cast<std::size_t>(i)].cols() != nu)
      throw std::invalid_argument("MoEModel: B dimension mismatch");
  }
  if (gate.rows() != d || gate.cols() != nx)
    throw std::invalid_argument("MoEModel: gate must be mode_count x state_dim");
}

Eigen::VectorXd gate_distribution(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.state_dim()) throw std::invalid_argument("gate_distribution: state dimension mismatch");
  return softmax(model.gate * x);
}

Eigen::VectorXd gate_log_distribution(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.state_dim()) throw std::invalid_argument("gate_log_distribution: state dimension mismatch");
  return log_softmax(model.gate * x);
}

Eigen::VectorXd step(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& u, int mode) {
  if (mode < 0 || mode >= model.mode_count()) throw std::out_of_range("step: mode out of range");
  if (x.size() != model.state_dim() || u.size() != model.input_dim())
    throw std::invalid_argument("step: dimension mismatch");
  return model.A[static_cast<std::size_t>(mode)] * x + model.B[static_cast<std::size_t>(mode)] * u;
}

TrajectoryBundle rollout(const ScenarioTree& tree, const MoEModel& model,
                         const Eigen::Ref<const Eigen::VectorXd>& x0,
                         const std::vector<Eigen::VectorXd>& inputs) {
  if (x0.size() != model.state_dim()) throw std::invalid_argument("rollout: x0 dimension mismatch");
  if (static_cast<int>(inputs.size()) != tree.node_count())
    throw std::invalid_argument("rollout: inputs must be indexed by node id");

  TrajectoryBundle traj;
  traj.x.resize(static_cast<std::size_t>(tree.node_count()));
  traj.u.resize(static_cast<std::size_t>(tree.node_count()));
  traj.x[0] = x0;
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    const Eigen::VectorXd& u = inputs[static_cast<std::size_t>(n.id)];
    if (u.size() != model.input_dim())
      throw std::invalid_argument("rollout: missing input for non-leaf node " + std::to_string(n.id));
    traj.u[static_cast<std::size_t>(n.id)] = u;
    for (int child : n.children) {
      const int mode = tree.node(child).incoming_mode;
      traj.x[static_cast<std::size_t>(child)] = model.A[static_cast<std::size_t>(mode)] * traj.x[static_cast<std::size_t>(n.id)] +
                                                model.B[static_cast<std::size_t>(mode)] * u;
    }
  }
  return traj;
}

Eigen::VectorXd scenario_log_probs(const ScenarioTree& tree, const MoEModel& model,
                                   const std::vector<Eigen::VectorXd>& node_states) {
  if (static_cast<int>(node_states.size()) != tree.node_count())
    throw std::invalid_argument("scenario_log_probs: states must be indexed by node id");
  if (tree.mode_count() != model.mode_count())
    throw std::invalid_argument("scenario_log_probs: tree/model mode counts differ");

  // Accumulate log gate probabilities down the tree; frozen edges add zero.
  Eigen::VectorXd to_node = Eigen::VectorXd::Zero(tree.node_count());
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    if (tree.branches(n.id)) {
      const Eigen::VectorXd logs = gate_log_distribution(model, node_states[static_cast<std::size_t>(n.id)]);
      for (int child : n.children) {
        to_node[child] = to_node[n.id] + logs[tree.node(child).incoming_mode];
      }
    } else {
      for (int child : n.children) to_node[child] = to_node[n.id];
    }
  }

  Eigen::VectorXd out(tree.leaf_count());
  for (const Scenario& s : tree.scenarios()) out[tree.scenario_index(s.leaf)] = to_node[s.leaf];
  return out;
}

int sample_mode(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x, std::mt19937_64& rng) {
  const Eigen::VectorXd p = gate_distribution(model, x);
  // 53-bit uniform in [0, 1) straight from the engine.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0;
  for (int i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace riskmm
