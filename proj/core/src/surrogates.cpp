#include "riskmm/surrogates.hpp"

#include <cmath>
#include <stdexcept>

#include "riskmm/numerics.hpp"
#include "riskmm/objective_detail.hpp"

namespace riskmm {

void SurrogateParams::validate(const ScenarioTree& tree) const {
  if (variant == RiskFormulation::Neutral)
    throw std::invalid_argument("SurrogateParams: variant must be optimistic or pessimistic");
  if (!(gamma > 0)) throw std::invalid_argument("SurrogateParams: gamma must be > 0");
  if (static_cast<int>(x_lin.size()) != tree.node_count())
    throw std::invalid_argument("SurrogateParams: x_lin must be indexed by all tree nodes");
  if (variant == RiskFormulation::Optimistic) {
    if (pi.size() != tree.leaf_count())
      throw std::invalid_argument("SurrogateParams: pi must have one entry per scenario");
    if (!(pi.array() > 0).all() || std::abs(pi.sum() - 1.0) > 1e-10)
      throw std::invalid_argument("SurrogateParams: pi must be strictly positive and sum to 1");
  }
}

Eigen::VectorXd optimal_pi(const Eigen::Ref<const Eigen::VectorXd>& log_probs,
                           const Eigen::Ref<const Eigen::VectorXd>& losses, double gamma) {
  if (!(gamma > 0)) throw std::invalid_argument("optimal_pi: gamma must be > 0");
  if (log_probs.size() != losses.size()) throw std::invalid_argument("optimal_pi: size mismatch");
  if (!log_probs.allFinite() || !losses.allFinite())
    throw std::invalid_argument("optimal_pi: non-finite input");
  return softmax(log_probs - gamma * losses);
}

Eigen::VectorXd log_prob_linearization(const ScenarioTree& tree, const MoEModel& model,
                                       const std::vector<Eigen::VectorXd>& node_states,
                                       const std::vector<Eigen::VectorXd>& x_lin) {
  if (static_cast<int>(node_states.size()) != tree.node_count() ||
      static_cast<int>(x_lin.size()) != tree.node_count())
    throw std::invalid_argument("log_prob_linearization: states must be indexed by node id");

  Eigen::VectorXd to_node = Eigen::VectorXd::Zero(tree.node_count());
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    if (tree.branches(n.id)) {
      const Eigen::VectorXd z = model.gate * node_states[static_cast<std::size_t>(n.id)];
      const Eigen::VectorXd zl = model.gate * x_lin[static_cast<std::size_t>(n.id)];
      const Eigen::VectorXd sigma = softmax(zl);
      // lse(z) >= lse(zl) + sigma(zl)'(z - zl); keeping the realized logit at
      // the current state makes the bounded log-probability affine in x and
      // tangent at x == x_lin.
      const double base = -log_sum_exp(zl) - sigma.dot(z - zl);
      for (int child : n.children) {
        to_node[child] = to_node[n.id] + z[tree.node(child).incoming_mode] + base;
      }
    } else {
      for (int child : n.children) to_node[child] = to_node[n.id];
    }
  }

  Eigen::VectorXd out(tree.leaf_count());
  for (const Scenario& s : tree.scenarios()) out[tree.scenario_index(s.leaf)] = to_node[s.leaf];
  return out;
}

double log_prob_linearization(const ScenarioTree& tree, const MoEModel& model,
                              const std::vector<Eigen::VectorXd>& node_states,
                              const std::vector<Eigen::VectorXd>& x_lin, const Scenario& scenario) {
  double total = 0;
  for (int k = 0; k < tree.horizon(); ++k) {
    const int id = scenario.ancestors[static_cast<std::size_t>(k)];
    if (!tree.branches(id)) continue;
    const Eigen::VectorXd z = model.gate * node_states[static_cast<std::size_t>(id)];
    const Eigen::VectorXd zl = model.gate * x_lin[static_cast<std::size_t>(id)];
    const Eigen::VectorXd sigma = softmax(zl);
    total += z[scenario.modes[static_cast<std::size_t>(k)]] - log_sum_exp(zl) - sigma.dot(z - zl);
  }
  return total;
}

namespace {

double surrogate_impl(const ScenarioTree& tree, const MoEModel& model, const CostSpec& spec,
                      const SurrogateParams& params, const Eigen::VectorXd& x_meas,
                      const TrajectoryBundle& traj, TreeGradient* grad) {
  params.validate(tree);
  const Eigen::VectorXd losses =
      scenario_losses(tree, traj, spec, x_meas, CollisionMode::UpperBound, &params.x_lin);

  double value = 0;
  Eigen::VectorXd loss_weights, prob_weights;
  bool gate_at_lin = false;

  if (params.variant == RiskFormulation::Optimistic) {
    const Eigen::VectorXd log_probs = scenario_log_probs(tree, model, traj.x);
    double kl = 0;
    for (int s = 0; s < params.pi.size(); ++s) {
      if (params.pi[s] > 0) kl += params.pi[s] * (std::log(params.pi[s]) - log_probs[s]);
    }
    value = kl / params.gamma + params.pi.dot(losses);
    loss_weights = params.pi;
    prob_weights = -params.pi / params.gamma;
  } else {
    const Eigen::VectorXd p_hat = log_prob_linearization(tree, model, traj.x, params.x_lin);
    const Eigen::VectorXd v = p_hat + params.gamma * losses;
    value = log_sum_exp(v) / params.gamma;
    loss_weights = softmax(v);
    prob_weights = loss_weights / params.gamma;
    gate_at_lin = true;
  }

  if (grad != nullptr) {
    grad->reset(tree, model.state_dim(), model.input_dim());
    detail::accumulate_tree_gradient(tree, model, spec, x_meas, traj, loss_weights, prob_weights,
                                     CollisionMode::UpperBound, &params.x_lin, gate_at_lin, grad);
  }
  return value;
}

}  // namespace

double optimistic_surrogate(const ScenarioTree& tree, const MoEModel& model, const CostSpec& spec,
                            const SurrogateParams& params, const Eigen::VectorXd& x_meas,
                            const TrajectoryBundle& traj) {
  if (params.variant != RiskFormulation::Optimistic)
    throw std::invalid_argument("optimistic_surrogate: variant mismatch");
  return surrogate_impl(tree, model, spec, params, x_meas, traj, nullptr);
}

double pessimistic_surrogate(const ScenarioTree& tree, const MoEModel& model, const CostSpec& spec,
                             const SurrogateParams& params, const Eigen::VectorXd& x_meas,
                             const TrajectoryBundle& traj) {
  if (params.variant != RiskFormulation::Pessimistic)
    throw std::invalid_argument("pessimistic_surrogate: variant mismatch");
  return surrogate_impl(tree, model, spec, params, x_meas, traj, nullptr);
}

double surrogate_value_and_gradient(const ScenarioTree& tree, const MoEModel& model,
                                    const CostSpec& spec, const SurrogateParams& params,
                                    const Eigen::VectorXd& x_meas, const TrajectoryBundle& traj,
                                    TreeGradient* grad) {
  return surrogate_impl(tree, model, spec, params, x_meas, traj, grad);
}

}  // namespace riskmm
