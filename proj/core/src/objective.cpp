#include "riskmm/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "riskmm/numerics.hpp"
#include "riskmm/objective_detail.hpp"

namespace riskmm {

void RiskConfig::validate() const {
  if (formulation != RiskFormulation::Neutral && !(gamma > 0))
    throw std::invalid_argument("RiskConfig: gamma must be > 0 for risk-sensitive formulations");
}

TreeGradient TreeGradient::zero(const ScenarioTree& tree, int state_dim, int input_dim) {
  TreeGradient g;
  g.reset(tree, state_dim, input_dim);
  return g;
}

void TreeGradient::reset(const ScenarioTree& tree, int state_dim, int input_dim) {
  const std::size_t count = static_cast<std::size_t>(tree.node_count());
  if (x.size() == count && u.size() == count && x[0].size() == state_dim) {
    for (const TreeNode& n : tree.nodes()) {
      x[static_cast<std::size_t>(n.id)].setZero();
      if (!n.children.empty()) u[static_cast<std::size_t>(n.id)].setZero();
    }
    return;
  }
  x.assign(count, Eigen::VectorXd());
  u.assign(count, Eigen::VectorXd());
  for (const TreeNode& n : tree.nodes()) {
    x[static_cast<std::size_t>(n.id)] = Eigen::VectorXd::Zero(state_dim);
    if (!n.children.empty()) u[static_cast<std::size_t>(n.id)] = Eigen::VectorXd::Zero(input_dim);
  }
}

namespace {

int stacked_size(const ScenarioTree& tree, int nx, int nu) {
  return tree.node_count() * nx + tree.non_leaf_count() * nu;
}

template <typename Bundle>
Eigen::VectorXd stack_impl(const ScenarioTree& tree, const Bundle& b) {
  const int nx = static_cast<int>(b.x.at(0).size());
  int nu = 0;
  for (const TreeNode& n : tree.nodes()) {
    if (!n.children.empty()) {
      nu = static_cast<int>(b.u.at(static_cast<std::size_t>(n.id)).size());
      break;
    }
  }
  Eigen::VectorXd w(stacked_size(tree, nx, nu));
  int at = 0;
  for (const TreeNode& n : tree.nodes()) {
    w.segment(at, nx) = b.x.at(static_cast<std::size_t>(n.id));
    at += nx;
  }
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    w.segment(at, nu) = b.u.at(static_cast<std::size_t>(n.id));
    at += nu;
  }
  return w;
}

}  // namespace

Eigen::VectorXd stack_decision_vector(const ScenarioTree& tree, const TrajectoryBundle& traj) {
  return stack_impl(tree, traj);
}

Eigen::VectorXd stack_decision_vector(const ScenarioTree& tree, const TreeGradient& grad) {
  return stack_impl(tree, grad);
}

TrajectoryBundle unstack_decision_vector(const ScenarioTree& tree, int state_dim, int input_dim,
                                         const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (w.size() != stacked_size(tree, state_dim, input_dim))
    throw std::invalid_argument("unstack_decision_vector: size mismatch");
  TrajectoryBundle b;
  b.x.resize(static_cast<std::size_t>(tree.node_count()));
  b.u.resize(static_cast<std::size_t>(tree.node_count()));
  int at = 0;
  for (const TreeNode& n : tree.nodes()) {
    b.x[static_cast<std::size_t>(n.id)] = w.segment(at, state_dim);
    at += state_dim;
  }
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    b.u[static_cast<std::size_t>(n.id)] = w.segment(at, input_dim);
    at += input_dim;
  }
  return b;
}

namespace detail {

OuterPenalty collision_outer(const CollisionSpec& spec, double z) {
  switch (spec.kind) {
    case CollisionKind::ExpNorm:
    case CollisionKind::ExpSquaredNorm: {
      const double v = spec.alpha * std::exp(-spec.beta * z);
      return {v, -spec.beta * v};
    }
    case CollisionKind::InversePower: {
      if (z >= 0) {
        const double base = spec.alpha + spec.beta * z;
        const double v = std::pow(base, -spec.power);
        return {v, -spec.power * spec.beta * v / base};
      }
      // Tangent extension below zero: the linearized argument of the bound
      // can go negative, where the raw formula loses convexity/finiteness.
      const double v0 = std::pow(spec.alpha, -spec.power);
      const double d0 = -spec.power * spec.beta * v0 / spec.alpha;
      return {v0 + d0 * z, d0};
    }
  }
  throw std::logic_error("collision_outer: unknown kind");
}

double collision_inner(const CollisionSpec& spec, const Eigen::Vector2d& dp) {
  return spec.kind == CollisionKind::ExpSquaredNorm ? dp.squaredNorm() : dp.norm();
}

Eigen::Vector2d collision_inner_subgradient(const CollisionSpec& spec, const Eigen::Vector2d& dp) {
  if (spec.kind == CollisionKind::ExpSquaredNorm) return 2.0 * dp;
  const double n = dp.norm();
  if (n == 0.0) return Eigen::Vector2d::Zero();  // kink: constant majorizer
  return dp / n;
}

double collision_penalty_grad(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                              Eigen::VectorXd* grad_x) {
  const Eigen::Vector2d dp = spec.position_selector * x;
  const double z = collision_inner(spec, dp);
  const OuterPenalty f1 = collision_outer(spec, z);
  if (grad_x != nullptr) {
    if (spec.kind != CollisionKind::ExpSquaredNorm && dp.norm() == 0.0)
      throw std::domain_error("collision penalty gradient undefined at coincident positions");
    const Eigen::Vector2d inner_grad = collision_inner_subgradient(spec, dp);
    *grad_x += f1.deriv * (spec.position_selector.transpose() * inner_grad);
  }
  return f1.value;
}

double collision_bound_grad(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& x_lin, Eigen::VectorXd* grad_x) {
  const Eigen::Vector2d dp = spec.position_selector * x;
  const Eigen::Vector2d dpl = spec.position_selector * x_lin;
  const Eigen::Vector2d w = collision_inner_subgradient(spec, dpl);
  const double z = collision_inner(spec, dpl) + w.dot(dp - dpl);
  const OuterPenalty f1 = collision_outer(spec, z);
  if (grad_x != nullptr) *grad_x += f1.deriv * (spec.position_selector.transpose() * w);
  return f1.value;
}

CostEvalContext::CostEvalContext(const ScenarioTree& tree, const CostSpec& spec,
                                 const Eigen::VectorXd& x_meas) {
  refs.resize(static_cast<std::size_t>(tree.horizon()) + 1);
  for (int k = 0; k <= tree.horizon(); ++k) {
    refs[static_cast<std::size_t>(k)] = spec.reference(x_meas, k);
    if (refs[static_cast<std::size_t>(k)].size() != spec.Q.rows())
      throw std::invalid_argument("cost: reference dimension mismatch");
  }
  err.resize(spec.Q.rows());
  werr.resize(spec.Q.rows());
}

double node_cost(const CostSpec& spec, CostEvalContext& ctx,
                 const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd* u, int stage,
                 CollisionMode mode, const Eigen::VectorXd* x_lin, Eigen::VectorXd* grad_x,
                 Eigen::VectorXd* grad_u) {
  const bool terminal = u == nullptr;
  const Eigen::MatrixXd& W = terminal ? spec.Qf : spec.Q;
  if (spec.tracking_selector.rows() != W.rows() || spec.tracking_selector.cols() != x.size())
    throw std::invalid_argument("cost: tracking selector dimension mismatch");

  ctx.err.noalias() = spec.tracking_selector * x;
  ctx.err -= ctx.refs[static_cast<std::size_t>(stage)];
  ctx.werr.noalias() = W * ctx.err;
  double value = 0.5 * ctx.err.dot(ctx.werr);
  if (grad_x != nullptr) grad_x->noalias() += spec.tracking_selector.transpose() * ctx.werr;

  if (!terminal) {
    if (u->size() != spec.R.rows()) throw std::invalid_argument("cost: input dimension mismatch");
    value += 0.5 * u->dot(spec.R * *u);
    if (grad_u != nullptr) grad_u->noalias() += spec.R * *u;
  }

  if (spec.collision.has_value()) {
    const CollisionSpec& c = *spec.collision;
    if (mode == CollisionMode::Exact) {
      value += collision_penalty_grad(c, x, grad_x);
    } else {
      if (x_lin == nullptr) throw std::invalid_argument("cost: upper-bound mode needs a linearization state");
      value += collision_bound_grad(c, x, *x_lin, grad_x);
    }
  }
  return value;
}

Eigen::VectorXd scenario_losses_impl(const ScenarioTree& tree, const TrajectoryBundle& traj,
                                     const CostSpec& spec, const Eigen::VectorXd& x_meas,
                                     CollisionMode mode, const std::vector<Eigen::VectorXd>* x_lin) {
  if (mode == CollisionMode::UpperBound && spec.collision.has_value() && x_lin == nullptr)
    throw std::invalid_argument("scenario_losses: upper-bound mode needs the linearization bundle");
  if (static_cast<int>(traj.x.size()) != tree.node_count())
    throw std::invalid_argument("scenario_losses: trajectory does not cover the tree");

  CostEvalContext ctx(tree, spec, x_meas);
  Eigen::VectorXd to_node = Eigen::VectorXd::Zero(tree.node_count());
  Eigen::VectorXd losses(tree.leaf_count());
  for (const TreeNode& n : tree.nodes()) {
    const std::size_t id = static_cast<std::size_t>(n.id);
    const Eigen::VectorXd* lin = x_lin != nullptr ? &(*x_lin)[id] : nullptr;
    if (!n.children.empty()) {
      const double c = node_cost(spec, ctx, traj.x[id], &traj.u[id], n.stage, mode, lin, nullptr, nullptr);
      for (int child : n.children) to_node[child] = to_node[n.id] + c;
    } else {
      const double c = node_cost(spec, ctx, traj.x[id], nullptr, n.stage, mode, lin, nullptr, nullptr);
      losses[tree.scenario_index(n.id)] = to_node[n.id] + c;
    }
  }
  return losses;
}

void accumulate_tree_gradient(const ScenarioTree& tree, const MoEModel& model, const CostSpec& spec,
                              const Eigen::VectorXd& x_meas, const TrajectoryBundle& traj,
                              const Eigen::VectorXd& loss_weights, const Eigen::VectorXd& prob_weights,
                              CollisionMode mode, const std::vector<Eigen::VectorXd>* x_lin,
                              bool gate_at_lin, TreeGradient* grad) {
  const int count = tree.node_count();
  // Subtree sums of the per-scenario weights (parents precede children in id
  // order, so one reverse sweep suffices).
  Eigen::VectorXd loss_sub = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd prob_sub = Eigen::VectorXd::Zero(count);
  for (int id = count - 1; id >= 0; --id) {
    const TreeNode& n = tree.node(id);
    if (n.children.empty()) {
      const int s = tree.scenario_index(id);
      loss_sub[id] = loss_weights[s];
      prob_sub[id] = prob_weights[s];
    } else {
      for (int child : n.children) {
        loss_sub[id] += loss_sub[child];
        prob_sub[id] += prob_sub[child];
      }
    }
  }

  CostEvalContext ctx(tree, spec, x_meas);
  Eigen::VectorXd gx(model.state_dim());
  Eigen::VectorXd gu(model.input_dim());
  Eigen::VectorXd logits(model.mode_count());
  Eigen::VectorXd sigma(model.mode_count());
  Eigen::VectorXd per_mode(model.mode_count());
  for (const TreeNode& n : tree.nodes()) {
    const std::size_t id = static_cast<std::size_t>(n.id);
    const Eigen::VectorXd* lin = x_lin != nullptr ? &(*x_lin)[id] : nullptr;

    gx.setZero();
    if (n.children.empty()) {
      node_cost(spec, ctx, traj.x[id], nullptr, n.stage, mode, lin, &gx, nullptr);
      grad->x[id] += loss_sub[n.id] * gx;
    } else {
      gu.setZero();
      node_cost(spec, ctx, traj.x[id], &traj.u[id], n.stage, mode, lin, &gx, &gu);
      grad->x[id] += loss_sub[n.id] * gx;
      grad->u[id] += loss_sub[n.id] * gu;

      if (tree.branches(n.id)) {
        const Eigen::VectorXd& gate_state = gate_at_lin ? (*x_lin)[id] : traj.x[id];
        logits.noalias() = model.gate * gate_state;
        sigma = (logits.array() - logits.maxCoeff()).exp();
        sigma /= sigma.sum();
        per_mode.setZero();
        double total = 0;
        for (int child : n.children) {
          const double wc = prob_sub[child];
          per_mode[tree.node(child).incoming_mode] += wc;
          total += wc;
        }
        per_mode -= total * sigma;
        grad->x[id].noalias() += model.gate.transpose() * per_mode;
      }
    }
  }
}

}  // namespace detail

double collision_penalty(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd xv = x;
  return detail::collision_penalty_grad(spec, xv, nullptr);
}

double collision_upper_bound(const CollisionSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& x_lin) {
  return detail::collision_bound_grad(spec, x, x_lin, nullptr);
}

namespace {

// Stand-alone evaluations resolve the reference directly.
double single_node_cost(const CostSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::VectorXd* u, int stage, const Eigen::VectorXd& x_meas) {
  const bool terminal = u == nullptr;
  const Eigen::MatrixXd& W = terminal ? spec.Qf : spec.Q;
  if (spec.tracking_selector.rows() != W.rows() || spec.tracking_selector.cols() != x.size())
    throw std::invalid_argument("cost: tracking selector dimension mismatch");
  const Eigen::VectorXd ref = spec.reference(x_meas, stage);
  if (ref.size() != W.rows()) throw std::invalid_argument("cost: reference dimension mismatch");
  const Eigen::VectorXd err = spec.tracking_selector * x - ref;
  double value = 0.5 * err.dot(W * err);
  if (!terminal) {
    if (u->size() != spec.R.rows()) throw std::invalid_argument("cost: input dimension mismatch");
    value += 0.5 * u->dot(spec.R * *u);
  }
  if (spec.collision.has_value()) value += detail::collision_penalty_grad(*spec.collision, x, nullptr);
  return value;
}

}  // namespace

double stage_cost(const CostSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& u, int stage, const Eigen::VectorXd& x_meas) {
  const Eigen::VectorXd uv = u;
  return single_node_cost(spec, x, &uv, stage, x_meas);
}

double terminal_cost(const CostSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, int stage,
                     const Eigen::VectorXd& x_meas) {
  return single_node_cost(spec, x, nullptr, stage, x_meas);
}

ScenarioLossVector scenario_losses(const ScenarioTree& tree, const TrajectoryBundle& traj,
                                   const CostSpec& spec, const Eigen::VectorXd& x_meas,
                                   CollisionMode mode, const std::vector<Eigen::VectorXd>* x_lin) {
  return detail::scenario_losses_impl(tree, traj, spec, x_meas, mode, x_lin);
}

double risk_loss(const RiskConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& log_probs,
                 const Eigen::Ref<const Eigen::VectorXd>& losses) {
  cfg.validate();
  if (log_probs.size() != losses.size()) throw std::invalid_argument("risk_loss: size mismatch");
  if (!losses.allFinite() || !log_probs.allFinite()) throw std::invalid_argument("risk_loss: non-finite input");
  switch (cfg.formulation) {
    case RiskFormulation::Neutral:
      return (log_probs.array().exp() * losses.array()).sum();
    case RiskFormulation::Optimistic:
      return -log_sum_exp(log_probs - cfg.gamma * losses) / cfg.gamma;
    case RiskFormulation::Pessimistic:
      return log_sum_exp(log_probs + cfg.gamma * losses) / cfg.gamma;
  }
  throw std::logic_error("risk_loss: unknown formulation");
}

double risk_loss_value_and_gradient(const RiskConfig& cfg, const ScenarioTree& tree,
                                    const MoEModel& model, const CostSpec& spec,
                                    const Eigen::VectorXd& x_meas, const TrajectoryBundle& traj,
                                    TreeGradient* grad) {
  cfg.validate();
  const Eigen::VectorXd log_probs = scenario_log_probs(tree, model, traj.x);
  const Eigen::VectorXd losses = scenario_losses(tree, traj, spec, x_meas, CollisionMode::Exact);
  const double value = risk_loss(cfg, log_probs, losses);
  if (grad == nullptr) return value;

  Eigen::VectorXd loss_weights, prob_weights;
  switch (cfg.formulation) {
    case RiskFormulation::Neutral: {
      loss_weights = log_probs.array().exp();
      prob_weights = loss_weights.array() * losses.array();
      break;
    }
    case RiskFormulation::Optimistic: {
      loss_weights = softmax(log_probs - cfg.gamma * losses);
      prob_weights = -loss_weights / cfg.gamma;
      break;
    }
    case RiskFormulation::Pessimistic: {
      loss_weights = softmax(log_probs + cfg.gamma * losses);
      prob_weights = loss_weights / cfg.gamma;
      break;
    }
  }
  grad->reset(tree, model.state_dim(), model.input_dim());
  detail::accumulate_tree_gradient(tree, model, spec, x_meas, traj, loss_weights, prob_weights,
                                   CollisionMode::Exact, nullptr, false, grad);
  return value;
}

}  // namespace riskmm
