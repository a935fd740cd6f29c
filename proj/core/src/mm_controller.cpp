#include "riskmm/mm_controller.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace riskmm {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

RiskConfig risk_config_of(Formulation formulation, double gamma) {
  switch (formulation) {
    case Formulation::Optimistic:
      return {gamma, RiskFormulation::Optimistic};
    case Formulation::Pessimistic:
      return {gamma, RiskFormulation::Pessimistic};
    case Formulation::NeutralProxy:
      return {kNeutralProxyGamma, RiskFormulation::Optimistic};
  }
  throw std::logic_error("unknown formulation");
}

// x_t may sit on a box boundary up to the inner feasibility tolerance after
// a plant step; reject only clear violations.
constexpr double kRootFeasibilityTol = 1e-4;

}  // namespace

void MMConfig::validate() const {
  if (!(eps_tol > 0)) throw std::invalid_argument("MMConfig: eps_tol must be > 0");
  if (max_mm_iters < 1) throw std::invalid_argument("MMConfig: max_mm_iters must be >= 1");
  if (loss_decrease_tol.has_value() && !(*loss_decrease_tol > 0))
    throw std::invalid_argument("MMConfig: loss_decrease_tol must be > 0");
  if (!(inner.tol > 0)) throw std::invalid_argument("MMConfig: inner tolerance must be > 0");
}

std::pair<TrajectoryBundle, SolverReport> solve_ocp(Formulation formulation,
                                                    const Eigen::VectorXd& x_t,
                                                    const OcpProblem& problem,
                                                    const MMConfig& config,
                                                    const std::vector<Eigen::VectorXd>& initial_inputs) {
  config.validate();
  const ScenarioTree& tree = *problem.tree;
  const MoEModel& model = *problem.model;
  const CostSpec& spec = *problem.cost;
  const RiskConfig risk = risk_config_of(formulation, problem.gamma);
  risk.validate();

  if (!problem.constraints.state_feasible(x_t, kRootFeasibilityTol))
    throw std::invalid_argument("solve_ocp: measured state violates the state boxes");

  CondensedProblem cp(tree, model, x_t, problem.constraints);
  Eigen::VectorXd w = cp.stack_inputs(initial_inputs);
  w = w.cwiseMax(cp.stacked_lo()).cwiseMin(cp.stacked_hi());

  SolverReport report;
  Eigen::VectorXd duals_lo, duals_hi;
  double last_surrogate = 0;
  int last_inner = 0;
  int no_progress_passes = 0;
  auto pass_start = Clock::now();

  struct EvalWorkspace {
    TrajectoryBundle bundle;
    TreeGradient tg;
    Eigen::VectorXd gw;
    std::vector<Eigen::VectorXd> adjoint;
  } eval_ws;

  std::vector<Eigen::VectorXd> states = cp.states(w);
  TrajectoryBundle bundle = cp.to_bundle(w, states);

  for (int m = 0;; ++m) {
    TreeGradient loss_grad;
    const double loss = risk_loss_value_and_gradient(risk, tree, model, spec, x_t, bundle, &loss_grad);
    const Eigen::VectorXd g_w = cp.pull_back(loss_grad);
    const double err = constrained_kkt_error(cp, w, states, g_w, duals_lo, duals_hi);

    MMIterationRecord rec;
    rec.m = m;
    rec.true_loss = loss;
    rec.surrogate_value = m == 0 ? loss : last_surrogate;
    rec.optimality_error = err;
    rec.inner_iterations = last_inner;
    rec.wall_ms = ms_since(pass_start);
    report.iterations.push_back(rec);
    report.total_inner_iterations += last_inner;
    pass_start = Clock::now();

    if (err <= config.eps_tol) {
      report.status = MMStatus::Converged;
      report.termination_reason = "optimality error below tolerance";
      break;
    }
    if (config.loss_decrease_tol.has_value() && m > 0 &&
        report.iterations[static_cast<std::size_t>(m) - 1].true_loss - loss <=
            *config.loss_decrease_tol) {
      report.status = MMStatus::Converged;
      report.termination_reason = "loss decrease below tolerance";
      break;
    }
    if (m == config.max_mm_iters) {
      report.status = MMStatus::MaxIterations;
      report.termination_reason = "iteration limit";
      break;
    }

    SurrogateParams params;
    params.gamma = risk.gamma;
    params.x_lin = bundle.x;
    params.variant = risk.formulation;
    if (risk.formulation == RiskFormulation::Optimistic) {
      const Eigen::VectorXd log_probs = scenario_log_probs(tree, model, bundle.x);
      const Eigen::VectorXd losses = scenario_losses(tree, bundle, spec, x_t, CollisionMode::Exact);
      params.pi = optimal_pi(log_probs, losses, risk.gamma);
    }

    ObjectiveFn surrogate_fn = [&](const Eigen::Ref<const Eigen::VectorXd>& wv, Eigen::VectorXd* grad) {
      cp.states_into(wv, eval_ws.bundle.x);
      if (eval_ws.bundle.u.size() != static_cast<std::size_t>(tree.node_count()))
        eval_ws.bundle.u.resize(static_cast<std::size_t>(tree.node_count()));
      for (const TreeNode& n : tree.nodes()) {
        if (!n.children.empty())
          eval_ws.bundle.u[static_cast<std::size_t>(n.id)] =
              wv.segment(cp.input_offset(n.id), model.input_dim());
      }
      if (grad == nullptr) {
        return surrogate_value_and_gradient(tree, model, spec, params, x_t, eval_ws.bundle, nullptr);
      }
      const double v =
          surrogate_value_and_gradient(tree, model, spec, params, x_t, eval_ws.bundle, &eval_ws.tg);
      cp.pull_back_into(eval_ws.tg, eval_ws.gw, eval_ws.adjoint);
      *grad = eval_ws.gw;
      return v;
    };

    SolveOptions inner = config.inner;
    inner.warm_duals_lo = duals_lo;
    inner.warm_duals_hi = duals_hi;
    const SolveOutcome outcome = solve(cp, surrogate_fn, w, inner);
    if (outcome.status == SolveStatus::NumericalFailure) {
      report.status = MMStatus::InnerSolverFailure;
      report.termination_reason = "inner solver reported a non-finite objective";
      break;
    }

    std::vector<Eigen::VectorXd> new_states = cp.states(outcome.w);
    TrajectoryBundle new_bundle = cp.to_bundle(outcome.w, new_states);
    const Eigen::VectorXd new_log_probs = scenario_log_probs(tree, model, new_bundle.x);
    const Eigen::VectorXd new_losses = scenario_losses(tree, new_bundle, spec, x_t, CollisionMode::Exact);
    const double new_loss = risk_loss(risk, new_log_probs, new_losses);
    // Descent holds by majorization; allow only evaluation-noise increases.
    const double plateau = std::min(1e-8, 1e-12 * std::max(1.0, std::abs(loss)));
    if (new_loss > loss + plateau) {
      report.status = MMStatus::Stalled;
      report.termination_reason = "inner step would increase the true loss";
      break;
    }
    if ((outcome.w - w).lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + w.lpNorm<Eigen::Infinity>())) {
      // The iterate did not move but the inner solve may have refined the
      // state-box duals; let the convergence test see them once.
      duals_lo = outcome.state_duals_lo;
      duals_hi = outcome.state_duals_hi;
      last_surrogate = outcome.objective;
      last_inner = outcome.iterations;
      if (++no_progress_passes >= 2) {
        report.status = MMStatus::Stalled;
        report.termination_reason = "no progress in the decision variables";
        break;
      }
      continue;
    }
    no_progress_passes = 0;

    w = outcome.w;
    states = std::move(new_states);
    bundle = std::move(new_bundle);
    duals_lo = outcome.state_duals_lo;
    duals_hi = outcome.state_duals_hi;
    last_surrogate = outcome.objective;
    last_inner = outcome.iterations;
  }

  report.final_loss = report.iterations.back().true_loss;
  report.final_optimality_error = report.iterations.back().optimality_error;
  report.final_state_duals_lo = duals_lo;
  report.final_state_duals_hi = duals_hi;
  return {std::move(bundle), std::move(report)};
}

namespace {

// Old-tree counterpart of a new node whose mode path (after the realized
// root mode) is `modes`: walk down from the realized child, following
// branches by mode and frozen edges only when the mode matches.
int walk_old_tree(const ScenarioTree& tree, int realized_mode, const std::vector<int>& modes) {
  const TreeNode& root = tree.node(0);
  int cur = -1;
  if (tree.branches(0)) {
    cur = root.children[static_cast<std::size_t>(realized_mode)];
  } else if (!root.children.empty() &&
             tree.node(root.children[0]).incoming_mode == realized_mode) {
    cur = root.children[0];
  }
  if (cur < 0) return -1;
  for (int m : modes) {
    const TreeNode& n = tree.node(cur);
    if (n.children.empty()) return -1;
    if (tree.branches(n.id)) {
      cur = n.children[static_cast<std::size_t>(m)];
    } else if (tree.node(n.children[0]).incoming_mode == m) {
      cur = n.children[0];
    } else {
      return -1;
    }
  }
  return cur;
}

}  // namespace

StepResult mpc_step(Formulation formulation, const Eigen::VectorXd& x_t, const OcpProblem& problem,
                    const MMConfig& config, ControllerState& state, std::mt19937_64& rng) {
  const ScenarioTree& tree = *problem.tree;
  const MoEModel& model = *problem.model;

  if (state.warm_inputs.empty()) {
    state.warm_inputs.assign(static_cast<std::size_t>(tree.node_count()), Eigen::VectorXd());
    for (const TreeNode& n : tree.nodes()) {
      if (!n.children.empty())
        state.warm_inputs[static_cast<std::size_t>(n.id)] = Eigen::VectorXd::Zero(model.input_dim());
    }
  }

  auto [traj, report] = solve_ocp(formulation, x_t, problem, config, state.warm_inputs);

  StepResult result;
  result.applied_input =
      traj.u[0].cwiseMax(problem.constraints.u_lo).cwiseMin(problem.constraints.u_hi);
  result.sampled_mode = sample_mode(model, x_t, rng);
  result.next_state = step(model, x_t, result.applied_input, result.sampled_mode);
  result.report = std::move(report);

  // Shift the solution one stage along the realized subtree; nodes with no
  // counterpart (the newly exposed tail) inherit their parent's input.
  std::vector<Eigen::VectorXd> shifted(static_cast<std::size_t>(tree.node_count()));
  std::vector<std::vector<int>> mode_path(static_cast<std::size_t>(tree.node_count()));
  for (const TreeNode& n : tree.nodes()) {
    if (n.id != 0) {
      mode_path[static_cast<std::size_t>(n.id)] = mode_path[static_cast<std::size_t>(n.parent)];
      mode_path[static_cast<std::size_t>(n.id)].push_back(n.incoming_mode);
    }
    if (n.children.empty()) continue;
    const int old_node = walk_old_tree(tree, result.sampled_mode, mode_path[static_cast<std::size_t>(n.id)]);
    if (old_node >= 0 && !tree.node(old_node).children.empty()) {
      shifted[static_cast<std::size_t>(n.id)] = traj.u[static_cast<std::size_t>(old_node)];
    } else if (n.id == 0) {
      shifted[0] = result.applied_input;
    } else {
      shifted[static_cast<std::size_t>(n.id)] = shifted[static_cast<std::size_t>(n.parent)];
    }
  }
  state.warm_inputs = std::move(shifted);
  return result;
}

ClosedLoopResult run_closed_loop(const ClosedLoopSetup& setup, const OcpProblem& problem,
                                 const MMConfig& config, std::mt19937_64& rng) {
  ClosedLoopResult result;
  result.trace.states.push_back(setup.x0);

  ControllerState cs;
  Eigen::VectorXd x = setup.x0;
  for (int t = 0; t < setup.steps; ++t) {
    const auto t0 = Clock::now();
    StepResult step = mpc_step(setup.formulation, x, problem, config, cs, rng);
    result.trace.solve_ms.push_back(ms_since(t0));
    result.trace.inputs.push_back(step.applied_input);
    result.trace.modes.push_back(step.sampled_mode);
    result.trace.reports.push_back(std::move(step.report));
    x = step.next_state;
    result.trace.states.push_back(x);
  }

  ClosedLoopMetrics& m = result.metrics;
  if (setup.steps == 0) {
    m.defined = false;
    return result;
  }
  m.defined = true;
  m.avte = 0;
  for (int t = 0; t < setup.steps; ++t) {
    m.avte += (setup.velocity_error_selector * result.trace.states[static_cast<std::size_t>(t)] -
               setup.velocity_error_offset)
                  .norm();
  }
  m.min_distance = std::numeric_limits<double>::infinity();
  m.collision_count = 0;
  for (const Eigen::VectorXd& xs : result.trace.states) {
    const double dist = (setup.distance_selector * xs).norm();
    m.min_distance = std::min(m.min_distance, dist);
    if (dist < setup.collision_distance) ++m.collision_count;
  }
  return result;
}

}  // namespace riskmm
