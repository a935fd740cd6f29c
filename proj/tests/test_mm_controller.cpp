#include <doctest.h>

#include <Eigen/Dense>

#include "riskmm/corridor.hpp"
#include "riskmm/mm_controller.hpp"
#include "test_helpers.hpp"

using namespace riskmm;
namespace th = riskmm::testing;

namespace {

std::vector<Eigen::VectorXd> zero_inputs(const ScenarioTree& tree, int nu) {
  std::vector<Eigen::VectorXd> inputs(tree.node_count());
  for (const TreeNode& n : tree.nodes()) {
    if (!n.children.empty()) inputs[n.id] = Eigen::VectorXd::Zero(nu);
  }
  return inputs;
}

}  // namespace

TEST_CASE("a deterministic chain solve matches the dense least-squares answer") {
  std::mt19937_64 rng(51);
  const ScenarioTree tree(1, 4, 4);
  MoEModel model = th::random_model(rng, 1, 3, 2);
  model.gate.setZero();
  const CostSpec cost = th::quadratic_cost(rng, 3, 2, false);

  OcpProblem problem;
  problem.tree = &tree;
  problem.model = &model;
  problem.cost = &cost;
  problem.constraints.u_lo = Eigen::VectorXd::Constant(2, -100.0);
  problem.constraints.u_hi = Eigen::VectorXd::Constant(2, 100.0);
  problem.gamma = 1.0;

  MMConfig config;
  config.inner.tol = 1e-8;
  const Eigen::VectorXd x_t = th::uniform_vector(rng, 3, -1, 1);
  const auto [traj, report] =
      solve_ocp(Formulation::Optimistic, x_t, problem, config, zero_inputs(tree, 2));
  CHECK(report.status == MMStatus::Converged);

  // Dense normal equations on the stacked-input quadratic.
  const CondensedProblem cp(tree, model, x_t, problem.constraints);
  const int n = cp.num_inputs();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  double c0 = 0;
  for (const TreeNode& node : tree.nodes()) {
    const Eigen::MatrixXd E = cp.input_map(node.id);
    const Eigen::VectorXd e = cp.offset_vector(node.id);
    const Eigen::MatrixXd& W = node.children.empty() ? cost.Qf : cost.Q;
    H += E.transpose() * W * E;
    b -= E.transpose() * (W * e);
    c0 += 0.5 * e.dot(W * e);
    if (!node.children.empty()) {
      H.block(cp.input_offset(node.id), cp.input_offset(node.id), 2, 2) += cost.R;
    }
  }
  const Eigen::VectorXd w_star = H.ldlt().solve(b);
  const double f_star = 0.5 * w_star.dot(H * w_star) - b.dot(w_star) + c0;
  CHECK(report.final_loss == doctest::Approx(f_star).epsilon(1e-5));
}

TEST_CASE("the true loss never increases across outer iterations") {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 8; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 2);
    const ScenarioTree tree(d, 3, 2);
    const MoEModel model = th::random_model(rng, d, 4, 2);
    const CostSpec cost = th::quadratic_cost(rng, 4, 2, true);

    OcpProblem problem;
    problem.tree = &tree;
    problem.model = &model;
    problem.cost = &cost;
    problem.constraints.u_lo = Eigen::VectorXd::Constant(2, -1.0);
    problem.constraints.u_hi = Eigen::VectorXd::Constant(2, 1.0);
    problem.gamma = std::vector<double>{0.1, 1.0, 10.0}[trial % 3];

    MMConfig config;
    config.max_mm_iters = 20;
    const Eigen::VectorXd x_t = th::safe_state(rng, 4);
    const Formulation form = trial % 2 == 0 ? Formulation::Optimistic : Formulation::Pessimistic;
    const auto [traj, report] = solve_ocp(form, x_t, problem, config, zero_inputs(tree, 2));

    for (std::size_t i = 1; i < report.iterations.size(); ++i) {
      CHECK(report.iterations[i].true_loss <= report.iterations[i - 1].true_loss + 1e-8);
    }
    // The surrogate value of an accepted step sits between consecutive losses.
    for (std::size_t i = 1; i < report.iterations.size(); ++i) {
      if (report.iterations[i].true_loss < report.iterations[i - 1].true_loss - 1e-10) {
        CHECK(report.iterations[i].surrogate_value <=
              report.iterations[i - 1].true_loss + 1e-8);
        CHECK(report.iterations[i].surrogate_value >= report.iterations[i].true_loss - 1e-8);
      }
    }
  }
}

TEST_CASE("risk ordering holds at any returned solution") {
  std::mt19937_64 rng(53);
  const ScenarioTree tree(2, 3, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec cost = th::quadratic_cost(rng, 4, 2, true);
  OcpProblem problem;
  problem.tree = &tree;
  problem.model = &model;
  problem.cost = &cost;
  problem.constraints.u_lo = Eigen::VectorXd::Constant(2, -1.0);
  problem.constraints.u_hi = Eigen::VectorXd::Constant(2, 1.0);
  problem.gamma = 1.0;

  MMConfig config;
  const Eigen::VectorXd x_t = th::safe_state(rng, 4);
  const auto [traj, report] =
      solve_ocp(Formulation::Pessimistic, x_t, problem, config, zero_inputs(tree, 2));

  const Eigen::VectorXd lp = scenario_log_probs(tree, model, traj.x);
  const Eigen::VectorXd L = scenario_losses(tree, traj, cost, x_t, CollisionMode::Exact);
  const double lo = risk_loss({1.0, RiskFormulation::Optimistic}, lp, L);
  const double e = risk_loss({1.0, RiskFormulation::Neutral}, lp, L);
  const double pe = risk_loss({1.0, RiskFormulation::Pessimistic}, lp, L);
  CHECK(lo <= e + 1e-9);
  CHECK(e <= pe + 1e-9);
}

TEST_CASE("an infeasible measured state is rejected") {
  std::mt19937_64 rng(54);
  const ScenarioTree tree(2, 2, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec cost = th::quadratic_cost(rng, 4, 2, false);
  OcpProblem problem;
  problem.tree = &tree;
  problem.model = &model;
  problem.cost = &cost;
  problem.constraints.u_lo = Eigen::VectorXd::Constant(2, -1.0);
  problem.constraints.u_hi = Eigen::VectorXd::Constant(2, 1.0);
  problem.constraints.state_boxes = {{0, -1.0, 1.0}};
  problem.gamma = 1.0;

  Eigen::VectorXd x_t = Eigen::VectorXd::Zero(4);
  x_t[0] = 2.0;
  CHECK_THROWS_AS((void)solve_ocp(Formulation::Optimistic, x_t, problem, MMConfig{},
                                  zero_inputs(tree, 2)),
                  std::invalid_argument);
}

TEST_CASE("neutral proxy runs the optimistic pipeline at a small gamma") {
  std::mt19937_64 rng(55);
  const ScenarioTree tree(2, 2, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec cost = th::quadratic_cost(rng, 4, 2, false);
  OcpProblem problem;
  problem.tree = &tree;
  problem.model = &model;
  problem.cost = &cost;
  problem.constraints.u_lo = Eigen::VectorXd::Constant(2, -1.0);
  problem.constraints.u_hi = Eigen::VectorXd::Constant(2, 1.0);
  problem.gamma = 50.0;  // ignored by the proxy

  const Eigen::VectorXd x_t = th::safe_state(rng, 4);
  const auto [traj, report] =
      solve_ocp(Formulation::NeutralProxy, x_t, problem, MMConfig{}, zero_inputs(tree, 2));

  const Eigen::VectorXd lp = scenario_log_probs(tree, model, traj.x);
  const Eigen::VectorXd L = scenario_losses(tree, traj, cost, x_t, CollisionMode::Exact);
  const double proxy = risk_loss({kNeutralProxyGamma, RiskFormulation::Optimistic}, lp, L);
  CHECK(report.final_loss == doctest::Approx(proxy).epsilon(1e-10));
  // Near the risk-neutral optimum the expectation is close to the proxy loss.
  const double e = risk_loss({1.0, RiskFormulation::Neutral}, lp, L);
  CHECK(std::abs(e - proxy) <= 1e-3 * (L.maxCoeff() - L.minCoeff() + 1.0));
}

TEST_CASE("closed-loop steps clip inputs, sample the gate, and advance the plant") {
  CorridorConfig config;
  config.horizon_steps = 6;
  config.branching_steps = 2;
  config.gamma = 1.0;
  CorridorProblem problem(config);
  MMConfig mm = build_mm_config(config);
  mm.max_mm_iters = 3;

  // Dominant gate: far behind the human, the third mode is near certain.
  const Eigen::VectorXd x_t = corridor_joint_state({-3, 0, 0, 0}, {2.0, 0.0});
  ControllerState cs;
  std::mt19937_64 rng(7);
  const StepResult r = mpc_step(Formulation::Optimistic, x_t, problem.ocp, mm, cs, rng);

  CHECK(r.sampled_mode == 2);
  CHECK((r.applied_input - problem.ocp.constraints.u_lo).minCoeff() >= 0.0);
  CHECK((problem.ocp.constraints.u_hi - r.applied_input).minCoeff() >= 0.0);
  const Eigen::VectorXd expect = step(problem.model, x_t, r.applied_input, r.sampled_mode);
  CHECK((r.next_state - expect).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(r.next_state[6] == 1.0);

  // Warm start is filled for every non-leaf node and stays in the box.
  for (const TreeNode& n : problem.tree.nodes()) {
    if (n.children.empty()) continue;
    const Eigen::VectorXd& u = cs.warm_inputs[n.id];
    REQUIRE(u.size() == 2);
    CHECK((u - problem.ocp.constraints.u_lo).minCoeff() >= 0.0);
    CHECK((problem.ocp.constraints.u_hi - u).minCoeff() >= 0.0);
  }
}

TEST_CASE("a zero-input plant ignores the controller") {
  std::mt19937_64 rng(56);
  const ScenarioTree tree(2, 2, 2);
  MoEModel model = th::random_model(rng, 2, 4, 2);
  for (auto& B : model.B) B.setZero();
  const CostSpec cost = th::quadratic_cost(rng, 4, 2, false);
  OcpProblem problem;
  problem.tree = &tree;
  problem.model = &model;
  problem.cost = &cost;
  problem.constraints.u_lo = Eigen::VectorXd::Constant(2, -1.0);
  problem.constraints.u_hi = Eigen::VectorXd::Constant(2, 1.0);
  problem.gamma = 1.0;

  const Eigen::VectorXd x_t = th::safe_state(rng, 4);
  ControllerState cs;
  std::mt19937_64 plant_rng(3);
  const StepResult r = mpc_step(Formulation::Optimistic, x_t, problem, MMConfig{}, cs, plant_rng);
  CHECK((r.next_state - model.A[r.sampled_mode] * x_t).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("human lateral speed follows the sampled mode's tracking law") {
  CorridorConfig config;
  config.horizon_steps = 4;
  config.branching_steps = 1;
  CorridorProblem problem(config);
  const Eigen::VectorXd x_t = corridor_joint_state({-3, 0, 0, 0}, {2.0, 0.3});
  ControllerState cs;
  std::mt19937_64 rng(11);
  MMConfig mm = build_mm_config(config);
  mm.max_mm_iters = 2;
  const StepResult r = mpc_step(Formulation::Optimistic, x_t, problem.ocp, mm, cs, rng);

  const double y_ref = config.y_refs_m[r.sampled_mode];
  const double v_y_h = -config.human_y_gain * (x_t[5] - y_ref);
  CHECK(r.next_state[5] == doctest::Approx(x_t[5] + config.dt_s * v_y_h).epsilon(1e-12));
  CHECK(r.next_state[4] == doctest::Approx(x_t[4] + config.dt_s * config.human_v_x_mps).epsilon(1e-12));
}

TEST_CASE("an empty closed loop yields undefined metrics") {
  CorridorConfig config;
  config.horizon_steps = 3;
  config.branching_steps = 1;
  config.sim_steps = 0;
  CorridorProblem problem(config);
  std::mt19937_64 rng(1);
  const ClosedLoopSetup setup = build_closed_loop_setup(config, rng);
  const ClosedLoopResult result = run_closed_loop(setup, problem.ocp, build_mm_config(config), rng);
  CHECK_FALSE(result.metrics.defined);
  CHECK(result.trace.states.size() == 1);
  CHECK(result.trace.inputs.empty());
}

TEST_CASE("with the human out of reach the robot tracks the speed reference") {
  CorridorConfig config;
  config.horizon_steps = 8;
  config.branching_steps = 1;
  config.sim_steps = 40;
  config.gamma = 1.0;
  config.human_v_x_mps = 0.0;
  config.human_y_gain = 0.0;
  config.human_init_p_x_range_m = {100.0, 100.0};
  config.human_init_p_y_range_m = {0.0, 0.0};
  CorridorProblem problem(config);
  std::mt19937_64 rng(2);
  const ClosedLoopSetup setup = build_closed_loop_setup(config, rng);
  const ClosedLoopResult result = run_closed_loop(setup, problem.ocp, build_mm_config(config), rng);

  REQUIRE(result.metrics.defined);
  // The robot covers a few meters at most; the gap stays near 100.
  CHECK(result.metrics.min_distance >= 97.0);
  CHECK(result.metrics.collision_count == 0);
  // Terminal speed reaches the cap and the tracking error stays near the ramp cost.
  const Eigen::VectorXd& last = result.trace.states.back();
  CHECK(last[2] == doctest::Approx(config.v_x_max_mps).epsilon(1e-3));
  CHECK(result.metrics.avte <= 14.0);  // bounded by the acceleration-limited ramp

  // Velocity rises monotonically during the ramp.
  for (std::size_t t = 1; t < 15; ++t) {
    CHECK(result.trace.states[t][2] >= result.trace.states[t - 1][2] - 1e-9);
  }
}

TEST_CASE("closed-loop runs are reproducible from the seed") {
  CorridorConfig config;
  config.horizon_steps = 5;
  config.branching_steps = 2;
  config.sim_steps = 8;
  CorridorProblem problem(config);

  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const ClosedLoopSetup setup = build_closed_loop_setup(config, rng);
    return run_closed_loop(setup, problem.ocp, build_mm_config(config), rng);
  };
  const ClosedLoopResult a = run(9), b = run(9), c = run(10);
  for (std::size_t t = 0; t < a.trace.states.size(); ++t) {
    CHECK((a.trace.states[t] - b.trace.states[t]).lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK(a.metrics.avte == b.metrics.avte);
  // A different seed draws a different human start, visible in the state.
  CHECK((a.trace.states.back() - c.trace.states.back()).lpNorm<Eigen::Infinity>() > 1e-6);
}
