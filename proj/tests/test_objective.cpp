#include <doctest.h>

#include "riskmm/corridor.hpp"
#include "riskmm/objective.hpp"
#include "riskmm/oracles.hpp"
#include "test_helpers.hpp"

using namespace riskmm;
namespace th = riskmm::testing;

namespace {

CostSpec corridor_weights() {
  return build_corridor_cost(CorridorConfig{});
}

}  // namespace

TEST_CASE("tracking error of one meter in x costs 25 under the corridor weights") {
  const CostSpec spec = corridor_weights();
  Eigen::VectorXd x_meas(7);
  x_meas << 0, 0, 1.5, 0, 100, 0, 1;  // human far away, robot at speed
  // stage 0 reference is (p_x_meas, 0, 1.5, 0); offset the position by 1.
  Eigen::VectorXd x(7);
  x << 1.0, 0, 1.5, 0, 100, 0, 1;
  const double c = stage_cost(spec, x, Eigen::Vector2d::Zero(), 0, x_meas);
  CHECK(c == doctest::Approx(25.0).epsilon(1e-9));

  // quadratic input term: doubling u quadruples it
  const double c1 = stage_cost(spec, x_meas, Eigen::Vector2d(0.3, 0.1), 0, x_meas);
  const double c2 = stage_cost(spec, x_meas, Eigen::Vector2d(0.6, 0.2), 0, x_meas);
  const double c0 = stage_cost(spec, x_meas, Eigen::Vector2d::Zero(), 0, x_meas);
  CHECK(c2 - c0 == doctest::Approx(4.0 * (c1 - c0)).epsilon(1e-9));
}

TEST_CASE("cost vanishes on the reference with no collision pressure") {
  const CostSpec spec = corridor_weights();
  Eigen::VectorXd x_meas(7);
  x_meas << 0, 0, 1.5, 0, 1e6, 0, 1;
  Eigen::VectorXd x(7);
  x << 0.15, 0, 1.5, 0, 1e6, 0, 1;  // exactly on the stage-1 reference
  const double c = stage_cost(spec, x, Eigen::Vector2d::Zero(), 1, x_meas);
  CHECK(c == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("collision penalty values and monotonicity") {
  CollisionSpec spec;
  spec.alpha = 500;
  spec.beta = 5;
  spec.kind = CollisionKind::ExpNorm;
  spec.position_selector = Eigen::MatrixXd::Identity(2, 2);

  CHECK(collision_penalty(spec, Eigen::Vector2d(0, 0)) == doctest::Approx(500.0));
  CHECK(collision_penalty(spec, Eigen::Vector2d(1, 0)) == doctest::Approx(3.36897349954).epsilon(1e-9));
  CHECK(collision_penalty(spec, Eigen::Vector2d(2, 0)) < collision_penalty(spec, Eigen::Vector2d(1, 0)));
}

TEST_CASE("collision bound dominates and touches for every kind") {
  std::mt19937_64 rng(21);
  for (CollisionKind kind :
       {CollisionKind::ExpNorm, CollisionKind::ExpSquaredNorm, CollisionKind::InversePower}) {
    CollisionSpec spec;
    spec.kind = kind;
    spec.alpha = kind == CollisionKind::InversePower ? 0.7 : 400.0;
    spec.beta = 3.0;
    spec.power = 2.0;
    spec.position_selector = Eigen::MatrixXd::Zero(2, 4);
    spec.position_selector(0, 0) = 1;
    spec.position_selector(1, 1) = 1;

    for (int i = 0; i < 1000; ++i) {
      const Eigen::VectorXd x = th::uniform_vector(rng, 4, -2, 2);
      const Eigen::VectorXd xl = th::uniform_vector(rng, 4, -2, 2);
      CHECK(collision_upper_bound(spec, x, xl) >= collision_penalty(spec, x) - 1e-12);
    }
    const Eigen::VectorXd xl = th::uniform_vector(rng, 4, -2, 2);
    CHECK(collision_upper_bound(spec, xl, xl) ==
          doctest::Approx(collision_penalty(spec, xl)).epsilon(1e-12));

    // Kink expansion: the bound becomes the constant f1(0), which dominates.
    Eigen::VectorXd origin = Eigen::VectorXd::Zero(4);
    origin[3] = 2.0;
    const double constant = collision_upper_bound(spec, th::uniform_vector(rng, 4, -2, 2), origin);
    CHECK(constant == doctest::Approx(collision_penalty(spec, origin)).epsilon(1e-12));
  }
}

TEST_CASE("scenario losses accumulate path costs") {
  std::mt19937_64 rng(22);
  const ScenarioTree tree(2, 3, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec spec = th::quadratic_cost(rng, 4, 2, true);
  const Eigen::VectorXd x0 = th::safe_state(rng, 4);
  const TrajectoryBundle traj = rollout(tree, model, x0, th::random_inputs(rng, tree, 2));

  const Eigen::VectorXd losses = scenario_losses(tree, traj, spec, x0, CollisionMode::Exact);

  // Independent per-scenario re-summation.
  for (const Scenario& s : tree.scenarios()) {
    double total = terminal_cost(spec, traj.x[s.leaf], tree.horizon(), x0);
    for (int k = 0; k < tree.horizon(); ++k) {
      const int id = s.ancestors[k];
      total += stage_cost(spec, traj.x[id], traj.u[id], k, x0);
    }
    CHECK(losses[tree.scenario_index(s.leaf)] == doctest::Approx(total).epsilon(1e-12));
  }

  // Distinct branches yield distinct losses here.
  CHECK(std::abs(losses[0] - losses[3]) > 1e-9);
}

TEST_CASE("a single-mode chain reduces to the plain finite-horizon cost") {
  std::mt19937_64 rng(28);
  const ScenarioTree tree(1, 4, 4);
  const MoEModel model = th::random_model(rng, 1, 3, 2);
  const CostSpec spec = th::quadratic_cost(rng, 3, 2, true);
  const Eigen::VectorXd x0 = th::safe_state(rng, 3);
  const TrajectoryBundle traj = rollout(tree, model, x0, th::random_inputs(rng, tree, 2));

  const Eigen::VectorXd losses = scenario_losses(tree, traj, spec, x0, CollisionMode::Exact);
  REQUIRE(losses.size() == 1);

  double total = 0;
  int node = 0;
  for (int k = 0; k < 4; ++k) {
    total += stage_cost(spec, traj.x[node], traj.u[node], k, x0);
    node = tree.node(node).children[0];
  }
  total += terminal_cost(spec, traj.x[node], 4, x0);
  CHECK(losses[0] == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("zero weights give zero losses") {
  std::mt19937_64 rng(23);
  const ScenarioTree tree(2, 2, 2);
  const MoEModel model = th::random_model(rng, 2, 3, 1);
  CostSpec spec = th::quadratic_cost(rng, 3, 1, false);
  spec.Q.setZero();
  spec.R.setZero();
  spec.Qf.setZero();
  const TrajectoryBundle traj =
      rollout(tree, model, th::safe_state(rng, 3), th::random_inputs(rng, tree, 1));
  const Eigen::VectorXd losses = scenario_losses(tree, traj, spec, traj.x[0], CollisionMode::Exact);
  CHECK(losses.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("upper-bound losses require the linearization bundle") {
  std::mt19937_64 rng(24);
  const ScenarioTree tree(2, 2, 2);
  const MoEModel model = th::random_model(rng, 2, 3, 1);
  const CostSpec spec = th::quadratic_cost(rng, 3, 1, true);
  const TrajectoryBundle traj =
      rollout(tree, model, th::safe_state(rng, 3), th::random_inputs(rng, tree, 1));
  CHECK_THROWS_AS((void)scenario_losses(tree, traj, spec, traj.x[0], CollisionMode::UpperBound),
                  std::invalid_argument);
}

TEST_CASE("risk loss closed-form values on a two-point distribution") {
  Eigen::VectorXd lp(2);
  lp << std::log(0.5), std::log(0.5);
  Eigen::VectorXd L(2);
  L << 0.0, 1.0;

  CHECK(risk_loss({1.0, RiskFormulation::Pessimistic}, lp, L) ==
        doctest::Approx(0.620114506958).epsilon(1e-10));
  CHECK(risk_loss({1.0, RiskFormulation::Optimistic}, lp, L) ==
        doctest::Approx(0.379885493042).epsilon(1e-10));
  CHECK(risk_loss({1.0, RiskFormulation::Neutral}, lp, L) == doctest::Approx(0.5));

  // Constant losses are returned unchanged by every formulation.
  Eigen::VectorXd Lc = Eigen::VectorXd::Constant(2, 3.25);
  for (RiskFormulation f :
       {RiskFormulation::Neutral, RiskFormulation::Optimistic, RiskFormulation::Pessimistic}) {
    CHECK(risk_loss({2.0, f}, lp, Lc) == doctest::Approx(3.25).epsilon(1e-12));
  }
}

TEST_CASE("huge gamma-scaled losses never overflow") {
  Eigen::VectorXd lp(2);
  lp << std::log(0.5), std::log(0.5);
  Eigen::VectorXd L(2);
  L << 0.0, 2000.0;
  const double v = risk_loss({1000.0, RiskFormulation::Pessimistic}, lp, L);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(2000.0 + std::log(0.5) / 1000.0).epsilon(1e-9));
}

TEST_CASE("gamma must be positive for risk-sensitive losses") {
  Eigen::VectorXd lp(1);
  lp << 0.0;
  Eigen::VectorXd L(1);
  L << 1.0;
  CHECK_THROWS_AS((void)risk_loss({0.0, RiskFormulation::Optimistic}, lp, L), std::invalid_argument);
  CHECK_THROWS_AS((void)risk_loss({-1.0, RiskFormulation::Pessimistic}, lp, L), std::invalid_argument);
}

TEST_CASE("risk bounds sandwich the expectation") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = trial % 2 == 0 ? 2 : 3;
    const ScenarioTree tree(d, 3, 2);
    const MoEModel model = th::random_model(rng, d, 4, 2);
    const CostSpec spec = th::quadratic_cost(rng, 4, 2, true);
    const Eigen::VectorXd x0 = th::safe_state(rng, 4);
    const TrajectoryBundle traj = rollout(tree, model, x0, th::random_inputs(rng, tree, 2));
    const Eigen::VectorXd lp = scenario_log_probs(tree, model, traj.x);
    const Eigen::VectorXd L = scenario_losses(tree, traj, spec, x0, CollisionMode::Exact);
    const double gamma = std::vector<double>{0.1, 1.0, 10.0}[trial % 3];

    const double lo = risk_loss({gamma, RiskFormulation::Optimistic}, lp, L);
    const double e = risk_loss({gamma, RiskFormulation::Neutral}, lp, L);
    const double pe = risk_loss({gamma, RiskFormulation::Pessimistic}, lp, L);
    CHECK(L.minCoeff() <= lo + 1e-9);
    CHECK(lo <= e + 1e-9);
    CHECK(e <= pe + 1e-9);
    CHECK(pe <= L.maxCoeff() + 1e-9);
  }
}

TEST_CASE("risk losses approach the expectation and the extremes in gamma") {
  Eigen::VectorXd raw(4);
  raw << 0.4, 0.3, 0.2, 0.1;
  const Eigen::VectorXd lp = raw.array().log();
  Eigen::VectorXd L(4);
  L << 0.0, 1.3, 2.6, 4.1;

  const double e = (raw.array() * L.array()).sum();
  const double range = L.maxCoeff() - L.minCoeff();
  CHECK(std::abs(risk_loss({1e-6, RiskFormulation::Optimistic}, lp, L) - e) <= 1e-4 * range);
  CHECK(std::abs(risk_loss({1e-6, RiskFormulation::Pessimistic}, lp, L) - e) <= 1e-4 * range);
  CHECK(std::abs(risk_loss({1e3, RiskFormulation::Optimistic}, lp, L) - L.minCoeff()) <= 1e-2);
  CHECK(std::abs(risk_loss({1e3, RiskFormulation::Pessimistic}, lp, L) - L.maxCoeff()) <= 1e-2);
}

TEST_CASE("small-gamma pessimistic loss matches the variance correction quadratically") {
  Eigen::VectorXd raw(3);
  raw << 0.5, 0.3, 0.2;
  const Eigen::VectorXd lp = raw.array().log();
  Eigen::VectorXd L(3);
  L << 0.0, 1.0, 3.0;
  const double e = (raw.array() * L.array()).sum();
  double var = 0;
  for (int i = 0; i < 3; ++i) var += raw[i] * (L[i] - e) * (L[i] - e);

  auto err = [&](double g) {
    return std::abs(risk_loss({g, RiskFormulation::Pessimistic}, lp, L) - (e + 0.5 * g * var));
  };
  const double ratio = err(1e-2) / err(1e-3);
  CHECK(ratio >= 50.0);
  CHECK(ratio <= 200.0);
}

TEST_CASE("analytic risk gradients match central differences") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 6; ++trial) {
    const ScenarioTree tree(2, 3, 2);
    const MoEModel model = th::random_model(rng, 2, 4, 2);
    const CostSpec spec = th::quadratic_cost(rng, 4, 2, true);
    const Eigen::VectorXd x0 = th::safe_state(rng, 4);
    TrajectoryBundle at = rollout(tree, model, x0, th::random_inputs(rng, tree, 2));
    for (auto& x : at.x) x[0] += 0.5;  // stay clear of the norm kink

    const RiskFormulation forms[] = {RiskFormulation::Neutral, RiskFormulation::Optimistic,
                                     RiskFormulation::Pessimistic};
    const RiskConfig cfg{trial % 2 == 0 ? 0.5 : 1.0, forms[trial % 3]};

    TreeGradient g;
    risk_loss_value_and_gradient(cfg, tree, model, spec, x0, at, &g);
    const Eigen::VectorXd analytic = stack_decision_vector(tree, g);
    const Eigen::VectorXd numeric = oracles::fd_gradient(
        [&](const Eigen::VectorXd& w) {
          const TrajectoryBundle b = unstack_decision_vector(tree, 4, 2, w);
          return risk_loss_value_and_gradient(cfg, tree, model, spec, x0, b, nullptr);
        },
        stack_decision_vector(tree, at), 1e-6);
    const double rel = (analytic - numeric).lpNorm<Eigen::Infinity>() /
                       std::max(1.0, analytic.lpNorm<Eigen::Infinity>());
    CHECK(rel <= 1e-5);
  }
}

TEST_CASE("tiny-gamma risk gradients collapse to the neutral gradient") {
  std::mt19937_64 rng(29);
  const ScenarioTree tree(2, 3, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec spec = th::quadratic_cost(rng, 4, 2, true);
  const Eigen::VectorXd x0 = th::safe_state(rng, 4);
  const TrajectoryBundle traj = rollout(tree, model, x0, th::random_inputs(rng, tree, 2));

  TreeGradient gp, gn;
  risk_loss_value_and_gradient({1e-8, RiskFormulation::Pessimistic}, tree, model, spec, x0, traj, &gp);
  risk_loss_value_and_gradient({1.0, RiskFormulation::Neutral}, tree, model, spec, x0, traj, &gn);
  const Eigen::VectorXd dp = stack_decision_vector(tree, gp);
  const Eigen::VectorXd dn = stack_decision_vector(tree, gn);
  CHECK((dp - dn).lpNorm<Eigen::Infinity>() <= 1e-5 * std::max(1.0, dn.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("risk gradient is rejected at coincident positions") {
  std::mt19937_64 rng(27);
  const ScenarioTree tree(2, 2, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec spec = th::quadratic_cost(rng, 4, 2, true);
  TrajectoryBundle traj = rollout(tree, model, th::safe_state(rng, 4), th::random_inputs(rng, tree, 2));
  traj.x[1].head<2>().setZero();  // a node exactly at the kink
  TreeGradient g;
  CHECK_THROWS_AS((void)risk_loss_value_and_gradient({1.0, RiskFormulation::Pessimistic}, tree,
                                                     model, spec, traj.x[0], traj, &g),
                  std::domain_error);
}
