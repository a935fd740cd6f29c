#include <doctest.h>

#include <Eigen/Dense>

#include "riskmm/inner_solver.hpp"
#include "riskmm/surrogates.hpp"
#include "test_helpers.hpp"

using namespace riskmm;
namespace th = riskmm::testing;

namespace {

constexpr double kBig = 1e30;

ObjectiveFn quadratic(const Eigen::MatrixXd& H, const Eigen::VectorXd& b) {
  return [H, b](const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* g) {
    if (g != nullptr) *g = H * w - b;
    return 0.5 * w.dot(H * w) - b.dot(w);
  };
}

}  // namespace

TEST_CASE("unconstrained quadratic reaches the closed-form minimizer") {
  std::mt19937_64 rng(41);
  const int n = 12;
  const Eigen::MatrixXd M = th::uniform_matrix(rng, n, n, -1, 1);
  const Eigen::MatrixXd H = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd b = th::uniform_vector(rng, n, -1, 1);

  const SolveOutcome out =
      solve_box(Eigen::VectorXd::Constant(n, -kBig), Eigen::VectorXd::Constant(n, kBig),
                quadratic(H, b), Eigen::VectorXd::Zero(n), 1e-10, 20000);
  CHECK(out.status == SolveStatus::Converged);
  const Eigen::VectorXd star = H.ldlt().solve(b);
  CHECK((out.w - star).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("box clipping lands on the active bound") {
  Eigen::MatrixXd H(1, 1);
  H << 1.0;
  Eigen::VectorXd b(1);
  b << 2.0;  // unconstrained minimum at 2
  const SolveOutcome out =
      solve_box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0),
                quadratic(H, b), Eigen::VectorXd::Zero(1), 1e-10, 1000);
  CHECK(out.status == SolveStatus::Converged);
  CHECK(out.w[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("objective never rises above the projected start") {
  std::mt19937_64 rng(42);
  const int n = 8;
  const Eigen::MatrixXd M = th::uniform_matrix(rng, n, n, -1, 1);
  const Eigen::MatrixXd H = M.transpose() * M + 0.2 * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd b = th::uniform_vector(rng, n, -1, 1);
  const ObjectiveFn f = quadratic(H, b);
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -0.4);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 0.4);
  const Eigen::VectorXd w0 = th::uniform_vector(rng, n, -2, 2);
  const SolveOutcome out = solve_box(lo, hi, f, w0, 1e-8, 5);  // starved of iterations
  const Eigen::VectorXd w0p = w0.cwiseMax(lo).cwiseMin(hi);
  CHECK(out.objective <= f(w0p, nullptr) + 1e-12);
}

TEST_CASE("non-finite objectives are reported as numerical failure") {
  const ObjectiveFn bad = [](const Eigen::Ref<const Eigen::VectorXd>&, Eigen::VectorXd* g) {
    if (g != nullptr) g->setZero(1);
    return std::numeric_limits<double>::quiet_NaN();
  };
  const SolveOutcome out =
      solve_box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0), bad,
                Eigen::VectorXd::Zero(1), 1e-6, 100);
  CHECK(out.status == SolveStatus::NumericalFailure);
}

TEST_CASE("kkt residual matches its definition") {
  // Interior point: plain gradient norm.
  Eigen::VectorXd w(2), g(2), lo(2), hi(2);
  w << 0.0, 0.2;
  g << 0.3, -0.1;
  lo << -1, -1;
  hi << 1, 1;
  BoundMultipliers mult = derive_bound_multipliers(w, g, lo, hi);
  CHECK(optimality_error(w, g, lo, hi, mult) == doctest::Approx(0.3));

  // At the stationary point of the restricted problem the residual vanishes.
  w << 1.0, 0.0;
  g << -0.7, 0.0;  // pushing further into the upper bound
  mult = derive_bound_multipliers(w, g, lo, hi);
  CHECK(optimality_error(w, g, lo, hi, mult) <= 1e-12);

  // Large multipliers relax the stationarity scale.
  KktTerms t;
  t.stationarity_inf = 1.0;
  t.multiplier_abs_sum = 4000.0;
  t.multiplier_count = 10;
  CHECK(scaled_kkt_error(t) == doctest::Approx(0.25));  // s_d = 400/100
}

TEST_CASE("condensed maps reproduce the chain example") {
  const ScenarioTree tree(1, 2, 0);
  MoEModel model;
  model.gate = Eigen::MatrixXd::Zero(1, 1);
  model.A = {Eigen::MatrixXd::Identity(1, 1)};
  model.B = {Eigen::MatrixXd::Identity(1, 1)};
  ConstraintSet cons;
  cons.u_lo = Eigen::VectorXd::Constant(1, -kBig);
  cons.u_hi = Eigen::VectorXd::Constant(1, kBig);
  const Eigen::VectorXd x_t = Eigen::VectorXd::Constant(1, 3.0);
  const CondensedProblem cp(tree, model, x_t, cons);

  CHECK(cp.num_inputs() == 2);
  for (int node = 0; node < 3; ++node) {
    CHECK(cp.offset_vector(node)[0] == doctest::Approx(3.0));
  }
  CHECK(cp.input_map(0).isZero());
  Eigen::MatrixXd e1 = cp.input_map(1);
  CHECK(e1(0, 0) == doctest::Approx(1.0));
  CHECK(e1(0, 1) == doctest::Approx(0.0));
  Eigen::MatrixXd e2 = cp.input_map(2);
  CHECK(e2(0, 0) == doctest::Approx(1.0));
  CHECK(e2(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("condensed maps agree with the rollout on random inputs") {
  std::mt19937_64 rng(43);
  const ScenarioTree tree(2, 3, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  ConstraintSet cons;
  cons.u_lo = Eigen::VectorXd::Constant(2, -kBig);
  cons.u_hi = Eigen::VectorXd::Constant(2, kBig);
  const Eigen::VectorXd x_t = th::uniform_vector(rng, 4, -1, 1);
  const CondensedProblem cp(tree, model, x_t, cons);

  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd w = th::uniform_vector(rng, cp.num_inputs(), -1, 1);
    const std::vector<Eigen::VectorXd> xs = cp.states(w);
    const TrajectoryBundle ref = rollout(tree, model, x_t, cp.to_bundle(w, xs).u);
    for (int node = 0; node < tree.node_count(); ++node) {
      const Eigen::VectorXd via_maps = cp.input_map(node) * w + cp.offset_vector(node);
      CHECK((via_maps - ref.x[node]).lpNorm<Eigen::Infinity>() <= 1e-12);
      CHECK((xs[node] - ref.x[node]).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("zero input maps leave only the autonomous path products") {
  std::mt19937_64 rng(44);
  const ScenarioTree tree(2, 2, 2);
  MoEModel model = th::random_model(rng, 2, 3, 1);
  for (auto& B : model.B) B.setZero();
  ConstraintSet cons;
  cons.u_lo = Eigen::VectorXd::Constant(1, -1.0);
  cons.u_hi = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd x_t = th::uniform_vector(rng, 3, -1, 1);
  const CondensedProblem cp(tree, model, x_t, cons);
  for (int node = 0; node < tree.node_count(); ++node) {
    CHECK(cp.input_map(node).isZero());
  }
  // leaf 3 has mode path (0, 0)
  const Eigen::VectorXd via = model.A[0] * (model.A[0] * x_t);
  CHECK((cp.offset_vector(3) - via).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("adjoint pull-back matches the dense transpose") {
  std::mt19937_64 rng(45);
  const ScenarioTree tree(2, 3, 1);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  ConstraintSet cons;
  cons.u_lo = Eigen::VectorXd::Constant(2, -1.0);
  cons.u_hi = Eigen::VectorXd::Constant(2, 1.0);
  const CondensedProblem cp(tree, model, th::uniform_vector(rng, 4, -1, 1), cons);

  TreeGradient g = TreeGradient::zero(tree, 4, 2);
  for (const TreeNode& n : tree.nodes()) {
    g.x[n.id] = th::uniform_vector(rng, 4, -1, 1);
    if (!n.children.empty()) g.u[n.id] = th::uniform_vector(rng, 2, -1, 1);
  }
  const Eigen::VectorXd fast = cp.pull_back(g);

  Eigen::VectorXd dense = Eigen::VectorXd::Zero(cp.num_inputs());
  for (const TreeNode& n : tree.nodes()) {
    dense += cp.input_map(n.id).transpose() * g.x[n.id];
    if (!n.children.empty()) dense.segment(cp.input_offset(n.id), 2) += g.u[n.id];
  }
  CHECK((fast - dense).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("projected gradient vanishes at the reported surrogate minimizer") {
  std::mt19937_64 rng(46);
  const ScenarioTree tree(2, 3, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec cost = th::quadratic_cost(rng, 4, 2, true);
  ConstraintSet cons;
  cons.u_lo = Eigen::VectorXd::Constant(2, -1.0);
  cons.u_hi = Eigen::VectorXd::Constant(2, 1.0);
  const Eigen::VectorXd x0 = th::safe_state(rng, 4);
  const CondensedProblem cp(tree, model, x0, cons);

  const TrajectoryBundle expansion = rollout(tree, model, x0, th::random_inputs(rng, tree, 2));
  SurrogateParams params;
  params.variant = RiskFormulation::Pessimistic;
  params.gamma = 1.0;
  params.x_lin = expansion.x;

  const ObjectiveFn f = [&](const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* grad) {
    const TrajectoryBundle b = cp.to_bundle(w, cp.states(w));
    if (grad == nullptr)
      return surrogate_value_and_gradient(tree, model, cost, params, x0, b, nullptr);
    TreeGradient tg;
    const double v = surrogate_value_and_gradient(tree, model, cost, params, x0, b, &tg);
    *grad = cp.pull_back(tg);
    return v;
  };

  SolveOptions options;
  options.tol = 1e-5;
  const SolveOutcome out = solve(cp, f, Eigen::VectorXd::Zero(cp.num_inputs()), options);
  REQUIRE(out.status == SolveStatus::Converged);

  Eigen::VectorXd g(out.w.size());
  f(out.w, &g);
  const Eigen::VectorXd pg =
      out.w - (out.w - g).cwiseMax(cp.stacked_lo()).cwiseMin(cp.stacked_hi());
  CHECK(pg.lpNorm<Eigen::Infinity>() <= options.tol);

  // Reported states are the rollout of the reported inputs.
  const TrajectoryBundle check = rollout(tree, model, x0, cp.to_bundle(out.w, out.states).u);
  for (int node = 0; node < tree.node_count(); ++node) {
    CHECK((out.states[node] - check.x[node]).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
}

TEST_CASE("state boxes are honored to tolerance") {
  std::mt19937_64 rng(47);
  const ScenarioTree tree(2, 3, 2);
  const MoEModel model = th::random_model(rng, 2, 4, 2);
  const CostSpec cost = th::quadratic_cost(rng, 4, 2, false);
  ConstraintSet cons;
  cons.u_lo = Eigen::VectorXd::Constant(2, -2.0);
  cons.u_hi = Eigen::VectorXd::Constant(2, 2.0);
  cons.state_boxes = {{0, -0.8, 1.6}, {2, -1.0, 1.0}};
  const Eigen::VectorXd x0 = th::safe_state(rng, 4);
  const CondensedProblem cp(tree, model, x0, cons);

  // Pull hard toward a reference that violates the boxes.
  CostSpec pulled = cost;
  pulled.reference = [](const Eigen::VectorXd&, int) {
    return (Eigen::VectorXd(4) << 5, 0, 5, 0).finished();
  };
  const ObjectiveFn f = [&](const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* grad) {
    const TrajectoryBundle b = cp.to_bundle(w, cp.states(w));
    TreeGradient tg;
    double v = 0;
    v = risk_loss_value_and_gradient({1.0, RiskFormulation::Neutral}, tree, model, pulled, x0, b,
                                     grad != nullptr ? &tg : nullptr);
    if (grad != nullptr) *grad = cp.pull_back(tg);
    return v;
  };

  SolveOptions options;
  const SolveOutcome out = solve(cp, f, Eigen::VectorXd::Zero(cp.num_inputs()), options);
  for (const auto& c : cp.state_constraints()) {
    const double xc = out.states[c.node][c.coord];
    CHECK(xc >= c.lo - 1e-6);
    CHECK(xc <= c.hi + 1e-6);
  }
  // The boxes actually bind in this setup.
  double max_hit = -1e9;
  for (const auto& c : cp.state_constraints()) max_hit = std::max(max_hit, out.states[c.node][c.coord] - c.hi);
  CHECK(max_hit >= -1e-4);
}

TEST_CASE("solver matches a long plain projected-gradient reference") {
  std::mt19937_64 rng(48);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 17);
    const Eigen::MatrixXd M = th::uniform_matrix(rng, n, n, -1, 1);
    const Eigen::MatrixXd H = M.transpose() * M + 0.5 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd b = th::uniform_vector(rng, n, -2, 2);
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -0.5);
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 0.5);
    const ObjectiveFn f = quadratic(H, b);

    const SolveOutcome out = solve_box(lo, hi, f, Eigen::VectorXd::Zero(n), 1e-8, 20000);

    const double step =
        1.0 / Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (int it = 0; it < 200000; ++it) w = (w - step * (H * w - b)).cwiseMax(lo).cwiseMin(hi);
    const double ref = 0.5 * w.dot(H * w) - b.dot(w);
    CHECK(out.objective <= ref + 1e-5);
  }
}
