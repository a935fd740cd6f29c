#include <doctest.h>

#include "riskmm/oracles.hpp"
#include "riskmm/surrogates.hpp"
#include "riskmm/verify_suite.hpp"
#include "test_helpers.hpp"

using namespace riskmm;
namespace th = riskmm::testing;

TEST_CASE("finite differences are exact on linear functions") {
  Eigen::VectorXd c(3);
  c << 1.0, -2.0, 0.5;
  const auto f = [&](const Eigen::VectorXd& x) { return c.dot(x); };
  for (double step : {1e-3, 1e-6}) {
    const Eigen::VectorXd g = oracles::fd_gradient(f, Eigen::Vector3d(0.3, -0.7, 2.0), step);
    CHECK((g - c).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("finite differences recover a quadratic gradient") {
  std::mt19937_64 rng(61);
  const Eigen::MatrixXd M = th::uniform_matrix(rng, 4, 4, -1, 1);
  const Eigen::MatrixXd Q = M.transpose() * M;
  const auto f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(Q * x); };
  const Eigen::VectorXd x = th::uniform_vector(rng, 4, -1, 1);
  const Eigen::VectorXd g = oracles::fd_gradient(f, x, 1e-6);
  CHECK((g - Q * x).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("finite differences refuse non-finite evaluations") {
  const auto f = [](const Eigen::VectorXd& x) { return std::log(x[0]); };
  CHECK_THROWS_AS((void)oracles::fd_gradient(f, Eigen::VectorXd::Zero(1), 1e-6),
                  std::domain_error);
}

TEST_CASE("grid search over the simplex finds vertex minima of linear objectives") {
  Eigen::VectorXd c(3);
  c << 2.0, -1.0, 0.5;
  const auto result = oracles::simplex_grid_min([&](const Eigen::VectorXd& p) { return c.dot(p); },
                                                3, 100);
  CHECK(result.value == doctest::Approx(-1.0));
  CHECK(result.point[1] == doctest::Approx(1.0));
}

TEST_CASE("grid search respects symmetry") {
  const auto result = oracles::simplex_grid_min(
      [](const Eigen::VectorXd& p) { return p.squaredNorm(); }, 4, 100);
  for (int i = 0; i < 4; ++i) CHECK(result.point[i] == doctest::Approx(0.25));
}

TEST_CASE("grid search rejects oversized problems") {
  CHECK_THROWS_AS((void)oracles::simplex_grid_min([](const Eigen::VectorXd&) { return 0.0; }, 5, 10),
                  std::invalid_argument);
}

TEST_CASE("edge-product enumeration matches known distributions") {
  // Uniform gate: every scenario has probability d^-Nb.
  const ScenarioTree tree(2, 3, 2);
  MoEModel model;
  model.gate = Eigen::MatrixXd::Zero(2, 3);
  for (int i = 0; i < 2; ++i) {
    model.A.push_back(Eigen::MatrixXd::Identity(3, 3));
    model.B.push_back(Eigen::MatrixXd::Zero(3, 1));
  }
  std::mt19937_64 rng(62);
  const TrajectoryBundle traj =
      rollout(tree, model, Eigen::Vector3d(1, 0, 0), th::random_inputs(rng, tree, 1));
  const Eigen::VectorXd probs = oracles::enumerate_scenario_probs(tree, model, traj.x);
  for (int s = 0; s < probs.size(); ++s) CHECK(probs[s] == doctest::Approx(0.25).epsilon(1e-12));

  const ScenarioTree chain(1, 4, 4);
  const MoEModel single = th::random_model(rng, 1, 3, 1);
  const TrajectoryBundle t2 =
      rollout(chain, single, Eigen::Vector3d(0, 0, 0), th::random_inputs(rng, chain, 1));
  const Eigen::VectorXd one = oracles::enumerate_scenario_probs(chain, single, t2.x);
  CHECK(one[0] == doctest::Approx(1.0));
}

TEST_CASE("the verify suite passes end to end on a filtered subset") {
  const verify::OracleReport report = riskmm::verify::run_all_checks("warm_start");
  REQUIRE(report.checks.size() == 1);
  CHECK(report.checks.front().pass);
  CHECK(report.all_pass());
}

TEST_CASE("a sign error in the mixture formula trips the grid check") {
  const verify::OracleCheck good = verify::check_optimal_pi_grid();
  CHECK(good.pass);

  const verify::OracleCheck bad = verify::check_optimal_pi_grid(
      [](const Eigen::VectorXd& lp, const Eigen::VectorXd& L, double gamma) {
        return optimal_pi(lp, -L, gamma);  // flipped loss sign
      });
  CHECK_FALSE(bad.pass);
}
