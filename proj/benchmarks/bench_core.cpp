#include <random>

#include <benchmark/benchmark.h>

#include "riskmm/corridor.hpp"
#include "riskmm/surrogates.hpp"

using namespace riskmm;

namespace {

std::vector<Eigen::VectorXd> bench_inputs(const ScenarioTree& tree, int nu) {
  std::vector<Eigen::VectorXd> inputs(static_cast<std::size_t>(tree.node_count()));
  std::mt19937_64 rng(0);
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    Eigen::VectorXd u(nu);
    for (int i = 0; i < nu; ++i) u[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    inputs[static_cast<std::size_t>(n.id)] = u;
  }
  return inputs;
}

void BM_tree_build(benchmark::State& state) {
  const int nb = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ScenarioTree tree(3, 15, nb);
    benchmark::DoNotOptimize(tree.node_count());
  }
}
BENCHMARK(BM_tree_build)->Arg(2)->Arg(4)->Arg(5);

void BM_rollout(benchmark::State& state) {
  CorridorConfig config;
  config.horizon_steps = 15;
  config.branching_steps = static_cast<int>(state.range(0));
  CorridorProblem problem(config);
  const Eigen::VectorXd x0 = corridor_solve_state(config);
  const auto inputs = bench_inputs(problem.tree, 2);
  for (auto _ : state) {
    TrajectoryBundle traj = rollout(problem.tree, problem.model, x0, inputs);
    benchmark::DoNotOptimize(traj.x.back());
  }
}
BENCHMARK(BM_rollout)->Arg(2)->Arg(5);

void BM_scenario_log_probs(benchmark::State& state) {
  CorridorConfig config;
  config.horizon_steps = 15;
  config.branching_steps = static_cast<int>(state.range(0));
  CorridorProblem problem(config);
  const TrajectoryBundle traj =
      rollout(problem.tree, problem.model, corridor_solve_state(config), bench_inputs(problem.tree, 2));
  for (auto _ : state) {
    Eigen::VectorXd lp = scenario_log_probs(problem.tree, problem.model, traj.x);
    benchmark::DoNotOptimize(lp.sum());
  }
}
BENCHMARK(BM_scenario_log_probs)->Arg(2)->Arg(5);

void BM_surrogate_gradient(benchmark::State& state) {
  CorridorConfig config;
  config.horizon_steps = 15;
  config.branching_steps = static_cast<int>(state.range(0));
  CorridorProblem problem(config);
  const Eigen::VectorXd x0 = corridor_solve_state(config);
  const TrajectoryBundle traj = rollout(problem.tree, problem.model, x0, bench_inputs(problem.tree, 2));

  const Eigen::VectorXd lp = scenario_log_probs(problem.tree, problem.model, traj.x);
  const Eigen::VectorXd L =
      scenario_losses(problem.tree, traj, problem.cost, x0, CollisionMode::Exact);
  SurrogateParams params;
  params.variant = RiskFormulation::Pessimistic;
  params.gamma = 1.0;
  params.x_lin = traj.x;

  for (auto _ : state) {
    TreeGradient grad;
    const double v = surrogate_value_and_gradient(problem.tree, problem.model, problem.cost, params,
                                                  x0, traj, &grad);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_surrogate_gradient)->Arg(2)->Arg(5);

void BM_open_loop_solve(benchmark::State& state) {
  CorridorConfig config;
  config.horizon_steps = 10;
  config.branching_steps = 2;
  config.gamma = 1.0;
  CorridorProblem problem(config);
  const Eigen::VectorXd x_t = corridor_solve_state(config);
  const MMConfig mm = build_mm_config(config);
  std::vector<Eigen::VectorXd> init(static_cast<std::size_t>(problem.tree.node_count()));
  for (const TreeNode& n : problem.tree.nodes()) {
    if (!n.children.empty()) init[static_cast<std::size_t>(n.id)] = Eigen::Vector2d::Zero();
  }
  for (auto _ : state) {
    auto [traj, report] = solve_ocp(Formulation::Optimistic, x_t, problem.ocp, mm, init);
    benchmark::DoNotOptimize(report.final_loss);
  }
}
BENCHMARK(BM_open_loop_solve)->Unit(benchmark::kMillisecond);

}  // namespace
