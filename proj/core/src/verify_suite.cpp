#include "riskmm/verify_suite.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "riskmm/inner_solver.hpp"
#include "riskmm/mm_controller.hpp"
#include "riskmm/numerics.hpp"
#include "riskmm/oracles.hpp"
#include "riskmm/surrogates.hpp"

namespace riskmm::verify {

bool OracleReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.pass; });
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

Eigen::VectorXd uniform_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

Eigen::MatrixXd uniform_matrix(std::mt19937_64& rng, int r, int c, double lo, double hi) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = uniform(rng, lo, hi);
  return m;
}

struct InstanceOptions {
  int mode_count = 2;
  int horizon = 3;
  int branching = 2;
  int state_dim = 4;
  int input_dim = 2;
  double gate_scale = 0.7;
  bool with_collision = true;
  CollisionKind kind = CollisionKind::ExpNorm;
  double collision_alpha = 3.0;
  double collision_beta = 1.0;
};

struct Instance {
  ScenarioTree tree;
  MoEModel model;
  CostSpec cost;
  ConstraintSet constraints;
  Eigen::VectorXd x_meas;
  TrajectoryBundle traj;  // rollout of random box-feasible inputs

  Instance(const InstanceOptions& opt, std::mt19937_64& rng)
      : tree(opt.mode_count, opt.horizon, opt.branching) {
    const int nx = opt.state_dim;
    const int nu = opt.input_dim;

    model.gate = uniform_matrix(rng, opt.mode_count, nx, -opt.gate_scale, opt.gate_scale);
    for (int i = 0; i < opt.mode_count; ++i) {
      model.A.push_back(Eigen::MatrixXd::Identity(nx, nx) + uniform_matrix(rng, nx, nx, -0.15, 0.15));
      model.B.push_back(uniform_matrix(rng, nx, nu, -0.5, 0.5));
    }

    cost.Q = uniform_vector(rng, nx, 0.2, 2.0).asDiagonal();
    cost.R = uniform_vector(rng, nu, 0.2, 1.0).asDiagonal();
    cost.Qf = uniform_vector(rng, nx, 0.2, 3.0).asDiagonal();
    cost.tracking_selector = Eigen::MatrixXd::Identity(nx, nx);
    cost.reference = [nx](const Eigen::VectorXd&, int) { return Eigen::VectorXd::Zero(nx); };
    if (opt.with_collision) {
      CollisionSpec c;
      c.alpha = opt.collision_alpha;
      c.beta = opt.collision_beta;
      c.kind = opt.kind;
      c.power = 1.5;
      c.position_selector = Eigen::MatrixXd::Zero(2, nx);
      c.position_selector(0, 0) = 1;
      c.position_selector(1, 1) = 1;
      cost.collision = std::move(c);
    }

    constraints.u_lo = Eigen::VectorXd::Constant(nu, -1.0);
    constraints.u_hi = Eigen::VectorXd::Constant(nu, 1.0);

    // Keep the first coordinate away from zero so norm penalties stay smooth.
    x_meas = uniform_vector(rng, nx, -1.0, 1.0);
    x_meas[0] += 1.5;

    std::vector<Eigen::VectorXd> inputs(static_cast<std::size_t>(tree.node_count()));
    for (const TreeNode& n : tree.nodes()) {
      if (!n.children.empty())
        inputs[static_cast<std::size_t>(n.id)] = uniform_vector(rng, nu, -0.8, 0.8);
    }
    traj = rollout(tree, model, x_meas, inputs);
  }

  // Arbitrary bundle of the right shape (not dynamics-consistent), with the
  // first state coordinate kept away from the norm kink.
  TrajectoryBundle random_bundle(std::mt19937_64& rng) const {
    TrajectoryBundle b;
    const int nx = model.state_dim();
    const int nu = model.input_dim();
    b.x.resize(static_cast<std::size_t>(tree.node_count()));
    b.u.resize(static_cast<std::size_t>(tree.node_count()));
    for (const TreeNode& n : tree.nodes()) {
      Eigen::VectorXd x = uniform_vector(rng, nx, -1.5, 1.5);
      x[0] += 1.8;
      b.x[static_cast<std::size_t>(n.id)] = std::move(x);
      if (!n.children.empty())
        b.u[static_cast<std::size_t>(n.id)] = uniform_vector(rng, nu, -1.0, 1.0);
    }
    return b;
  }
};

OracleCheck make_check(std::string name, double violation, double tolerance, std::string detail = "") {
  OracleCheck c;
  c.name = std::move(name);
  c.max_violation = violation;
  c.tolerance = tolerance;
  c.pass = violation <= tolerance;
  c.detail = std::move(detail);
  return c;
}

double expected_loss(const Eigen::VectorXd& log_probs, const Eigen::VectorXd& losses) {
  double e = 0;
  for (int i = 0; i < losses.size(); ++i) e += std::exp(log_probs[i]) * losses[i];
  return e;
}

}  // namespace

OracleCheck check_tree_structure() {
  double violation = 0;
  auto expect = [&](bool ok) { violation += ok ? 0 : 1; };

  struct Case {
    int d, n, nb, nodes, leaves;
  };
  // Closed-form count: sum_{k<=nb} d^k + d^nb (n - nb).
  const Case cases[] = {{2, 2, 2, 7, 4}, {1, 5, 5, 6, 1}, {2, 20, 5, 543, 32}, {3, 4, 2, 31, 9}};
  for (const Case& c : cases) {
    const ScenarioTree tree(c.d, c.n, c.nb);
    expect(tree.node_count() == c.nodes);
    expect(tree.leaf_count() == c.leaves);

    // Stage sets partition the node list.
    int covered = 0;
    for (int k = 0; k <= c.n; ++k) {
      for (int id : tree.stage_nodes(k)) {
        expect(tree.node(id).stage == k);
        ++covered;
      }
    }
    expect(covered == tree.node_count());

    // Branching structure and frozen tails.
    for (const TreeNode& n : tree.nodes()) {
      if (n.stage < c.n) {
        expect(static_cast<int>(n.children.size()) == (n.stage < c.nb ? c.d : 1));
        if (n.stage >= c.nb && n.id != 0) {
          expect(tree.node(n.children[0]).incoming_mode == n.incoming_mode);
        }
      } else {
        expect(n.children.empty());
      }
    }

    // Every scenario path has horizon+1 nodes and frozen modes past nb.
    for (const Scenario& s : tree.scenarios()) {
      const auto path = tree.scenario_path(s.leaf);
      expect(static_cast<int>(path.size()) == c.n + 1);
      for (int k = c.nb; k < c.n; ++k) {
        expect(s.modes[static_cast<std::size_t>(k)] ==
               s.modes[static_cast<std::size_t>(std::max(c.nb - 1, 0))]);
      }
    }
  }

  // Shared-prefix property: two leaves share exactly the ancestors up to
  // their last common branching stage (exhaustive for small trees).
  for (int d = 1; d <= 3; ++d) {
    for (int n = 1; n <= 5; ++n) {
      const int nb = std::min(3, n);
      const ScenarioTree tree(d, n, nb);
      const auto& sc = tree.scenarios();
      for (std::size_t a = 0; a < sc.size(); ++a) {
        for (std::size_t b = a + 1; b < sc.size(); ++b) {
          int first_diff = 0;
          while (first_diff < n && sc[a].modes[static_cast<std::size_t>(first_diff)] ==
                                       sc[b].modes[static_cast<std::size_t>(first_diff)]) {
            ++first_diff;
          }
          for (int k = 0; k < n; ++k) {
            const bool shared = sc[a].ancestors[static_cast<std::size_t>(k)] ==
                                sc[b].ancestors[static_cast<std::size_t>(k)];
            expect(shared == (k <= first_diff));
          }
        }
      }
    }
  }
  return make_check("tree_structure", violation, 0, "failed structural assertions");
}

OracleCheck check_gate_shift_invariance() {
  std::mt19937_64 rng(11);
  double violation = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 3);
    const int nx = 3 + static_cast<int>(rng() % 3);
    MoEModel model;
    model.gate = uniform_matrix(rng, d, nx, -2.0, 2.0);
    for (int i = 0; i < d; ++i) {
      model.A.push_back(Eigen::MatrixXd::Identity(nx, nx));
      model.B.push_back(Eigen::MatrixXd::Zero(nx, 1));
    }
    Eigen::VectorXd x = uniform_vector(rng, nx, -2.0, 2.0);
    if (x.squaredNorm() < 1e-6) x[0] = 1.0;
    const Eigen::VectorXd p = gate_distribution(model, x);

    // Shift all logits by a constant via a rank-one gate update.
    const double c = uniform(rng, -40.0, 40.0);
    MoEModel shifted = model;
    shifted.gate += (c / x.squaredNorm()) * Eigen::VectorXd::Ones(d) * x.transpose();
    const Eigen::VectorXd q = gate_distribution(shifted, x);
    violation = std::max(violation, (p - q).lpNorm<Eigen::Infinity>());
    violation = std::max(violation, std::abs(p.sum() - 1.0));
  }
  return make_check("gate_shift_invariance", violation, 1e-12);
}

OracleCheck check_scenario_prob_normalization() {
  std::mt19937_64 rng(12);
  double violation = 0;
  for (int trial = 0; trial < 40; ++trial) {
    InstanceOptions opt;
    opt.mode_count = 2 + static_cast<int>(rng() % 2);
    opt.horizon = 2 + static_cast<int>(rng() % 3);
    opt.branching = std::min(opt.horizon, 1 + static_cast<int>(rng() % 3));
    opt.gate_scale = 2.0;
    const Instance inst(opt, rng);
    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);
    violation = std::max(violation, std::abs(lp.array().exp().sum() - 1.0));
  }
  return make_check("scenario_prob_normalization", violation, 1e-10);
}

OracleCheck check_scenario_prob_product_oracle() {
  std::mt19937_64 rng(13);
  double violation = 0;
  for (int trial = 0; trial < 40; ++trial) {
    InstanceOptions opt;
    opt.mode_count = trial % 2 == 0 ? 2 : 3;
    opt.horizon = 3 + static_cast<int>(rng() % 2);
    opt.branching = opt.mode_count == 2 ? std::min(3, opt.horizon) : 2;
    opt.gate_scale = 1.5;
    const Instance inst(opt, rng);
    const Eigen::VectorXd fast = scenario_log_probs(inst.tree, inst.model, inst.traj.x).array().exp();
    const Eigen::VectorXd slow = oracles::enumerate_scenario_probs(inst.tree, inst.model, inst.traj.x);
    violation = std::max(violation, (fast - slow).lpNorm<Eigen::Infinity>());
  }
  return make_check("scenario_prob_product_oracle", violation, 1e-10);
}

OracleCheck check_mode_sampling_frequencies() {
  double violation = 0;  // normalized: fraction of each tolerance used, must stay <= 1

  // Single mode: always index 0.
  {
    MoEModel model;
    model.gate = Eigen::MatrixXd::Zero(1, 2);
    model.A = {Eigen::MatrixXd::Identity(2, 2)};
    model.B = {Eigen::MatrixXd::Zero(2, 1)};
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
      if (sample_mode(model, Eigen::Vector2d(1, 1), rng) != 0) violation = std::max(violation, 2.0);
    }
  }

  // One dominant logit: empirical frequency > 0.999 over 1e4 draws.
  {
    MoEModel model;
    model.gate = Eigen::MatrixXd::Zero(3, 1);
    model.gate << 50.0, 0.0, 0.0;
    for (int i = 0; i < 3; ++i) {
      model.A.push_back(Eigen::MatrixXd::Identity(1, 1));
      model.B.push_back(Eigen::MatrixXd::Zero(1, 1));
    }
    std::mt19937_64 rng(2);
    int hits = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      if (sample_mode(model, Eigen::VectorXd::Ones(1), rng) == 0) ++hits;
    }
    const double freq = static_cast<double>(hits) / n;
    violation = std::max(violation, (0.999 - freq) / 0.001 + 0.0);
  }

  // Uniform gate, d = 3: frequencies within 3 sigma of 1/3 over 1e5 draws.
  {
    MoEModel model;
    model.gate = Eigen::MatrixXd::Zero(3, 1);
    for (int i = 0; i < 3; ++i) {
      model.A.push_back(Eigen::MatrixXd::Identity(1, 1));
      model.B.push_back(Eigen::MatrixXd::Zero(1, 1));
    }
    std::mt19937_64 rng(3);
    const int n = 100000;
    Eigen::Vector3i counts = Eigen::Vector3i::Zero();
    for (int i = 0; i < n; ++i) counts[sample_mode(model, Eigen::VectorXd::Ones(1), rng)] += 1;
    const double p = 1.0 / 3.0;
    const double band = 3.0 * std::sqrt(p * (1 - p) / n);
    for (int i = 0; i < 3; ++i) {
      const double dev = std::abs(static_cast<double>(counts[i]) / n - p);
      violation = std::max(violation, dev / band);
    }
  }
  return make_check("mode_sampling_frequencies", violation, 1.0, "normalized against each band");
}

OracleCheck check_risk_bounds_sandwich(int instances) {
  std::mt19937_64 rng(21);
  const double gammas[] = {0.1, 1.0, 10.0};
  double violation = 0;
  for (int trial = 0; trial < instances; ++trial) {
    InstanceOptions opt;
    opt.mode_count = trial % 2 == 0 ? 2 : 3;
    opt.horizon = 1 + static_cast<int>(rng() % 3);
    opt.branching = std::min(opt.horizon, 1 + static_cast<int>(rng() % 2));
    const Instance inst(opt, rng);

    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);
    const Eigen::VectorXd L = scenario_losses(inst.tree, inst.traj, inst.cost, inst.x_meas,
                                              CollisionMode::Exact);
    const double gamma = gammas[trial % 3];
    const double lo = risk_loss({gamma, RiskFormulation::Optimistic}, lp, L);
    const double lp_loss = risk_loss({gamma, RiskFormulation::Pessimistic}, lp, L);
    const double e = risk_loss({gamma, RiskFormulation::Neutral}, lp, L);
    violation = std::max({violation, L.minCoeff() - lo, lo - e, e - lp_loss, lp_loss - L.maxCoeff()});
  }
  return make_check("risk_bounds_sandwich", violation, 1e-9);
}

OracleCheck check_risk_limits() {
  std::mt19937_64 rng(22);
  double violation = 0;  // normalized against each band
  for (int trial = 0; trial < 20; ++trial) {
    // Tame gate so every scenario keeps non-negligible probability.
    InstanceOptions opt;
    opt.mode_count = 2;
    opt.horizon = 2;
    opt.branching = 2;
    opt.gate_scale = 0.4;
    opt.with_collision = false;
    const Instance inst(opt, rng);
    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);

    // Losses with gaps of at least one between scenarios.
    Eigen::VectorXd L(4);
    L << 0.0, 1.25, 2.5, 3.75;
    for (int i = 0; i < 4; ++i) L[i] += uniform(rng, 0.0, 0.1);
    std::shuffle(L.data(), L.data() + 4, rng);

    const double e = expected_loss(lp, L);
    const double range = L.maxCoeff() - L.minCoeff();
    {
      const double g = 1e-6;
      const double lo = risk_loss({g, RiskFormulation::Optimistic}, lp, L);
      const double pe = risk_loss({g, RiskFormulation::Pessimistic}, lp, L);
      violation = std::max(violation, std::abs(lo - e) / (1e-4 * range));
      violation = std::max(violation, std::abs(pe - e) / (1e-4 * range));
    }
    {
      const double g = 1e3;
      const double lo = risk_loss({g, RiskFormulation::Optimistic}, lp, L);
      const double pe = risk_loss({g, RiskFormulation::Pessimistic}, lp, L);
      violation = std::max(violation, std::abs(lo - L.minCoeff()) / 1e-2);
      violation = std::max(violation, std::abs(pe - L.maxCoeff()) / 1e-2);
    }
  }
  return make_check("risk_limits", violation, 1.0, "normalized against each band");
}

OracleCheck check_variance_expansion() {
  std::mt19937_64 rng(23);
  double worst_ratio_violation = 0;
  for (int trial = 0; trial < 10; ++trial) {
    InstanceOptions opt;
    opt.mode_count = 3;
    opt.horizon = 2;
    opt.branching = 1;
    opt.gate_scale = 0.8;
    const Instance inst(opt, rng);
    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);
    Eigen::VectorXd L = scenario_losses(inst.tree, inst.traj, inst.cost, inst.x_meas,
                                        CollisionMode::Exact);
    L[0] += 2.0;  // keep the third central moment away from zero

    const double e = expected_loss(lp, L);
    double var = 0, third = 0;
    for (int i = 0; i < L.size(); ++i) {
      const double p = std::exp(lp[i]);
      var += p * (L[i] - e) * (L[i] - e);
      third += p * std::pow(L[i] - e, 3);
    }
    if (std::abs(third) < 1e-3) continue;  // degenerate draw, ratio uninformative

    auto err_at = [&](double g) {
      const double pe = risk_loss({g, RiskFormulation::Pessimistic}, lp, L);
      return std::abs(pe - (e + 0.5 * g * var));
    };
    const double ratio = err_at(1e-2) / err_at(1e-3);
    // Quadratic error scaling: the two errors should differ by ~100x, so the
    // normalized violation stays below 1 while the ratio sits in [50, 200].
    const double v = std::max(50.0 / ratio, ratio / 200.0);
    worst_ratio_violation = std::max(worst_ratio_violation, v);
  }
  return make_check("variance_expansion", worst_ratio_violation, 1.0,
                    "error ratio across gamma decade, normalized to [50,200]");
}

OracleCheck check_collision_bound(int samples) {
  std::mt19937_64 rng(31);
  double violation = 0;  // normalized: dominance vs 1e-12 per sample, tangency vs 1e-9
  const CollisionKind kinds[] = {CollisionKind::ExpNorm, CollisionKind::ExpSquaredNorm,
                                 CollisionKind::InversePower};
  for (CollisionKind kind : kinds) {
    CollisionSpec spec;
    spec.kind = kind;
    spec.alpha = kind == CollisionKind::InversePower ? uniform(rng, 0.4, 1.5) : uniform(rng, 1.0, 500.0);
    spec.beta = uniform(rng, 0.5, 5.0);
    spec.power = 1.5;
    spec.position_selector = Eigen::MatrixXd::Zero(2, 4);
    spec.position_selector(0, 0) = 1;
    spec.position_selector(1, 1) = 1;

    for (int i = 0; i < samples; ++i) {
      const Eigen::VectorXd x = uniform_vector(rng, 4, -2.0, 2.0);
      const Eigen::VectorXd xl = uniform_vector(rng, 4, -2.0, 2.0);
      const double pen = collision_penalty(spec, x);
      const double bound = collision_upper_bound(spec, x, xl);
      violation = std::max(violation, (pen - bound) / 1e-12);
      const double tangency_gap = std::abs(collision_upper_bound(spec, xl, xl) - collision_penalty(spec, xl));
      violation = std::max(violation, tangency_gap / 1e-9);
    }

    // Kink expansion: zero subgradient gives the constant majorizer f1(0).
    Eigen::VectorXd xk = Eigen::VectorXd::Zero(4);
    xk[2] = 1.0;
    const Eigen::VectorXd x = uniform_vector(rng, 4, -2.0, 2.0);
    const double bound = collision_upper_bound(spec, x, xk);
    violation = std::max(violation, (collision_penalty(spec, x) - bound) / 1e-12);
  }
  return make_check("collision_bound", violation, 1.0,
                    "dominance slack / 1e-12 and tangency gap / 1e-9");
}

OracleCheck check_optimal_pi_grid(const PiFn& pi_fn) {
  const PiFn pi = pi_fn ? pi_fn : [](const Eigen::VectorXd& lp, const Eigen::VectorXd& L, double g) {
    return optimal_pi(lp, L, g);
  };
  std::mt19937_64 rng(41);
  double violation = 0;
  const int steps = 1000;  // grid resolution 1e-3
  const int dims[] = {2, 2, 3, 3, 4};
  const double gammas[] = {0.5, 1.0, 2.0, 1.0, 1.0};
  for (int c = 0; c < 5; ++c) {
    const int dim = dims[c];
    const double gamma = gammas[c];
    Eigen::VectorXd raw = uniform_vector(rng, dim, 0.2, 1.0);
    Eigen::VectorXd lp = (raw / raw.sum()).array().log();
    Eigen::VectorXd L = uniform_vector(rng, dim, 0.0, 3.0);

    // Separable per-coordinate tables keep the exhaustive grid sweep cheap;
    // entries are computed with plain logs.
    std::vector<std::vector<double>> table(static_cast<std::size_t>(dim),
                                           std::vector<double>(steps + 1, 0.0));
    for (int t = 0; t < dim; ++t) {
      for (int k = 0; k <= steps; ++k) {
        const double p = static_cast<double>(k) / steps;
        const double xlnx = p > 0 ? p * std::log(p) : 0.0;
        table[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] =
            xlnx / gamma + p * (L[t] - lp[t] / gamma);
      }
    }
    auto objective = [&](const Eigen::VectorXd& p) {
      double v = 0;
      for (int t = 0; t < dim; ++t) {
        v += table[static_cast<std::size_t>(t)]
                  [static_cast<std::size_t>(std::lround(p[t] * steps))];
      }
      return v;
    };

    const auto grid = oracles::simplex_grid_min(objective, dim, steps);
    const Eigen::VectorXd star = pi(lp, L, gamma);
    double star_value = 0;
    for (int t = 0; t < dim; ++t) {
      const double p = star[t];
      star_value += (p > 0 ? p * std::log(p) : 0.0) / gamma + p * (L[t] - lp[t] / gamma);
    }
    violation = std::max(violation, star_value - grid.value);
  }
  return make_check("optimal_pi_grid", violation, 1e-6,
                    "closed-form objective minus exhaustive grid minimum");
}

OracleCheck check_surrogate_majorization(int samples) {
  std::mt19937_64 rng(51);
  double violation = 0;  // normalized: dominance slack vs 1e-9, tangency gap vs 1e-9
  const CollisionKind kinds[] = {CollisionKind::ExpNorm, CollisionKind::ExpSquaredNorm,
                                 CollisionKind::InversePower};
  for (int setup = 0; setup < 3; ++setup) {
    InstanceOptions opt;
    opt.kind = kinds[setup];
    opt.collision_alpha = opt.kind == CollisionKind::InversePower ? 0.8 : 3.0;
    const Instance inst(opt, rng);
    const double gamma = setup == 0 ? 1.0 : (setup == 1 ? 0.5 : 2.0);

    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);
    const Eigen::VectorXd L = scenario_losses(inst.tree, inst.traj, inst.cost, inst.x_meas,
                                              CollisionMode::Exact);

    SurrogateParams po;
    po.variant = RiskFormulation::Optimistic;
    po.gamma = gamma;
    po.x_lin = inst.traj.x;
    po.pi = optimal_pi(lp, L, gamma);
    SurrogateParams pp;
    pp.variant = RiskFormulation::Pessimistic;
    pp.gamma = gamma;
    pp.x_lin = inst.traj.x;

    // Tangency at the expansion point (collision bounds coincide there).
    const double lo = risk_loss({gamma, RiskFormulation::Optimistic}, lp, L);
    const double pe = risk_loss({gamma, RiskFormulation::Pessimistic}, lp, L);
    const double qo0 = optimistic_surrogate(inst.tree, inst.model, inst.cost, po, inst.x_meas, inst.traj);
    const double qp0 = pessimistic_surrogate(inst.tree, inst.model, inst.cost, pp, inst.x_meas, inst.traj);
    violation = std::max(violation, std::abs(qo0 - lo) / 1e-9);
    violation = std::max(violation, std::abs(qp0 - pe) / 1e-9);

    // Linearized log-probability: tangent at the expansion, dominating elsewhere.
    const Eigen::VectorXd lin0 = log_prob_linearization(inst.tree, inst.model, inst.traj.x, inst.traj.x);
    violation = std::max(violation, (lin0 - lp).lpNorm<Eigen::Infinity>() / 1e-9);

    const int n = std::max(1, samples / 3);
    for (int i = 0; i < n; ++i) {
      const TrajectoryBundle b = inst.random_bundle(rng);
      const Eigen::VectorXd lp_b = scenario_log_probs(inst.tree, inst.model, b.x);
      const Eigen::VectorXd L_b = scenario_losses(inst.tree, b, inst.cost, inst.x_meas,
                                                  CollisionMode::Exact);
      const double lo_b = risk_loss({gamma, RiskFormulation::Optimistic}, lp_b, L_b);
      const double pe_b = risk_loss({gamma, RiskFormulation::Pessimistic}, lp_b, L_b);
      const double qo = optimistic_surrogate(inst.tree, inst.model, inst.cost, po, inst.x_meas, b);
      const double qp = pessimistic_surrogate(inst.tree, inst.model, inst.cost, pp, inst.x_meas, b);
      violation = std::max(violation, (lo_b - qo) / 1e-9);
      violation = std::max(violation, (pe_b - qp) / 1e-9);

      const Eigen::VectorXd lin = log_prob_linearization(inst.tree, inst.model, b.x, inst.traj.x);
      violation = std::max(violation, (lp_b - lin).maxCoeff() / 1e-9);
    }
  }
  return make_check("surrogate_majorization", violation, 1.0,
                    "dominance and tangency slack, normalized to 1e-9");
}

OracleCheck check_surrogate_convexity(int instances) {
  std::mt19937_64 rng(52);
  double violation = 0;
  InstanceOptions opt;
  const Instance inst(opt, rng);
  const double gamma = 1.0;

  const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);
  const Eigen::VectorXd L = scenario_losses(inst.tree, inst.traj, inst.cost, inst.x_meas,
                                            CollisionMode::Exact);
  SurrogateParams po;
  po.variant = RiskFormulation::Optimistic;
  po.gamma = gamma;
  po.x_lin = inst.traj.x;
  po.pi = optimal_pi(lp, L, gamma);
  SurrogateParams pp = po;
  pp.variant = RiskFormulation::Pessimistic;

  const int nx = inst.model.state_dim();
  const int nu = inst.model.input_dim();
  for (int i = 0; i < instances; ++i) {
    const TrajectoryBundle a = inst.random_bundle(rng);
    const TrajectoryBundle b = inst.random_bundle(rng);
    const Eigen::VectorXd wa = stack_decision_vector(inst.tree, a);
    const Eigen::VectorXd wb = stack_decision_vector(inst.tree, b);
    for (double lam : {0.25, 0.5, 0.75}) {
      const TrajectoryBundle mid =
          unstack_decision_vector(inst.tree, nx, nu, lam * wa + (1 - lam) * wb);
      for (const SurrogateParams* params : {&po, &pp}) {
        const double qa = surrogate_value_and_gradient(inst.tree, inst.model, inst.cost, *params,
                                                       inst.x_meas, a, nullptr);
        const double qb = surrogate_value_and_gradient(inst.tree, inst.model, inst.cost, *params,
                                                       inst.x_meas, b, nullptr);
        const double qm = surrogate_value_and_gradient(inst.tree, inst.model, inst.cost, *params,
                                                       inst.x_meas, mid, nullptr);
        violation = std::max(violation, qm - (lam * qa + (1 - lam) * qb));
      }
    }
  }
  return make_check("surrogate_convexity", violation, 1e-9);
}

OracleCheck check_gradients_fd(int instances) {
  std::mt19937_64 rng(61);
  double violation = 0;  // relative error against 1e-5, normalized
  for (int trial = 0; trial < instances; ++trial) {
    InstanceOptions opt;
    opt.mode_count = 2;
    opt.horizon = 3;
    opt.branching = 2;
    const Instance inst(opt, rng);
    const double gamma = trial % 2 == 0 ? 0.3 : 1.0;
    const int nx = inst.model.state_dim();
    const int nu = inst.model.input_dim();

    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);
    const Eigen::VectorXd L = scenario_losses(inst.tree, inst.traj, inst.cost, inst.x_meas,
                                              CollisionMode::Exact);
    SurrogateParams po;
    po.variant = RiskFormulation::Optimistic;
    po.gamma = gamma;
    po.x_lin = inst.traj.x;
    po.pi = optimal_pi(lp, L, gamma);
    SurrogateParams pp = po;
    pp.variant = RiskFormulation::Pessimistic;

    const TrajectoryBundle at = inst.random_bundle(rng);
    const Eigen::VectorXd w0 = stack_decision_vector(inst.tree, at);

    struct Fn {
      std::function<double(const TrajectoryBundle&, TreeGradient*)> eval;
    };
    const RiskFormulation forms[] = {RiskFormulation::Optimistic, RiskFormulation::Pessimistic,
                                     RiskFormulation::Neutral};
    std::vector<Fn> fns;
    for (RiskFormulation f : forms) {
      fns.push_back({[&, f](const TrajectoryBundle& b, TreeGradient* g) {
        return risk_loss_value_and_gradient({f == RiskFormulation::Neutral ? 1.0 : gamma, f},
                                            inst.tree, inst.model, inst.cost, inst.x_meas, b, g);
      }});
    }
    for (const SurrogateParams* params : {&po, &pp}) {
      fns.push_back({[&, params](const TrajectoryBundle& b, TreeGradient* g) {
        return surrogate_value_and_gradient(inst.tree, inst.model, inst.cost, *params, inst.x_meas,
                                            b, g);
      }});
    }

    for (const Fn& fn : fns) {
      TreeGradient g;
      fn.eval(at, &g);
      const Eigen::VectorXd analytic = stack_decision_vector(inst.tree, g);
      const Eigen::VectorXd numeric = oracles::fd_gradient(
          [&](const Eigen::VectorXd& w) {
            return fn.eval(unstack_decision_vector(inst.tree, nx, nu, w), nullptr);
          },
          w0, 1e-6);
      const double rel = (analytic - numeric).lpNorm<Eigen::Infinity>() /
                         std::max(1.0, analytic.lpNorm<Eigen::Infinity>());
      violation = std::max(violation, rel / 1e-5);
    }

    // At the expansion point the majorizer gradients match the loss gradients.
    TreeGradient gs, gl;
    surrogate_value_and_gradient(inst.tree, inst.model, inst.cost, pp, inst.x_meas, inst.traj, &gs);
    risk_loss_value_and_gradient({gamma, RiskFormulation::Pessimistic}, inst.tree, inst.model,
                                 inst.cost, inst.x_meas, inst.traj, &gl);
    const Eigen::VectorXd ds = stack_decision_vector(inst.tree, gs);
    const Eigen::VectorXd dl = stack_decision_vector(inst.tree, gl);
    const double tangency = (ds - dl).lpNorm<Eigen::Infinity>() /
                            std::max(1.0, dl.lpNorm<Eigen::Infinity>());
    violation = std::max(violation, tangency / 1e-6);
  }
  return make_check("gradients_fd", violation, 1.0, "relative errors normalized to their bands");
}

OracleCheck check_inner_solver() {
  std::mt19937_64 rng(71);
  double violation = 0;  // normalized per sub-check

  // Unconstrained convex quadratic: matches the closed-form minimizer.
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 10;
    Eigen::MatrixXd M = uniform_matrix(rng, n, n, -1.0, 1.0);
    Eigen::MatrixXd H = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b = uniform_vector(rng, n, -1.0, 1.0);
    ObjectiveFn f = [&](const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* g) {
      if (g != nullptr) *g = H * w - b;
      return 0.5 * w.dot(H * w) - b.dot(w);
    };
    const Eigen::VectorXd inf_lo = Eigen::VectorXd::Constant(n, -1e30);
    const Eigen::VectorXd inf_hi = Eigen::VectorXd::Constant(n, 1e30);
    const SolveOutcome out = solve_box(inf_lo, inf_hi, f, Eigen::VectorXd::Zero(n), 1e-10, 20000);
    const Eigen::VectorXd w_star = H.ldlt().solve(b);
    violation = std::max(violation, (out.w - w_star).lpNorm<Eigen::Infinity>() / 1e-8);
  }

  // Clipped 1-D quadratic: minimizer at the bound.
  {
    ObjectiveFn f = [](const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* g) {
      if (g != nullptr) (*g)[0] = w[0] - 2.0;
      return 0.5 * (w[0] - 2.0) * (w[0] - 2.0);
    };
    const SolveOutcome out = solve_box(Eigen::VectorXd::Constant(1, -1.0),
                                       Eigen::VectorXd::Constant(1, 1.0), f,
                                       Eigen::VectorXd::Zero(1), 1e-10, 1000);
    violation = std::max(violation, std::abs(out.w[0] - 1.0) / 1e-10);
    // Hand-checked KKT triple at the bound.
    Eigen::VectorXd g(1);
    f(out.w, &g);
    const BoundMultipliers mult = derive_bound_multipliers(
        out.w, g, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0));
    violation = std::max(violation,
                         optimality_error(out.w, g, Eigen::VectorXd::Constant(1, -1.0),
                                          Eigen::VectorXd::Constant(1, 1.0), mult) /
                             1e-8);
  }

  // Box quadratics against a plain long projected-gradient reference.
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 17);
    Eigen::MatrixXd M = uniform_matrix(rng, n, n, -1.0, 1.0);
    Eigen::MatrixXd H = M.transpose() * M + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b = uniform_vector(rng, n, -2.0, 2.0);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -0.5);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 0.5);
    ObjectiveFn f = [&](const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* g) {
      if (g != nullptr) *g = H * w - b;
      return 0.5 * w.dot(H * w) - b.dot(w);
    };
    const SolveOutcome out = solve_box(lo, hi, f, Eigen::VectorXd::Zero(n), 1e-8, 20000);

    const double step = 1.0 / Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (int it = 0; it < 200000; ++it) {
      w = (w - step * (H * w - b)).cwiseMax(lo).cwiseMin(hi);
    }
    const double f_ref = 0.5 * w.dot(H * w) - b.dot(w);
    violation = std::max(violation, (out.objective - f_ref) / 1e-5);
  }

  // Condensed affine maps agree with the rollout on random inputs.
  {
    InstanceOptions opt;
    const Instance inst(opt, rng);
    CondensedProblem cp(inst.tree, inst.model, inst.x_meas, inst.constraints);
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd w = uniform_vector(rng, cp.num_inputs(), -1.0, 1.0);
      const TrajectoryBundle via_rollout =
          rollout(inst.tree, inst.model, inst.x_meas, cp.to_bundle(w, cp.states(w)).u);
      for (int id = 0; id < inst.tree.node_count(); id += 3) {
        const Eigen::VectorXd via_maps = cp.input_map(id) * w + cp.offset_vector(id);
        violation = std::max(violation,
                             (via_maps - via_rollout.x[static_cast<std::size_t>(id)])
                                     .lpNorm<Eigen::Infinity>() /
                                 1e-12);
      }
    }
  }

  // State boxes: solution feasible to tolerance with a consistent KKT error.
  {
    InstanceOptions opt;
    opt.with_collision = false;
    const Instance inst(opt, rng);
    ConstraintSet cons = inst.constraints;
    cons.state_boxes = {{0, -5.0, 1.8}, {2, -1.2, 1.2}};
    CondensedProblem cp(inst.tree, inst.model, inst.x_meas, cons);
    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, inst.traj.x);
    const Eigen::VectorXd L = scenario_losses(inst.tree, inst.traj, inst.cost, inst.x_meas,
                                              CollisionMode::Exact);
    SurrogateParams params;
    params.variant = RiskFormulation::Pessimistic;
    params.gamma = 0.5;
    params.x_lin = inst.traj.x;
    ObjectiveFn f = [&](const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* g) {
      const TrajectoryBundle b = cp.to_bundle(w, cp.states(w));
      if (g == nullptr)
        return surrogate_value_and_gradient(inst.tree, inst.model, inst.cost, params, inst.x_meas,
                                            b, nullptr);
      TreeGradient tg;
      const double v = surrogate_value_and_gradient(inst.tree, inst.model, inst.cost, params,
                                                    inst.x_meas, b, &tg);
      *g = cp.pull_back(tg);
      return v;
    };
    SolveOptions options;
    options.tol = 1e-4;
    const SolveOutcome out = solve(cp, f, Eigen::VectorXd::Zero(cp.num_inputs()), options);
    double worst = 0;
    for (const auto& c : cp.state_constraints()) {
      const double xc = out.states[static_cast<std::size_t>(c.node)][c.coord];
      worst = std::max({worst, c.lo - xc, xc - c.hi});
    }
    violation = std::max(violation, worst / 1e-6);
    violation = std::max(violation, out.optimality_error / options.tol - 1.0);
  }

  return make_check("inner_solver", violation, 1.0, "sub-checks normalized to their bands");
}

OracleCheck check_mm_descent(int instances) {
  std::mt19937_64 rng(81);
  double violation = 0;  // normalized
  for (int trial = 0; trial < instances; ++trial) {
    InstanceOptions opt;
    opt.mode_count = 2 + static_cast<int>(rng() % 2);
    opt.horizon = 2 + static_cast<int>(rng() % 2);
    opt.branching = std::min(opt.horizon, 2);
    const Instance inst(opt, rng);

    OcpProblem problem;
    problem.tree = &inst.tree;
    problem.model = &inst.model;
    problem.cost = &inst.cost;
    problem.constraints = inst.constraints;
    const double gammas[] = {0.1, 1.0, 10.0};
    problem.gamma = gammas[trial % 3];
    const Formulation form = trial % 2 == 0 ? Formulation::Optimistic : Formulation::Pessimistic;

    MMConfig config;
    config.max_mm_iters = 25;
    std::vector<Eigen::VectorXd> init(static_cast<std::size_t>(inst.tree.node_count()));
    for (const TreeNode& n : inst.tree.nodes()) {
      if (!n.children.empty()) init[static_cast<std::size_t>(n.id)] =
          Eigen::VectorXd::Zero(inst.model.input_dim());
    }
    const auto [traj, report] = solve_ocp(form, inst.x_meas, problem, config, init);

    for (std::size_t i = 1; i < report.iterations.size(); ++i) {
      violation = std::max(violation, (report.iterations[i].true_loss -
                                       report.iterations[i - 1].true_loss) /
                                          1e-8);
    }
    if (report.status == MMStatus::Converged) {
      // Recompute the optimality error from the returned trajectory.
      CondensedProblem cp(inst.tree, inst.model, inst.x_meas, problem.constraints);
      const Eigen::VectorXd w = cp.stack_inputs(traj.u);
      TreeGradient g;
      const RiskConfig risk{problem.gamma, form == Formulation::Pessimistic
                                               ? RiskFormulation::Pessimistic
                                               : RiskFormulation::Optimistic};
      risk_loss_value_and_gradient(risk, inst.tree, inst.model, inst.cost, inst.x_meas, traj, &g);
      const double err = constrained_kkt_error(cp, w, cp.states(w), cp.pull_back(g),
                                               Eigen::VectorXd(), Eigen::VectorXd());
      violation = std::max(violation, err / config.eps_tol - 1.0);
    }

    // Pointwise risk ordering at the returned trajectory.
    const Eigen::VectorXd lp = scenario_log_probs(inst.tree, inst.model, traj.x);
    const Eigen::VectorXd L = scenario_losses(inst.tree, traj, inst.cost, inst.x_meas,
                                              CollisionMode::Exact);
    const double lo = risk_loss({problem.gamma, RiskFormulation::Optimistic}, lp, L);
    const double e = risk_loss({problem.gamma, RiskFormulation::Neutral}, lp, L);
    const double pe = risk_loss({problem.gamma, RiskFormulation::Pessimistic}, lp, L);
    violation = std::max({violation, (lo - e) / 1e-9, (e - pe) / 1e-9});
  }
  return make_check("mm_descent", violation, 1.0, "descent, termination, ordering bands");
}

OracleCheck check_warm_start_shift() {
  std::mt19937_64 rng(91);
  double violation = 0;
  InstanceOptions opt;
  opt.mode_count = 2;
  opt.horizon = 3;
  opt.branching = 2;
  const Instance inst(opt, rng);

  OcpProblem problem;
  problem.tree = &inst.tree;
  problem.model = &inst.model;
  problem.cost = &inst.cost;
  problem.constraints = inst.constraints;
  problem.gamma = 1.0;

  MMConfig config;
  config.max_mm_iters = 5;
  ControllerState cs;
  std::mt19937_64 plant_rng(7);
  Eigen::VectorXd x = inst.x_meas;
  for (int t = 0; t < 3; ++t) {
    const StepResult r = mpc_step(Formulation::Optimistic, x, problem, config, cs, plant_rng);
    for (const TreeNode& n : inst.tree.nodes()) {
      if (n.children.empty()) continue;
      const Eigen::VectorXd& u = cs.warm_inputs[static_cast<std::size_t>(n.id)];
      violation = std::max(violation, (problem.constraints.u_lo - u).maxCoeff());
      violation = std::max(violation, (u - problem.constraints.u_hi).maxCoeff());
    }
    x = r.next_state;
  }
  return make_check("warm_start_shift", violation, 0.0, "input-box violation of shifted inputs");
}

OracleReport run_all_checks(const std::string& filter) {
  std::string needle = filter;
  std::transform(needle.begin(), needle.end(), needle.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto matches = [&](const std::string& name) {
    if (needle.empty()) return true;
    std::string hay = name;
    std::transform(hay.begin(), hay.end(), hay.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return hay.find(needle) != std::string::npos;
  };

  const std::vector<std::pair<std::string, std::function<OracleCheck()>>> all = {
      {"tree_structure", [] { return check_tree_structure(); }},
      {"gate_shift_invariance", [] { return check_gate_shift_invariance(); }},
      {"scenario_prob_normalization", [] { return check_scenario_prob_normalization(); }},
      {"scenario_prob_product_oracle", [] { return check_scenario_prob_product_oracle(); }},
      {"mode_sampling_frequencies", [] { return check_mode_sampling_frequencies(); }},
      {"risk_bounds_sandwich", [] { return check_risk_bounds_sandwich(100); }},
      {"risk_limits", [] { return check_risk_limits(); }},
      {"variance_expansion", [] { return check_variance_expansion(); }},
      {"collision_bound", [] { return check_collision_bound(1000); }},
      {"optimal_pi_grid", [] { return check_optimal_pi_grid(); }},
      {"surrogate_majorization", [] { return check_surrogate_majorization(1000); }},
      {"surrogate_convexity", [] { return check_surrogate_convexity(100); }},
      {"gradients_fd", [] { return check_gradients_fd(10); }},
      {"inner_solver", [] { return check_inner_solver(); }},
      {"mm_descent", [] { return check_mm_descent(20); }},
      {"warm_start_shift", [] { return check_warm_start_shift(); }},
  };

  OracleReport report;
  for (const auto& [name, fn] : all) {
    if (matches(name)) report.checks.push_back(fn());
  }
  return report;
}

}  // namespace riskmm::verify
