#include "riskmm/corridor.hpp"

#include <cmath>
#include <stdexcept>

namespace riskmm {

namespace {

// Joint-state read-out of (p_x - p_x_h, p_y - p_y_h, 1).
Eigen::MatrixXd relative_position_readout() {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(3, kCorridorStateDim);
  G(0, 0) = 1;
  G(0, 4) = -1;
  G(1, 1) = 1;
  G(1, 5) = -1;
  G(2, 6) = 1;
  return G;
}

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

}  // namespace

void CorridorConfig::validate() const {
  if (!(dt_s > 0)) throw std::invalid_argument("config: dt_s must be > 0");
  if (horizon_steps < 1) throw std::invalid_argument("config: horizon_steps must be >= 1");
  if (branching_steps < 0 || branching_steps > horizon_steps)
    throw std::invalid_argument("config: branching_steps must lie in [0, horizon_steps]");
  parse_formulation(formulation);
  parse_collision_kind(collision_kind);
  if (!(gamma > 0)) throw std::invalid_argument("config: gamma must be > 0");
  if (!(eps_tol > 0) || !(inner_tol > 0)) throw std::invalid_argument("config: tolerances must be > 0");
  if (max_mm_iters < 1) throw std::invalid_argument("config: max_mm_iters must be >= 1");
  if (loss_decrease_tol.has_value() && !(*loss_decrease_tol > 0))
    throw std::invalid_argument("config: loss_decrease_tol must be > 0");
  if ((u_lo.array() > u_hi.array()).any()) throw std::invalid_argument("config: input box inverted");
  for (const auto& box : {p_y_box_m, v_x_box_mps, v_y_box_mps}) {
    if (!(box[0] <= box[1])) throw std::invalid_argument("config: state box inverted");
  }
  if (!(v_x_max_mps > 0)) throw std::invalid_argument("config: v_x_max_mps must be > 0");
  if (!(collision_alpha > 0) || !(collision_beta > 0))
    throw std::invalid_argument("config: collision parameters must be > 0");
  if (!(collision_power > 0)) throw std::invalid_argument("config: collision_power must be > 0");
  if (sim_steps < 0) throw std::invalid_argument("config: sim_steps must be >= 0");
  if (repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
  if (!(human_init_p_x_range_m[0] <= human_init_p_x_range_m[1]) ||
      !(human_init_p_y_range_m[0] <= human_init_p_y_range_m[1]))
    throw std::invalid_argument("config: human init range inverted");
  if (solve_x_t.size() != 6) throw std::invalid_argument("config: solve_x_t must have 6 entries");
  if (!gate_matrix.allFinite() || !q_diag.allFinite() || !r_diag.allFinite() ||
      !y_refs_m.allFinite() || !robot_init.allFinite() || !solve_x_t.allFinite() ||
      !std::isfinite(human_v_x_mps) || !std::isfinite(human_y_gain) || !std::isfinite(qf_scale))
    throw std::invalid_argument("config: non-finite value");
}

Formulation parse_formulation(const std::string& name) {
  if (name == "optimistic") return Formulation::Optimistic;
  if (name == "pessimistic") return Formulation::Pessimistic;
  if (name == "neutral-proxy") return Formulation::NeutralProxy;
  throw std::invalid_argument("unknown formulation: " + name);
}

CollisionKind parse_collision_kind(const std::string& name) {
  if (name == "exp-of-norm") return CollisionKind::ExpNorm;
  if (name == "exp-of-squared-norm") return CollisionKind::ExpSquaredNorm;
  if (name == "inverse-power") return CollisionKind::InversePower;
  throw std::invalid_argument("unknown collision kind: " + name);
}

MoEModel build_corridor_model(const CorridorConfig& config) {
  const double dt = config.dt_s;
  const double g = config.human_y_gain;

  MoEModel model;
  model.A.reserve(kCorridorModeCount);
  model.B.reserve(kCorridorModeCount);
  for (int mode = 0; mode < kCorridorModeCount; ++mode) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(kCorridorStateDim, kCorridorStateDim);
    A(0, 2) = dt;  // robot positions integrate velocities
    A(1, 3) = dt;
    A(4, 6) = dt * config.human_v_x_mps;    // human x drift via the constant
    A(5, 5) = 1.0 - g * dt;                 // lateral tracking toward the mode's reference
    A(5, 6) = g * dt * config.y_refs_m[mode];
    model.A.push_back(std::move(A));

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(kCorridorStateDim, 2);
    B(2, 0) = dt;
    B(3, 1) = dt;
    model.B.push_back(std::move(B));
  }
  model.gate = config.gate_matrix * relative_position_readout();
  model.validate();
  return model;
}

CostSpec build_corridor_cost(const CorridorConfig& config) {
  CostSpec spec;
  spec.Q = config.q_diag.asDiagonal();
  spec.R = config.r_diag.asDiagonal();
  spec.Qf = config.qf_scale * spec.Q;
  spec.tracking_selector = Eigen::MatrixXd::Zero(4, kCorridorStateDim);
  spec.tracking_selector.leftCols(4).setIdentity();

  const double v_max = config.v_x_max_mps;
  const double dt = config.dt_s;
  spec.reference = [v_max, dt](const Eigen::VectorXd& x_meas, int stage) {
    Eigen::VectorXd r(4);
    r << x_meas[0] + stage * v_max * dt, 0.0, v_max, 0.0;
    return r;
  };

  CollisionSpec collision;
  collision.alpha = config.collision_alpha;
  collision.beta = config.collision_beta;
  collision.kind = parse_collision_kind(config.collision_kind);
  collision.power = config.collision_power;
  collision.position_selector = relative_position_readout().topRows(2);
  spec.collision = std::move(collision);
  return spec;
}

ConstraintSet build_corridor_constraints(const CorridorConfig& config) {
  ConstraintSet cs;
  cs.u_lo = config.u_lo;
  cs.u_hi = config.u_hi;
  cs.state_boxes = {
      {1, config.p_y_box_m[0], config.p_y_box_m[1]},
      {2, config.v_x_box_mps[0], config.v_x_box_mps[1]},
      {3, config.v_y_box_mps[0], config.v_y_box_mps[1]},
  };
  return cs;
}

Eigen::VectorXd corridor_joint_state(const Eigen::Vector4d& robot, const Eigen::Vector2d& human) {
  Eigen::VectorXd x(kCorridorStateDim);
  x << robot, human, 1.0;
  return x;
}

Eigen::VectorXd corridor_solve_state(const CorridorConfig& config) {
  Eigen::VectorXd x(kCorridorStateDim);
  x << config.solve_x_t, 1.0;
  return x;
}

Eigen::Vector2d sample_human_init(const CorridorConfig& config, std::mt19937_64& rng) {
  return {uniform_in(rng, config.human_init_p_x_range_m[0], config.human_init_p_x_range_m[1]),
          uniform_in(rng, config.human_init_p_y_range_m[0], config.human_init_p_y_range_m[1])};
}

MMConfig build_mm_config(const CorridorConfig& config) {
  MMConfig mm;
  mm.eps_tol = config.eps_tol;
  mm.max_mm_iters = config.max_mm_iters;
  mm.loss_decrease_tol = config.loss_decrease_tol;
  mm.inner.tol = config.inner_tol;
  mm.inner.max_iterations = config.inner_max_iterations;
  return mm;
}

CorridorProblem::CorridorProblem(const CorridorConfig& config)
    : tree(kCorridorModeCount, config.horizon_steps, config.branching_steps),
      model(build_corridor_model(config)),
      cost(build_corridor_cost(config)) {
  config.validate();
  ocp.tree = &tree;
  ocp.model = &model;
  ocp.cost = &cost;
  ocp.constraints = build_corridor_constraints(config);
  ocp.gamma = config.gamma;
}

ClosedLoopSetup build_closed_loop_setup(const CorridorConfig& config, std::mt19937_64& rng) {
  ClosedLoopSetup setup;
  setup.formulation = parse_formulation(config.formulation);
  setup.x0 = corridor_joint_state(config.robot_init, sample_human_init(config, rng));
  setup.steps = config.sim_steps;
  setup.velocity_error_selector = Eigen::MatrixXd::Zero(2, kCorridorStateDim);
  setup.velocity_error_selector(0, 2) = 1;
  setup.velocity_error_selector(1, 3) = 1;
  setup.velocity_error_offset = Eigen::Vector2d(config.v_x_max_mps, 0.0);
  setup.distance_selector = relative_position_readout().topRows(2);
  setup.collision_distance = 0.1;
  return setup;
}

}  // namespace riskmm
