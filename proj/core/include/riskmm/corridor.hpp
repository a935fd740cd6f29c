#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "riskmm/mm_controller.hpp"

namespace riskmm {

/// Corridor benchmark: a planar double-integrator robot meets a human walking
/// the opposite way; the human picks one of three lateral references through
/// a softmax gate on the relative position. The joint state is augmented
/// with a constant-1 coordinate so the affine pieces (human drift, gate
/// offsets, reference offsets) stay inside the linear model:
///   x = (p_x, p_y, v_x, v_y, p_x_h, p_y_h, 1).
struct CorridorConfig {
  double dt_s = 0.1;
  int horizon_steps = 15;    // N
  int branching_steps = 5;   // N_b
  std::string formulation = "optimistic";  // optimistic | pessimistic | neutral-proxy
  double gamma = 1e-3;

  double eps_tol = 0.003;
  int max_mm_iters = 50;
  double inner_tol = 1e-4;
  int inner_max_iterations = 4000;
  std::optional<double> loss_decrease_tol;

  // robot
  Eigen::Vector4d robot_init{-3.0, 0.0, 0.0, 0.0};
  Eigen::Vector2d u_lo{-1.0, -0.6};
  Eigen::Vector2d u_hi{1.0, 0.6};
  Eigen::Vector2d p_y_box_m{-1.5, 1.5};
  Eigen::Vector2d v_x_box_mps{0.0, 1.5};
  Eigen::Vector2d v_y_box_mps{-1.0, 1.0};
  double v_x_max_mps = 1.5;

  // human
  double human_v_x_mps = -0.8;
  double human_y_gain = 0.3;
  Eigen::Vector3d y_refs_m{0.0, -1.0, 1.0};
  Eigen::Vector2d human_init_p_x_range_m{1.5, 2.5};
  Eigen::Vector2d human_init_p_y_range_m{-0.5, 0.5};

  // gate on (p_x - p_x_h, p_y - p_y_h, 1)
  Eigen::Matrix3d gate_matrix{{-5.0, -1.0, -1.0}, {0.0, 1.0, -1.0}, {-12.5, 0.0, 0.0}};

  // costs
  Eigen::Vector4d q_diag{50.0, 50.0, 2.0, 2.0};
  Eigen::Vector2d r_diag{2.0, 2.0};
  double qf_scale = 5.0;
  double collision_alpha = 500.0;
  double collision_beta = 5.0;
  std::string collision_kind = "exp-of-norm";
  double collision_power = 1.0;

  // simulation
  int sim_steps = 100;
  int repeats = 10;
  std::uint64_t seed = 0;

  // open-loop solve start (robot 4 + human 2; the constant is appended)
  Eigen::VectorXd solve_x_t = (Eigen::VectorXd(6) << -2.5, 0.0, 1.0, 0.0, 1.0, 0.2).finished();

  bool timing = false;  // emit real wall-clock columns instead of zeros

  void validate() const;  // throws std::invalid_argument
};

inline constexpr int kCorridorStateDim = 7;
inline constexpr int kCorridorModeCount = 3;

Formulation parse_formulation(const std::string& name);
CollisionKind parse_collision_kind(const std::string& name);

/// Joint-state switched model: per-mode A embeds the robot integrator, the
/// human x-drift, and the mode's lateral tracking law; the gate acts on the
/// relative-position read-out. The constant coordinate maps to itself.
MoEModel build_corridor_model(const CorridorConfig& config);

CostSpec build_corridor_cost(const CorridorConfig& config);
ConstraintSet build_corridor_constraints(const CorridorConfig& config);

/// (robot, human, 1) as one augmented state.
Eigen::VectorXd corridor_joint_state(const Eigen::Vector4d& robot, const Eigen::Vector2d& human);

/// Table-style open-loop start: configured solve_x_t plus the constant.
Eigen::VectorXd corridor_solve_state(const CorridorConfig& config);

/// Uniform human start drawn from the configured ranges.
Eigen::Vector2d sample_human_init(const CorridorConfig& config, std::mt19937_64& rng);

MMConfig build_mm_config(const CorridorConfig& config);

/// Assembled OCP pieces; keeps the owned objects alive together.
struct CorridorProblem {
  ScenarioTree tree;
  MoEModel model;
  CostSpec cost;
  OcpProblem ocp;  // pointers into the members above

  CorridorProblem(const CorridorProblem&) = delete;
  CorridorProblem& operator=(const CorridorProblem&) = delete;
  explicit CorridorProblem(const CorridorConfig& config);
};

/// Closed-loop protocol of the benchmark: sampled human start, configured
/// step count, velocity-error and distance read-outs on the joint state.
ClosedLoopSetup build_closed_loop_setup(const CorridorConfig& config, std::mt19937_64& rng);

}  // namespace riskmm
