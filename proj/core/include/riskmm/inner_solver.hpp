#pragma once

#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "riskmm/moe_dynamics.hpp"
#include "riskmm/objective.hpp"
#include "riskmm/scenario_tree.hpp"

namespace riskmm {

/// Box constraints on inputs (every non-leaf node) and on selected state
/// coordinates (every non-root node).
struct ConstraintSet {
  Eigen::VectorXd u_lo, u_hi;  // input_dim; +-infinity allowed
  struct StateBox {
    int coord = 0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
  };
  std::vector<StateBox> state_boxes;

  void validate(int input_dim, int state_dim) const;
  bool state_feasible(const Eigen::Ref<const Eigen::VectorXd>& x, double tol) const;
};

/// States eliminated against the tree dynamics: every node state is an
/// affine function E w + e of the stacked input vector w, given the measured
/// root state. E^root = 0 and e^root = x_t. states() evaluates the map by a
/// forward sweep; input_map()/offset_vector() build the explicit coefficients
/// from path products of the mode matrices.
class CondensedProblem {
 public:
  CondensedProblem(const ScenarioTree& tree, const MoEModel& model, Eigen::VectorXd x_t,
                   ConstraintSet constraints);

  const ScenarioTree& tree() const { return *tree_; }
  const MoEModel& model() const { return *model_; }
  const Eigen::VectorXd& root_state() const { return x_t_; }
  const ConstraintSet& constraints() const { return constraints_; }

  int num_inputs() const { return num_inputs_; }
  /// Offset of a non-leaf node's input inside w; -1 for leaves.
  int input_offset(int node) const { return input_offset_[node]; }

  /// Node states E w + e for stacked inputs w.
  std::vector<Eigen::VectorXd> states(const Eigen::Ref<const Eigen::VectorXd>& w) const;
  /// Same map into a reusable buffer (storage is kept across calls).
  void states_into(const Eigen::Ref<const Eigen::VectorXd>& w,
                   std::vector<Eigen::VectorXd>& out) const;

  /// E' grad.x + grad.u, the total derivative with respect to w of a scalar
  /// with the given per-node partials (adjoint sweep over the tree).
  Eigen::VectorXd pull_back(const TreeGradient& grad) const;
  /// Same sweep with reusable output and adjoint workspaces.
  void pull_back_into(const TreeGradient& grad, Eigen::VectorXd& out,
                      std::vector<Eigen::VectorXd>& adjoint_ws) const;

  /// Explicit affine coefficients of one node (path-product construction).
  Eigen::VectorXd offset_vector(int node) const;            // e
  Eigen::MatrixXd input_map(int node) const;                // E, state_dim x num_inputs

  /// Input bounds tiled over the stacked vector.
  const Eigen::VectorXd& stacked_lo() const { return stacked_lo_; }
  const Eigen::VectorXd& stacked_hi() const { return stacked_hi_; }

  /// One record per (non-root node, state box) pair.
  struct StateConstraint {
    int node = 0;
    int coord = 0;
    double lo = 0, hi = 0;
  };
  const std::vector<StateConstraint>& state_constraints() const { return state_constraints_; }

  TrajectoryBundle to_bundle(const Eigen::Ref<const Eigen::VectorXd>& w,
                             std::vector<Eigen::VectorXd> states) const;
  Eigen::VectorXd stack_inputs(const std::vector<Eigen::VectorXd>& inputs) const;

 private:
  const ScenarioTree* tree_;
  const MoEModel* model_;
  Eigen::VectorXd x_t_;
  ConstraintSet constraints_;
  std::vector<int> input_offset_;
  int num_inputs_ = 0;
  Eigen::VectorXd stacked_lo_, stacked_hi_;
  std::vector<StateConstraint> state_constraints_;
};

/// Objective over the stacked inputs; fills the gradient when non-null.
using ObjectiveFn = std::function<double(const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd* grad)>;

enum class SolveStatus { Converged, MaxIterations, NumericalFailure };

struct SolveOutcome {
  Eigen::VectorXd w;
  std::vector<Eigen::VectorXd> states;
  double objective = 0;
  double optimality_error = 0;
  int iterations = 0;  // accepted first-order iterations, all rounds
  SolveStatus status = SolveStatus::MaxIterations;
  // Multipliers of the state-box constraints, one per state_constraints()
  // entry, reusable as a warm start and in outer termination tests.
  Eigen::VectorXd state_duals_lo, state_duals_hi;
};

struct SolveOptions {
  double tol = 1e-4;
  int max_iterations = 4000;       // first-order iterations per round
  int max_al_rounds = 12;          // augmented-Lagrangian rounds
  double state_feasibility_tol = 1e-6;
  Eigen::VectorXd warm_duals_lo, warm_duals_hi;  // optional
};

/// Minimizes a smooth convex objective over the input box, with the state
/// boxes handled by augmented-Lagrangian rounds. Inner iterations are
/// accelerated projected-gradient steps with a Barzilai-Borwein trial step,
/// backtracking, and a monotone safeguard: the returned objective never
/// exceeds the (projected) start's by more than 1e-12 when the start is
/// state-feasible.
SolveOutcome solve(const CondensedProblem& problem, const ObjectiveFn& objective,
                   const Eigen::Ref<const Eigen::VectorXd>& w0, const SolveOptions& options);

/// Box-only variant used by the augmented-Lagrangian rounds and directly by
/// problems without state constraints.
SolveOutcome solve_box(const Eigen::Ref<const Eigen::VectorXd>& lo,
                       const Eigen::Ref<const Eigen::VectorXd>& hi, const ObjectiveFn& objective,
                       const Eigen::Ref<const Eigen::VectorXd>& w0, double tol, int max_iterations);

struct BoundMultipliers {
  Eigen::VectorXd lo, hi;
};

/// Multipliers consistent with the gradient at active bounds: max(0, g) at an
/// active lower bound, max(0, -g) at an active upper bound, zero elsewhere.
BoundMultipliers derive_bound_multipliers(const Eigen::Ref<const Eigen::VectorXd>& w,
                                          const Eigen::Ref<const Eigen::VectorXd>& grad,
                                          const Eigen::Ref<const Eigen::VectorXd>& lo,
                                          const Eigen::Ref<const Eigen::VectorXd>& hi);

/// Ingredients of the scaled KKT residual.
struct KktTerms {
  double stationarity_inf = 0;
  double violation_inf = 0;
  double complementarity_inf = 0;
  double multiplier_abs_sum = 0;
  int multiplier_count = 0;
};

/// max(stationarity / s_d, violation, complementarity) with
/// s_d = max(s_max, mean |multipliers|) / s_max and s_max = 100.
double scaled_kkt_error(const KktTerms& terms);

/// KKT residual of min f over a box at (w, grad) with the given bound
/// multipliers. Equals |grad|_inf when no bound is active.
double optimality_error(const Eigen::Ref<const Eigen::VectorXd>& w,
                        const Eigen::Ref<const Eigen::VectorXd>& grad,
                        const Eigen::Ref<const Eigen::VectorXd>& lo,
                        const Eigen::Ref<const Eigen::VectorXd>& hi,
                        const BoundMultipliers& multipliers);

/// KKT residual of the full problem (input box + state boxes through the
/// dynamics) at stacked inputs w with objective gradient grad_w and the
/// state-box duals of the last solve. Input-box multipliers are derived from
/// the Lagrangian gradient; the dual contribution of the state boxes is
/// pulled back through the tree.
double constrained_kkt_error(const CondensedProblem& problem, const Eigen::Ref<const Eigen::VectorXd>& w,
                             const std::vector<Eigen::VectorXd>& states,
                             const Eigen::Ref<const Eigen::VectorXd>& grad_w,
                             const Eigen::Ref<const Eigen::VectorXd>& duals_lo,
                             const Eigen::Ref<const Eigen::VectorXd>& duals_hi);

}  // namespace riskmm
