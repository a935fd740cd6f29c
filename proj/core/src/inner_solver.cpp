#include "riskmm/inner_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace riskmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd clamp(const Eigen::Ref<const Eigen::VectorXd>& w,
                      const Eigen::Ref<const Eigen::VectorXd>& lo,
                      const Eigen::Ref<const Eigen::VectorXd>& hi) {
  return w.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

void ConstraintSet::validate(int input_dim, int state_dim) const {
  if (u_lo.size() != input_dim || u_hi.size() != input_dim)
    throw std::invalid_argument("ConstraintSet: input bounds must match the input dimension");
  if ((u_lo.array() > u_hi.array()).any())
    throw std::invalid_argument("ConstraintSet: input bounds must satisfy lo <= hi");
  for (const StateBox& b : state_boxes) {
    if (b.coord < 0 || b.coord >= state_dim)
      throw std::invalid_argument("ConstraintSet: state box coordinate out of range");
    if (b.lo > b.hi) throw std::invalid_argument("ConstraintSet: state box must satisfy lo <= hi");
  }
}

bool ConstraintSet::state_feasible(const Eigen::Ref<const Eigen::VectorXd>& x, double tol) const {
  for (const StateBox& b : state_boxes) {
    if (x[b.coord] < b.lo - tol || x[b.coord] > b.hi + tol) return false;
  }
  return true;
}

CondensedProblem::CondensedProblem(const ScenarioTree& tree, const MoEModel& model,
                                   Eigen::VectorXd x_t, ConstraintSet constraints)
    : tree_(&tree), model_(&model), x_t_(std::move(x_t)), constraints_(std::move(constraints)) {
  model.validate();
  if (tree.mode_count() != model.mode_count())
    throw std::invalid_argument("CondensedProblem: tree/model mode counts differ");
  if (x_t_.size() != model.state_dim())
    throw std::invalid_argument("CondensedProblem: x_t dimension mismatch");
  constraints_.validate(model.input_dim(), model.state_dim());

  const int nu = model.input_dim();
  input_offset_.assign(static_cast<std::size_t>(tree.node_count()), -1);
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    input_offset_[static_cast<std::size_t>(n.id)] = num_inputs_;
    num_inputs_ += nu;
  }

  stacked_lo_.resize(num_inputs_);
  stacked_hi_.resize(num_inputs_);
  for (const TreeNode& n : tree.nodes()) {
    if (n.children.empty()) continue;
    const int at = input_offset_[static_cast<std::size_t>(n.id)];
    stacked_lo_.segment(at, nu) = constraints_.u_lo;
    stacked_hi_.segment(at, nu) = constraints_.u_hi;
  }

  for (const TreeNode& n : tree.nodes()) {
    if (n.id == 0) continue;  // the root state is data, not a decision
    for (const ConstraintSet::StateBox& b : constraints_.state_boxes) {
      state_constraints_.push_back({n.id, b.coord, b.lo, b.hi});
    }
  }
}

std::vector<Eigen::VectorXd> CondensedProblem::states(const Eigen::Ref<const Eigen::VectorXd>& w) const {
  std::vector<Eigen::VectorXd> x;
  states_into(w, x);
  return x;
}

void CondensedProblem::states_into(const Eigen::Ref<const Eigen::VectorXd>& w,
                                   std::vector<Eigen::VectorXd>& x) const {
  if (w.size() != num_inputs_) throw std::invalid_argument("CondensedProblem: stacked input size mismatch");
  const int nu = model_->input_dim();
  x.resize(static_cast<std::size_t>(tree_->node_count()));
  x[0] = x_t_;
  for (const TreeNode& n : tree_->nodes()) {
    if (n.children.empty()) continue;
    const auto u = w.segment(input_offset_[static_cast<std::size_t>(n.id)], nu);
    for (int child : n.children) {
      const int mode = tree_->node(child).incoming_mode;
      Eigen::VectorXd& xc = x[static_cast<std::size_t>(child)];
      xc.noalias() = model_->A[static_cast<std::size_t>(mode)] * x[static_cast<std::size_t>(n.id)];
      xc.noalias() += model_->B[static_cast<std::size_t>(mode)] * u;
    }
  }
}

Eigen::VectorXd CondensedProblem::pull_back(const TreeGradient& grad) const {
  Eigen::VectorXd gw;
  std::vector<Eigen::VectorXd> adjoint;
  pull_back_into(grad, gw, adjoint);
  return gw;
}

void CondensedProblem::pull_back_into(const TreeGradient& grad, Eigen::VectorXd& gw,
                                      std::vector<Eigen::VectorXd>& adjoint) const {
  const int nu = model_->input_dim();
  gw.setZero(num_inputs_);
  adjoint.resize(static_cast<std::size_t>(tree_->node_count()));
  for (int id = tree_->node_count() - 1; id >= 0; --id) {
    const TreeNode& n = tree_->node(id);
    Eigen::VectorXd& lambda = adjoint[static_cast<std::size_t>(id)];
    lambda = grad.x[static_cast<std::size_t>(id)];
    if (!n.children.empty()) {
      auto gu = gw.segment(input_offset_[static_cast<std::size_t>(id)], nu);
      gu = grad.u[static_cast<std::size_t>(id)];
      for (int child : n.children) {
        const int mode = tree_->node(child).incoming_mode;
        lambda.noalias() += model_->A[static_cast<std::size_t>(mode)].transpose() *
                            adjoint[static_cast<std::size_t>(child)];
        gu.noalias() += model_->B[static_cast<std::size_t>(mode)].transpose() *
                        adjoint[static_cast<std::size_t>(child)];
      }
    }
  }
}

Eigen::VectorXd CondensedProblem::offset_vector(int node) const {
  // Path product of the A matrices applied to the root state.
  std::vector<int> modes;
  for (int cur = node; cur != 0; cur = tree_->node(cur).parent) {
    modes.push_back(tree_->node(cur).incoming_mode);
  }
  Eigen::VectorXd e = x_t_;
  for (auto it = modes.rbegin(); it != modes.rend(); ++it) {
    e = model_->A[static_cast<std::size_t>(*it)] * e;
  }
  return e;
}

Eigen::MatrixXd CondensedProblem::input_map(int node) const {
  const int nx = model_->state_dim();
  const int nu = model_->input_dim();
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(nx, num_inputs_);

  // Root-to-node edges as (input owner, edge mode) pairs.
  std::vector<std::pair<int, int>> edges;
  for (int cur = node; cur != 0; cur = tree_->node(cur).parent) {
    edges.emplace_back(tree_->node(cur).parent, tree_->node(cur).incoming_mode);
  }
  std::reverse(edges.begin(), edges.end());

  // Suffix products of A along the path; the block of the j-th input is
  // (A_L ... A_{j+1}) B_j.
  Eigen::MatrixXd suffix = Eigen::MatrixXd::Identity(nx, nx);
  for (int j = static_cast<int>(edges.size()) - 1; j >= 0; --j) {
    const auto [owner, mode] = edges[static_cast<std::size_t>(j)];
    E.block(0, input_offset_[static_cast<std::size_t>(owner)], nx, nu) =
        suffix * model_->B[static_cast<std::size_t>(mode)];
    suffix = suffix * model_->A[static_cast<std::size_t>(mode)];
  }
  return E;
}

TrajectoryBundle CondensedProblem::to_bundle(const Eigen::Ref<const Eigen::VectorXd>& w,
                                             std::vector<Eigen::VectorXd> states) const {
  const int nu = model_->input_dim();
  TrajectoryBundle b;
  b.x = std::move(states);
  b.u.resize(static_cast<std::size_t>(tree_->node_count()));
  for (const TreeNode& n : tree_->nodes()) {
    if (n.children.empty()) continue;
    b.u[static_cast<std::size_t>(n.id)] = w.segment(input_offset_[static_cast<std::size_t>(n.id)], nu);
  }
  return b;
}

Eigen::VectorXd CondensedProblem::stack_inputs(const std::vector<Eigen::VectorXd>& inputs) const {
  const int nu = model_->input_dim();
  Eigen::VectorXd w(num_inputs_);
  for (const TreeNode& n : tree_->nodes()) {
    if (n.children.empty()) continue;
    const Eigen::VectorXd& u = inputs.at(static_cast<std::size_t>(n.id));
    if (u.size() != nu) throw std::invalid_argument("stack_inputs: missing input for a non-leaf node");
    w.segment(input_offset_[static_cast<std::size_t>(n.id)], nu) = u;
  }
  return w;
}

BoundMultipliers derive_bound_multipliers(const Eigen::Ref<const Eigen::VectorXd>& w,
                                          const Eigen::Ref<const Eigen::VectorXd>& grad,
                                          const Eigen::Ref<const Eigen::VectorXd>& lo,
                                          const Eigen::Ref<const Eigen::VectorXd>& hi) {
  BoundMultipliers m;
  m.lo = Eigen::VectorXd::Zero(w.size());
  m.hi = Eigen::VectorXd::Zero(w.size());
  for (int i = 0; i < w.size(); ++i) {
    if (std::isfinite(lo[i]) && w[i] - lo[i] <= 1e-9 * (1.0 + std::abs(lo[i]))) {
      m.lo[i] = std::max(0.0, grad[i]);
    }
    if (std::isfinite(hi[i]) && hi[i] - w[i] <= 1e-9 * (1.0 + std::abs(hi[i]))) {
      m.hi[i] = std::max(0.0, -grad[i]);
    }
  }
  return m;
}

double scaled_kkt_error(const KktTerms& terms) {
  constexpr double s_max = 100.0;
  const double mean_mult =
      terms.multiplier_count > 0 ? terms.multiplier_abs_sum / terms.multiplier_count : 0.0;
  const double s_d = std::max(s_max, mean_mult) / s_max;
  return std::max({terms.stationarity_inf / s_d, terms.violation_inf, terms.complementarity_inf});
}

double optimality_error(const Eigen::Ref<const Eigen::VectorXd>& w,
                        const Eigen::Ref<const Eigen::VectorXd>& grad,
                        const Eigen::Ref<const Eigen::VectorXd>& lo,
                        const Eigen::Ref<const Eigen::VectorXd>& hi,
                        const BoundMultipliers& multipliers) {
  KktTerms t;
  for (int i = 0; i < w.size(); ++i) {
    const double stat = grad[i] - multipliers.lo[i] + multipliers.hi[i];
    t.stationarity_inf = std::max(t.stationarity_inf, std::abs(stat));
    if (std::isfinite(lo[i])) t.violation_inf = std::max(t.violation_inf, lo[i] - w[i]);
    if (std::isfinite(hi[i])) t.violation_inf = std::max(t.violation_inf, w[i] - hi[i]);
    if (multipliers.lo[i] > 0)
      t.complementarity_inf = std::max(t.complementarity_inf, multipliers.lo[i] * std::abs(w[i] - lo[i]));
    if (multipliers.hi[i] > 0)
      t.complementarity_inf = std::max(t.complementarity_inf, multipliers.hi[i] * std::abs(hi[i] - w[i]));
    t.multiplier_abs_sum += multipliers.lo[i] + multipliers.hi[i];
    t.multiplier_count += 2;
  }
  t.violation_inf = std::max(t.violation_inf, 0.0);
  return scaled_kkt_error(t);
}

double constrained_kkt_error(const CondensedProblem& problem, const Eigen::Ref<const Eigen::VectorXd>& w,
                             const std::vector<Eigen::VectorXd>& states,
                             const Eigen::Ref<const Eigen::VectorXd>& grad_w,
                             const Eigen::Ref<const Eigen::VectorXd>& duals_lo,
                             const Eigen::Ref<const Eigen::VectorXd>& duals_hi) {
  const auto& cons = problem.state_constraints();
  const int m = static_cast<int>(cons.size());
  const Eigen::VectorXd& lo = problem.stacked_lo();
  const Eigen::VectorXd& hi = problem.stacked_hi();
  const Eigen::VectorXd llo = duals_lo.size() == m ? duals_lo : Eigen::VectorXd::Zero(m);
  const Eigen::VectorXd lhi = duals_hi.size() == m ? duals_hi : Eigen::VectorXd::Zero(m);

  TreeGradient seed = TreeGradient::zero(problem.tree(), problem.model().state_dim(),
                                         problem.model().input_dim());
  for (int j = 0; j < m; ++j) {
    const auto& c = cons[static_cast<std::size_t>(j)];
    seed.x[static_cast<std::size_t>(c.node)][c.coord] += lhi[j] - llo[j];
  }
  const Eigen::VectorXd g_lag = grad_w + problem.pull_back(seed);
  const BoundMultipliers mult = derive_bound_multipliers(w, g_lag, lo, hi);

  KktTerms t;
  for (int i = 0; i < w.size(); ++i) {
    const double stat = g_lag[i] - mult.lo[i] + mult.hi[i];
    t.stationarity_inf = std::max(t.stationarity_inf, std::abs(stat));
    if (std::isfinite(lo[i])) t.violation_inf = std::max(t.violation_inf, lo[i] - w[i]);
    if (std::isfinite(hi[i])) t.violation_inf = std::max(t.violation_inf, w[i] - hi[i]);
    if (mult.lo[i] > 0)
      t.complementarity_inf = std::max(t.complementarity_inf, mult.lo[i] * std::abs(w[i] - lo[i]));
    if (mult.hi[i] > 0)
      t.complementarity_inf = std::max(t.complementarity_inf, mult.hi[i] * std::abs(hi[i] - w[i]));
    t.multiplier_abs_sum += mult.lo[i] + mult.hi[i];
    t.multiplier_count += 2;
  }
  for (int j = 0; j < m; ++j) {
    const auto& c = cons[static_cast<std::size_t>(j)];
    const double xc = states[static_cast<std::size_t>(c.node)][c.coord];
    t.violation_inf = std::max({t.violation_inf, c.lo - xc, xc - c.hi});
    if (llo[j] > 0) t.complementarity_inf = std::max(t.complementarity_inf, llo[j] * std::abs(xc - c.lo));
    if (lhi[j] > 0) t.complementarity_inf = std::max(t.complementarity_inf, lhi[j] * std::abs(c.hi - xc));
    t.multiplier_abs_sum += llo[j] + lhi[j];
    t.multiplier_count += 2;
  }
  t.violation_inf = std::max(t.violation_inf, 0.0);
  return scaled_kkt_error(t);
}

SolveOutcome solve_box(const Eigen::Ref<const Eigen::VectorXd>& lo,
                       const Eigen::Ref<const Eigen::VectorXd>& hi, const ObjectiveFn& objective,
                       const Eigen::Ref<const Eigen::VectorXd>& w0, double tol, int max_iterations) {
  SolveOutcome out;
  out.w = clamp(w0, lo, hi);

  Eigen::VectorXd g(out.w.size());
  double f = objective(out.w, &g);
  if (!std::isfinite(f) || !g.allFinite()) {
    out.objective = f;
    out.status = SolveStatus::NumericalFailure;
    out.optimality_error = kInf;
    return out;
  }

  Eigen::VectorXd w = out.w, w_prev = out.w;
  Eigen::VectorXd g_prev = g;
  double f_w = f;
  double t = 1.0 / std::max(1.0, g.lpNorm<Eigen::Infinity>());
  int momentum = 0;
  out.status = SolveStatus::MaxIterations;

  auto value_at = [&](const Eigen::VectorXd& p) { return objective(p, nullptr); };

  for (int iter = 0; iter < max_iterations; ++iter) {
    const BoundMultipliers mult = derive_bound_multipliers(w, g, lo, hi);
    out.optimality_error = optimality_error(w, g, lo, hi, mult);
    if (out.optimality_error <= tol) {
      out.status = SolveStatus::Converged;
      break;
    }

    // Barzilai-Borwein trial step from the last accepted pair.
    if (iter > 0) {
      const Eigen::VectorXd s = w - w_prev;
      const Eigen::VectorXd y = g - g_prev;
      const double sy = s.dot(y);
      if (sy > 1e-300) t = std::min(std::max(s.squaredNorm() / sy, 1e-12), 1e8);
    }

    const double beta = momentum > 0 ? static_cast<double>(momentum) / (momentum + 3.0) : 0.0;
    Eigen::VectorXd y_pt, g_y;
    double f_y;
    if (beta > 0) {
      y_pt = clamp(w + beta * (w - w_prev), lo, hi);
      g_y.resize(w.size());
      f_y = objective(y_pt, &g_y);
      if (!std::isfinite(f_y) || !g_y.allFinite()) {
        momentum = 0;
        y_pt = w;
        f_y = f_w;
        g_y = g;
      }
    } else {
      y_pt = w;
      f_y = f_w;
      g_y = g;
    }

    // Backtracking on the quadratic model at the extrapolated point. The
    // first trial usually succeeds, so it evaluates the gradient as well.
    Eigen::VectorXd z, g_z;
    double f_z = kInf;
    bool model_ok = false;
    bool g_z_valid = false;
    double step = t;
    for (int ls = 0; ls < 60; ++ls) {
      z = clamp(y_pt - step * g_y, lo, hi);
      if (ls == 0) {
        g_z.resize(w.size());
        f_z = objective(z, &g_z);
        g_z_valid = std::isfinite(f_z) && g_z.allFinite();
      } else {
        f_z = value_at(z);
        g_z_valid = false;
      }
      if (std::isfinite(f_z)) {
        const Eigen::VectorXd d = z - y_pt;
        if (f_z <= f_y + g_y.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-12) {
          model_ok = true;
          break;
        }
      }
      step *= 0.5;
    }
    t = step;

    bool accepted = false;
    if (model_ok && f_z <= f_w) {
      accepted = true;
      ++momentum;
    } else {
      // Monotone fallback: plain projected-gradient step from the incumbent.
      momentum = 0;
      step = t;
      g_z_valid = false;
      for (int ls = 0; ls < 60; ++ls) {
        z = clamp(w - step * g, lo, hi);
        f_z = value_at(z);
        if (std::isfinite(f_z) && f_z <= f_w + 1e-15 * std::abs(f_w)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      t = step;
    }

    if (!accepted || (z - w).lpNorm<Eigen::Infinity>() <= 1e-16 * (1.0 + w.lpNorm<Eigen::Infinity>())) {
      // No usable progress; report the incumbent.
      break;
    }

    w_prev = w;
    g_prev = g;
    w = z;
    f_w = std::min(f_z, f_w);
    if (g_z_valid) {
      g = std::move(g_z);
    } else {
      objective(w, &g);
    }
    ++out.iterations;
  }

  out.w = w;
  out.objective = f_w;
  if (out.status != SolveStatus::Converged) {
    const BoundMultipliers mult = derive_bound_multipliers(w, g, lo, hi);
    out.optimality_error = optimality_error(w, g, lo, hi, mult);
    if (out.optimality_error <= tol) out.status = SolveStatus::Converged;
  }
  return out;
}

namespace {

// One-sided penalty (1/(2 rho)) (max(0, lambda + rho g)^2 - lambda^2) and its
// derivative max(0, lambda + rho g) with respect to g.
double phr_term(double lambda, double g, double rho, double* dg) {
  const double m = std::max(0.0, lambda + rho * g);
  if (dg != nullptr) *dg = m;
  return (m * m - lambda * lambda) / (2.0 * rho);
}

}  // namespace

SolveOutcome solve(const CondensedProblem& problem, const ObjectiveFn& objective,
                   const Eigen::Ref<const Eigen::VectorXd>& w0, const SolveOptions& options) {
  const Eigen::VectorXd& lo = problem.stacked_lo();
  const Eigen::VectorXd& hi = problem.stacked_hi();
  const auto& cons = problem.state_constraints();
  const int m = static_cast<int>(cons.size());

  const Eigen::VectorXd w_start = clamp(w0, lo, hi);

  if (m == 0) {
    SolveOutcome out = solve_box(lo, hi, objective, w_start, options.tol, options.max_iterations);
    if (out.status != SolveStatus::NumericalFailure) out.states = problem.states(out.w);
    out.state_duals_lo.resize(0);
    out.state_duals_hi.resize(0);
    return out;
  }

  Eigen::VectorXd lam_lo = options.warm_duals_lo.size() == m ? options.warm_duals_lo
                                                             : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd lam_hi = options.warm_duals_hi.size() == m ? options.warm_duals_hi
                                                             : Eigen::VectorXd::Zero(m);
  double rho = 10.0;

  const int nx = problem.model().state_dim();
  const int nu = problem.model().input_dim();

  auto violation_of = [&](const std::vector<Eigen::VectorXd>& x) {
    double v = 0;
    for (const auto& c : cons) {
      const double xc = x[static_cast<std::size_t>(c.node)][c.coord];
      v = std::max({v, c.lo - xc, xc - c.hi});
    }
    return std::max(v, 0.0);
  };

  // Combined KKT error of the original problem at (w, duals).
  auto combined_error = [&](const Eigen::VectorXd& w, const std::vector<Eigen::VectorXd>& x,
                            const Eigen::VectorXd& llo, const Eigen::VectorXd& lhi) {
    Eigen::VectorXd g(w.size());
    objective(w, &g);
    return constrained_kkt_error(problem, w, x, g, llo, lhi);
  };

  SolveOutcome out;
  out.w = w_start;
  out.status = SolveStatus::MaxIterations;

  const double f_start = objective(w_start, nullptr);
  const bool start_feasible = violation_of(problem.states(w_start)) <= options.state_feasibility_tol;

  Eigen::VectorXd w = w_start;
  double best_feasible_f = kInf;
  Eigen::VectorXd best_feasible_w;
  Eigen::VectorXd best_lam_lo, best_lam_hi;
  double prev_violation = kInf;

  // Workspaces shared across augmented-objective evaluations.
  Eigen::VectorXd ws_g_obj, ws_pull;
  std::vector<Eigen::VectorXd> ws_states, ws_adjoint;
  TreeGradient ws_seed;

  for (int round = 0; round < options.max_al_rounds; ++round) {
    ObjectiveFn augmented = [&](const Eigen::Ref<const Eigen::VectorXd>& wv, Eigen::VectorXd* grad) {
      double f = grad != nullptr ? objective(wv, &ws_g_obj) : objective(wv, nullptr);
      problem.states_into(wv, ws_states);
      if (grad != nullptr) ws_seed.reset(problem.tree(), nx, nu);
      for (int j = 0; j < m; ++j) {
        const auto& c = cons[static_cast<std::size_t>(j)];
        const double xc = ws_states[static_cast<std::size_t>(c.node)][c.coord];
        double d_hi = 0, d_lo = 0;
        f += phr_term(lam_hi[j], xc - c.hi, rho, grad != nullptr ? &d_hi : nullptr);
        f += phr_term(lam_lo[j], c.lo - xc, rho, grad != nullptr ? &d_lo : nullptr);
        if (grad != nullptr) ws_seed.x[static_cast<std::size_t>(c.node)][c.coord] += d_hi - d_lo;
      }
      if (grad != nullptr) {
        problem.pull_back_into(ws_seed, ws_pull, ws_adjoint);
        *grad = ws_g_obj + ws_pull;
      }
      return f;
    };

    SolveOutcome sub = solve_box(lo, hi, augmented, w, options.tol, options.max_iterations);
    out.iterations += sub.iterations;
    if (sub.status == SolveStatus::NumericalFailure) {
      out.status = SolveStatus::NumericalFailure;
      out.objective = sub.objective;
      out.optimality_error = kInf;
      return out;
    }
    w = sub.w;

    const std::vector<Eigen::VectorXd> x = problem.states(w);
    const double viol = violation_of(x);
    for (int j = 0; j < m; ++j) {
      const auto& c = cons[static_cast<std::size_t>(j)];
      const double xc = x[static_cast<std::size_t>(c.node)][c.coord];
      lam_hi[j] = std::max(0.0, lam_hi[j] + rho * (xc - c.hi));
      lam_lo[j] = std::max(0.0, lam_lo[j] + rho * (c.lo - xc));
    }

    const double err = combined_error(w, x, lam_lo, lam_hi);
    if (viol <= options.state_feasibility_tol) {
      const double f_here = objective(w, nullptr);
      if (f_here < best_feasible_f) {
        best_feasible_f = f_here;
        best_feasible_w = w;
        best_lam_lo = lam_lo;
        best_lam_hi = lam_hi;
      }
      if (err <= options.tol) {
        out.status = SolveStatus::Converged;
        break;
      }
    }
    if (viol > 0.5 * prev_violation && rho < 1e12) rho *= 10.0;
    prev_violation = viol;
  }

  if (best_feasible_w.size() > 0) {
    w = best_feasible_w;
    lam_lo = best_lam_lo;
    lam_hi = best_lam_hi;
  }

  // Monotone safeguard between feasible starts and feasible answers.
  double f_final = objective(w, nullptr);
  if (start_feasible && f_final > f_start + 1e-12) {
    w = w_start;
    f_final = f_start;
    out.status = SolveStatus::MaxIterations;
  }

  out.w = w;
  out.states = problem.states(w);
  out.objective = f_final;
  out.optimality_error = combined_error(w, out.states, lam_lo, lam_hi);
  out.state_duals_lo = lam_lo;
  out.state_duals_hi = lam_hi;
  if (out.status != SolveStatus::Converged &&
      violation_of(out.states) <= options.state_feasibility_tol && out.optimality_error <= options.tol) {
    out.status = SolveStatus::Converged;
  }
  return out;
}

}  // namespace riskmm
