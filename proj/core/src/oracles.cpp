#include "riskmm/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace riskmm::oracles {

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& point, double step) {
  if (!(step > 0)) throw std::invalid_argument("fd_gradient: step must be > 0");
  Eigen::VectorXd g(point.size());
  Eigen::VectorXd p = point;
  for (int i = 0; i < point.size(); ++i) {
    p[i] = point[i] + step;
    const double fp = f(p);
    p[i] = point[i] - step;
    const double fm = f(p);
    p[i] = point[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error("fd_gradient: non-finite evaluation");
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

GridMinResult simplex_grid_min(const std::function<double(const Eigen::VectorXd&)>& objective,
                               int dim, int resolution_steps) {
  if (dim < 1 || dim > 4) throw std::invalid_argument("simplex_grid_min: dimension must be 1..4");
  if (resolution_steps < 1) throw std::invalid_argument("simplex_grid_min: resolution must be >= 1");

  const int n = resolution_steps;
  const double inv = 1.0 / n;
  GridMinResult best;
  best.value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd p(dim);

  auto consider = [&]() {
    const double v = objective(p);
    if (v < best.value) {
      best.value = v;
      best.point = p;
    }
  };

  switch (dim) {
    case 1: {
      p[0] = 1.0;
      consider();
      break;
    }
    case 2: {
      for (int i = 0; i <= n; ++i) {
        p[0] = i * inv;
        p[1] = (n - i) * inv;
        consider();
      }
      break;
    }
    case 3: {
      for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n - i; ++j) {
          p[0] = i * inv;
          p[1] = j * inv;
          p[2] = (n - i - j) * inv;
          consider();
        }
      }
      break;
    }
    case 4: {
      for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n - i; ++j) {
          const int rem = n - i - j;
          p[0] = i * inv;
          p[1] = j * inv;
          for (int k = 0; k <= rem; ++k) {
            p[2] = k * inv;
            p[3] = (rem - k) * inv;
            consider();
          }
        }
      }
      break;
    }
  }
  return best;
}

Eigen::VectorXd enumerate_scenario_probs(const ScenarioTree& tree, const MoEModel& model,
                                         const std::vector<Eigen::VectorXd>& node_states) {
  if (tree.leaf_count() > 64) throw std::invalid_argument("enumerate_scenario_probs: tree too large");
  Eigen::VectorXd probs(tree.leaf_count());
  for (const Scenario& s : tree.scenarios()) {
    double prob = 1.0;
    for (int k = 0; k < tree.horizon(); ++k) {
      const int node = s.ancestors[static_cast<std::size_t>(k)];
      if (!tree.branches(node)) continue;
      const Eigen::VectorXd logits = model.gate * node_states[static_cast<std::size_t>(node)];
      double denom = 0.0;
      for (int i = 0; i < logits.size(); ++i) denom += std::exp(logits[i]);
      prob *= std::exp(logits[s.modes[static_cast<std::size_t>(k)]]) / denom;
    }
    probs[tree.scenario_index(s.leaf)] = prob;
  }
  return probs;
}

}  // namespace riskmm::oracles
