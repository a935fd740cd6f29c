#include "riskmm/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace riskmm {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw std::invalid_argument("log_sum_exp: empty vector");
  const double shift = v.maxCoeff();
  if (!std::isfinite(shift)) return shift;  // all -inf or a non-finite entry
  return shift + std::log((v.array() - shift).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw std::invalid_argument("softmax: empty vector");
  const double shift = v.maxCoeff();
  Eigen::VectorXd e = (v.array() - shift).exp();
  return e / e.sum();
}

Eigen::VectorXd log_softmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.array() - log_sum_exp(v);
}

}  // namespace riskmm
