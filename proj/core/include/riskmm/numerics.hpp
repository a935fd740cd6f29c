#pragma once

#include <Eigen/Core>

namespace riskmm {

/// log(sum(exp(v))) with max-subtraction so large entries never overflow.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

/// exp(v - lse(v)); entries are positive and sum to 1.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& v);

/// v - lse(v), the elementwise log of softmax(v).
Eigen::VectorXd log_softmax(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace riskmm
