#pragma once

#include <cmath>
#include <functional>

#include "metainv/errors.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

inline constexpr double kFiniteDiffStep = 1e-5;

/// Central-difference gradient of a scalar function of a tensor,
/// entry i = (f(x + h e_i) - f(x - h e_i)) / (2h).
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double h = kFiniteDiffStep) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    double xi = probe[i];
    probe[i] = xi + h;
    double fp = f(probe);
    probe[i] = xi - h;
    double fm = f(probe);
    probe[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("finite_diff_grad: non-finite evaluation at entry " +
                           std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Same recipe over a flat parameter vector.
inline Eigen::VectorXd finite_diff_grad_vec(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double h = kFiniteDiffStep) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    double xi = probe[i];
    probe[i] = xi + h;
    double fp = f(probe);
    probe[i] = xi - h;
    double fm = f(probe);
    probe[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("finite_diff_grad: non-finite evaluation at entry " +
                           std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace metainv
