#pragma once

#include <cmath>

#include "metainv/tensor.hpp"

namespace metainv {

/// Value returned by psnr when the MSE underflows 1e-12; keeps CSV output
/// finite and sortable.
inline constexpr double kPsnrCap = 99.0;

/// Peak signal-to-noise ratio in decibels: 10*log10(peak^2 / MSE).
inline double psnr(const Tensor& x, const Tensor& reference, double peak) {
  require_same_shape(x, reference, "psnr");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  double mse = (x.flat() - reference.flat()).square().mean();
  if (mse < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace metainv
