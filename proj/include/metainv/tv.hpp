#pragma once

#include "metainv/tensor.hpp"

namespace metainv {

inline constexpr double kTvDefaultTol = 1e-6;
inline constexpr int kTvDefaultMaxIter = 500;

/// Isotropic discrete total variation (forward differences, Neumann
/// boundary) of a rank-1 or rank-2 tensor.
double tv_value(const Tensor& x);

/// prox of strength * TV at y: argmin_x strength*TV(x) + 0.5*||x - y||^2,
/// solved by the dual projection fixed-point iteration. Stops when the
/// relative dual change falls below tol or at max_iter.
Tensor tv_prox(const Tensor& y, double strength, double tol = kTvDefaultTol,
               int max_iter = kTvDefaultMaxIter);

/// Primal-dual gap of the candidate solution reached from y; diagnostic for
/// solver accuracy (relative to 1 + primal value).
double tv_prox_duality_gap(const Tensor& y, double strength, double tol = kTvDefaultTol,
                           int max_iter = kTvDefaultMaxIter);

}  // namespace metainv
