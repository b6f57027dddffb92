#pragma once

#include <vector>

#include "metainv/linear_op.hpp"
#include "metainv/rng.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

/// Gaussian signal distribution N(mu, sigma) over flattened signals.
struct GaussianPrior {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  Index dim() const { return mu.size(); }
};

/// Checks symmetry (1e-12) and positive semi-definiteness (smallest
/// eigenvalue >= -1e-10 relative to the trace scale).
void validate_prior(const GaussianPrior& prior);

/// Draws samples via a Cholesky factor; a jitter of 1e-10 * trace / n is
/// added if the factorization fails once.
std::vector<Tensor> sample_prior(const GaussianPrior& prior, Index count, Rng& rng);

/// Orthonormal bases of Im(A^T) (columns of v_im) and Ker(A) (columns of
/// v_ker), obtained from an SVD of the materialized operator. Mask operators
/// take a coordinate-aligned fast path.
struct SubspaceBases {
  Eigen::MatrixXd v_im;   // n x r
  Eigen::MatrixXd v_ker;  // n x (n - r)
};

SubspaceBases subspace_bases(const LinearOp& op);

/// Minimum-MSE estimate of x from exact measurements y = A x under the
/// prior: the component on Im(A^T) is the pseudo-inverse reconstruction and
/// the component on Ker(A) is the conditional mean given that reconstruction.
/// Requires y in Im(A) (residual <= 1e-8 * ||y||).
Tensor bayes_estimate(const GaussianPrior& prior, const LinearOp& op, const Tensor& y);

/// Independent route to the same estimate: condition the joint Gaussian
/// (x, Ax) on Ax = y with the standard conditional-mean formula and a
/// pseudo-inverse of the measurement covariance.
Tensor gaussian_condition_oracle(const GaussianPrior& prior, const LinearOp& op,
                                 const Tensor& y);

/// Affine form of the estimator: bayes_estimate(y) = map * y + offset.
struct BayesAffineMap {
  Eigen::MatrixXd map;     // n x m
  Eigen::VectorXd offset;  // n
};

BayesAffineMap bayes_linear_map(const GaussianPrior& prior, const LinearOp& op);

}  // namespace metainv
