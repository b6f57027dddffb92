#pragma once

#include <memory>
#include <string>

#include "metainv/rng.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

enum class OpKind { identity, mask, conv, decimate, fourier_mask, dense };

std::string op_kind_name(OpKind kind);

/// A linear measurement operator with its adjoint. Immutable after
/// construction; safe to share read-only across threads.
///
/// Fourier-mask operators act on the 2-channel real representation of
/// complex images: shape {2, H, W}, channel 0 real, channel 1 imaginary.
class LinearOp {
 public:
  LinearOp() = default;  // empty identity; reassign before use

  OpKind kind() const { return kind_; }
  const Shape& in_shape() const { return in_shape_; }
  const Shape& out_shape() const { return out_shape_; }
  Index in_size() const { return shape_size(in_shape_); }
  Index out_size() const { return shape_size(out_shape_); }

  Tensor apply(const Tensor& x) const;
  Tensor adjoint(const Tensor& u) const;

  // Kind payloads, used by analytic fast paths.
  const Tensor& mask() const { return mask_; }
  const Tensor& kernel() const { return kernel_; }
  Index factor() const { return factor_; }
  const Eigen::MatrixXd& dense() const { return *dense_; }

  friend LinearOp make_identity(Shape shape);
  friend LinearOp make_mask(const Tensor& mask);
  friend LinearOp make_conv(Shape image_shape, const Tensor& kernel);
  friend LinearOp make_decimation(Shape image_shape, Index factor);
  friend LinearOp make_fourier_mask(const Tensor& freq_mask);
  friend LinearOp make_dense(Eigen::MatrixXd matrix, Shape in_shape, Shape out_shape);

 private:
  LinearOp(OpKind kind, Shape in_shape, Shape out_shape)
      : kind_(kind), in_shape_(std::move(in_shape)), out_shape_(std::move(out_shape)) {}

  OpKind kind_ = OpKind::identity;
  Shape in_shape_, out_shape_;
  Tensor mask_;    // mask: image mask; fourier_mask: frequency mask
  Tensor kernel_;  // conv
  Index factor_ = 0;
  std::shared_ptr<const Eigen::MatrixXd> dense_;
};

LinearOp make_identity(Shape shape);

/// Elementwise projection y = M .* x; self-adjoint. Mask entries must be 0/1.
LinearOp make_mask(const Tensor& mask);

/// Circular 2-D (or 1-D) convolution with an odd-sized kernel; the adjoint is
/// circular correlation with the same kernel.
LinearOp make_conv(Shape image_shape, const Tensor& kernel);

/// Keeps every factor-th sample along each axis; adjoint is zero upsampling.
LinearOp make_decimation(Shape image_shape, Index factor);

/// Unitary 2-D DFT followed by binary frequency masking on the 2-channel real
/// representation of complex images; adjoint masks then inverts the DFT.
LinearOp make_fourier_mask(const Tensor& freq_mask);

LinearOp make_dense(Eigen::MatrixXd matrix, Shape in_shape, Shape out_shape);
LinearOp make_dense(Eigen::MatrixXd matrix);

/// Applies the operator to every basis vector; feasible for small operators.
Eigen::MatrixXd materialize(const LinearOp& op);

/// Largest singular value estimated by power iteration on A^T A.
double spectral_norm(const LinearOp& op, int iterations, Rng& rng);

/// Relative singular-value cutoff below which directions count as kernel.
inline constexpr double kRankCutoff = 1e-10;

/// Orthogonal projector onto Ker(A) as a dense matrix. Masks take an analytic
/// fast path diag(1 - M); other kinds are materialized (input size <= 4096)
/// and decomposed by SVD.
Eigen::MatrixXd kernel_projector(const LinearOp& op);

/// Least-norm least-squares solution A^+ y. Masks, decimation, and Fourier
/// masks reduce to the adjoint; remaining kinds go through a dense SVD.
Tensor pinv_apply(const LinearOp& op, const Tensor& y);

}  // namespace metainv
