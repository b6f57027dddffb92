#pragma once

#include <vector>

#include "metainv/model.hpp"
#include "metainv/rng.hpp"
#include "metainv/task.hpp"

namespace metainv {

/// Entrywise clamp of u to [-radius, radius]; the proximal map of the
/// convex conjugate of radius*||.||_1.
Tensor box_prox(const Tensor& u, double radius);

/// One layer of the unrolled primal-dual network. Thresholds are stored as
/// logarithms so positivity survives unconstrained gradient updates.
struct PdnetLayer {
  Tensor w;           // conv weights {out_channels, kh, kw}, 1 input channel
  double log_lambda;  // threshold lambda = exp(log_lambda)

  double lambda() const { return std::exp(log_lambda); }
};

struct PDNetParams {
  std::vector<PdnetLayer> layers;
  double tau = 0.5;    // primal stepsize (fixed, not trained)
  double gamma = 0.5;  // dual stepsize (fixed, not trained)

  Index depth() const { return static_cast<Index>(layers.size()); }
  Index out_channels() const { return layers.at(0).w.dim(0); }
};

/// Flat trainable-parameter layout: per layer the row-major conv weights
/// followed by log_lambda. pack(unpack(v)) is bit-exact.
Eigen::VectorXd pdnet_pack(const PDNetParams& params);
PDNetParams pdnet_unpack(const Eigen::VectorXd& packed, Index depth, Index out_channels,
                         Index ksize, double tau, double gamma);

/// Single layer:
///   x' = x - tau*A^T(A x - y) - tau*W^T u
///   u' = box_prox(u + gamma*W(2x' - x), lambda)
/// W is a zero-padded stride-1 convolution applied per image channel; u holds
/// channels * out_channels dual planes.
void pdnet_layer(const Tensor& x, const Tensor& u, const Tensor& y, const LinearOp& op,
                 const Tensor& w, double lambda, double tau, double gamma, Tensor& x_next,
                 Tensor& u_next);

/// Intermediate states of a forward pass, consumed by the reverse sweep.
struct PdnetTape {
  std::vector<Tensor> xs;     // x_0..x_K
  std::vector<Tensor> us;     // u_0..u_K
  std::vector<Tensor> vpres;  // pre-clamp dual argument per layer
  Tensor y;
  const LinearOp* op = nullptr;
  double param_checksum = 0.0;
};

double pdnet_param_checksum(const PDNetParams& params);

/// Runs the network from x_0 = A^T y, u_0 = 0 and records the tape.
Tensor pdnet_forward(const PDNetParams& params, const Tensor& y, const LinearOp& op,
                     PdnetTape* tape = nullptr);

/// Reverse-mode gradient of <cotangent, x_K> with respect to the packed
/// trainable parameters. Clamp subgradients: 1 strictly inside the box,
/// 0 outside and at the boundary; the threshold receives -1/+1 where the
/// pre-clamp value lies strictly below/above the box.
Eigen::VectorXd pdnet_vjp(const PDNetParams& params, const PdnetTape& tape,
                          const Tensor& cotangent);

/// Unrolled primal-dual reconstruction family over a fixed architecture.
class PdnetFamily {
 public:
  PdnetFamily(Index depth, Shape image_shape, double tau, double gamma,
              Index out_channels = 40, Index ksize = 3);

  Index depth() const { return depth_; }
  Index out_channels() const { return out_channels_; }
  Index ksize() const { return ksize_; }
  double tau() const { return tau_; }
  double gamma() const { return gamma_; }
  const Shape& image_shape() const { return image_shape_; }
  Index param_count() const { return depth_ * (out_channels_ * ksize_ * ksize_ + 1); }

  /// Weights i.i.d. uniform in [-1/ksize, 1/ksize], thresholds at 0.01.
  Eigen::VectorXd init_params(Rng& rng) const;

  PDNetParams unpack(const Eigen::VectorXd& packed) const;

  struct TaskCtx {
    const Task* task = nullptr;
  };

  TaskCtx prepare(const Task& task) const;

  double loss(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
              LossMode mode) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
                       LossMode mode) const;
  /// Hessian-vector product of the split loss, computed by forward-over-
  /// reverse tangent propagation at fixed clamp activation pattern.
  Eigen::VectorXd hvp(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
                      LossMode mode, const Eigen::VectorXd& dir) const;

  Tensor reconstruct(const Eigen::VectorXd& packed, const Tensor& y,
                     const LinearOp& op) const;

 private:
  Index depth_;
  Shape image_shape_;
  double tau_, gamma_;
  Index out_channels_, ksize_;
};

}  // namespace metainv
