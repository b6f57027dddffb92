#pragma once

#include "metainv/model.hpp"
#include "metainv/rng.hpp"
#include "metainv/task.hpp"

namespace metainv {

/// Applies a linear reconstruction map to a measurement.
Tensor linear_forward(const Eigen::MatrixXd& theta, const Tensor& y);

/// Gradient of the single-pair inner objective
///   0.5*||f_theta(y) - x||^2 + (reg_lambda/2)*||theta - theta_star||^2  (sup)
///   0.5*||A f_theta(y) - y||^2 + (reg_lambda/2)*||theta - theta_star||^2  (unsup)
/// with f_theta(y) = theta y.
Eigen::MatrixXd linear_loss_grads(const Eigen::MatrixXd& theta,
                                  const Eigen::MatrixXd& theta_star, const LinearOp& op,
                                  const Tensor& x, const Tensor& y, LossMode mode,
                                  double reg_lambda);

/// Linear reconstruction family theta: measurement space -> image space.
/// Parameters are packed as the row-major flattening of theta.
class LinearFamily {
 public:
  LinearFamily(Index image_size, Index measurement_size)
      : rows_(image_size), cols_(measurement_size) {}

  static LinearFamily for_task(const Task& task) {
    return LinearFamily(task.op.in_size(), task.op.out_size());
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index param_count() const { return rows_ * cols_; }

  /// Small random init; scale keeps initial outputs well below data scale.
  Eigen::VectorXd init_params(Rng& rng, double scale = 0.01) const;

  Eigen::MatrixXd unpack(const Eigen::VectorXd& packed) const;
  Eigen::VectorXd pack(const Eigen::MatrixXd& theta) const;

  struct TaskCtx {
    const Task* task = nullptr;
    Eigen::MatrixXd a;                    // materialized operator
    Eigen::VectorXd diag;                 // set for mask/identity fast path
    bool diagonal = false;
    Eigen::MatrixXd x_train, y_train;     // columns are samples
    Eigen::MatrixXd x_test, y_test;
  };

  TaskCtx prepare(const Task& task) const;

  double loss(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
              LossMode mode) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
                       LossMode mode) const;
  Eigen::VectorXd hvp(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
                      LossMode mode, const Eigen::VectorXd& dir) const;

  Tensor reconstruct(const Eigen::VectorXd& packed, const Tensor& y,
                     const LinearOp& op) const;

 private:
  Index rows_, cols_;
};

}  // namespace metainv
