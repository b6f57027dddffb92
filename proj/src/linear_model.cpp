#include "metainv/linear_model.hpp"

namespace metainv {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Eigen::MatrixXd stack_columns(const std::vector<Pair>& pairs, bool measurements) {
  if (pairs.empty()) throw std::invalid_argument("linear model: empty dataset split");
  Index dim = measurements ? pairs.front().y.size() : pairs.front().x.size();
  Eigen::MatrixXd m(dim, static_cast<Index>(pairs.size()));
  for (std::size_t j = 0; j < pairs.size(); ++j)
    m.col(static_cast<Index>(j)) = measurements ? pairs[j].y.vec() : pairs[j].x.vec();
  return m;
}

}  // namespace

Tensor linear_forward(const Eigen::MatrixXd& theta, const Tensor& y) {
  if (theta.cols() != y.size())
    throw std::invalid_argument("linear_forward: theta has " + std::to_string(theta.cols()) +
                                " columns, measurement has " + std::to_string(y.size()));
  Eigen::VectorXd out = theta * y.vec();
  return Tensor::from_vector(out);
}

Eigen::MatrixXd linear_loss_grads(const Eigen::MatrixXd& theta,
                                  const Eigen::MatrixXd& theta_star, const LinearOp& op,
                                  const Tensor& x, const Tensor& y, LossMode mode,
                                  double reg_lambda) {
  if (theta.rows() != theta_star.rows() || theta.cols() != theta_star.cols())
    throw std::invalid_argument("linear_loss_grads: theta / theta_star shape mismatch");
  if (theta.cols() != y.size() || theta.rows() != x.size())
    throw std::invalid_argument("linear_loss_grads: data shape mismatch");
  Eigen::VectorXd fy = theta * y.vec();
  Eigen::MatrixXd grad;
  if (mode == LossMode::sup) {
    grad = (fy - x.vec()) * y.vec().transpose();
  } else {
    Tensor recon(op.in_shape(), fy.array());
    Tensor resid = op.apply(recon);
    resid.flat() -= y.flat();
    grad = op.adjoint(resid).vec() * y.vec().transpose();
  }
  if (reg_lambda != 0.0) grad += reg_lambda * (theta - theta_star);
  return grad;
}

Eigen::VectorXd LinearFamily::init_params(Rng& rng, double scale) const {
  Eigen::VectorXd p = rng.normal_vector(param_count());
  return p * (scale / std::sqrt(static_cast<double>(cols_)));
}

Eigen::MatrixXd LinearFamily::unpack(const Eigen::VectorXd& packed) const {
  if (packed.size() != param_count())
    throw std::invalid_argument("LinearFamily::unpack: wrong parameter count");
  return RowMajorMap(packed.data(), rows_, cols_);
}

Eigen::VectorXd LinearFamily::pack(const Eigen::MatrixXd& theta) const {
  if (theta.rows() != rows_ || theta.cols() != cols_)
    throw std::invalid_argument("LinearFamily::pack: wrong theta shape");
  Eigen::VectorXd p(param_count());
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j) p[i * cols_ + j] = theta(i, j);
  return p;
}

LinearFamily::TaskCtx LinearFamily::prepare(const Task& task) const {
  if (task.op.in_size() != rows_ || task.op.out_size() != cols_)
    throw std::invalid_argument("LinearFamily::prepare: task operator shape mismatch");
  TaskCtx ctx;
  ctx.task = &task;
  // The quadratic losses only need second-moment statistics, so the per-call
  // cost is independent of the dataset size.
  if (task.op.kind() == OpKind::mask) {
    ctx.diagonal = true;
    ctx.diag = task.op.mask().vec();
  } else if (task.op.kind() == OpKind::identity) {
    ctx.diagonal = true;
    ctx.diag = Eigen::VectorXd::Ones(task.op.in_size());
  } else {
    ctx.a = materialize(task.op);
    ctx.gram = ctx.a.transpose() * ctx.a;
  }
  auto fill = [&](const std::vector<Pair>& pairs, SplitStats& stats) {
    Eigen::MatrixXd x = stack_columns(pairs, false);
    Eigen::MatrixXd y = stack_columns(pairs, true);
    stats.count = static_cast<Index>(pairs.size());
    stats.yy = y * y.transpose();
    stats.xy = x * y.transpose();
    stats.xx_trace = x.squaredNorm();
    stats.yy_trace = stats.yy.trace();
  };
  fill(task.train, ctx.train);
  if (!task.test.empty()) fill(task.test, ctx.test);
  return ctx;
}

const LinearFamily::SplitStats& LinearFamily::stats_for(const TaskCtx& ctx, Split split) {
  const SplitStats& stats = split == Split::train ? ctx.train : ctx.test;
  if (stats.count == 0) throw std::invalid_argument("linear model: empty dataset split");
  return stats;
}

double LinearFamily::loss(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
                          LossMode mode) const {
  const SplitStats& st = stats_for(ctx, split);
  RowMajorMap theta(packed.data(), rows_, cols_);
  Eigen::MatrixXd ts = theta * st.yy;
  if (mode == LossMode::sup) {
    double val = 0.5 * ((ts.array() * theta.array()).sum() -
                        2.0 * (st.xy.array() * theta.array()).sum() + st.xx_trace);
    return std::max(val, 0.0);
  }
  Eigen::MatrixXd at = ctx.diagonal
                           ? Eigen::MatrixXd(ctx.diag.asDiagonal() * Eigen::MatrixXd(theta))
                           : Eigen::MatrixXd(ctx.a * theta);
  double val = 0.5 * ((at * st.yy).array() * at.array()).sum() -
               (ts.array() * (ctx.diagonal
                                  ? Eigen::MatrixXd(ctx.diag.asDiagonal() *
                                                    Eigen::MatrixXd::Identity(rows_, rows_))
                                  : ctx.a.transpose())
                                 .transpose()
                                 .array())
                   .sum() +
               0.5 * st.yy_trace;
  return std::max(val, 0.0);
}

Eigen::VectorXd LinearFamily::grad(const Eigen::VectorXd& packed, const TaskCtx& ctx,
                                   Split split, LossMode mode) const {
  const SplitStats& st = stats_for(ctx, split);
  RowMajorMap theta(packed.data(), rows_, cols_);
  Eigen::MatrixXd g;
  if (mode == LossMode::sup) {
    g = theta * st.yy - st.xy;
  } else if (ctx.diagonal) {
    // A^T A theta S - A^T S with A = diag(d), binary d.
    g = ctx.diag.asDiagonal() * (theta * st.yy) - ctx.diag.asDiagonal() * st.yy;
  } else {
    g = ctx.gram * (theta * st.yy) - ctx.a.transpose() * st.yy;
  }
  return pack(g);
}

Eigen::VectorXd LinearFamily::hvp(const Eigen::VectorXd& packed, const TaskCtx& ctx,
                                  Split split, LossMode mode,
                                  const Eigen::VectorXd& dir) const {
  (void)packed;  // quadratic objective: the Hessian does not depend on theta
  const SplitStats& st = stats_for(ctx, split);
  RowMajorMap v(dir.data(), rows_, cols_);
  Eigen::MatrixXd h;
  if (mode == LossMode::sup) {
    h = v * st.yy;
  } else if (ctx.diagonal) {
    h = ctx.diag.asDiagonal() * (v * st.yy);
  } else {
    h = ctx.gram * (v * st.yy);
  }
  return pack(h);
}

Tensor LinearFamily::reconstruct(const Eigen::VectorXd& packed, const Tensor& y,
                                 const LinearOp& op) const {
  RowMajorMap theta(packed.data(), rows_, cols_);
  Eigen::VectorXd out = theta * y.vec();
  return Tensor(op.in_shape(), out.array());
}

}  // namespace metainv
