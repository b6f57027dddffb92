#include "metainv/gaussian.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "metainv/errors.hpp"

namespace metainv {

namespace {

struct OperatorSvd {
  Eigen::MatrixXd mat;  // materialized operator
  Eigen::MatrixXd u, v;
  Eigen::VectorXd sv;
  Index rank;
};

OperatorSvd decompose(const LinearOp& op) {
  if (op.in_size() > 4096)
    throw std::invalid_argument("subspace decomposition: operator too large to materialize");
  OperatorSvd d;
  d.mat = materialize(op);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d.mat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  d.u = svd.matrixU();
  d.v = svd.matrixV();
  d.sv = svd.singularValues();
  double cutoff = d.sv.size() ? kRankCutoff * d.sv(0) : 0.0;
  d.rank = 0;
  for (Index i = 0; i < d.sv.size(); ++i)
    if (d.sv(i) > cutoff) ++d.rank;
  return d;
}

Eigen::VectorXd pinv_from_svd(const OperatorSvd& d, const Eigen::VectorXd& y) {
  Eigen::VectorXd coeffs = d.u.transpose() * y;
  Eigen::VectorXd scaled = Eigen::VectorXd::Zero(d.v.cols());
  for (Index i = 0; i < d.rank; ++i) scaled(i) = coeffs(i) / d.sv(i);
  return d.v * scaled;
}

void check_in_range(const Eigen::MatrixXd& mat, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& pinv_y) {
  double resid = (mat * pinv_y - y).norm();
  if (resid > 1e-8 * std::max(y.norm(), 1e-300))
    throw std::invalid_argument("bayes_estimate: y is not in the range of the operator");
}

}  // namespace

void validate_prior(const GaussianPrior& prior) {
  if (prior.sigma.rows() != prior.dim() || prior.sigma.cols() != prior.dim())
    throw std::invalid_argument("prior: sigma must be n x n with n = len(mu)");
  double asym = (prior.sigma - prior.sigma.transpose()).norm();
  if (asym > 1e-12 * std::max(1.0, prior.sigma.norm()))
    throw std::invalid_argument("prior: sigma is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prior.sigma, Eigen::EigenvaluesOnly);
  double scale = std::max(1.0, prior.sigma.trace());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw std::invalid_argument("prior: sigma is not positive semi-definite");
}

std::vector<Tensor> sample_prior(const GaussianPrior& prior, Index count, Rng& rng) {
  validate_prior(prior);
  Index n = prior.dim();
  Eigen::LLT<Eigen::MatrixXd> llt(prior.sigma);
  Eigen::MatrixXd chol;
  if (llt.info() == Eigen::Success) {
    chol = llt.matrixL();
  } else {
    // Relative jitter, with a tiny absolute floor so the all-zero covariance
    // still factors.
    double jitter = std::max(1e-10 * prior.sigma.trace() / static_cast<double>(n), 1e-30);
    Eigen::LLT<Eigen::MatrixXd> retry(
        prior.sigma + jitter * Eigen::MatrixXd::Identity(n, n));
    if (retry.info() != Eigen::Success)
      throw NumericalError("sample_prior: covariance not PSD within jitter");
    chol = retry.matrixL();
  }
  std::vector<Tensor> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (Index s = 0; s < count; ++s) {
    Eigen::VectorXd z = rng.normal_vector(n);
    Eigen::VectorXd x = prior.mu + chol * z;
    samples.push_back(Tensor::from_vector(x));
  }
  return samples;
}

SubspaceBases subspace_bases(const LinearOp& op) {
  Index n = op.in_size();
  SubspaceBases bases;
  if (op.kind() == OpKind::mask) {
    Index kept = static_cast<Index>(op.mask().flat().sum());
    bases.v_im = Eigen::MatrixXd::Zero(n, kept);
    bases.v_ker = Eigen::MatrixXd::Zero(n, n - kept);
    Index ci = 0, ck = 0;
    for (Index i = 0; i < n; ++i) {
      if (op.mask()[i] != 0.0)
        bases.v_im(i, ci++) = 1.0;
      else
        bases.v_ker(i, ck++) = 1.0;
    }
    return bases;
  }
  if (op.kind() == OpKind::identity) {
    bases.v_im = Eigen::MatrixXd::Identity(n, n);
    bases.v_ker = Eigen::MatrixXd::Zero(n, 0);
    return bases;
  }
  OperatorSvd d = decompose(op);
  bases.v_im = d.v.leftCols(d.rank);
  bases.v_ker = d.v.rightCols(n - d.rank);
  return bases;
}

Tensor bayes_estimate(const GaussianPrior& prior, const LinearOp& op, const Tensor& y) {
  validate_prior(prior);
  if (prior.dim() != op.in_size())
    throw std::invalid_argument("bayes_estimate: prior dimension does not match operator");
  SubspaceBases bases = subspace_bases(op);
  Eigen::VectorXd pinv_y = pinv_apply(op, y).vec();
  {
    // Range check through the operator itself (cheap, no materialization for
    // the structured kinds).
    Tensor back = op.apply(Tensor(op.in_shape(), pinv_y.array()));
    double resid = (back.vec() - y.vec()).norm();
    if (resid > 1e-8 * std::max(y.vec().norm(), 1e-300))
      throw std::invalid_argument("bayes_estimate: y is not in the range of the operator");
  }
  Index nk = bases.v_ker.cols();
  if (nk == 0) return Tensor(op.in_shape(), pinv_y.array());

  Eigen::VectorXd mu_im = bases.v_im.transpose() * prior.mu;
  Eigen::VectorXd mu_ker = bases.v_ker.transpose() * prior.mu;
  Eigen::MatrixXd sigma_im = bases.v_im.transpose() * prior.sigma * bases.v_im;
  Eigen::MatrixXd sigma_ker_im = bases.v_ker.transpose() * prior.sigma * bases.v_im;

  double ridge = 1e-12 * std::max(sigma_im.trace(), 1e-300);
  sigma_im.diagonal().array() += ridge;

  Eigen::VectorXd coords = bases.v_im.transpose() * pinv_y;
  Eigen::VectorXd ker_coords =
      mu_ker + sigma_ker_im * sigma_im.ldlt().solve(coords - mu_im);
  Eigen::VectorXd x = pinv_y + bases.v_ker * ker_coords;
  return Tensor(op.in_shape(), x.array());
}

Tensor gaussian_condition_oracle(const GaussianPrior& prior, const LinearOp& op,
                                 const Tensor& y) {
  validate_prior(prior);
  if (prior.dim() != op.in_size())
    throw std::invalid_argument("gaussian_condition_oracle: prior dimension mismatch");
  OperatorSvd d = decompose(op);
  Eigen::VectorXd yv = y.vec();
  Eigen::VectorXd pinv_y = pinv_from_svd(d, yv);
  check_in_range(d.mat, yv, pinv_y);

  // E[x | Ax = y] = mu + Sigma A^T (A Sigma A^T)^+ (y - A mu)
  Eigen::MatrixXd cross = prior.sigma * d.mat.transpose();
  Eigen::MatrixXd meas_cov = d.mat * cross;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(meas_cov,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double cutoff = sv.size() ? 1e-12 * sv(0) : 0.0;
  Eigen::VectorXd rhs = svd.matrixU().transpose() * (yv - d.mat * prior.mu);
  for (Index i = 0; i < sv.size(); ++i) rhs(i) = sv(i) > cutoff ? rhs(i) / sv(i) : 0.0;
  Eigen::VectorXd x = prior.mu + cross * (svd.matrixV() * rhs);
  return Tensor(op.in_shape(), x.array());
}

BayesAffineMap bayes_linear_map(const GaussianPrior& prior, const LinearOp& op) {
  validate_prior(prior);
  SubspaceBases bases = subspace_bases(op);
  OperatorSvd d = decompose(op);
  Index m = op.out_size();

  // Pseudo-inverse as a matrix.
  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(op.in_size(), m);
  for (Index i = 0; i < d.rank; ++i)
    pinv += (1.0 / d.sv(i)) * d.v.col(i) * d.u.col(i).transpose();

  BayesAffineMap res;
  Index nk = bases.v_ker.cols();
  if (nk == 0) {
    res.map = pinv;
    res.offset = Eigen::VectorXd::Zero(op.in_size());
    return res;
  }
  Eigen::VectorXd mu_im = bases.v_im.transpose() * prior.mu;
  Eigen::VectorXd mu_ker = bases.v_ker.transpose() * prior.mu;
  Eigen::MatrixXd sigma_im = bases.v_im.transpose() * prior.sigma * bases.v_im;
  Eigen::MatrixXd sigma_ker_im = bases.v_ker.transpose() * prior.sigma * bases.v_im;
  double ridge = 1e-12 * std::max(sigma_im.trace(), 1e-300);
  sigma_im.diagonal().array() += ridge;
  Eigen::MatrixXd gain = sigma_ker_im * sigma_im.ldlt().solve(
                             Eigen::MatrixXd::Identity(sigma_im.rows(), sigma_im.cols()));
  res.map = pinv + bases.v_ker * gain * (bases.v_im.transpose() * pinv);
  res.offset = bases.v_ker * (mu_ker - gain * mu_im);
  return res;
}

}  // namespace metainv
