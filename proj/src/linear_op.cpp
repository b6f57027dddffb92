#include "metainv/linear_op.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

#include "metainv/errors.hpp"

namespace metainv {

std::string op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::identity: return "identity";
    case OpKind::mask: return "mask";
    case OpKind::conv: return "conv";
    case OpKind::decimate: return "decimate";
    case OpKind::fourier_mask: return "fourier-mask";
    case OpKind::dense: return "dense";
  }
  return "?";
}

namespace {

void require_binary(const Tensor& mask, const std::string& where) {
  for (Index i = 0; i < mask.size(); ++i)
    if (mask[i] != 0.0 && mask[i] != 1.0)
      throw std::invalid_argument(where + ": mask entries must be 0 or 1");
}

// Circular convolution / correlation with origin at the kernel center.
// correlate=false: y[p] = sum_q k[q] x[p - (q - c)]
Tensor circ_conv(const Tensor& x, const Tensor& kernel, bool correlate) {
  Tensor y(x.shape());
  if (x.rank() == 1) {
    Index n = x.dim(0), kn = kernel.dim(0), c = kn / 2;
    for (Index p = 0; p < n; ++p) {
      double acc = 0;
      for (Index q = 0; q < kn; ++q) {
        Index off = q - c;
        Index src = correlate ? p + off : p - off;
        src %= n;
        if (src < 0) src += n;
        acc += kernel[q] * x[src];
      }
      y[p] = acc;
    }
    return y;
  }
  Index h = x.dim(0), w = x.dim(1);
  Index kh = kernel.dim(0), kw = kernel.dim(1);
  Index ch = kh / 2, cw = kw / 2;
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      double acc = 0;
      for (Index a = 0; a < kh; ++a) {
        for (Index b = 0; b < kw; ++b) {
          Index oi = a - ch, oj = b - cw;
          Index si = correlate ? i + oi : i - oi;
          Index sj = correlate ? j + oj : j - oj;
          si %= h; if (si < 0) si += h;
          sj %= w; if (sj < 0) sj += w;
          acc += kernel.at2(a, b) * x.at2(si, sj);
        }
      }
      y.at2(i, j) = acc;
    }
  }
  return y;
}

using Cplx = std::complex<double>;
using CMat = Eigen::Matrix<Cplx, Eigen::Dynamic, Eigen::Dynamic>;

// Unitary 2-D DFT on a complex matrix (rows then columns, 1/sqrt(HW) scale).
CMat dft2(const CMat& in, bool inverse) {
  Eigen::FFT<double> fft;
  Index h = in.rows(), w = in.cols();
  CMat tmp(h, w), out(h, w);
  std::vector<Cplx> line, spec;
  for (Index i = 0; i < h; ++i) {
    line.assign(in.row(i).begin(), in.row(i).end());
    spec.resize(line.size());
    if (inverse) {
      for (auto& z : line) z = std::conj(z);
      fft.fwd(spec, line);
      for (auto& z : spec) z = std::conj(z);
    } else {
      fft.fwd(spec, line);
    }
    for (Index j = 0; j < w; ++j) tmp(i, j) = spec[j];
  }
  for (Index j = 0; j < w; ++j) {
    line.assign(tmp.col(j).begin(), tmp.col(j).end());
    spec.resize(line.size());
    if (inverse) {
      for (auto& z : line) z = std::conj(z);
      fft.fwd(spec, line);
      for (auto& z : spec) z = std::conj(z);
    } else {
      fft.fwd(spec, line);
    }
    for (Index i = 0; i < h; ++i) out(i, j) = spec[i];
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  return out * scale;
}

CMat channels_to_complex(const Tensor& x) {
  Index h = x.dim(1), w = x.dim(2);
  CMat z(h, w);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) z(i, j) = Cplx(x.at3(0, i, j), x.at3(1, i, j));
  return z;
}

Tensor complex_to_channels(const CMat& z) {
  Tensor x({2, z.rows(), z.cols()});
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j) {
      x.at3(0, i, j) = z(i, j).real();
      x.at3(1, i, j) = z(i, j).imag();
    }
  return x;
}

}  // namespace

LinearOp make_identity(Shape shape) {
  LinearOp op(OpKind::identity, shape, shape);
  return op;
}

LinearOp make_mask(const Tensor& mask) {
  require_binary(mask, "make_mask");
  LinearOp op(OpKind::mask, mask.shape(), mask.shape());
  op.mask_ = mask;
  return op;
}

LinearOp make_conv(Shape image_shape, const Tensor& kernel) {
  if (kernel.rank() != static_cast<Index>(image_shape.size()))
    throw std::invalid_argument("make_conv: kernel rank must match image rank");
  for (Index axis = 0; axis < kernel.rank(); ++axis) {
    if (kernel.dim(axis) % 2 == 0)
      throw std::invalid_argument("make_conv: kernel dimensions must be odd");
    if (kernel.dim(axis) > image_shape[static_cast<std::size_t>(axis)])
      throw std::invalid_argument("make_conv: kernel larger than image");
  }
  LinearOp op(OpKind::conv, image_shape, image_shape);
  op.kernel_ = kernel;
  return op;
}

LinearOp make_decimation(Shape image_shape, Index factor) {
  if (factor < 2) throw std::invalid_argument("make_decimation: factor must be >= 2");
  Shape out;
  for (Index d : image_shape) {
    if (d % factor != 0)
      throw std::invalid_argument("make_decimation: dimensions must be divisible by factor");
    out.push_back(d / factor);
  }
  LinearOp op(OpKind::decimate, image_shape, out);
  op.factor_ = factor;
  return op;
}

LinearOp make_fourier_mask(const Tensor& freq_mask) {
  if (freq_mask.rank() != 2)
    throw std::invalid_argument("make_fourier_mask: frequency mask must be rank 2");
  require_binary(freq_mask, "make_fourier_mask");
  Shape sig{2, freq_mask.dim(0), freq_mask.dim(1)};
  LinearOp op(OpKind::fourier_mask, sig, sig);
  op.mask_ = freq_mask;
  return op;
}

LinearOp make_dense(Eigen::MatrixXd matrix, Shape in_shape, Shape out_shape) {
  if (matrix.cols() != shape_size(in_shape) || matrix.rows() != shape_size(out_shape))
    throw std::invalid_argument("make_dense: matrix does not match shapes");
  LinearOp op(OpKind::dense, std::move(in_shape), std::move(out_shape));
  op.dense_ = std::make_shared<const Eigen::MatrixXd>(std::move(matrix));
  return op;
}

LinearOp make_dense(Eigen::MatrixXd matrix) {
  Shape in{matrix.cols()}, out{matrix.rows()};
  return make_dense(std::move(matrix), in, out);
}

Tensor LinearOp::apply(const Tensor& x) const {
  if (x.shape() != in_shape_)
    throw std::invalid_argument("LinearOp::apply: expected input shape " +
                                shape_to_string(in_shape_) + ", got " +
                                shape_to_string(x.shape()));
  switch (kind_) {
    case OpKind::identity:
      return x;
    case OpKind::mask:
      return Tensor(x.shape(), x.flat() * mask_.flat());
    case OpKind::conv:
      return circ_conv(x, kernel_, false);
    case OpKind::decimate: {
      Tensor y(out_shape_);
      if (x.rank() == 1) {
        for (Index i = 0; i < y.dim(0); ++i) y[i] = x[i * factor_];
      } else {
        for (Index i = 0; i < y.dim(0); ++i)
          for (Index j = 0; j < y.dim(1); ++j) y.at2(i, j) = x.at2(i * factor_, j * factor_);
      }
      return y;
    }
    case OpKind::fourier_mask: {
      CMat spec = dft2(channels_to_complex(x), false);
      for (Index i = 0; i < spec.rows(); ++i)
        for (Index j = 0; j < spec.cols(); ++j) spec(i, j) *= mask_.at2(i, j);
      return complex_to_channels(spec);
    }
    case OpKind::dense: {
      Eigen::VectorXd y = (*dense_) * x.vec();
      return Tensor(out_shape_, y.array());
    }
  }
  throw std::logic_error("LinearOp::apply: unreachable");
}

Tensor LinearOp::adjoint(const Tensor& u) const {
  if (u.shape() != out_shape_)
    throw std::invalid_argument("LinearOp::adjoint: expected input shape " +
                                shape_to_string(out_shape_) + ", got " +
                                shape_to_string(u.shape()));
  switch (kind_) {
    case OpKind::identity:
      return u;
    case OpKind::mask:
      return Tensor(u.shape(), u.flat() * mask_.flat());
    case OpKind::conv:
      return circ_conv(u, kernel_, true);
    case OpKind::decimate: {
      Tensor x(in_shape_);
      if (u.rank() == 1) {
        for (Index i = 0; i < u.dim(0); ++i) x[i * factor_] = u[i];
      } else {
        for (Index i = 0; i < u.dim(0); ++i)
          for (Index j = 0; j < u.dim(1); ++j) x.at2(i * factor_, j * factor_) = u.at2(i, j);
      }
      return x;
    }
    case OpKind::fourier_mask: {
      CMat spec = channels_to_complex(u);
      for (Index i = 0; i < spec.rows(); ++i)
        for (Index j = 0; j < spec.cols(); ++j) spec(i, j) *= mask_.at2(i, j);
      return complex_to_channels(dft2(spec, true));
    }
    case OpKind::dense: {
      Eigen::VectorXd x = dense_->transpose() * u.vec();
      return Tensor(in_shape_, x.array());
    }
  }
  throw std::logic_error("LinearOp::adjoint: unreachable");
}

Eigen::MatrixXd materialize(const LinearOp& op) {
  Index n = op.in_size();
  Eigen::MatrixXd mat(op.out_size(), n);
  Tensor e(op.in_shape());
  for (Index j = 0; j < n; ++j) {
    e.flat().setZero();
    e[j] = 1.0;
    mat.col(j) = op.apply(e).vec();
  }
  return mat;
}

double spectral_norm(const LinearOp& op, int iterations, Rng& rng) {
  if (iterations < 1) throw std::invalid_argument("spectral_norm: iterations must be >= 1");
  Tensor v = rng.normal_tensor(op.in_shape());
  double vn = v.norm();
  if (vn == 0.0) return 0.0;
  v *= 1.0 / vn;
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Tensor w = op.adjoint(op.apply(v));
    lambda = w.norm();
    if (lambda == 0.0) return 0.0;
    v = (1.0 / lambda) * w;
  }
  return std::sqrt(lambda);
}

Eigen::MatrixXd kernel_projector(const LinearOp& op) {
  Index n = op.in_size();
  if (op.kind() == OpKind::mask) {
    Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) proj(i, i) = 1.0 - op.mask()[i];
    return proj;
  }
  if (op.kind() == OpKind::identity) return Eigen::MatrixXd::Zero(n, n);
  if (n > 4096)
    throw std::invalid_argument(
        "kernel_projector: operator too large to materialize; use a mask operator for"
        " the analytic fast path");
  Eigen::MatrixXd mat = materialize(op);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double cutoff = sv.size() ? kRankCutoff * sv(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  Eigen::MatrixXd vker = svd.matrixV().rightCols(n - rank);
  Eigen::MatrixXd proj = vker * vker.transpose();
  return 0.5 * (proj + proj.transpose());
}

Tensor pinv_apply(const LinearOp& op, const Tensor& y) {
  if (y.shape() != op.out_shape())
    throw std::invalid_argument("pinv_apply: y has shape " + shape_to_string(y.shape()) +
                                ", expected " + shape_to_string(op.out_shape()));
  switch (op.kind()) {
    case OpKind::identity:
    case OpKind::mask:
    case OpKind::decimate:
    case OpKind::fourier_mask:
      // These have orthonormal-row structure (projection times isometry),
      // for which the pseudo-inverse coincides with the adjoint.
      return op.adjoint(y);
    case OpKind::conv:
    case OpKind::dense: {
      if (op.in_size() > 4096)
        throw std::invalid_argument("pinv_apply: operator too large to materialize");
      Eigen::MatrixXd mat = materialize(op);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& sv = svd.singularValues();
      double cutoff = sv.size() ? kRankCutoff * sv(0) : 0.0;
      Eigen::VectorXd coeffs = svd.matrixU().transpose() * y.vec();
      for (Index i = 0; i < sv.size(); ++i) coeffs(i) = sv(i) > cutoff ? coeffs(i) / sv(i) : 0.0;
      Eigen::VectorXd x = svd.matrixV() * coeffs;
      return Tensor(op.in_shape(), x.array());
    }
  }
  throw std::logic_error("pinv_apply: unreachable");
}

}  // namespace metainv
