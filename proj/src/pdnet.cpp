#include "metainv/pdnet.hpp"

#include <cmath>

#include "metainv/errors.hpp"

namespace metainv {

namespace {

struct ImgDims {
  Index c, h, w;
};

ImgDims img_dims(const Shape& s) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw std::invalid_argument("pdnet: images must be rank 2 or rank 3 (channels first)");
}

// Zero-padded stride-1 cross-correlation of one image plane with a bank of
// kernels: out[o,i,j] = sum_{a,b} w[o,a,b] x[i+a-ch, j+b-cw].
void conv_fwd_plane(const double* x, Index h, Index w, const double* wts, Index oc, Index kh,
                    Index kw, double* out, bool accumulate) {
  Index chh = kh / 2, cww = kw / 2;
  for (Index o = 0; o < oc; ++o) {
    const double* wo = wts + o * kh * kw;
    double* outo = out + o * h * w;
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        double acc = accumulate ? outo[i * w + j] : 0.0;
        for (Index a = 0; a < kh; ++a) {
          Index si = i + a - chh;
          if (si < 0 || si >= h) continue;
          for (Index b = 0; b < kw; ++b) {
            Index sj = j + b - cww;
            if (sj < 0 || sj >= w) continue;
            acc += wo[a * kw + b] * x[si * w + sj];
          }
        }
        outo[i * w + j] = acc;
      }
  }
}

// Exact adjoint of conv_fwd_plane: out[p,q] = sum_{o,a,b} w[o,a,b] u[o, p-a+ch, q-b+cw].
void conv_adj_plane(const double* u, Index h, Index w, const double* wts, Index oc, Index kh,
                    Index kw, double* out, bool accumulate) {
  Index chh = kh / 2, cww = kw / 2;
  for (Index p = 0; p < h; ++p)
    for (Index q = 0; q < w; ++q) {
      double acc = accumulate ? out[p * w + q] : 0.0;
      for (Index o = 0; o < oc; ++o) {
        const double* uo = u + o * h * w;
        const double* wo = wts + o * kh * kw;
        for (Index a = 0; a < kh; ++a) {
          Index si = p - a + chh;
          if (si < 0 || si >= h) continue;
          for (Index b = 0; b < kw; ++b) {
            Index sj = q - b + cww;
            if (sj < 0 || sj >= w) continue;
            acc += wo[a * kw + b] * uo[si * w + sj];
          }
        }
      }
      out[p * w + q] = acc;
    }
}

// d<u, conv_fwd(x)>/dw accumulated into wgrad[o,a,b].
void conv_wgrad_plane(const double* x, const double* u, Index h, Index w, Index oc, Index kh,
                      Index kw, double* wgrad) {
  Index chh = kh / 2, cww = kw / 2;
  for (Index o = 0; o < oc; ++o) {
    const double* uo = u + o * h * w;
    double* go = wgrad + o * kh * kw;
    for (Index a = 0; a < kh; ++a)
      for (Index b = 0; b < kw; ++b) {
        double acc = 0.0;
        for (Index i = 0; i < h; ++i) {
          Index si = i + a - chh;
          if (si < 0 || si >= h) continue;
          for (Index j = 0; j < w; ++j) {
            Index sj = j + b - cww;
            if (sj < 0 || sj >= w) continue;
            acc += uo[i * w + j] * x[si * w + sj];
          }
        }
        go[a * kw + b] += acc;
      }
  }
}

// Multi-channel wrappers: x has dims.c planes, u has dims.c * oc planes.
void conv_fwd(const Tensor& x, const ImgDims& d, const Tensor& wts, Index oc, Index kh,
              Index kw, Tensor& out, bool accumulate) {
  for (Index c = 0; c < d.c; ++c)
    conv_fwd_plane(x.flat().data() + c * d.h * d.w, d.h, d.w, wts.flat().data(), oc, kh, kw,
                   out.flat().data() + c * oc * d.h * d.w, accumulate);
}

void conv_adj(const Tensor& u, const ImgDims& d, const Tensor& wts, Index oc, Index kh,
              Index kw, Tensor& out, bool accumulate) {
  for (Index c = 0; c < d.c; ++c)
    conv_adj_plane(u.flat().data() + c * oc * d.h * d.w, d.h, d.w, wts.flat().data(), oc, kh,
                   kw, out.flat().data() + c * d.h * d.w, accumulate);
}

void conv_wgrad(const Tensor& x, const Tensor& u, const ImgDims& d, Index oc, Index kh,
                Index kw, Tensor& wgrad) {
  for (Index c = 0; c < d.c; ++c)
    conv_wgrad_plane(x.flat().data() + c * d.h * d.w, u.flat().data() + c * oc * d.h * d.w,
                     d.h, d.w, oc, kh, kw, wgrad.flat().data());
}

Tensor dual_zeros(const ImgDims& d, Index oc) { return Tensor({d.c * oc, d.h, d.w}); }

// x' = x - tau A^T(A x - y) - tau W^T u ; vpre = u + gamma W (2x' - x)
void layer_forward(const Tensor& x, const Tensor& u, const Tensor& y, const LinearOp& op,
                   const Tensor& wts, double tau, double gamma, Tensor& x_next, Tensor& vpre) {
  ImgDims d = img_dims(x.shape());
  Index oc = wts.dim(0), kh = wts.dim(1), kw = wts.dim(2);
  Tensor resid = op.apply(x);
  resid -= y;
  Tensor data_step = op.adjoint(resid);
  x_next = x;
  x_next.flat() -= tau * data_step.flat();
  Tensor wtu(x.shape());
  conv_adj(u, d, wts, oc, kh, kw, wtu, false);
  x_next.flat() -= tau * wtu.flat();
  Tensor z = x_next;
  z.flat() = 2.0 * x_next.flat() - x.flat();
  vpre = u;
  Tensor wz = dual_zeros(d, oc);
  conv_fwd(z, d, wts, oc, kh, kw, wz, false);
  vpre.flat() += gamma * wz.flat();
}

}  // namespace

Tensor box_prox(const Tensor& u, double radius) {
  if (radius < 0.0) throw std::invalid_argument("box_prox: radius must be >= 0");
  Tensor out = u;
  out.flat() = out.flat().cwiseMax(-radius).cwiseMin(radius);
  return out;
}

Eigen::VectorXd pdnet_pack(const PDNetParams& params) {
  Index per_layer = params.layers.at(0).w.size() + 1;
  Eigen::VectorXd packed(params.depth() * per_layer);
  Index pos = 0;
  for (const PdnetLayer& layer : params.layers) {
    packed.segment(pos, layer.w.size()) = layer.w.flat().matrix();
    pos += layer.w.size();
    packed[pos++] = layer.log_lambda;
  }
  return packed;
}

PDNetParams pdnet_unpack(const Eigen::VectorXd& packed, Index depth, Index out_channels,
                         Index ksize, double tau, double gamma) {
  Index wsize = out_channels * ksize * ksize;
  if (packed.size() != depth * (wsize + 1))
    throw std::invalid_argument("pdnet_unpack: wrong parameter count");
  PDNetParams params;
  params.tau = tau;
  params.gamma = gamma;
  params.layers.reserve(static_cast<std::size_t>(depth));
  Index pos = 0;
  for (Index k = 0; k < depth; ++k) {
    PdnetLayer layer;
    layer.w = Tensor({out_channels, ksize, ksize}, packed.segment(pos, wsize).array());
    pos += wsize;
    layer.log_lambda = packed[pos++];
    params.layers.push_back(std::move(layer));
  }
  return params;
}

void pdnet_layer(const Tensor& x, const Tensor& u, const Tensor& y, const LinearOp& op,
                 const Tensor& w, double lambda, double tau, double gamma, Tensor& x_next,
                 Tensor& u_next) {
  ImgDims d = img_dims(x.shape());
  if (u.shape() != Shape{d.c * w.dim(0), d.h, d.w})
    throw std::invalid_argument("pdnet_layer: dual variable has wrong shape");
  Tensor vpre;
  layer_forward(x, u, y, op, w, tau, gamma, x_next, vpre);
  u_next = box_prox(vpre, lambda);
}

double pdnet_param_checksum(const PDNetParams& params) {
  double acc = params.tau * 3.0 + params.gamma * 7.0;
  for (const PdnetLayer& layer : params.layers)
    acc += layer.w.flat().abs().sum() + layer.w.flat().sum() * 0.5 + layer.log_lambda;
  return acc;
}

Tensor pdnet_forward(const PDNetParams& params, const Tensor& y, const LinearOp& op,
                     PdnetTape* tape) {
  if (params.layers.empty()) throw std::invalid_argument("pdnet_forward: no layers");
  Tensor x = op.adjoint(y);
  ImgDims d = img_dims(x.shape());
  Index oc = params.out_channels();
  Tensor u = dual_zeros(d, oc);
  if (tape) {
    tape->xs.clear();
    tape->us.clear();
    tape->vpres.clear();
    tape->xs.push_back(x);
    tape->us.push_back(u);
    tape->y = y;
    tape->op = &op;
    tape->param_checksum = pdnet_param_checksum(params);
  }
  for (const PdnetLayer& layer : params.layers) {
    Tensor x_next, vpre;
    layer_forward(x, u, y, op, layer.w, params.tau, params.gamma, x_next, vpre);
    u = box_prox(vpre, layer.lambda());
    x = std::move(x_next);
    if (tape) {
      tape->xs.push_back(x);
      tape->us.push_back(u);
      tape->vpres.push_back(std::move(vpre));
    }
  }
  return x;
}

Eigen::VectorXd pdnet_vjp(const PDNetParams& params, const PdnetTape& tape,
                          const Tensor& cotangent) {
  if (tape.op == nullptr || tape.xs.size() != params.layers.size() + 1)
    throw std::invalid_argument("pdnet_vjp: tape does not match network depth");
  if (tape.param_checksum != pdnet_param_checksum(params))
    throw std::invalid_argument("pdnet_vjp: stale tape (parameters changed since forward)");
  const LinearOp& op = *tape.op;
  ImgDims d = img_dims(tape.xs[0].shape());
  Index oc = params.out_channels();
  Index kh = params.layers[0].w.dim(1), kw = params.layers[0].w.dim(2);
  double tau = params.tau, gamma = params.gamma;

  Tensor xbar = cotangent;
  Tensor ubar = dual_zeros(d, oc);
  Index wsize = oc * kh * kw;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.depth() * (wsize + 1));

  for (Index k = params.depth() - 1; k >= 0; --k) {
    const PdnetLayer& layer = params.layers[static_cast<std::size_t>(k)];
    const Tensor& x = tape.xs[static_cast<std::size_t>(k)];
    const Tensor& u = tape.us[static_cast<std::size_t>(k)];
    const Tensor& x_next = tape.xs[static_cast<std::size_t>(k) + 1];
    const Tensor& vpre = tape.vpres[static_cast<std::size_t>(k)];
    double lambda = layer.lambda();

    // u_next = clamp(vpre, +/-lambda)
    Tensor vbar(vpre.shape());
    double lambar = 0.0;
    for (Index i = 0; i < vpre.size(); ++i) {
      double v = vpre[i], ub = ubar[i];
      vbar[i] = (std::abs(v) < lambda) ? ub : 0.0;
      if (v > lambda)
        lambar += ub;
      else if (v < -lambda)
        lambar -= ub;
    }

    Tensor wbar({oc, kh, kw});

    // vpre = u + gamma W z with z = 2 x_next - x
    Tensor z = x;
    z.flat() = 2.0 * x_next.flat() - x.flat();
    Tensor ubar_prev = vbar;
    Tensor wzbar = vbar;
    wzbar *= gamma;
    Tensor zbar(x.shape());
    conv_adj(wzbar, d, layer.w, oc, kh, kw, zbar, false);
    conv_wgrad(z, wzbar, d, oc, kh, kw, wbar);

    // z = 2 x_next - x
    Tensor xbar_tot = xbar;
    xbar_tot.flat() += 2.0 * zbar.flat();
    Tensor xbar_prev = zbar;
    xbar_prev *= -1.0;

    // x_next = x - tau A^T(A x - y) - tau W^T u
    Tensor ata = op.adjoint(op.apply(xbar_tot));
    xbar_prev.flat() += xbar_tot.flat() - tau * ata.flat();
    Tensor wx = dual_zeros(d, oc);
    conv_fwd(xbar_tot, d, layer.w, oc, kh, kw, wx, false);
    ubar_prev.flat() -= tau * wx.flat();
    Tensor neg_xbar_tot = xbar_tot;
    neg_xbar_tot *= -tau;
    conv_wgrad(neg_xbar_tot, u, d, oc, kh, kw, wbar);

    Index pos = k * (wsize + 1);
    grad.segment(pos, wsize) += wbar.flat().matrix();
    grad[pos + wsize] += lambda * lambar;  // chain rule to log-threshold

    xbar = std::move(xbar_prev);
    ubar = std::move(ubar_prev);
  }
  return grad;
}

PdnetFamily::PdnetFamily(Index depth, Shape image_shape, double tau, double gamma,
                         Index out_channels, Index ksize)
    : depth_(depth),
      image_shape_(std::move(image_shape)),
      tau_(tau),
      gamma_(gamma),
      out_channels_(out_channels),
      ksize_(ksize) {
  if (depth_ < 1) throw std::invalid_argument("PdnetFamily: depth must be >= 1");
  if (!(tau_ > 0.0) || !(gamma_ > 0.0))
    throw std::invalid_argument("PdnetFamily: stepsizes must be positive");
}

Eigen::VectorXd PdnetFamily::init_params(Rng& rng) const {
  double bound = 1.0 / static_cast<double>(ksize_);
  double init_log_lambda = std::log(0.01);
  Eigen::VectorXd packed(param_count());
  Index wsize = out_channels_ * ksize_ * ksize_;
  Index pos = 0;
  for (Index k = 0; k < depth_; ++k) {
    for (Index i = 0; i < wsize; ++i) packed[pos++] = rng.uniform(-bound, bound);
    packed[pos++] = init_log_lambda;
  }
  return packed;
}

PDNetParams PdnetFamily::unpack(const Eigen::VectorXd& packed) const {
  return pdnet_unpack(packed, depth_, out_channels_, ksize_, tau_, gamma_);
}

PdnetFamily::TaskCtx PdnetFamily::prepare(const Task& task) const {
  if (task.op.in_shape() != image_shape_)
    throw std::invalid_argument("PdnetFamily::prepare: task image shape mismatch");
  return TaskCtx{&task};
}

double PdnetFamily::loss(const Eigen::VectorXd& packed, const TaskCtx& ctx, Split split,
                         LossMode mode) const {
  const std::vector<Pair>& pairs = ctx.task->split(split == Split::test);
  if (pairs.empty()) throw std::invalid_argument("pdnet loss: empty dataset split");
  PDNetParams params = unpack(packed);
  double total = 0.0;
  for (const Pair& pair : pairs) {
    Tensor out = pdnet_forward(params, pair.y, ctx.task->op);
    if (mode == LossMode::sup) {
      total += 0.5 * (out.flat() - pair.x.flat()).square().sum();
    } else {
      Tensor resid = ctx.task->op.apply(out);
      resid -= pair.y;
      total += 0.5 * resid.flat().square().sum();
    }
  }
  return total;
}

Eigen::VectorXd PdnetFamily::grad(const Eigen::VectorXd& packed, const TaskCtx& ctx,
                                  Split split, LossMode mode) const {
  const std::vector<Pair>& pairs = ctx.task->split(split == Split::test);
  if (pairs.empty()) throw std::invalid_argument("pdnet grad: empty dataset split");
  PDNetParams params = unpack(packed);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(param_count());
  for (const Pair& pair : pairs) {
    PdnetTape tape;
    Tensor out = pdnet_forward(params, pair.y, ctx.task->op, &tape);
    Tensor cot;
    if (mode == LossMode::sup) {
      cot = out;
      cot -= pair.x;
    } else {
      Tensor resid = ctx.task->op.apply(out);
      resid -= pair.y;
      cot = ctx.task->op.adjoint(resid);
    }
    grad += pdnet_vjp(params, tape, cot);
  }
  return grad;
}

Tensor PdnetFamily::reconstruct(const Eigen::VectorXd& packed, const Tensor& y,
                                const LinearOp& op) const {
  PDNetParams params = unpack(packed);
  return pdnet_forward(params, y, op);
}

// Forward-over-reverse Hessian-vector product. The clamp activation pattern
// is held fixed at the primal point, which matches the piecewise-smooth
// structure away from clamp boundaries.
Eigen::VectorXd PdnetFamily::hvp(const Eigen::VectorXd& packed, const TaskCtx& ctx,
                                 Split split, LossMode mode,
                                 const Eigen::VectorXd& dir) const {
  const std::vector<Pair>& pairs = ctx.task->split(split == Split::test);
  if (pairs.empty()) throw std::invalid_argument("pdnet hvp: empty dataset split");
  if (dir.size() != param_count())
    throw std::invalid_argument("pdnet hvp: direction has wrong size");
  PDNetParams params = unpack(packed);
  const LinearOp& op = ctx.task->op;
  Index oc = out_channels_, kh = ksize_, kw = ksize_;
  Index wsize = oc * kh * kw;

  // Direction in (W, lambda) coordinates; thresholds are optimized in log
  // space, so dlambda = lambda * dlog_lambda.
  std::vector<Tensor> dw(static_cast<std::size_t>(depth_));
  std::vector<double> dlam(static_cast<std::size_t>(depth_));
  for (Index k = 0; k < depth_; ++k) {
    Index pos = k * (wsize + 1);
    dw[static_cast<std::size_t>(k)] =
        Tensor({oc, kh, kw}, dir.segment(pos, wsize).array());
    dlam[static_cast<std::size_t>(k)] =
        params.layers[static_cast<std::size_t>(k)].lambda() * dir[pos + wsize];
  }

  Eigen::VectorXd result = Eigen::VectorXd::Zero(param_count());

  for (const Pair& pair : pairs) {
    // Tangent-augmented forward pass.
    Tensor x = op.adjoint(pair.y);
    ImgDims d = img_dims(x.shape());
    Tensor dx(x.shape());
    Tensor u = dual_zeros(d, oc);
    Tensor du = dual_zeros(d, oc);
    std::vector<Tensor> xs{x}, dxs{dx}, us{u}, dus{du}, vpres, dvpres;
    for (Index k = 0; k < depth_; ++k) {
      const PdnetLayer& layer = params.layers[static_cast<std::size_t>(k)];
      const Tensor& dwk = dw[static_cast<std::size_t>(k)];
      double lambda = layer.lambda();

      Tensor x_next, vpre;
      layer_forward(x, u, pair.y, op, layer.w, tau_, gamma_, x_next, vpre);

      // Tangents through the same layer.
      Tensor data_dot = op.adjoint(op.apply(dx));
      Tensor dwtu(x.shape()), dwtu2(x.shape());
      conv_adj(u, d, dwk, oc, kh, kw, dwtu, false);
      conv_adj(du, d, layer.w, oc, kh, kw, dwtu2, false);
      Tensor dx_next = dx;
      dx_next.flat() -= tau_ * (data_dot.flat() + dwtu.flat() + dwtu2.flat());

      Tensor z = x;
      z.flat() = 2.0 * x_next.flat() - x.flat();
      Tensor dz = dx;
      dz.flat() = 2.0 * dx_next.flat() - dx.flat();

      Tensor dwz = dual_zeros(d, oc);
      conv_fwd(z, d, dwk, oc, kh, kw, dwz, false);
      conv_fwd(dz, d, layer.w, oc, kh, kw, dwz, true);
      Tensor dvpre = du;
      dvpre.flat() += gamma_ * dwz.flat();

      Tensor u_next = box_prox(vpre, lambda);
      Tensor du_next(vpre.shape());
      double dl = dlam[static_cast<std::size_t>(k)];
      for (Index i = 0; i < vpre.size(); ++i) {
        double v = vpre[i];
        if (std::abs(v) < lambda)
          du_next[i] = dvpre[i];
        else if (v > lambda)
          du_next[i] = dl;
        else if (v < -lambda)
          du_next[i] = -dl;
        else
          du_next[i] = 0.0;
      }

      x = std::move(x_next);
      dx = std::move(dx_next);
      u = std::move(u_next);
      du = std::move(du_next);
      xs.push_back(x);
      dxs.push_back(dx);
      us.push_back(u);
      dus.push_back(du);
      vpres.push_back(std::move(vpre));
      dvpres.push_back(std::move(dvpre));
    }

    // Loss cotangent and its tangent.
    Tensor xbar, dxbar;
    if (mode == LossMode::sup) {
      xbar = x;
      xbar -= pair.x;
      dxbar = dx;
    } else {
      Tensor resid = op.apply(x);
      resid -= pair.y;
      xbar = op.adjoint(resid);
      dxbar = op.adjoint(op.apply(dx));
    }
    Tensor ubar = dual_zeros(d, oc);
    Tensor dubar = dual_zeros(d, oc);

    // Tangent-augmented reverse sweep.
    for (Index k = depth_ - 1; k >= 0; --k) {
      const PdnetLayer& layer = params.layers[static_cast<std::size_t>(k)];
      const Tensor& dwk = dw[static_cast<std::size_t>(k)];
      const Tensor& xk = xs[static_cast<std::size_t>(k)];
      const Tensor& uk = us[static_cast<std::size_t>(k)];
      const Tensor& duk = dus[static_cast<std::size_t>(k)];
      const Tensor& x_next = xs[static_cast<std::size_t>(k) + 1];
      const Tensor& dx_next = dxs[static_cast<std::size_t>(k) + 1];
      const Tensor& vpre = vpres[static_cast<std::size_t>(k)];
      double lambda = layer.lambda();

      Tensor vbar(vpre.shape()), dvbar(vpre.shape());
      double lambar = 0.0, dlambar = 0.0;
      for (Index i = 0; i < vpre.size(); ++i) {
        double v = vpre[i];
        bool inside = std::abs(v) < lambda;
        vbar[i] = inside ? ubar[i] : 0.0;
        dvbar[i] = inside ? dubar[i] : 0.0;
        if (v > lambda) {
          lambar += ubar[i];
          dlambar += dubar[i];
        } else if (v < -lambda) {
          lambar -= ubar[i];
          dlambar -= dubar[i];
        }
      }

      Tensor wbar({oc, kh, kw}), dwbar({oc, kh, kw});

      Tensor z = xk;
      z.flat() = 2.0 * x_next.flat() - xk.flat();
      Tensor dz = xk;
      dz.flat() = 2.0 * dx_next.flat() - dxs[static_cast<std::size_t>(k)].flat();

      Tensor ubar_prev = vbar;
      Tensor dubar_prev = dvbar;
      Tensor wzbar = vbar;
      wzbar *= gamma_;
      Tensor dwzbar = dvbar;
      dwzbar *= gamma_;

      Tensor zbar(xk.shape()), dzbar(xk.shape());
      conv_adj(wzbar, d, layer.w, oc, kh, kw, zbar, false);
      conv_adj(wzbar, d, dwk, oc, kh, kw, dzbar, false);
      conv_adj(dwzbar, d, layer.w, oc, kh, kw, dzbar, true);
      conv_wgrad(z, wzbar, d, oc, kh, kw, wbar);
      conv_wgrad(dz, wzbar, d, oc, kh, kw, dwbar);
      conv_wgrad(z, dwzbar, d, oc, kh, kw, dwbar);

      Tensor xbar_tot = xbar;
      xbar_tot.flat() += 2.0 * zbar.flat();
      Tensor dxbar_tot = dxbar;
      dxbar_tot.flat() += 2.0 * dzbar.flat();

      Tensor xbar_prev = zbar;
      xbar_prev *= -1.0;
      Tensor dxbar_prev = dzbar;
      dxbar_prev *= -1.0;

      Tensor ata = op.adjoint(op.apply(xbar_tot));
      xbar_prev.flat() += xbar_tot.flat() - tau_ * ata.flat();
      Tensor data = op.adjoint(op.apply(dxbar_tot));
      dxbar_prev.flat() += dxbar_tot.flat() - tau_ * data.flat();

      Tensor wx = dual_zeros(d, oc);
      conv_fwd(xbar_tot, d, layer.w, oc, kh, kw, wx, false);
      ubar_prev.flat() -= tau_ * wx.flat();
      Tensor dwx = dual_zeros(d, oc);
      conv_fwd(xbar_tot, d, dwk, oc, kh, kw, dwx, false);
      conv_fwd(dxbar_tot, d, layer.w, oc, kh, kw, dwx, true);
      dubar_prev.flat() -= tau_ * dwx.flat();

      Tensor neg = xbar_tot;
      neg *= -tau_;
      conv_wgrad(neg, uk, d, oc, kh, kw, wbar);
      Tensor dneg = dxbar_tot;
      dneg *= -tau_;
      conv_wgrad(dneg, uk, d, oc, kh, kw, dwbar);
      conv_wgrad(neg, duk, d, oc, kh, kw, dwbar);

      Index pos = k * (wsize + 1);
      result.segment(pos, wsize) += dwbar.flat().matrix();
      // Hessian row for the log-threshold: tangent of lambda * lambar.
      result[pos + wsize] +=
          dlam[static_cast<std::size_t>(k)] * lambar + lambda * dlambar;

      xbar = std::move(xbar_prev);
      dxbar = std::move(dxbar_prev);
      ubar = std::move(ubar_prev);
      dubar = std::move(dubar_prev);
    }
  }
  return result;
}

}  // namespace metainv
