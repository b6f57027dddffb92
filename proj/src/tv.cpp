#include "metainv/tv.hpp"

#include <cmath>

namespace metainv {

namespace {

// Forward-difference gradient with Neumann boundary. Output has one
// component per axis, stacked along a leading component dimension.
void grad2(const Tensor& x, Tensor& g) {
  if (x.rank() == 1) {
    Index h = x.dim(0);
    for (Index i = 0; i < h; ++i) g[i] = (i + 1 < h) ? x[i + 1] - x[i] : 0.0;
    return;
  }
  Index h = x.dim(0), w = x.dim(1);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      g.at3(0, i, j) = (i + 1 < h) ? x.at2(i + 1, j) - x.at2(i, j) : 0.0;
      g.at3(1, i, j) = (j + 1 < w) ? x.at2(i, j + 1) - x.at2(i, j) : 0.0;
    }
}

// div = -grad^T, so <grad x, p> = -<x, div p>.
void div2(const Tensor& p, Tensor& d, bool one_d) {
  if (one_d) {
    Index h = d.dim(0);
    for (Index i = 0; i < h; ++i) {
      double v = (i + 1 < h) ? p[i] : 0.0;
      if (i > 0) v -= p[i - 1];
      d[i] = v;
    }
    return;
  }
  Index h = d.dim(0), w = d.dim(1);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      double v = 0.0;
      if (i + 1 < h) v += p.at3(0, i, j);
      if (i > 0) v -= p.at3(0, i - 1, j);
      if (j + 1 < w) v += p.at3(1, i, j);
      if (j > 0) v -= p.at3(1, i, j - 1);
      d.at2(i, j) = v;
    }
}

struct TvWorkspace {
  bool one_d;
  Tensor p, g, d;
};

TvWorkspace make_workspace(const Tensor& y) {
  TvWorkspace ws;
  ws.one_d = y.rank() == 1;
  if (!ws.one_d && y.rank() != 2)
    throw std::invalid_argument("tv_prox: only rank-1 and rank-2 tensors are supported");
  ws.p = ws.one_d ? Tensor(Shape{y.dim(0)}) : Tensor(Shape{2, y.dim(0), y.dim(1)});
  ws.g = Tensor(ws.p.shape());
  ws.d = Tensor(y.shape());
  return ws;
}

// Dual fixed point: maximize -0.5*||y + s*div p||^2 over the pointwise unit
// ball; the primal solution is x = y + s*div p.
void run_dual(const Tensor& y, double strength, double tol, int max_iter, TvWorkspace& ws) {
  const double step = ws.one_d ? 0.25 : 0.125;  // 1 / ||div||^2
  Tensor arg(y.shape());
  for (int it = 0; it < max_iter; ++it) {
    div2(ws.p, ws.d, ws.one_d);
    arg.flat() = ws.d.flat() + y.flat() / strength;
    grad2(arg, ws.g);
    double change = 0.0, scale = 0.0;
    if (ws.one_d) {
      Index h = ws.p.dim(0);
      for (Index i = 0; i < h; ++i) {
        double gi = ws.g[i];
        double np = (ws.p[i] + step * gi) / (1.0 + step * std::abs(gi));
        change += (np - ws.p[i]) * (np - ws.p[i]);
        scale += np * np;
        ws.p[i] = np;
      }
    } else {
      Index h = ws.p.dim(1), w = ws.p.dim(2);
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
          double g0 = ws.g.at3(0, i, j), g1 = ws.g.at3(1, i, j);
          double mag = std::sqrt(g0 * g0 + g1 * g1);
          double denom = 1.0 + step * mag;
          double n0 = (ws.p.at3(0, i, j) + step * g0) / denom;
          double n1 = (ws.p.at3(1, i, j) + step * g1) / denom;
          double d0 = n0 - ws.p.at3(0, i, j), d1 = n1 - ws.p.at3(1, i, j);
          change += d0 * d0 + d1 * d1;
          scale += n0 * n0 + n1 * n1;
          ws.p.at3(0, i, j) = n0;
          ws.p.at3(1, i, j) = n1;
        }
    }
    if (std::sqrt(change) < tol * std::max(std::sqrt(scale), 1.0)) break;
  }
}

}  // namespace

double tv_value(const Tensor& x) {
  if (x.rank() == 1) {
    double tv = 0.0;
    for (Index i = 0; i + 1 < x.dim(0); ++i) tv += std::abs(x[i + 1] - x[i]);
    return tv;
  }
  if (x.rank() != 2)
    throw std::invalid_argument("tv_value: only rank-1 and rank-2 tensors are supported");
  double tv = 0.0;
  Index h = x.dim(0), w = x.dim(1);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      double dx = (i + 1 < h) ? x.at2(i + 1, j) - x.at2(i, j) : 0.0;
      double dy = (j + 1 < w) ? x.at2(i, j + 1) - x.at2(i, j) : 0.0;
      tv += std::sqrt(dx * dx + dy * dy);
    }
  return tv;
}

Tensor tv_prox(const Tensor& y, double strength, double tol, int max_iter) {
  if (strength < 0.0) throw std::invalid_argument("tv_prox: strength must be >= 0");
  if (!(tol > 0.0)) throw std::invalid_argument("tv_prox: tol must be > 0");
  if (strength == 0.0) return y;
  TvWorkspace ws = make_workspace(y);
  run_dual(y, strength, tol, max_iter, ws);
  div2(ws.p, ws.d, ws.one_d);
  Tensor x(y.shape(), y.flat() + strength * ws.d.flat());
  x.check_finite("tv_prox");
  return x;
}

double tv_prox_duality_gap(const Tensor& y, double strength, double tol, int max_iter) {
  if (strength <= 0.0) return 0.0;
  TvWorkspace ws = make_workspace(y);
  run_dual(y, strength, tol, max_iter, ws);
  div2(ws.p, ws.d, ws.one_d);
  Tensor x(y.shape(), y.flat() + strength * ws.d.flat());
  double primal = strength * tv_value(x) + 0.5 * (x.flat() - y.flat()).square().sum();
  double dual = 0.5 * y.flat().square().sum() -
                0.5 * (y.flat() + strength * ws.d.flat()).square().sum();
  return (primal - dual) / (1.0 + std::abs(primal));
}

}  // namespace metainv
