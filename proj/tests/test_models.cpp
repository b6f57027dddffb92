#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metainv/finite_diff.hpp"
#include "metainv/linear_model.hpp"
#include "metainv/pdnet.hpp"
#include "oracles.hpp"

using namespace metainv;

namespace {

Task small_mask_task(Index h, Index w, double drop, int train_count, int test_count,
                     Rng& rng) {
  std::vector<Tensor> images;
  for (int i = 0; i < train_count + test_count; ++i)
    images.push_back(rng.uniform_tensor({h, w}, 0.0, 1.0));
  TaskParams p;
  p.mask = random_drop_mask({h, w}, drop, rng);
  return make_task(TaskKind::T4, p, images, static_cast<std::size_t>(train_count), rng);
}

// Finite differences are only trusted at smooth points: no pre-clamp value
// may sit within margin of the box boundary.
bool smooth_at(const PdnetFamily& family, const Eigen::VectorXd& packed, const Task& task,
               double margin) {
  PDNetParams params = family.unpack(packed);
  for (const Pair& pair : task.train) {
    PdnetTape tape;
    pdnet_forward(params, pair.y, task.op, &tape);
    for (std::size_t k = 0; k < tape.vpres.size(); ++k) {
      double lambda = params.layers[k].lambda();
      for (Index i = 0; i < tape.vpres[k].size(); ++i)
        if (std::abs(std::abs(tape.vpres[k][i]) - lambda) < margin) return false;
    }
  }
  return true;
}

// Draws fresh parameters until the clamp pattern is strictly away from its
// boundaries on the task data.
Eigen::VectorXd smooth_init(const PdnetFamily& family, const Task& task, Rng& rng,
                            double margin = 1e-6) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Eigen::VectorXd packed = family.init_params(rng);
    if (smooth_at(family, packed, task, margin)) return packed;
  }
  throw std::runtime_error("smooth_init: no smooth point found");
}

}  // namespace

TEST_CASE("linear forward is plain matrix application") {
  Eigen::MatrixXd theta(2, 2);
  theta << 1, 2, 0, 1;
  Tensor y = Tensor::from_list({2}, {1, 1});
  Tensor out = linear_forward(theta, y);
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 1.0);
  CHECK((linear_forward(Eigen::MatrixXd::Identity(2, 2), y).flat() == y.flat()).all());
  CHECK(linear_forward(Eigen::MatrixXd::Zero(2, 2), y).max_abs() == 0.0);
  CHECK_THROWS_AS(linear_forward(theta, Tensor({3})), std::invalid_argument);
}

TEST_CASE("linear gradient closed forms") {
  Index n = 3;
  LinearOp id = make_identity({n});
  Rng rng(3);
  Tensor x = rng.normal_tensor({n});
  Tensor y = x;

  // Global minimum of the unsupervised objective at theta = theta* = I.
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd g = linear_loss_grads(eye, eye, id, x, y, LossMode::unsup, 1.0);
  CHECK(g.norm() <= 1e-12);

  // Supervised with theta = 0, lambda = 0: gradient is -x y^T.
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd gs = linear_loss_grads(zero, zero, id, x, y, LossMode::sup, 0.0);
  Eigen::MatrixXd expect = -x.vec() * y.vec().transpose();
  CHECK((gs - expect).norm() <= 1e-12);
}

TEST_CASE("linear gradients match finite differences in both modes") {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Index n = 4, m = 4;
    Tensor mask = random_drop_mask({n}, 0.4, rng);
    LinearOp op = make_mask(mask);
    Tensor x = rng.normal_tensor({n});
    Tensor y = op.apply(x);
    Eigen::MatrixXd theta(n, m), theta_star(n, m);
    for (Index i = 0; i < n; ++i) {
      theta.row(i) = rng.normal_vector(m).transpose();
      theta_star.row(i) = rng.normal_vector(m).transpose();
    }
    double reg = rng.uniform();
    LossMode mode = trial % 2 == 0 ? LossMode::sup : LossMode::unsup;

    Eigen::MatrixXd grad = linear_loss_grads(theta, theta_star, op, x, y, mode, reg);
    Tensor theta_t = Tensor::from_matrix(theta);
    auto objective = [&](const Tensor& t) {
      Eigen::MatrixXd th = t.mat();
      Eigen::VectorXd fy = th * y.vec();
      double data;
      if (mode == LossMode::sup) {
        data = 0.5 * (fy - x.vec()).squaredNorm();
      } else {
        Tensor rec(op.in_shape(), fy.array());
        Tensor resid = op.apply(rec);
        resid -= y;
        data = 0.5 * resid.flat().square().sum();
      }
      return data + 0.5 * reg * (th - theta_star).squaredNorm();
    };
    Tensor fd = finite_diff_grad(objective, theta_t);
    double rel = (fd.mat() - grad).norm() / std::max(grad.norm(), 1e-12);
    CHECK(rel <= 1e-6);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("box prox clamps coordinatewise") {
  Tensor u = Tensor::from_list({3}, {2.0, -0.5, 0.1});
  Tensor out = box_prox(u, 1.0);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == -0.5);
  CHECK(out[2] == doctest::Approx(0.1));
  CHECK(box_prox(u, 0.0).max_abs() == 0.0);
  Tensor small = Tensor::from_list({2}, {0.3, -0.2});
  CHECK((box_prox(small, 1.0).flat() == small.flat()).all());
  CHECK_THROWS_AS(box_prox(u, -1.0), std::invalid_argument);

  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    Tensor probe = rng.normal_tensor({6});
    double r = rng.uniform();
    Tensor got = box_prox(probe, r);
    for (Index j = 0; j < probe.size(); ++j)
      CHECK(got[j] == std::min(std::max(probe[j], -r), r));
  }
}

TEST_CASE("box prox is 1-Lipschitz") {
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    Tensor a = rng.normal_tensor({8});
    Tensor b = rng.normal_tensor({8});
    double r = rng.uniform(0.0, 2.0);
    CHECK((box_prox(a, r) - box_prox(b, r)).norm() <= (a - b).norm());
  }
}

TEST_CASE("pdnet layer with zero weights is a gradient step") {
  Rng rng(13);
  Index h = 5, w = 5;
  Tensor mask = random_drop_mask({h, w}, 0.3, rng);
  LinearOp op = make_mask(mask);
  Tensor x = rng.normal_tensor({h, w});
  Tensor y = op.apply(rng.normal_tensor({h, w}));
  Tensor wts({4, 3, 3});
  Tensor u({4, h, w});
  double tau = 0.4, gamma = 0.3;
  Tensor x_next, u_next;
  pdnet_layer(x, u, y, op, wts, 0.5, tau, gamma, x_next, u_next);

  Tensor resid = op.apply(x);
  resid -= y;
  Tensor expect = x;
  expect.flat() -= tau * op.adjoint(resid).flat();
  CHECK((x_next.flat() - expect.flat()).abs().maxCoeff() == 0.0);
  CHECK(u_next.max_abs() == 0.0);

  // A = I with x = y: zero residual leaves the iterate in place.
  LinearOp id = make_identity({h, w});
  Tensor x2, u2;
  pdnet_layer(y, u, y, id, wts, 0.5, tau, gamma, x2, u2);
  CHECK((x2.flat() - y.flat()).abs().maxCoeff() == 0.0);
}

TEST_CASE("pdnet conv passes the adjoint identity against dense oracle") {
  Rng rng(17);
  Index h = 4, w = 5;
  Tensor wts = rng.normal_tensor({3, 3, 3});
  LinearOp id = make_identity({h, w});
  // Build the conv map densely by probing pdnet_layer differences.
  // W appears in x' only through -tau W^T u; probe u basis vectors.
  double tau = 1.0, gamma = 1.0;
  Tensor y({h, w});
  Eigen::MatrixXd wt_mat(h * w, 3 * h * w);
  for (Index j = 0; j < 3 * h * w; ++j) {
    Tensor u({3, h, w});
    u[j] = 1.0;
    Tensor x({h, w});
    Tensor xn, un;
    pdnet_layer(x, u, y, id, wts, 1e9, tau, gamma, xn, un);
    wt_mat.col(j) = -xn.vec();  // x' = -tau W^T u here
  }
  // Forward conv from the dual update with lambda large (no clamping):
  // u' = u + gamma W(2x' - x); choose x so 2x' - x is a basis vector.
  Eigen::MatrixXd w_mat(3 * h * w, h * w);
  for (Index j = 0; j < h * w; ++j) {
    Tensor u({3, h, w});
    Tensor x({h, w});
    x[j] = -1.0;  // with W^T u = 0 and A x - y ... need care: x' = x - tau*A^T(Ax - y)
    // Use A = I and y = x so x' = x, hence 2x' - x = x = -e_j... flip sign below.
    Tensor xn, un;
    pdnet_layer(x, u, x, id, wts, 1e9, tau, gamma, xn, un);
    w_mat.col(j) = -un.vec() / gamma;
  }
  CHECK((wt_mat - w_mat.transpose()).norm() <= 1e-10 * std::max(1.0, w_mat.norm()));
}

TEST_CASE("pdnet forward: zero weights and identity operator reach a fixed point") {
  Rng rng(19);
  Index h = 6, w = 6;
  LinearOp id = make_identity({h, w});
  Tensor y = rng.uniform_tensor({h, w}, 0.0, 1.0);
  PDNetParams params;
  params.tau = 0.5;
  params.gamma = 0.5;
  for (int k = 0; k < 4; ++k)
    params.layers.push_back({Tensor({8, 3, 3}), std::log(0.01)});
  Tensor out = pdnet_forward(params, y, id);
  CHECK((out.flat() - y.flat()).abs().maxCoeff() <= 1e-12);

  // One layer with W = 0 is exactly one gradient step from x0 = A^T y.
  Rng rng2(21);
  Tensor mask = random_drop_mask({h, w}, 0.4, rng2);
  LinearOp op = make_mask(mask);
  Tensor ym = op.apply(rng2.normal_tensor({h, w}));
  PDNetParams one;
  one.tau = 0.3;
  one.gamma = 0.5;
  one.layers.push_back({Tensor({8, 3, 3}), std::log(0.01)});
  Tensor got = pdnet_forward(one, ym, op);
  Tensor x0 = op.adjoint(ym);
  Tensor resid = op.apply(x0);
  resid -= ym;
  Tensor expect = x0;
  expect.flat() -= one.tau * op.adjoint(resid).flat();
  CHECK((got.flat() - expect.flat()).abs().maxCoeff() == 0.0);
}

TEST_CASE("pdnet forward stays finite over random seeds") {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    Index h = 8, w = 8;
    Tensor mask = random_drop_mask({h, w}, 0.3, rng);
    LinearOp op = make_mask(mask);
    PdnetFamily family(2, {h, w}, 0.5, 0.5, 8);
    Eigen::VectorXd packed = family.init_params(rng);
    Tensor y = op.apply(rng.uniform_tensor({h, w}, 0.0, 1.0));
    Tensor out = family.reconstruct(packed, y, op);
    CHECK(out.all_finite());
    CHECK(out.shape() == op.in_shape());
  }
}

TEST_CASE("pack/unpack round trip is bit exact") {
  Rng rng(23);
  PdnetFamily family(3, {8, 8}, 0.5, 0.5, 8);
  Eigen::VectorXd packed = rng.normal_vector(family.param_count());
  PDNetParams params = family.unpack(packed);
  Eigen::VectorXd back = pdnet_pack(params);
  REQUIRE(back.size() == packed.size());
  CHECK((back.array() == packed.array()).all());
}

TEST_CASE("pdnet vjp: zero cotangent and dead dual branch") {
  Rng rng(29);
  Index h = 6, w = 6;
  Tensor mask = random_drop_mask({h, w}, 0.3, rng);
  LinearOp op = make_mask(mask);
  PdnetFamily family(2, {h, w}, 0.5, 0.5, 8);
  Eigen::VectorXd packed = family.init_params(rng);
  PDNetParams params = family.unpack(packed);
  Tensor y = op.apply(rng.uniform_tensor({h, w}, 0.0, 1.0));
  PdnetTape tape;
  pdnet_forward(params, y, op, &tape);
  Eigen::VectorXd g = pdnet_vjp(params, tape, Tensor({h, w}));
  CHECK(g.norm() == 0.0);

  // Zero weights: u never moves, so threshold gradients vanish.
  Eigen::VectorXd zero_packed = Eigen::VectorXd::Zero(family.param_count());
  for (Index k = 0; k < 2; ++k)
    zero_packed[(k + 1) * (8 * 9 + 1) - 1] = std::log(0.05);
  PDNetParams zero_params = family.unpack(zero_packed);
  PdnetTape tape2;
  pdnet_forward(zero_params, y, op, &tape2);
  Eigen::VectorXd g2 = pdnet_vjp(zero_params, tape2, rng.normal_tensor({h, w}));
  for (Index k = 0; k < 2; ++k) CHECK(g2[(k + 1) * (8 * 9 + 1) - 1] == 0.0);

  // A stale tape is rejected.
  Eigen::VectorXd other = family.init_params(rng);
  PDNetParams other_params = family.unpack(other);
  CHECK_THROWS_AS(pdnet_vjp(other_params, tape2, Tensor({h, w})), std::invalid_argument);
}

TEST_CASE("pdnet vjp matches finite differences at smooth points") {
  for (Index depth : {Index(1), Index(3)}) {
    Rng rng(31 + static_cast<std::uint64_t>(depth));
    Index h = 16, w = 16;
    Tensor mask = random_drop_mask({h, w}, 0.3, rng);
    LinearOp op = make_mask(mask);
    PdnetFamily family(depth, {h, w}, 0.5, 0.5, 8);
    Task task;
    task.op = op;
    Tensor xt = rng.uniform_tensor({h, w}, 0.0, 1.0);
    task.train.push_back({xt, op.apply(xt)});
    task.test = task.train;
    auto ctx = family.prepare(task);

    Eigen::VectorXd packed = smooth_init(family, task, rng);

    Eigen::VectorXd grad = family.grad(packed, ctx, Split::train, LossMode::sup);
    auto objective = [&](const Eigen::VectorXd& p) {
      return family.loss(p, ctx, Split::train, LossMode::sup);
    };
    Eigen::VectorXd fd = finite_diff_grad_vec(objective, packed, 1e-6);
    double rel = (fd - grad).norm() / std::max(grad.norm(), 1e-12);
    CHECK(rel <= 1e-4);
  }
}

TEST_CASE("pdnet hvp matches finite differences of the gradient") {
  Rng rng(37);
  Index h = 8, w = 8;
  Tensor mask = random_drop_mask({h, w}, 0.4, rng);
  LinearOp op = make_mask(mask);
  PdnetFamily family(2, {h, w}, 0.5, 0.5, 8);
  Task task;
  task.op = op;
  for (int i = 0; i < 2; ++i) {
    Tensor xt = rng.uniform_tensor({h, w}, 0.0, 1.0);
    task.train.push_back({xt, op.apply(xt)});
  }
  task.test = task.train;
  auto ctx = family.prepare(task);
  Eigen::VectorXd packed = smooth_init(family, task, rng);

  for (LossMode mode : {LossMode::sup, LossMode::unsup}) {
    for (int probe = 0; probe < 3; ++probe) {
      Eigen::VectorXd dir = rng.normal_vector(family.param_count());
      dir.normalize();
      Eigen::VectorXd hv = family.hvp(packed, ctx, Split::train, mode, dir);
      double hstep = 1e-6;
      Eigen::VectorXd gp = family.grad(packed + hstep * dir, ctx, Split::train, mode);
      Eigen::VectorXd gm = family.grad(packed - hstep * dir, ctx, Split::train, mode);
      Eigen::VectorXd fd = (gp - gm) / (2.0 * hstep);
      double rel = (fd - hv).norm() / std::max(hv.norm(), 1e-12);
      CHECK(rel <= 1e-4);
    }
  }
}
