#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metainv/bilevel.hpp"
#include "metainv/finite_diff.hpp"
#include "metainv/linear_model.hpp"
#include "metainv/linear_op.hpp"
#include "metainv/pdnet.hpp"
#include "oracles.hpp"

using namespace metainv;

namespace {

Task linear_task(const LinearOp& op, int train_count, int test_count, Rng& rng,
                 const std::string& name = "task") {
  Task task;
  task.name = name;
  task.op = op;
  for (int i = 0; i < train_count + test_count; ++i) {
    Pair pair;
    pair.x = rng.normal_tensor(op.in_shape());
    pair.y = op.apply(pair.x);
    if (i < train_count)
      task.train.push_back(std::move(pair));
    else
      task.test.push_back(std::move(pair));
  }
  return task;
}

LinearOp random_dense_op(Index m, Index n, Rng& rng) {
  Eigen::MatrixXd a(m, n);
  for (Index i = 0; i < m; ++i) a.row(i) = rng.normal_vector(n).transpose();
  return make_dense(a);
}

// Straight-line restatement of the Adam recursion, kept separate from the
// library implementation.
Eigen::VectorXd reference_adam(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g,
                               Eigen::VectorXd x, int steps, double alpha) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= steps; ++t) {
    Eigen::VectorXd grad = g(x);
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad.cwiseProduct(grad);
    Eigen::VectorXd mhat = m / (1 - std::pow(b1, t));
    Eigen::VectorXd vhat = v / (1 - std::pow(b2, t));
    for (Index i = 0; i < x.size(); ++i) x[i] -= alpha * mhat[i] / (std::sqrt(vhat[i]) + eps);
  }
  return x;
}

}  // namespace

TEST_CASE("loss wrappers on a linear model") {
  Rng rng(3);
  Index n = 5;
  Tensor mask = random_drop_mask({n}, 0.4, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 3, 2, rng);
  LinearFamily family(n, n);
  auto ctx = family.prepare(task);

  // Perfect model: the pseudo-inverse reconstructs masked data exactly, so
  // both losses vanish (mask pinv equals the mask itself).
  Eigen::VectorXd pinv_params = family.pack(materialize(op));
  CHECK(unsup_loss(family, pinv_params, ctx, Split::train) <= 1e-20);

  // Single pair with a known error vector: sup loss is half its square norm.
  Task single;
  single.op = make_identity({2});
  Tensor x0 = Tensor::from_list({2}, {1.0, 1.0});
  Tensor y0 = x0;
  single.train.push_back({x0, y0});
  LinearFamily fam2(2, 2);
  auto ctx2 = fam2.prepare(single);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Identity(2, 2);
  theta(0, 0) = 2.0;  // f(y) - x = (1, 0): squared norm 1
  CHECK(sup_loss(fam2, fam2.pack(theta), ctx2, Split::train) == doctest::Approx(0.5));

  // A = I makes the unsupervised loss a supervised loss with targets y.
  Eigen::VectorXd p = rng.normal_vector(4);
  Task idt;
  idt.op = make_identity({2});
  idt.train.push_back({y0, y0});
  auto ctx3 = fam2.prepare(idt);
  CHECK(unsup_loss(fam2, p, ctx3, Split::train) ==
        doctest::Approx(sup_loss(fam2, p, ctx3, Split::train)));
}

TEST_CASE("linear loss matches a dense algebra oracle") {
  Rng rng(5);
  Index n = 6;
  LinearOp op = random_dense_op(4, n, rng);
  Task task = linear_task(op, 5, 1, rng);
  LinearFamily family(n, 4);
  auto ctx = family.prepare(task);
  Eigen::VectorXd p = rng.normal_vector(family.param_count());
  Eigen::MatrixXd theta = family.unpack(p);
  double expect_sup = 0.0, expect_unsup = 0.0;
  Eigen::MatrixXd a = materialize(op);
  for (const Pair& pair : task.train) {
    Eigen::VectorXd fy = theta * pair.y.vec();
    expect_sup += 0.5 * (fy - pair.x.vec()).squaredNorm();
    expect_unsup += 0.5 * (a * fy - pair.y.vec()).squaredNorm();
  }
  CHECK(sup_loss(family, p, ctx, Split::train) == doctest::Approx(expect_sup).epsilon(1e-12));
  CHECK(unsup_loss(family, p, ctx, Split::train) ==
        doctest::Approx(expect_unsup).epsilon(1e-12));
}

TEST_CASE("unsupervised loss is blind to kernel perturbations") {
  Rng rng(7);
  Index n = 6;
  Tensor mask = random_drop_mask({n}, 0.5, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 4, 1, rng);
  LinearFamily family(n, n);
  auto ctx = family.prepare(task);
  Eigen::VectorXd p = rng.normal_vector(family.param_count());
  double base = unsup_loss(family, p, ctx, Split::train);

  Eigen::MatrixXd proj = kernel_projector(op);
  Eigen::MatrixXd theta = family.unpack(p);
  Eigen::MatrixXd kick(n, n);
  for (Index i = 0; i < n; ++i) kick.row(i) = rng.normal_vector(n).transpose();
  Eigen::MatrixXd perturbed = theta + proj * kick;  // outputs move only inside Ker(A)
  double moved = unsup_loss(family, family.pack(perturbed), ctx, Split::train);
  CHECK(std::abs(moved - base) <= 1e-12 * std::max(1.0, base));
}

TEST_CASE("adam step basics") {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 1.0);
  AdamState st = AdamState::zeros(3);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  adam_step(p, zero, st, 0.1);
  CHECK((p.array() == 1.0).all());  // zero gradient, zero moments: no motion

  // One step with constant gradient: magnitude ~ step_size in each coordinate.
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 1e-3;
  AdamState st2 = AdamState::zeros(3);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(3);
  adam_step(q, g, st2, 0.1);
  for (Index i = 0; i < 3; ++i)
    CHECK(q[i] == doctest::Approx(-0.1 * g[i] / (std::abs(g[i]) + 1e-8)).epsilon(1e-12));

  // Quadratic bowl: 500 steps land near the minimizer, matching the
  // reference recursion.
  Eigen::VectorXd target(2);
  target << 3.0, -2.0;
  auto grad = [&](const Eigen::VectorXd& x) { return (x - target).eval(); };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  AdamState st3 = AdamState::zeros(2);
  for (int t = 0; t < 500; ++t) adam_step(x, grad(x), st3, 0.1);
  CHECK((x - target).norm() <= 1e-3);
  Eigen::VectorXd ref = reference_adam(grad, Eigen::VectorXd::Zero(2), 500, 0.1);
  CHECK((x - ref).norm() <= 1e-12);
}

TEST_CASE("inner objective gradient equals the summed closed form") {
  Rng rng(11);
  Index n = 5;
  Tensor mask = random_drop_mask({n}, 0.4, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 4, 1, rng);
  LinearFamily family(n, n);
  auto ctx = family.prepare(task);
  Eigen::VectorXd phi = rng.normal_vector(family.param_count());
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  InnerConfig cfg;
  cfg.mode = LossMode::unsup;
  cfg.reg_lambda = 0.7;

  Eigen::VectorXd got = inner_objective_grad(family, phi, theta_star, ctx, cfg);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd phi_m = family.unpack(phi), star_m = family.unpack(theta_star);
  for (const Pair& pair : task.train)
    expect += linear_loss_grads(phi_m, star_m, op, pair.x, pair.y, LossMode::unsup, 0.0);
  expect += cfg.reg_lambda * (phi_m - star_m);
  CHECK((family.unpack(got) - expect).norm() <= 1e-12 * std::max(1.0, expect.norm()));

  // At phi = theta_star the proximal term contributes nothing.
  Eigen::VectorXd at_star = inner_objective_grad(family, theta_star, theta_star, ctx, cfg);
  InnerConfig noreg = cfg;
  noreg.reg_lambda = 0.0;
  Eigen::VectorXd at_star_noreg =
      inner_objective_grad(family, theta_star, theta_star, ctx, noreg);
  CHECK((at_star - at_star_noreg).norm() == 0.0);
}

TEST_CASE("inner solve: one GD step is the plain gradient step") {
  Rng rng(13);
  Index n = 4;
  LinearOp op = random_dense_op(3, n, rng);
  Task task = linear_task(op, 3, 1, rng);
  LinearFamily family(n, 3);
  auto ctx = family.prepare(task);
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  InnerConfig cfg;
  cfg.mode = LossMode::sup;
  cfg.optimizer = InnerOptimizer::gd;
  cfg.steps = 1;
  cfg.step_size = 0.05;
  cfg.reg_lambda = 0.3;
  Eigen::VectorXd theta1 = inner_solve(family, theta_star, ctx, cfg);
  Eigen::VectorXd expect =
      theta_star - cfg.step_size * inner_objective_grad(family, theta_star, theta_star, ctx, cfg);
  CHECK((theta1 - expect).norm() == 0.0);

  // steps = 0 returns the meta parameters unchanged.
  cfg.steps = 0;
  Eigen::VectorXd same = inner_solve(family, theta_star, ctx, cfg);
  CHECK((same - theta_star).norm() == 0.0);
}

TEST_CASE("huge proximal weight pins the inner solution to the meta state") {
  Rng rng(17);
  Index n = 4;
  Tensor mask = random_drop_mask({n}, 0.5, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 4, 1, rng);
  LinearFamily family(n, n);
  auto ctx = family.prepare(task);
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  InnerConfig cfg;
  cfg.mode = LossMode::unsup;
  cfg.optimizer = InnerOptimizer::gd;
  cfg.steps = 200;
  cfg.reg_lambda = 1e6;
  cfg.step_size = 0.5 / cfg.reg_lambda;  // stable for the dominant quadratic
  Eigen::VectorXd theta = inner_solve(family, theta_star, ctx, cfg);
  CHECK((theta - theta_star).norm() <= 1e-3 * (1.0 + theta_star.norm()));
}

TEST_CASE("kernel invariance along unsupervised GD iterates (dense operator)") {
  Rng rng(19);
  Index n = 12, m = 7;
  LinearOp op = random_dense_op(m, n, rng);
  Task task = linear_task(op, 6, 2, rng);
  LinearFamily family(n, m);
  auto ctx = family.prepare(task);
  Eigen::MatrixXd proj = kernel_projector(op);
  Rng prng(23);
  double norm_a = spectral_norm(op, 200, prng);

  InnerConfig cfg;
  cfg.mode = LossMode::unsup;
  cfg.optimizer = InnerOptimizer::gd;
  cfg.steps = 200;
  cfg.reg_lambda = 1.0;
  // Stable stepsize from the data/operator curvature scale.
  double y_energy = 0.0;
  for (const Pair& pair : task.train) y_energy += pair.y.flat().square().sum();
  cfg.step_size = 1.0 / (norm_a * norm_a * y_energy + cfg.reg_lambda);
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  InnerTrace trace;
  inner_solve(family, theta_star, ctx, cfg, &trace);
  Eigen::MatrixXd star_m = family.unpack(theta_star);
  double bound = 1e-8 * (1.0 + star_m.norm());
  for (const Eigen::VectorXd& theta_t : trace.thetas) {
    Eigen::MatrixXd diff = family.unpack(theta_t) - star_m;
    CHECK((proj * diff).norm() <= bound);
  }
}

TEST_CASE("kernel invariance along unsupervised Adam iterates for mask operators") {
  Rng rng(29);
  Index n = 10;
  Tensor mask = random_drop_mask({n}, 0.4, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 5, 2, rng);
  LinearFamily family(n, n);
  auto ctx = family.prepare(task);
  Eigen::MatrixXd proj = kernel_projector(op);

  InnerConfig cfg;
  cfg.mode = LossMode::unsup;
  cfg.optimizer = InnerOptimizer::adam;
  cfg.steps = 200;
  cfg.step_size = 1e-2;
  cfg.reg_lambda = 1.0;
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  InnerTrace trace;
  inner_solve(family, theta_star, ctx, cfg, &trace);
  Eigen::MatrixXd star_m = family.unpack(theta_star);
  double bound = 1e-8 * (1.0 + star_m.norm());
  for (const Eigen::VectorXd& theta_t : trace.thetas) {
    Eigen::MatrixXd diff = family.unpack(theta_t) - star_m;
    CHECK((proj * diff).norm() <= bound);
  }
}

TEST_CASE("supervised fine-tuning does adapt kernel rows") {
  // Ground-truth targets carry Ker(A) information, so the supervised inner
  // gradient has nonzero kernel rows and the iterates leave the meta state's
  // kernel component; only the measurement-consistency loss is kernel-blind.
  Rng rng(71);
  Index n = 10;
  Tensor mask = random_drop_mask({n}, 0.4, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 5, 2, rng);
  LinearFamily family(n, n);
  auto ctx = family.prepare(task);
  Eigen::MatrixXd proj = kernel_projector(op);

  InnerConfig cfg;
  cfg.mode = LossMode::sup;
  cfg.optimizer = InnerOptimizer::adam;
  cfg.steps = 50;
  cfg.step_size = 1e-2;
  cfg.reg_lambda = 1.0;
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  Eigen::VectorXd theta = inner_solve(family, theta_star, ctx, cfg);
  Eigen::MatrixXd diff = family.unpack(theta) - family.unpack(theta_star);
  CHECK((proj * diff).norm() > 1e-3);
}

TEST_CASE("hypergradient with zero inner steps is the plain outer gradient") {
  Rng rng(31);
  Index n = 4;
  LinearOp op = make_identity({n});
  Task task = linear_task(op, 3, 3, rng);
  LinearFamily family(n, n);
  std::vector<LinearFamily::TaskCtx> ctxs{family.prepare(task)};
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  InnerConfig cfg;
  cfg.steps = 0;
  Eigen::VectorXd hg = hypergradient(family, theta_star, ctxs, cfg);
  Eigen::VectorXd expect = family.grad(theta_star, ctxs[0], Split::test, LossMode::sup);
  CHECK((hg - expect).norm() == 0.0);
}

TEST_CASE("hypergradient matches finite differences: linear model, GD inner") {
  Rng rng(37);
  Index n = 5, m = 3;
  LinearOp op = random_dense_op(m, n, rng);
  Task task = linear_task(op, 4, 3, rng);
  LinearFamily family(n, m);
  std::vector<LinearFamily::TaskCtx> ctxs{family.prepare(task)};
  InnerConfig cfg;
  cfg.mode = LossMode::unsup;
  cfg.optimizer = InnerOptimizer::gd;
  cfg.steps = 5;
  cfg.step_size = 0.02;
  cfg.reg_lambda = 0.5;
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());

  Eigen::VectorXd hg = hypergradient(family, theta_star, ctxs, cfg);
  auto outer = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd theta_i = inner_solve(family, p, ctxs[0], cfg);
    return family.loss(theta_i, ctxs[0], Split::test, LossMode::sup);
  };
  Eigen::VectorXd fd = finite_diff_grad_vec(outer, theta_star, 1e-6);
  CHECK((fd - hg).norm() <= 1e-5 * std::max(1.0, hg.norm()));

  // Single GD step admits the hand-derived composite expression.
  cfg.steps = 1;
  Eigen::VectorXd hg1 = hypergradient(family, theta_star, ctxs, cfg);
  Eigen::VectorXd theta1 = inner_solve(family, theta_star, ctxs[0], cfg);
  Eigen::VectorXd outer_grad = family.grad(theta1, ctxs[0], Split::test, LossMode::sup);
  Eigen::VectorXd expect = outer_grad -
                           cfg.step_size * family.hvp(theta_star, ctxs[0], Split::train,
                                                      cfg.mode, outer_grad) -
                           cfg.step_size * cfg.reg_lambda * outer_grad +
                           cfg.step_size * cfg.reg_lambda * outer_grad;
  CHECK((hg1 - expect).norm() <= 1e-10 * std::max(1.0, expect.norm()));
}

TEST_CASE("hypergradient matches finite differences: linear model, 20 Adam steps") {
  Rng rng(41);
  Index n = 4;
  Tensor mask = random_drop_mask({n}, 0.5, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 4, 3, rng);
  LinearFamily family(n, n);
  std::vector<LinearFamily::TaskCtx> ctxs{family.prepare(task)};
  InnerConfig cfg;
  cfg.mode = LossMode::unsup;
  cfg.optimizer = InnerOptimizer::adam;
  cfg.steps = 20;
  cfg.step_size = 1e-2;
  cfg.reg_lambda = 1.0;
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());

  Eigen::VectorXd hg = hypergradient(family, theta_star, ctxs, cfg);
  auto outer = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd theta_i = inner_solve(family, p, ctxs[0], cfg);
    return family.loss(theta_i, ctxs[0], Split::test, LossMode::sup);
  };
  Eigen::VectorXd fd = finite_diff_grad_vec(outer, theta_star, 1e-6);
  CHECK((fd - hg).norm() <= 1e-5 * std::max(1.0, hg.norm()));
}

TEST_CASE("hypergradient matches finite differences: pdnet, 1 Adam step") {
  Rng rng(43);
  Index h = 8, w = 8;
  Tensor mask = random_drop_mask({h, w}, 0.3, rng);
  LinearOp op = make_mask(mask);
  PdnetFamily family(1, {h, w}, 0.5, 0.5, 8);
  Task task;
  task.op = op;
  for (int i = 0; i < 2; ++i) {
    Tensor xt = rng.uniform_tensor({h, w}, 0.0, 1.0);
    Pair pair{xt, op.apply(xt)};
    task.train.push_back(pair);
    task.test.push_back(pair);
  }
  std::vector<PdnetFamily::TaskCtx> ctxs{family.prepare(task)};
  InnerConfig cfg;
  cfg.mode = LossMode::unsup;
  cfg.optimizer = InnerOptimizer::adam;
  cfg.steps = 1;
  cfg.step_size = 1e-3;
  cfg.reg_lambda = 1.0;
  Eigen::VectorXd theta_star = family.init_params(rng);

  Eigen::VectorXd hg = hypergradient(family, theta_star, ctxs, cfg);
  auto outer = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd theta_i = inner_solve(family, p, ctxs[0], cfg);
    return family.loss(theta_i, ctxs[0], Split::test, LossMode::sup);
  };
  Eigen::VectorXd fd = finite_diff_grad_vec(outer, theta_star, 1e-6);
  CHECK((fd - hg).norm() <= 1e-3 * std::max(1.0, hg.norm()));
}

TEST_CASE("maml with an overwhelming proximal term reduces to supervised training") {
  Rng rng(47);
  Index n = 4;
  LinearOp op = make_identity({n});
  Task task = linear_task(op, 4, 4, rng);
  LinearFamily family(n, n);
  InnerConfig inner;
  inner.mode = LossMode::sup;
  inner.optimizer = InnerOptimizer::gd;
  inner.steps = 5;
  inner.reg_lambda = 1e9;
  inner.step_size = 1e-10;  // inner iterates stay at theta*
  OuterConfig outer;
  outer.epochs = 50;
  outer.step_size = 0.05;
  Rng train_rng(1);
  MetaState meta = maml_train(family, {task}, inner, outer, train_rng);

  // Equivalent ordinary supervised run on theta with the same optimizer.
  auto ctx = family.prepare(task);
  Rng init_rng = Rng(1).derive(0xA11CE);
  Eigen::VectorXd theta = family.init_params(init_rng);
  AdamState st = AdamState::zeros(theta.size());
  for (int e = 0; e < outer.epochs; ++e) {
    Eigen::VectorXd g = family.grad(theta, ctx, Split::test, LossMode::sup);
    adam_step(theta, g, st, outer.step_size);
  }
  CHECK((meta.theta_star - theta).norm() <= 1e-6 * (1.0 + theta.norm()));
}

TEST_CASE("two identical tasks give matching outer-loss trajectories") {
  Rng rng(53);
  Index n = 4;
  Tensor mask = random_drop_mask({n}, 0.4, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 4, 4, rng, "one");
  Task twin = task;
  twin.name = "two";
  LinearFamily family(n, n);
  InnerConfig inner;
  inner.mode = LossMode::unsup;
  inner.steps = 5;
  inner.step_size = 1e-2;
  inner.reg_lambda = 1.0;
  OuterConfig outer;
  outer.epochs = 30;
  outer.step_size = 1e-2;

  Rng r1(9), r2(9);
  MetaState single = maml_train(family, {task}, inner, outer, r1);
  MetaState doubled = maml_train(family, {task, twin}, inner, outer, r2);
  for (int e = 0; e < outer.epochs; ++e) {
    double a = single.history[static_cast<std::size_t>(e)].outer_loss;
    double b = doubled.history[static_cast<std::size_t>(e)].outer_loss / 2.0;
    CHECK(std::abs(a - b) <= 0.01 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("maml training is deterministic given the seed") {
  Rng rng(59);
  Index n = 4;
  Tensor mask = random_drop_mask({n}, 0.4, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 3, 3, rng);
  LinearFamily family(n, n);
  InnerConfig inner;
  inner.steps = 3;
  inner.step_size = 1e-2;
  OuterConfig outer;
  outer.epochs = 10;

  Rng r1(77), r2(77);
  MetaState a = maml_train(family, {task}, inner, outer, r1);
  MetaState b = maml_train(family, {task}, inner, outer, r2);
  CHECK((a.theta_star - b.theta_star).norm() == 0.0);
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].outer_loss == b.history[e].outer_loss);
    CHECK(a.history[e].test_psnr == b.history[e].test_psnr);
  }
}

TEST_CASE("fine tuning: zero steps, kernel invariance, loss direction") {
  Rng rng(61);
  Index n = 8;
  Tensor mask = random_drop_mask({n}, 0.4, rng);
  LinearOp op = make_mask(mask);
  Task task = linear_task(op, 5, 3, rng);
  LinearFamily family(n, n);
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());

  InnerConfig cfg;
  cfg.mode = LossMode::sup;
  cfg.steps = 0;
  FineTuneResult none = fine_tune(family, theta_star, task, cfg);
  CHECK((none.params - theta_star).norm() == 0.0);
  CHECK(none.steps.size() == 1);

  cfg.mode = LossMode::unsup;
  cfg.optimizer = InnerOptimizer::gd;
  cfg.steps = 100;
  cfg.reg_lambda = 0.0;
  double y_energy = 0.0;
  for (const Pair& pair : task.train) y_energy += pair.y.flat().square().sum();
  cfg.step_size = 1.0 / y_energy;
  FineTuneResult ft = fine_tune(family, theta_star, task, cfg);
  CHECK(ft.steps.back().inner_loss <= ft.steps.front().inner_loss);

  Eigen::MatrixXd proj = kernel_projector(op);
  Eigen::MatrixXd diff = family.unpack(ft.params) - family.unpack(theta_star);
  CHECK((proj * diff).norm() <= 1e-8 * (1.0 + theta_star.norm()));
}

TEST_CASE("divergent inner solve raises a numerical error") {
  Rng rng(67);
  Index n = 4;
  LinearOp op = make_identity({n});
  Task task = linear_task(op, 3, 1, rng);
  LinearFamily family(n, n);
  auto ctx = family.prepare(task);
  InnerConfig cfg;
  cfg.mode = LossMode::sup;
  cfg.optimizer = InnerOptimizer::gd;
  cfg.steps = 400;
  cfg.step_size = 1e6;  // wildly unstable
  Eigen::VectorXd theta_star = rng.normal_vector(family.param_count());
  CHECK_THROWS_AS(inner_solve(family, theta_star, ctx, cfg), NumericalError);
}
