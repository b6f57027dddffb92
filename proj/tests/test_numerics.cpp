#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "metainv/finite_diff.hpp"
#include "metainv/linear_op.hpp"
#include "metainv/metrics.hpp"
#include "metainv/npy.hpp"
#include "metainv/rng.hpp"
#include "metainv/tensor.hpp"

using namespace metainv;

TEST_CASE("tensor shape and flat storage agree") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  t.at2(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);
  CHECK(t.reshaped({3, 2}).size() == 6);
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(1234, 7), b(1234, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(1234, 7), d(1234, 8);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += c.next_u64() == d.next_u64();
  CHECK(same == 0);

  // Bit-identical tensors from equal (seed, stream).
  Rng e(99, 3), f(99, 3);
  Tensor te = e.normal_tensor({16, 16});
  Tensor tf = f.normal_tensor({16, 16});
  CHECK((te.flat() == tf.flat()).all());

  // Derived streams replay regardless of sibling consumption.
  Rng base(55);
  Rng g1 = base.derive(1);
  (void)base.derive(2).normal();
  Rng g1_again = Rng(55).derive(1);
  CHECK(g1.next_u64() == g1_again.next_u64());
}

TEST_CASE("rng normal moments are sane") {
  Rng rng(2024);
  double sum = 0.0, sq = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("psnr closed-form cases") {
  Tensor x = Tensor::from_list({2}, {0.0, 0.0});
  Tensor ones = Tensor::from_list({2}, {1.0, 1.0});
  CHECK(psnr(x, x, 1.0) == doctest::Approx(99.0));        // zero MSE hits the cap
  CHECK(psnr(x, ones, 1.0) == doctest::Approx(0.0));      // MSE = 1
  Tensor a = Tensor::from_list({1}, {0.1});
  Tensor b = Tensor::from_list({1}, {0.0});
  CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0));        // MSE = 0.01
  CHECK_THROWS_AS(psnr(x, Tensor({3}), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(psnr(x, x, 0.0), std::invalid_argument);
}

TEST_CASE("psnr caps for identical tensors of any content") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    Tensor x = rng.normal_tensor({7});
    CHECK(psnr(x, x, 2.5) == doctest::Approx(kPsnrCap));
  }
}

TEST_CASE("finite differences reproduce quadratic gradients") {
  Tensor x = Tensor::from_list({2}, {3.0, -1.0});
  auto half_sq = [](const Tensor& t) { return 0.5 * t.flat().square().sum(); };
  Tensor g = finite_diff_grad(half_sq, x);
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(-1.0).epsilon(1e-8));

  auto constant = [](const Tensor&) { return 4.2; };
  Tensor gz = finite_diff_grad(constant, x);
  CHECK(gz.max_abs() == 0.0);
}

TEST_CASE("finite differences match Qx on random quadratic forms") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    Index n = 5;
    Eigen::MatrixXd b(n, n);
    for (Index i = 0; i < n; ++i) b.row(i) = rng.normal_vector(n).transpose();
    Eigen::MatrixXd q = 0.5 * (b + b.transpose());
    Tensor x = rng.normal_tensor({n});
    auto f = [&](const Tensor& t) {
      Eigen::VectorXd v = t.vec();
      return 0.5 * v.dot(q * v);
    };
    Tensor g = finite_diff_grad(f, x);
    Eigen::VectorXd expect = q * x.vec();
    double rel = (g.vec() - expect).norm() / std::max(expect.norm(), 1e-12);
    CHECK(rel < 1e-7);
  }
}

TEST_CASE("spectral norm via power iteration") {
  Rng rng(7);
  CHECK(spectral_norm(make_identity({4}), 50, rng) == doctest::Approx(1.0).epsilon(1e-6));

  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  d.diagonal() << 3.0, 1.0, 0.5;
  CHECK(spectral_norm(make_dense(d), 200, rng) == doctest::Approx(3.0).epsilon(0.01));

  Tensor mask = Tensor::from_list({5}, {1, 0, 1, 1, 0});
  CHECK(spectral_norm(make_mask(mask), 100, rng) == doctest::Approx(1.0).epsilon(1e-6));

  CHECK(spectral_norm(make_dense(Eigen::MatrixXd::Zero(3, 3)), 10, rng) == 0.0);
  CHECK_THROWS_AS(spectral_norm(make_identity({2}), 0, rng), std::invalid_argument);
}

TEST_CASE("npy round trip preserves shape and bits") {
  std::filesystem::create_directories("test_tmp");
  Rng rng(11);
  Tensor t = rng.normal_tensor({3, 4, 2});
  save_npy("test_tmp/t.npy", t);
  Tensor u = load_npy("test_tmp/t.npy");
  REQUIRE(u.shape() == t.shape());
  CHECK((u.flat() == t.flat()).all());

  Tensor v = rng.normal_tensor({5});
  save_npy("test_tmp/v.npy", v);
  CHECK(load_npy("test_tmp/v.npy").shape() == Shape{5});
}
