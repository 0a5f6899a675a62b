#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <random>

#include "kedmd/errors.hpp"
#include "kedmd/kernel.hpp"
#include "kedmd/systems.hpp"
#include "support.hpp"

using namespace kedmd;
using kedmd::test::central_difference;
using kedmd::test::max_relative_error;

namespace {

WeightedKernelSum single(PrimitiveKernel p) { return WeightedKernelSum({std::move(p)}, {1.0}); }

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_SUITE("kernel_bank") {
  TEST_CASE("hand-evaluated primitive values") {
    CHECK(eval(single(PrimitiveKernel::rbf(1000.0)), vec({0, 0}), vec({0, 0})) == 1.0);
    CHECK(eval(single(PrimitiveKernel::linear(1.0)), vec({1, 2}), vec({3, 4})) == doctest::Approx(11.0));
    CHECK(eval(single(PrimitiveKernel::linear(2.0)), vec({1, 2}), vec({1, 2})) == doctest::Approx(20.0));
    CHECK(eval(single(PrimitiveKernel::cosine(0.7)), vec({0.3, -1}), vec({0.3, -1})) == 1.0);
    CHECK(eval(single(PrimitiveKernel::cosine(0.5)), vec({0}), vec({2})) == doctest::Approx(std::cos(2.0)));
    CHECK(eval(single(PrimitiveKernel::embedded_rbf(1.3)), vec({4.0}), vec({4.0})) == 1.0);
    // |h(0) - h(pi)|^2 = 4
    CHECK(eval(single(PrimitiveKernel::embedded_rbf(1.0)), vec({0.0}), vec({kPi})) ==
          doctest::Approx(std::exp(-2.0)));
  }

  TEST_CASE("NNGP closed form at hand-checked points") {
    const Vector ones = Vector::Ones(5);
    CHECK(eval_nngp(1.0, 0.0, ones, ones) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(eval_nngp(0.0, 1.0, vec({1, -2}), vec({3, 0.5})) == doctest::Approx(1.0).epsilon(1e-14));
    const Vector x = vec({1, 0, 0});
    const Vector y = vec({0, 1, 0});
    // g0(x, x) = 1/3, omega = pi/2
    CHECK(eval_nngp(1.0, 0.0, x, y) == doctest::Approx((1.0 / (2.0 * kPi)) * (1.0 / 3.0)).epsilon(1e-14));
  }

  TEST_CASE("NNGP matches a Monte Carlo average over ReLU features") {
    // Hidden unit u = b1 <v, x> / sqrt(d) + b2 z with v, z standard normal, so Cov(u_x, u_y) = g0(x, y).
    const double b1 = 1.3;
    const double b2 = 0.4;
    const Vector x = vec({0.5, -1.0, 0.8});
    const Vector y = vec({1.2, 0.1, -0.3});
    const double d = 3.0;
    std::normal_distribution<double> normal;
    std::mt19937_64 eng(11);
    double acc = 0.0;
    const int n = 400000;
    for (int s = 0; s < n; ++s) {
      Vector v(3);
      for (int k = 0; k < 3; ++k) v[k] = normal(eng);
      const double z = normal(eng);
      const double ux = b1 * v.dot(x) / std::sqrt(d) + b2 * z;
      const double uy = b1 * v.dot(y) / std::sqrt(d) + b2 * z;
      acc += std::max(ux, 0.0) * std::max(uy, 0.0);
    }
    const double expectation = acc / n;
    const double expected = b2 * b2 + b1 * b1 * expectation;
    CHECK(eval_nngp(b1, b2, x, y) == doctest::Approx(expected).epsilon(1e-2));
  }

  TEST_CASE("RBF Gram on two scalar points") {
    Matrix A(2, 1);
    A << 0.0, 1.0;
    const Matrix G = gram(single(PrimitiveKernel::rbf(1.0)), A, A);
    CHECK(G(0, 0) == 1.0);
    CHECK(G(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-11));
    CHECK(G(1, 0) == G(0, 1));
  }

  TEST_CASE("equal weights give the plain average of primitives") {
    std::vector<PrimitiveKernel> p = {PrimitiveKernel::rbf(1.0), PrimitiveKernel::linear(1.0),
                                      PrimitiveKernel::nngp(1.0, 0.5), PrimitiveKernel::rbf(3.0)};
    const WeightedKernelSum k(p, {0.25, 0.25, 0.25, 0.25});
    const Vector x = vec({0.4, -0.2});
    const Vector y = vec({1.0, 0.3});
    double expected = 0.0;
    for (const auto& q : p) expected += 0.0625 * q(x, y);
    CHECK(eval(k, x, y) == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("symmetry is exact for every kind") {
    RandomStream rng(5, {2});
    for (int draw = 0; draw < 200; ++draw) {
      const WeightedKernelSum k = kedmd::test::random_kernel(rng);
      const Matrix P = kedmd::test::random_points(rng, 2, 3);
      CHECK(eval(k, P.row(0).transpose(), P.row(1).transpose()) ==
            eval(k, P.row(1).transpose(), P.row(0).transpose()));
    }
    RandomStream r2(6, {2});
    const WeightedKernelSum k = kedmd::test::random_kernel(r2);
    const Matrix A = kedmd::test::random_points(r2, 7, 2);
    const Matrix B = kedmd::test::random_points(r2, 4, 2);
    CHECK((gram(k, A, B) - gram(k, B, A).transpose()).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("scaling all outer weights leaves the kernel unchanged") {
    RandomStream rng(7, {3});
    for (int draw = 0; draw < 100; ++draw) {
      const WeightedKernelSum k = kedmd::test::random_kernel(rng);
      const double c = rng.uniform() < 0.5 ? -rng.uniform(0.01, 100.0) : rng.uniform(0.01, 100.0);
      std::vector<double> w = k.weights();
      for (auto& v : w) v *= c;
      const WeightedKernelSum scaled(k.primitives(), w);
      const Matrix P = kedmd::test::random_points(rng, 2, 2);
      const double a = eval(k, P.row(0).transpose(), P.row(1).transpose());
      const double b = eval(scaled, P.row(0).transpose(), P.row(1).transpose());
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }

  TEST_CASE("analytic partials match central differences") {
    RandomStream rng(9, {4});
    double worst = 0.0;
    for (int draw = 0; draw < 150; ++draw) {
      const WeightedKernelSum k = kedmd::test::random_kernel(rng);
      const Matrix P = kedmd::test::random_points(rng, 2, 3);
      const Vector x = P.row(0).transpose();
      const Vector y = P.row(1).transpose();
      const Vector analytic = grad_params(k, x, y).flatten();
      const Vector numeric = central_difference([&](const Vector& t) { return eval(k.with_parameters(t), x, y); },
                                                k.parameters());
      worst = std::max(worst, max_relative_error(analytic, numeric, 1e-6 * std::max(1.0, numeric.norm())));
    }
    CHECK(worst <= 1e-5);
  }

  TEST_CASE("single-primitive gradients that vanish analytically") {
    const Vector x = vec({0.3, 0.9});
    const auto g = grad_params(single(PrimitiveKernel::rbf(2.0)), x, x);
    CHECK(g.inner[0][0] == 0.0);
    const Vector y = vec({-1.0, 0.2});
    const auto h = grad_params(WeightedKernelSum({PrimitiveKernel::rbf(2.0)}, {3.7}), x, y);
    CHECK(h.outer[0] == doctest::Approx(0.0).scale(1.0));
  }

  TEST_CASE("gram_vjp equals the brute-force sum of entry gradients") {
    RandomStream rng(10, {5});
    for (int draw = 0; draw < 20; ++draw) {
      const WeightedKernelSum k = kedmd::test::random_kernel(rng);
      const Matrix A = kedmd::test::random_points(rng, 5, 2);
      const Matrix B = kedmd::test::random_points(rng, 3, 2);
      const Matrix C = kedmd::test::random_points(rng, 5, 3);
      Vector brute = Vector::Zero(static_cast<Eigen::Index>(k.num_parameters()));
      for (Eigen::Index i = 0; i < 5; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
          brute += C(i, j) * grad_params(k, A.row(i).transpose(), B.row(j).transpose()).flatten();
        }
      }
      CHECK((gram_vjp(k, A, B, C) - brute).norm() <= 1e-12 * std::max(1.0, brute.norm()));
    }
  }

  TEST_CASE("PSD spot check without the cosine primitive") {
    RandomStream rng(12, {6});
    for (int draw = 0; draw < 50; ++draw) {
      const WeightedKernelSum k = kedmd::test::random_kernel(rng, false);
      const Matrix A = kedmd::test::random_points(rng, static_cast<Eigen::Index>(2 + rng.below(19)), 2);
      const Matrix G = gram(k, A, A);
      Eigen::SelfAdjointEigenSolver<Matrix> es(G);
      CHECK(es.eigenvalues().minCoeff() >= -1e-8 * G.norm());
    }
  }

  TEST_CASE("embedded RBF is 2 pi periodic") {
    const WeightedKernelSum k = single(PrimitiveKernel::embedded_rbf(0.8));
    RandomStream rng(13, {7});
    for (int draw = 0; draw < 50; ++draw) {
      const double x = rng.uniform(0.0, kTwoPi);
      const double y = rng.uniform(0.0, kTwoPi);
      CHECK(std::abs(eval(k, vec({x}), vec({y})) - eval(k, vec({x + kTwoPi}), vec({y}))) <= 1e-12);
    }
  }

  TEST_CASE("degenerate and invalid kernels are rejected") {
    const WeightedKernelSum zero({PrimitiveKernel::rbf(1.0)}, {0.0});
    CHECK_THROWS_AS((void)zero.normalized_weights(), DegenerateKernel);
    CHECK_THROWS_AS(PrimitiveKernel::make(KernelKind::Nngp, {1.0}), InvalidArgument);
    const auto skew =
        PrimitiveKernel::custom("skew", [](const VecRef& x, const VecRef& y) { return x[0] - 2.0 * y[0]; }, 1);
    CHECK_THROWS_AS(WeightedKernelSum({skew}, {1.0}), DegenerateKernel);
    const auto sym = PrimitiveKernel::custom("dot", [](const VecRef& x, const VecRef& y) { return x.dot(y); }, 2);
    CHECK(eval(single(sym), vec({1, 2}), vec({3, 4})) == doctest::Approx(11.0));
  }

  TEST_CASE("non-finite primitive values report the primitive index") {
    const WeightedKernelSum k({PrimitiveKernel::rbf(1.0), PrimitiveKernel::linear(1.0)}, {1.0, 1.0});
    const Vector x = vec({std::numeric_limits<double>::infinity()});
    try {
      (void)eval(k, x, x);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(e.primitive() >= 0);
    }
  }

  TEST_CASE("pruning policies") {
    std::vector<PrimitiveKernel> p(4, PrimitiveKernel::rbf(1.0));
    p[0] = PrimitiveKernel::embedded_rbf(1.0);
    const WeightedKernelSum mod(p, {-6.040, -0.925, -0.023, 0.876});
    CHECK(KeepPolicy::largest(1).select(mod) == std::vector<std::size_t>{0});
    CHECK(KeepPolicy::threshold(0.0).select(mod) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(KeepPolicy::drop_smallest(1).select(mod) == std::vector<std::size_t>{0, 1, 3});
    CHECK_THROWS_AS((void)KeepPolicy::threshold(7.0).select(mod), InvalidArgument);
    const WeightedKernelSum pruned = prune(mod, KeepPolicy::largest(1));
    CHECK(pruned.size() == 1);
    CHECK(pruned.weights()[0] == -6.040);
    CHECK(pruned.primitives()[0].kind() == KernelKind::EmbeddedRbf);

    const WeightedKernelSum kse(std::vector<PrimitiveKernel>(6, PrimitiveKernel::rbf(1.0)),
                                {0.267, 1.149, 0.356, -0.0273, 0.210, 1.691});
    CHECK(KeepPolicy::largest(2).select(kse) == std::vector<std::size_t>{1, 5});
  }

  TEST_CASE("parameter vector round trip") {
    RandomStream rng(14, {8});
    const WeightedKernelSum k = kedmd::test::random_kernel(rng);
    const Vector t = k.parameters();
    CHECK(k.with_parameters(t).parameters() == t);
    CHECK(static_cast<std::size_t>(t.size()) == k.num_parameters());
  }
}
