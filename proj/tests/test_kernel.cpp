#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prewarp/kernel.hpp"

#include <cmath>

using namespace prewarp;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix random_design(Index n, int p, Rng& rng) {
  Matrix X(n, p);
  for (Index i = 0; i < n; ++i)
    for (int k = 0; k < p; ++k) X(i, k) = rng.uniform();
  return X;
}

KernelSpec random_spec(int p, Rng& rng) {
  Vector l(p);
  for (int k = 0; k < p; ++k) l[k] = 0.05 + 2.0 * rng.uniform();
  return KernelSpec::separable(l, 0.5 + 2.0 * rng.uniform(), 0.0);
}

}  // namespace

TEST_CASE("kernel_eval matches closed forms") {
  SUBCASE("zero distance gives the signal variance") {
    KernelSpec spec = KernelSpec::separable(vec({0.3, 1.7, 0.9}), 2.5, 0.1);
    Vector x = vec({0.2, 0.4, 0.9});
    CHECK(kernel_eval(x, x, spec) == doctest::Approx(2.5).epsilon(1e-14));
  }
  SUBCASE("unit lengthscale, unit distance") {
    KernelSpec spec = KernelSpec::separable(vec({1.0}), 1.0, 0.0);
    CHECK(kernel_eval(vec({0.0}), vec({1.0}), spec) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }
  SUBCASE("two dimensions, distinct lengthscales") {
    KernelSpec spec = KernelSpec::separable(vec({1.0, 4.0}), 2.0, 0.0);
    CHECK(kernel_eval(vec({0.0, 0.0}), vec({1.0, 2.0}), spec) ==
          doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch is a contract violation") {
    KernelSpec spec = KernelSpec::separable(vec({1.0, 1.0}), 1.0, 0.0);
    CHECK_THROWS_AS(kernel_eval(vec({0.0}), vec({0.0, 1.0}), spec), ContractError);
  }
}

TEST_CASE("kernel_eval is symmetric in its arguments") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    KernelSpec spec = random_spec(3, rng);
    Vector x = vec({rng.uniform(), rng.uniform(), rng.uniform()});
    Vector y = vec({rng.uniform(), rng.uniform(), rng.uniform()});
    CHECK(kernel_eval(x, y, spec) == kernel_eval(y, x, spec));
  }
}

TEST_CASE("isotropic family equals separable with shared lengthscale") {
  Rng rng(12);
  KernelSpec iso = KernelSpec::isotropic(3, 0.7, 1.3, 0.0);
  KernelSpec sep = KernelSpec::separable(vec({0.7, 0.7, 0.7}), 1.3, 0.0);
  for (int t = 0; t < 20; ++t) {
    Vector x = vec({rng.uniform(), rng.uniform(), rng.uniform()});
    Vector y = vec({rng.uniform(), rng.uniform(), rng.uniform()});
    CHECK(kernel_eval(x, y, iso) == kernel_eval(x, y, sep));
  }
}

TEST_CASE("KernelSpec validation") {
  CHECK_THROWS_AS(KernelSpec::separable(vec({1.0, -1.0}), 1.0, 0.0), ContractError);
  CHECK_THROWS_AS(KernelSpec::separable(vec({1.0}), 0.0, 0.0), ContractError);
  CHECK_THROWS_AS(KernelSpec::separable(vec({1.0}), 1.0, -0.5), ContractError);
  KernelSpec broken = KernelSpec::separable(vec({1.0, 2.0}), 1.0, 0.0);
  broken.family = KernelFamily::isotropic_gaussian;
  CHECK_THROWS_AS(broken.validate(), ContractError);
}

TEST_CASE("kernel_matrix closed forms and brute-force oracle") {
  SUBCASE("single point") {
    Matrix X(1, 2);
    X << 0.3, 0.4;
    KernelSpec spec = KernelSpec::separable(vec({1.0, 1.0}), 1.9, 0.0);
    Matrix K = kernel_matrix(X, spec, false);
    REQUIRE(K.rows() == 1);
    CHECK(K(0, 0) == doctest::Approx(1.9).epsilon(1e-14));
  }
  SUBCASE("two identical rows with nugget") {
    Matrix X(2, 2);
    X << 0.1, 0.2, 0.1, 0.2;
    KernelSpec spec = KernelSpec::separable(vec({1.0, 1.0}), 2.0, 0.25);
    Matrix K = kernel_matrix(X, spec, true);
    CHECK(K(0, 0) == doctest::Approx(2.25).epsilon(1e-14));
    CHECK(K(1, 1) == doctest::Approx(2.25).epsilon(1e-14));
    CHECK(K(0, 1) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(K(1, 0) == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("random 5x2 design equals the entry-wise loop") {
    Rng rng(21);
    Matrix X = random_design(5, 2, rng);
    KernelSpec spec = random_spec(2, rng);
    spec.nugget = 0.1;
    Matrix K = kernel_matrix(X, spec, true);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j) {
        double expect = kernel_eval(X.row(i).transpose(), X.row(j).transpose(), spec);
        if (i == j) expect += spec.nugget;
        CHECK(K(i, j) == doctest::Approx(expect).epsilon(1e-14));
      }
  }
}

TEST_CASE("nugget-augmented kernel matrices factorize up to n=500") {
  Rng rng(31);
  for (Index n : {50, 200, 500}) {
    Matrix X = random_design(n, 3, rng);
    KernelSpec spec = random_spec(3, rng);
    spec.nugget = 1e-6 * spec.signal_variance;
    CholFactor chol = jittered_llt(kernel_matrix(X, spec, true), spec.signal_variance);
    CHECK(chol.jitter == 0.0);
    Matrix K = kernel_matrix(X, spec, true);
    const double rel =
        (chol.lower * chol.lower.transpose() - K).norm() / K.norm();
    CHECK(rel < 1e-12);
  }
}

TEST_CASE("jitter escalation recovers exactly singular matrices") {
  Matrix X(2, 1);
  X << 0.5, 0.5;  // duplicated point, nugget 0
  KernelSpec spec = KernelSpec::separable(vec({1.0}), 1.0, 0.0);
  CholFactor chol = jittered_llt(kernel_matrix(X, spec, true), spec.signal_variance);
  CHECK(chol.jitter > 0.0);
  CHECK(chol.jitter <= 1e-4 * spec.signal_variance * (1.0 + 1e-12));
}

TEST_CASE("grad_cross_kernel analytic forms") {
  SUBCASE("coincident point gives a zero column") {
    Matrix X(3, 2);
    X << 0.5, 0.5, 0.1, 0.9, 0.5, 0.5;
    KernelSpec spec = KernelSpec::separable(vec({0.4, 0.8}), 1.5, 0.0);
    Vector x_star = vec({0.5, 0.5});
    Matrix G = grad_cross_kernel(x_star, X, spec);
    CHECK(G.col(0).norm() == doctest::Approx(0.0));
    CHECK(G.col(2).norm() == doctest::Approx(0.0));
    CHECK(G.col(1).norm() > 0.0);
  }
  SUBCASE("1-d sign and magnitude") {
    Matrix X(1, 1);
    X << 1.0;
    KernelSpec spec = KernelSpec::separable(vec({1.0}), 1.0, 0.0);
    Matrix G = grad_cross_kernel(vec({0.0}), X, spec);
    CHECK(G(0, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }
}

TEST_CASE("grad_cross_kernel matches central finite differences") {
  Rng rng(41);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + static_cast<int>(rng.below(4));
    const Index n = 1 + rng.below(6);
    Matrix X = random_design(n, p, rng);
    KernelSpec spec = random_spec(p, rng);
    Vector x_star(p);
    for (int k = 0; k < p; ++k) x_star[k] = rng.uniform();

    Matrix G = grad_cross_kernel(x_star, X, spec);
    Matrix FD(p, n);
    for (int k = 0; k < p; ++k) {
      Vector xp = x_star, xm = x_star;
      xp[k] += h;
      xm[k] -= h;
      for (Index j = 0; j < n; ++j)
        FD(k, j) = (kernel_eval(xp, X.row(j).transpose(), spec) -
                    kernel_eval(xm, X.row(j).transpose(), spec)) /
                   (2.0 * h);
    }
    const double rel = (FD - G).norm() / std::max(G.norm(), 1e-12);
    CHECK(rel < 1e-6);
  }
}

TEST_CASE("grad_prior_cov closed forms and finite differences") {
  SUBCASE("unit case") {
    KernelSpec spec = KernelSpec::separable(vec({1.0, 1.0}), 1.0, 0.0);
    Matrix D = grad_prior_cov(vec({0.2, 0.8}), spec);
    CHECK((D - Matrix::Identity(2, 2)).norm() == doctest::Approx(0.0));
  }
  SUBCASE("scaled case") {
    KernelSpec spec = KernelSpec::separable(vec({0.5, 2.0}), 3.0, 0.0);
    Matrix D = grad_prior_cov(vec({0.0, 0.0}), spec);
    CHECK(D(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(D(1, 1) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(D(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("second-order finite differences around zero lag") {
    Rng rng(51);
    for (int trial = 0; trial < 20; ++trial) {
      const int p = 1 + static_cast<int>(rng.below(3));
      KernelSpec spec = random_spec(p, rng);
      Vector x(p);
      for (int k = 0; k < p; ++k) x[k] = rng.uniform();
      Matrix D = grad_prior_cov(x, spec);
      // mixed partial d^2 k(a, b) / da_k db_l at a = b = x
      Matrix FD(p, p);
      for (int k = 0; k < p; ++k)
        for (int l = 0; l < p; ++l) {
          const double hk = 1e-3 * std::sqrt(spec.lengthscales[k]);
          const double hl = 1e-3 * std::sqrt(spec.lengthscales[l]);
          auto f = [&](double a, double b) {
            Vector xa = x, xb = x;
            xa[k] += a;
            xb[l] += b;
            return kernel_eval(xa, xb, spec);
          };
          FD(k, l) = (f(hk, hl) - f(hk, -hl) - f(-hk, hl) + f(-hk, -hl)) / (4.0 * hk * hl);
        }
      const double rel = (FD - D).norm() / D.norm();
      CHECK(rel < 1e-4);
    }
  }
}
