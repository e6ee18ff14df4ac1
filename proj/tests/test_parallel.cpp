#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prewarp/bench.hpp"
#include "prewarp/local.hpp"
#include "prewarp/ref.hpp"
#include "prewarp/sensitivity.hpp"
#include "prewarp/warp.hpp"

#include <cmath>

// The OpenMP kernels must agree with their serial reference implementations
// exactly: identical per-element operations, deterministic reduction order.

using namespace prewarp;

namespace {

KernelSpec random_sep_spec(int p, Rng& rng, double nugget) {
  Vector l(p);
  for (int k = 0; k < p; ++k) l[k] = 0.1 + rng.uniform();
  return KernelSpec::separable(l, 0.5 + rng.uniform(), nugget);
}

}  // namespace

TEST_CASE("kernel_matrix matches the serial reference bit for bit") {
  Rng rng(1);
  for (Index n : {1, 17, 130, 400}) {
    Matrix X = lhs_sample(n, 5, static_cast<std::uint64_t>(n));
    KernelSpec spec = random_sep_spec(5, rng, 1e-5);
    Matrix a = kernel_matrix(X, spec, true);
    Matrix b = ref::kernel_matrix(X, spec, true);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gradient outer-product averaging matches the serial reference") {
  Rng rng(2);
  const Index n = 120;
  Matrix X = lhs_sample(n, 4, 9);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = std::sin(4.0 * X(i, 0)) + X(i, 1) * X(i, 2);
  GPModel model = GPModel::from_spec(X, y, random_sep_spec(4, rng, 1e-4), 0.0);

  SUBCASE("sample measure") {
    MeasureSpec measure;
    measure.kind = MeasureKind::sample;
    Matrix a = estimate_C(model, measure).C;
    Matrix b = ref::average_gradient_outer(model, X);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("monte carlo measure") {
    MeasureSpec measure;
    measure.kind = MeasureKind::lebesgue;
    measure.n_mc = 300;
    measure.seed = 5;
    Matrix a = estimate_C(model, measure).C;
    // regenerate the identical draw stream, then run the serial path
    Rng draws(mix_seed(measure.seed, 0x3C0));
    Matrix points(measure.n_mc, 4);
    for (Index i = 0; i < points.rows(); ++i)
      for (int k = 0; k < 4; ++k) points(i, k) = draws.uniform();
    Matrix b = ref::average_gradient_outer(model, points);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("knn batch prediction matches the serial reference") {
  Rng rng(3);
  const Index n = 800, m = 60;
  Matrix Z = lhs_sample(n, 6, 21);
  Matrix Q = lhs_sample(m, 6, 22);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.normal();
  for (int k : {1, 7, 25}) {
    Vector a = knn_predict_batch(Z, y, Q, k);
    Vector b = ref::knn_predict_batch(Z, y, Q, k);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("vecchia log likelihood matches the serial reference") {
  Rng rng(4);
  const Index n = 350;
  Matrix Z = lhs_sample(n, 3, 31);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = std::cos(3.0 * Z(i, 0)) + 0.5 * Z(i, 1);
  KernelSpec spec = random_sep_spec(3, rng, 1e-3);
  for (auto ordering : {VecchiaOrdering::maxmin, VecchiaOrdering::coordinate}) {
    std::vector<Index> order = ordering == VecchiaOrdering::maxmin ? maxmin_ordering(Z)
                                                                   : coordinate_ordering(Z);
    auto cond = earlier_neighbor_sets(Z, order, 15);
    const double a = vecchia_loglik(Z, y, order, cond, spec, 0.3);
    const double b = ref::vecchia_loglik(Z, y, order, cond, spec, 0.3);
    CHECK(a == b);
  }
}

TEST_CASE("leave-one-out knn mse matches the serial reference") {
  const Index n = 500;
  Matrix Z = lhs_sample(n, 5, 41);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = std::sin(2.0 * Z(i, 0)) + Z(i, 3);
  for (int r : {1, 3, 5}) {
    const double a = loo_knn_mse(Z, y, r, 10);
    const double b = ref::loo_knn_mse(Z, y, r, 10);
    CHECK(a == b);
  }
}
