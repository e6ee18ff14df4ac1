#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prewarp/gp.hpp"

#include <cmath>

using namespace prewarp;

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;

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

// unit-variance GP draw with small jitter; test-only simulation oracle
Vector gp_draw(const Matrix& X, const KernelSpec& spec, Rng& rng) {
  Matrix K = kernel_matrix(X, spec, false);
  K.diagonal().array() += 1e-10 * spec.signal_variance;
  Eigen::LLT<Matrix> llt(K);
  REQUIRE(llt.info() == Eigen::Success);
  Vector z(X.rows());
  for (Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return Matrix(llt.matrixL()) * z;
}

// direct 2x2 multivariate normal log density, independent of the library path
double lml_2x2_oracle(const KernelSpec& spec, double beta0, const Matrix& X, const Vector& y) {
  const double k00 = kernel_eval(X.row(0).transpose(), X.row(0).transpose(), spec) + spec.nugget;
  const double k11 = kernel_eval(X.row(1).transpose(), X.row(1).transpose(), spec) + spec.nugget;
  const double k01 = kernel_eval(X.row(0).transpose(), X.row(1).transpose(), spec);
  const double det = k00 * k11 - k01 * k01;
  const double r0 = y[0] - beta0, r1 = y[1] - beta0;
  const double quad = (k11 * r0 * r0 - 2.0 * k01 * r0 * r1 + k00 * r1 * r1) / det;
  return -0.5 * quad - 0.5 * std::log(det) - std::log(2.0 * M_PI);
}

}  // namespace

TEST_CASE("log marginal likelihood closed forms") {
  SUBCASE("single standardized observation") {
    Matrix X(1, 1);
    X << 0.5;
    KernelSpec spec = KernelSpec::separable(vec({1.0}), 0.6, 0.4);  // total variance 1
    const double beta0 = 1.7;
    CHECK(log_marginal_likelihood(spec, beta0, X, vec({1.7})) ==
          doctest::Approx(-kHalfLog2Pi).epsilon(1e-12));
  }
  SUBCASE("two observations against the explicit 2x2 density") {
    Rng rng(7);
    for (int t = 0; t < 25; ++t) {
      Matrix X = random_design(2, 2, rng);
      KernelSpec spec = KernelSpec::separable(vec({0.2 + rng.uniform(), 0.2 + rng.uniform()}),
                                              0.5 + rng.uniform(), 0.05 + 0.2 * rng.uniform());
      Vector y = vec({rng.normal(), rng.normal()});
      const double beta0 = rng.normal();
      CHECK(log_marginal_likelihood(spec, beta0, X, y) ==
            doctest::Approx(lml_2x2_oracle(spec, beta0, X, y)).epsilon(1e-10));
    }
  }
  SUBCASE("joint permutation of rows leaves the value unchanged") {
    Rng rng(8);
    Matrix X = random_design(6, 2, rng);
    Vector y(6);
    for (Index i = 0; i < 6; ++i) y[i] = rng.normal();
    KernelSpec spec = KernelSpec::separable(vec({0.4, 0.9}), 1.2, 0.02);
    const double base = log_marginal_likelihood(spec, 0.3, X, y);
    std::vector<Index> perm{3, 1, 5, 0, 2, 4};
    Matrix Xp(6, 2);
    Vector yp(6);
    for (Index i = 0; i < 6; ++i) {
      Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
      yp[i] = y[perm[static_cast<std::size_t>(i)]];
    }
    CHECK(log_marginal_likelihood(spec, 0.3, Xp, yp) == doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("fit_gp on a constant response predicts that constant") {
  Rng rng(9);
  Matrix X = random_design(25, 2, rng);
  Vector y = Vector::Constant(25, 4.2);
  GPModel model = fit_gp(X, y);
  Matrix Xq = random_design(10, 2, rng);
  PredictiveDist pred = predict(model, Xq, true);
  for (Index i = 0; i < 10; ++i) CHECK(std::abs(pred.mean[i] - 4.2) < 1e-6);
}

TEST_CASE("fit_gp recovers the lengthscale ordering of a known draw") {
  // responses drawn from a GP that wiggles fast along dim 1, slowly along dim 2
  int hits = 0;
  const int n_seeds = 10;
  for (int seed = 0; seed < n_seeds; ++seed) {
    Rng rng(1000 + seed);
    Matrix X = random_design(300, 2, rng);
    KernelSpec truth = KernelSpec::separable(vec({0.2, 5.0}), 1.0, 0.0);
    Vector y = gp_draw(X, truth, rng);
    FitConfig fc;
    fc.n_starts = 2;
    fc.max_iters = 40;
    fc.seed = static_cast<std::uint64_t>(seed);
    GPModel model = fit_gp(X, y, fc);
    if (model.spec.lengthscales[0] < model.spec.lengthscales[1]) ++hits;
  }
  CHECK(hits >= 9);
}

TEST_CASE("doubling the responses rescales the fitted variance by four") {
  Rng rng(10);
  Matrix X = random_design(40, 2, rng);
  Vector y(40);
  for (Index i = 0; i < 40; ++i)
    y[i] = std::sin(6.0 * X(i, 0)) + 0.3 * X(i, 1) + 0.05 * rng.normal();
  FitConfig fc;
  fc.n_starts = 3;
  fc.max_iters = 50;
  fc.seed = 77;
  GPModel m1 = fit_gp(X, y, fc);
  GPModel m2 = fit_gp(X, Vector(2.0 * y), fc);
  // standardized responses are identical, so the search path is too
  CHECK((m1.spec.lengthscales - m2.spec.lengthscales).norm() == doctest::Approx(0.0));
  CHECK(m2.spec.signal_variance ==
        doctest::Approx(4.0 * m1.spec.signal_variance).epsilon(1e-10));
  CHECK(m2.spec.nugget == doctest::Approx(4.0 * m1.spec.nugget).epsilon(1e-10));
}

TEST_CASE("GPModel invariants hold after a fit") {
  Rng rng(11);
  Matrix X = random_design(50, 2, rng);
  Vector y(50);
  for (Index i = 0; i < 50; ++i) y[i] = std::cos(4.0 * X(i, 0)) * X(i, 1) + 0.01 * rng.normal();
  GPModel model = fit_gp(X, y);
  Matrix K = kernel_matrix(X, model.spec, true);
  K.diagonal().array() += model.chol.jitter;
  CHECK((model.chol.lower * model.chol.lower.transpose() - K).norm() / K.norm() < 1e-8);
  Vector resid = (y.array() - model.beta0).matrix();
  CHECK((K * model.alpha - resid).norm() < 1e-8 * y.norm());
}

TEST_CASE("predict interpolates with a zero nugget") {
  Rng rng(12);
  Matrix X = random_design(20, 2, rng);
  Vector y(20);
  for (Index i = 0; i < 20; ++i) y[i] = std::sin(3.0 * X(i, 0)) + X(i, 1);
  KernelSpec spec = KernelSpec::separable(vec({0.3, 0.3}), 1.0, 0.0);
  GPModel model = GPModel::from_spec(X, y, spec, 0.0);
  PredictiveDist pred = predict(model, X, false);
  for (Index i = 0; i < 20; ++i) {
    CHECK(std::abs(pred.mean[i] - y[i]) < 1e-8);
    CHECK(pred.variance[i] < 1e-8);
  }
}

TEST_CASE("predict reverts to the prior far from the data") {
  Matrix X(5, 2);
  X << 0.1, 0.1, 0.2, 0.7, 0.5, 0.5, 0.8, 0.3, 0.9, 0.9;
  Vector y = vec({1.0, 2.0, 3.0, 2.0, 1.0});
  KernelSpec spec = KernelSpec::separable(vec({0.2, 0.2}), 1.7, 0.01);
  GPModel model = GPModel::from_spec(X, y, spec, 0.5);
  Matrix far(1, 2);
  far << 40.0, -35.0;
  PredictiveDist pred = predict(model, far, false);
  CHECK(std::abs(pred.mean[0] - 0.5) < 1e-6);
  CHECK(std::abs(pred.variance[0] - 1.7) < 1e-6);
}

TEST_CASE("predict matches the explicit 2x2 conditioning formulas") {
  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    Matrix X = random_design(2, 1, rng);
    Vector y = vec({rng.normal(), rng.normal()});
    KernelSpec spec = KernelSpec::separable(vec({0.3 + rng.uniform()}), 0.5 + rng.uniform(),
                                            0.01 + 0.1 * rng.uniform());
    const double beta0 = rng.normal();
    GPModel model = GPModel::from_spec(X, y, spec, beta0);
    Vector xq = vec({rng.uniform()});
    Matrix Xq(1, 1);
    Xq.row(0) = xq.transpose();
    PredictiveDist pred = predict(model, Xq, false);

    const double k00 = spec.signal_variance + spec.nugget;
    const double k11 = k00;
    const double k01 = kernel_eval(X.row(0).transpose(), X.row(1).transpose(), spec);
    const double det = k00 * k11 - k01 * k01;
    const double kq0 = kernel_eval(xq, X.row(0).transpose(), spec);
    const double kq1 = kernel_eval(xq, X.row(1).transpose(), spec);
    // K^-1 via the adjugate
    const double a0 = (k11 * (y[0] - beta0) - k01 * (y[1] - beta0)) / det;
    const double a1 = (-k01 * (y[0] - beta0) + k00 * (y[1] - beta0)) / det;
    const double mean = beta0 + kq0 * a0 + kq1 * a1;
    const double var = spec.signal_variance -
                       (kq0 * (k11 * kq0 - k01 * kq1) + kq1 * (-k01 * kq0 + k00 * kq1)) / det;
    CHECK(pred.mean[0] == doctest::Approx(mean).epsilon(1e-10));
    CHECK(pred.variance[0] == doctest::Approx(var).epsilon(1e-8));
  }
}

TEST_CASE("predictive variance never exceeds the prior variance") {
  Rng rng(14);
  for (int t = 0; t < 20; ++t) {
    Matrix X = random_design(30, 2, rng);
    Vector y(30);
    for (Index i = 0; i < 30; ++i) y[i] = rng.normal();
    KernelSpec spec = KernelSpec::separable(vec({0.1 + rng.uniform(), 0.1 + rng.uniform()}),
                                            0.5 + rng.uniform(), 0.05 * rng.uniform());
    GPModel model = GPModel::from_spec(X, y, spec, 0.0);
    Matrix Xq = random_design(50, 2, rng);
    PredictiveDist pred = predict(model, Xq, true);
    for (Index i = 0; i < 50; ++i)
      CHECK(pred.variance[i] <= spec.signal_variance + spec.nugget + 1e-10);
  }
}

TEST_CASE("gradient posterior of an empty model is the prior") {
  KernelSpec spec = KernelSpec::separable(vec({0.5, 2.0}), 3.0, 0.0);
  GPModel model = GPModel::prior(spec, 1.0);
  GradientPosterior g = gradient_posterior(model, vec({0.3, 0.3}));
  CHECK(g.mean.norm() == doctest::Approx(0.0));
  CHECK(g.cov(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(g.cov(1, 1) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(std::abs(g.cov(0, 1)) < 1e-14);

  PredictiveDist pred = predict(model, Matrix::Constant(1, 2, 0.5), false);
  CHECK(pred.mean[0] == doctest::Approx(1.0));
  CHECK(pred.variance[0] == doctest::Approx(3.0));
}

TEST_CASE("gradient posterior mean matches finite differences of the predictive mean") {
  Rng rng(15);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + static_cast<int>(rng.below(3));
    const Index n = 8 + rng.below(12);
    Matrix X = random_design(n, p, rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = rng.normal();
    Vector l(p);
    for (int k = 0; k < p; ++k) l[k] = 0.1 + rng.uniform();
    KernelSpec spec = KernelSpec::separable(l, 0.5 + rng.uniform(), 0.01 + 0.05 * rng.uniform());
    GPModel model = GPModel::from_spec(X, y, spec, 0.2);
    Vector x_star(p);
    for (int k = 0; k < p; ++k) x_star[k] = rng.uniform();

    GradientPosterior g = gradient_posterior(model, x_star);
    Vector fd(p);
    for (int k = 0; k < p; ++k) {
      Matrix xp(1, p), xm(1, p);
      xp.row(0) = x_star.transpose();
      xm.row(0) = x_star.transpose();
      xp(0, k) += h;
      xm(0, k) -= h;
      fd[k] = (predict(model, xp, false).mean[0] - predict(model, xm, false).mean[0]) / (2.0 * h);
    }
    CHECK((fd - g.mean).norm() / std::max(g.mean.norm(), 1e-10) < 1e-4);
  }
}

TEST_CASE("gradient posterior covariance is PSD up to roundoff") {
  Rng rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + static_cast<int>(rng.below(4));
    const Index n = 5 + rng.below(20);
    Matrix X = random_design(n, p, rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = rng.normal();
    Vector l(p);
    for (int k = 0; k < p; ++k) l[k] = 0.05 + rng.uniform();
    KernelSpec spec = KernelSpec::separable(l, 0.5 + rng.uniform(), 0.001 + 0.05 * rng.uniform());
    GPModel model = GPModel::from_spec(X, y, spec, 0.0);
    Vector x_star(p);
    for (int k = 0; k < p; ++k) x_star[k] = rng.uniform();
    GradientPosterior g = gradient_posterior(model, x_star);
    CHECK((g.cov - g.cov.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g.cov);
    const double lmax = eig.eigenvalues().maxCoeff();
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * std::max(lmax, 1e-12));
  }
}

TEST_CASE("large artificial jitter lowers the likelihood of smooth data") {
  Rng rng(17);
  Matrix X = random_design(40, 1, rng);
  Vector y(40);
  for (Index i = 0; i < 40; ++i) y[i] = std::sin(5.0 * X(i, 0));
  GPModel model = fit_gp(X, y);
  const double at_fit = log_marginal_likelihood(model.spec, model.beta0, X, y);
  KernelSpec inflated = model.spec;
  inflated.nugget += 0.5 * model.spec.signal_variance;
  const double with_jitter = log_marginal_likelihood(inflated, model.beta0, X, y);
  CHECK(with_jitter < at_fit);
}
