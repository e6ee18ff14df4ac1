#include "prewarp/bench.hpp"

#include <cmath>
#include <numeric>

namespace prewarp {

namespace {

Matrix box(std::initializer_list<std::pair<double, double>> bounds) {
  Matrix d(static_cast<Index>(bounds.size()), 2);
  Index i = 0;
  for (const auto& [lo, hi] : bounds) {
    d(i, 0) = lo;
    d(i, 1) = hi;
    ++i;
  }
  return d;
}

Matrix uniform_box(int p, double lo, double hi) {
  Matrix d(p, 2);
  d.col(0).setConstant(lo);
  d.col(1).setConstant(hi);
  return d;
}

double borehole(const Vector& x) {
  const double rw = x[0], r = x[1], Tu = x[2], Hu = x[3];
  const double Tl = x[4], Hl = x[5], L = x[6], Kw = x[7];
  const double lnr = std::log(r / rw);
  return 2.0 * M_PI * Tu * (Hu - Hl) /
         (lnr * (1.0 + 2.0 * L * Tu / (lnr * rw * rw * Kw) + Tu / Tl));
}

double robot_arm(const Vector& x) {
  // x = (theta_1..theta_4, L_1..L_4)
  double u = 0.0, v = 0.0, angle = 0.0;
  for (int i = 0; i < 4; ++i) {
    angle += x[i];
    u += x[4 + i] * std::cos(angle);
    v += x[4 + i] * std::sin(angle);
  }
  return std::sqrt(u * u + v * v);
}

double piston(const Vector& x) {
  const double M = x[0], S = x[1], V0 = x[2], k = x[3];
  const double P0 = x[4], Ta = x[5], T0 = x[6];
  const double A = P0 * S + 19.62 * M - k * V0 / S;
  const double V = S / (2.0 * k) * (std::sqrt(A * A + 4.0 * k * P0 * V0 * Ta / T0) - A);
  return 2.0 * M_PI * std::sqrt(M / (k + S * S * P0 * V0 * Ta / (T0 * V * V)));
}

double ridge_profile(double z) { return std::sin(z) * std::cos(z) * std::exp(-z / 10.0); }

}  // namespace

TestFunction lookup_function(const std::string& name, int dim) {
  if (name == "borehole") {
    return {name, 8,
            box({{0.05, 0.15},
                 {100.0, 50000.0},
                 {63070.0, 115600.0},
                 {990.0, 1110.0},
                 {63.1, 116.0},
                 {700.0, 820.0},
                 {1120.0, 1680.0},
                 {9855.0, 12045.0}}),
            borehole};
  }
  if (name == "robot-arm") {
    Matrix d(8, 2);
    for (int i = 0; i < 4; ++i) {
      d(i, 0) = 0.0;
      d(i, 1) = 2.0 * M_PI;
      d(4 + i, 0) = 0.0;
      d(4 + i, 1) = 1.0;
    }
    return {name, 8, d, robot_arm};
  }
  if (name == "piston") {
    return {name, 7,
            box({{30.0, 60.0},
                 {0.005, 0.020},
                 {0.002, 0.010},
                 {1000.0, 5000.0},
                 {90000.0, 110000.0},
                 {290.0, 296.0},
                 {340.0, 360.0}}),
            piston};
  }
  if (name == "ridge2d") {
    return {name, 2, uniform_box(2, -2.0 * M_PI, 2.0 * M_PI),
            [](const Vector& x) { return ridge_profile(x[0] + x[1]); }};
  }
  if (name == "linear-embed") {
    // the embedded pair spans ridge2d's native diagonal exactly
    const int p = dim > 0 ? dim : 6;
    if (p < 2) throw ContractError("linear-embed needs at least 2 dimensions");
    return {name, p, uniform_box(p, -0.5 * M_PI, 0.5 * M_PI),
            [](const Vector& x) { return ridge_profile(x[0] + x[1]); }};
  }
  throw ContractError("unknown test function: " + name);
}

std::vector<std::string> test_function_names() {
  return {"borehole", "robot-arm", "piston", "ridge2d", "linear-embed"};
}

Matrix lhs_sample(Index n, int p, std::uint64_t seed) {
  if (n < 1 || p < 1) throw ContractError("lhs_sample: n and p must be positive");
  Rng rng(mix_seed(seed, 0x145));
  Matrix X(n, p);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (int k = 0; k < p; ++k) {
    std::iota(perm.begin(), perm.end(), Index{0});
    shuffle(perm, rng);
    for (Index i = 0; i < n; ++i) {
      const double cell = static_cast<double>(perm[static_cast<std::size_t>(i)]);
      X(i, k) = (cell + rng.uniform_open()) / static_cast<double>(n);
    }
  }
  return X;
}

Matrix to_native(const TestFunction& fn, const Matrix& X_unit) {
  if (X_unit.cols() != fn.dim) throw ContractError("to_native: dimension mismatch");
  Matrix X(X_unit.rows(), X_unit.cols());
  for (Index k = 0; k < X.cols(); ++k)
    X.col(k) = fn.domain(k, 0) + (fn.domain(k, 1) - fn.domain(k, 0)) * X_unit.col(k).array();
  return X;
}

Vector eval_function(const TestFunction& fn, const Matrix& X_unit) {
  Matrix X = to_native(fn, X_unit);
  Vector y(X.rows());
  for (Index i = 0; i < X.rows(); ++i) y[i] = fn.eval_native(X.row(i).transpose());
  return y;
}

double mse(const Vector& y_hat, const Vector& y_true) {
  if (y_hat.size() != y_true.size()) throw ContractError("mse: length mismatch");
  return (y_hat - y_true).squaredNorm() / static_cast<double>(y_hat.size());
}

double neg_log_score(const PredictiveDist& pred, const Vector& y_true) {
  if (pred.mean.size() != y_true.size() || pred.variance.size() != y_true.size())
    throw ContractError("neg_log_score: length mismatch");
  constexpr double kLog2Pi = 1.8378770664093453;
  const Index m = y_true.size();
  double acc = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double s2 = std::max(pred.variance[i], 1e-12);
    if (!(s2 > 0.0)) throw NumericalError("neg_log_score: non-positive variance");
    const double d = y_true[i] - pred.mean[i];
    acc += -0.5 * (kLog2Pi + std::log(s2)) - d * d / (2.0 * s2);
  }
  return -acc / static_cast<double>(m);
}

}  // namespace prewarp
