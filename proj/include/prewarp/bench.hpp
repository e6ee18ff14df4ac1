#pragma once

#include "prewarp/gp.hpp"
#include "prewarp/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace prewarp {

/// Deterministic benchmark simulator with its native box domain. The
/// pipeline always works in unit-cube coordinates; rows are stretched to the
/// native domain before evaluation.
struct TestFunction {
  std::string name;
  int dim = 0;
  Matrix domain;  // p x 2, columns are lo / hi
  std::function<double(const Vector&)> eval_native;
};

/// Registry lookup by name: borehole, robot-arm, piston, ridge2d,
/// linear-embed. `dim` only applies to linear-embed (default 6).
TestFunction lookup_function(const std::string& name, int dim = 0);

std::vector<std::string> test_function_names();

/// Latin hypercube design in [0,1]^p: one point per row-stratum per column.
Matrix lhs_sample(Index n, int p, std::uint64_t seed);

/// Maps unit-cube rows to the native domain.
Matrix to_native(const TestFunction& fn, const Matrix& X_unit);

Vector eval_function(const TestFunction& fn, const Matrix& X_unit);

double mse(const Vector& y_hat, const Vector& y_true);

/// Negated mean Gaussian log predictive density; smaller is better.
/// Variances are floored at 1e-12.
double neg_log_score(const PredictiveDist& pred, const Vector& y_true);

}  // namespace prewarp
