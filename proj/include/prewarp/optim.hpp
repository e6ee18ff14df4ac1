#pragma once

#include "prewarp/types.hpp"

#include <functional>

namespace prewarp {

/// Objective for box-constrained minimization. Returns f(x); when grad is
/// non-null it must be filled with the gradient at x.
using BoxObjective = std::function<double(const Vector& x, Vector* grad)>;

struct OptimOptions {
  int max_iters = 100;
  double grad_tol = 1e-6;
  double f_tol = 1e-10;
  int lbfgs_memory = 8;
};

struct OptimResult {
  Vector x;
  double f = 0.0;
  int iters = 0;
  bool converged = false;
  bool used_fallback = false;
};

/// L-BFGS on a smooth sigmoid reparametrization of the box [lo, hi]. Falls
/// back to Nelder-Mead when the gradient path produces non-finite values.
OptimResult minimize_box(const BoxObjective& objective, const Vector& x0, const Vector& lo,
                         const Vector& hi, const OptimOptions& opts = {});

/// Derivative-free Nelder-Mead with reflections clamped into the box.
OptimResult nelder_mead_box(const BoxObjective& objective, const Vector& x0, const Vector& lo,
                            const Vector& hi, const OptimOptions& opts = {});

}  // namespace prewarp
