#pragma once

#include "prewarp/gp.hpp"
#include "prewarp/kernel.hpp"
#include "prewarp/local.hpp"
#include "prewarp/types.hpp"

#include <vector>

namespace prewarp::ref {

// Serial reference implementations of the OpenMP kernels. Each one performs
// the same floating-point operations in the same per-element order as its
// parallel counterpart, so results must match bit for bit. They are kept for
// correctness tests and for the timing comparison in tools/.

Matrix kernel_matrix(const Matrix& X, const KernelSpec& spec, bool with_nugget);

Matrix average_gradient_outer(const GPModel& model, const Matrix& points);

Vector knn_predict_batch(const Matrix& Z, const Vector& y, const Matrix& Z_star, int k);

double vecchia_loglik(const Matrix& Z, const Vector& y, const std::vector<Index>& order,
                      const std::vector<std::vector<Index>>& cond_sets, const KernelSpec& spec,
                      double beta0);

double loo_knn_mse(const Matrix& Z, const Vector& y, int r, int k);

}  // namespace prewarp::ref
