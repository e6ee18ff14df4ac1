#pragma once

#include "prewarp/types.hpp"

namespace prewarp {

enum class KernelFamily { separable_gaussian, isotropic_gaussian };

/// Gaussian kernel hyperparameters. Lengthscales are the per-dimension
/// squared-distance denominators, so k(x,x') = s2 * exp(-sum_k d_k^2 / (2 l_k)).
struct KernelSpec {
  KernelFamily family = KernelFamily::separable_gaussian;
  Vector lengthscales;
  double signal_variance = 1.0;
  double nugget = 0.0;

  static KernelSpec separable(Vector lengthscales, double signal_variance, double nugget);
  static KernelSpec isotropic(int dim, double lengthscale, double signal_variance, double nugget);

  int dim() const { return static_cast<int>(lengthscales.size()); }

  /// Throws ContractError on non-positive lengthscales / signal variance,
  /// negative nugget, or unequal lengthscales for the isotropic family.
  void validate() const;
};

double kernel_eval(const Vector& x_i, const Vector& x_j, const KernelSpec& spec);

/// Dense n x n kernel matrix; adds spec.nugget on the diagonal when requested.
Matrix kernel_matrix(const Matrix& X, const KernelSpec& spec, bool with_nugget);

/// Cross-covariance between rows of A and rows of B (no nugget).
Matrix cross_kernel_matrix(const Matrix& A, const Matrix& B, const KernelSpec& spec);

/// p x n matrix of d k(x*, x_j) / d x*_k.
Matrix grad_cross_kernel(const Vector& x_star, const Matrix& X, const KernelSpec& spec);

/// Prior covariance of the gradient at any point: diag(s2 / l_k).
Matrix grad_prior_cov(const Vector& x_star, const KernelSpec& spec);

struct CholFactor {
  Matrix lower;
  double jitter = 0.0;  // diagonal boost that was needed, 0 when none

  /// Solves (L L^T) x = b.
  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& B) const;
  /// Solves L x = b only.
  Vector forward(const Vector& b) const;
  Matrix forward(const Matrix& B) const;
  double log_det() const;  // of L L^T
};

/// Cholesky factorization with escalating diagonal jitter: starts at
/// 1e-8 * scale and grows tenfold up to 1e-4 * scale before giving up.
CholFactor jittered_llt(Matrix K, double scale);

}  // namespace prewarp
