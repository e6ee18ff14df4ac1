#pragma once

#include "prewarp/kernel.hpp"
#include "prewarp/types.hpp"

namespace prewarp {

struct PredictiveDist {
  Vector mean;
  Vector variance;
};

struct GradientPosterior {
  Vector mean;   // length p
  Matrix cov;    // p x p, symmetric
};

struct FitConfig {
  KernelFamily family = KernelFamily::separable_gaussian;
  int n_starts = 5;
  int max_iters = 60;
  // bounds on the squared-distance denominators; defaults assume inputs in the unit cube
  double lengthscale_lo = 1e-3;
  double lengthscale_hi = 1e3;
  // bounds on the nugget relative to the (standardized) response variance
  double nugget_lo = 1e-8;
  double nugget_hi = 1.0;
  std::uint64_t seed = 0;
  bool use_gradient = true;  // false forces the derivative-free path
};

/// Immutable fitted GP. `chol` is the lower Cholesky factor of the
/// nugget-augmented kernel matrix and `alpha` solves K alpha = y - beta0.
struct GPModel {
  Matrix X;
  Vector y;
  KernelSpec spec;
  double beta0 = 0.0;
  CholFactor chol;
  Vector alpha;

  Index n() const { return X.rows(); }
  int dim() const { return spec.dim(); }

  /// Builds the derived factors for given data and hyperparameters.
  static GPModel from_spec(Matrix X, Vector y, KernelSpec spec, double beta0);

  /// Data-free model: predictions revert to the prior.
  static GPModel prior(KernelSpec spec, double beta0);
};

/// Gaussian log marginal likelihood of y under the nugget-augmented kernel.
double log_marginal_likelihood(const KernelSpec& spec, double beta0, const Matrix& X,
                               const Vector& y);

/// Maximum-likelihood fit over log lengthscales and log relative nugget,
/// with the constant mean and signal variance profiled out analytically.
/// Responses are standardized internally and mapped back on output.
GPModel fit_gp(const Matrix& X, const Vector& y, const FitConfig& config = {});

PredictiveDist predict(const GPModel& model, const Matrix& X_star, bool include_nugget);

GradientPosterior gradient_posterior(const GPModel& model, const Vector& x_star);

}  // namespace prewarp
