#pragma once

#include "prewarp/sensitivity.hpp"
#include "prewarp/types.hpp"

#include <string>

namespace prewarp {

enum class WarpMethod { ard, range, as_lebesgue, as_sample, identity };

std::string warp_method_name(WarpMethod method);
WarpMethod warp_method_from_name(const std::string& name);

/// Run metadata carried into the serialized form.
struct WarpProvenance {
  std::uint64_t seed = 0;
  Index n = 0;
  int n_bags = 0;
  Index bag_size = 0;
  std::string measure;  // empty for diagonal methods
};

/// Linear input warping z = L x with rows of L ordered by decreasing
/// importance. `eigenvalues` holds the spectrum (squared scale factors for
/// the diagonal methods) and `r` the retained rank.
struct WarpTransform {
  Matrix L;
  WarpMethod method = WarpMethod::identity;
  Vector eigenvalues;
  int r = 0;
  WarpProvenance created_from;

  int dim() const { return static_cast<int>(L.rows()); }

  static WarpTransform identity(int p);
};

/// Diagonal warp scaling each axis by the inverse root of its score.
WarpTransform build_L_ard(const SensitivityScores& scores);

/// Diagonal warp scaling each axis by score / geometric-mean(score).
WarpTransform build_L_range(const SensitivityScores& scores);

/// Rotation-and-stretch warp from the eigendecomposition of C.
/// Eigenvalues are clamped below at eig_floor * lambda_max before the root;
/// eigenvector signs are canonicalized so identical C gives identical L.
WarpTransform build_L_as(const CMatrix& C, double eig_floor = 1e-12);

/// Z = X L^T restricted to the first r (most important) coordinates.
Matrix apply_warp(const Matrix& X, const WarpTransform& warp, int r);

/// The model-complexity criterion used for rank selection.
double knn_bic(double mse_value, Index n, int r);

/// Leave-one-out k-NN mean squared error on the leading r columns of Z.
double loo_knn_mse(const Matrix& Z, const Vector& y, int r, int k);

/// Picks the rank in [mind, maxd] minimizing the leave-one-out k-NN BIC
/// on the leading columns of Z; ties break toward the smaller rank.
int select_truncation(const Matrix& Z, const Vector& y, int mind, int maxd, int k);

/// Canonical JSON document (2-space indent, trailing newline); doubles
/// round-trip exactly.
std::string warp_to_json(const WarpTransform& warp);
WarpTransform warp_from_json(const std::string& text);

}  // namespace prewarp
