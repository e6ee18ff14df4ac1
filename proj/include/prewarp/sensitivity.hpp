#pragma once

#include "prewarp/gp.hpp"
#include "prewarp/types.hpp"

#include <span>
#include <vector>

namespace prewarp {

enum class MeasureKind { lebesgue, sample };

/// Measure over which expected-gradient quantities are averaged: either
/// Monte Carlo over the unit cube (lebesgue) or the training points (sample).
struct MeasureSpec {
  MeasureKind kind = MeasureKind::sample;
  int n_mc = 1000;  // lebesgue only
  std::uint64_t seed = 0;
};

/// Expected gradient outer-product matrix estimate.
struct CMatrix {
  Matrix C;
  MeasureSpec measure;
  int n_bags = 1;
};

struct SubbagConfig {
  int n_bags = 5;
  Index bag_size = 1500;
  std::uint64_t seed = 0;
  /// When non-empty, overrides the random draws (one entry per bag);
  /// per-bag fit and measure seeds are still derived from `seed`.
  std::vector<std::vector<Index>> forced_bags;

  int effective_bags() const {
    return forced_bags.empty() ? n_bags : static_cast<int>(forced_bags.size());
  }
};

enum class SensitivityMethod { ard, range };

struct SensitivityScores {
  SensitivityMethod method = SensitivityMethod::ard;
  Vector scores;  // per dimension, strictly positive
};

/// Average of Sigma_grad(x) + mu_grad(x) mu_grad(x)^T over the measure.
CMatrix estimate_C(const GPModel& model, const MeasureSpec& measure);

/// Indices drawn (without replacement) for bag b; exposed so callers can
/// reproduce a single bag of a subbagged run exactly.
std::vector<Index> subbag_indices(const SubbagConfig& config, Index n, int b);

/// Per-bag seeds derive from the bag's content, so a bag gives the same
/// answer wherever it appears in the bag list.
std::uint64_t bag_content_hash(const std::vector<Index>& indices);
std::uint64_t bag_fit_seed(const SubbagConfig& config, const std::vector<Index>& indices);
MeasureSpec bag_measure(const MeasureSpec& measure, const SubbagConfig& config,
                        const std::vector<Index>& indices);

/// Fits one bag and estimates C on it (sample measure averages over the
/// bag's own points). The building block subbag_C averages over.
CMatrix single_bag_C(const Matrix& X, const Vector& y, const MeasureSpec& measure,
                     const SubbagConfig& config, const std::vector<Index>& indices,
                     const FitConfig& fit_config);

CMatrix subbag_C(const Matrix& X, const Vector& y, const MeasureSpec& measure,
                 const SubbagConfig& config, const FitConfig& fit_config);

/// One pass over the bags evaluating several measures on shared per-bag fits.
std::vector<CMatrix> subbag_C_multi(const Matrix& X, const Vector& y,
                                    std::span<const MeasureSpec> measures,
                                    const SubbagConfig& config, const FitConfig& fit_config);

/// Bagged ARD scores: arithmetic mean of per-bag fitted lengthscales.
SensitivityScores subbag_ard(const Matrix& X, const Vector& y, const SubbagConfig& config,
                             const FitConfig& fit_config);

/// Range of the 1-D posterior mean of y regressed on a single column.
double range_sensitivity(const Vector& x_col, const Vector& y, const FitConfig& fit_config);

/// Bagged per-column range scores.
SensitivityScores subbag_range(const Matrix& X, const Vector& y, const SubbagConfig& config,
                               const FitConfig& fit_config);

}  // namespace prewarp
