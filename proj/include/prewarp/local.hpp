#pragma once

#include "prewarp/gp.hpp"
#include "prewarp/types.hpp"

#include <vector>

namespace prewarp {

enum class LocalModelKind { knn, local_gp, vecchia };
enum class VecchiaOrdering { maxmin, coordinate, random };

struct LocalConfig {
  LocalModelKind model = LocalModelKind::knn;
  int k = 10;                 // knn neighbors; seed size for the local GP
  Index n_max = 50;           // final local design size (local GP)
  int cond_size = 30;         // conditioning-set size m (vecchia)
  VecchiaOrdering ordering = VecchiaOrdering::maxmin;
  int candidate_pool = 10;    // pool = candidate_pool * n_max nearest neighbors
  std::uint64_t seed = 0;     // random ordering only
};

/// Indices of the k nearest rows of Z to z_star (Euclidean), closest first;
/// distance ties break toward the lower index.
std::vector<Index> knn_indices(const Matrix& Z, const Vector& z_star, int k);

/// Mean squared pairwise distance over a thinned subsample; the scale unit
/// for lengthscale bounds in warped coordinates.
double mean_sq_spacing(const Matrix& Z);

/// Unweighted mean response of the k nearest training points.
double knn_predict(const Matrix& Z, const Vector& y, const Vector& z_star, int k);

Vector knn_predict_batch(const Matrix& Z, const Vector& y, const Matrix& Z_star, int k);

/// Per-step record of the greedy local design construction.
struct LocalGpTrace {
  std::vector<double> variance_path;  // predictive variance at the target after each addition
  std::vector<Index> chosen;          // global indices, seed points first
};

/// Local GP: seeds with config.k nearest neighbors, greedily adds the pool
/// point that most reduces predictive variance at z_star until n_max points,
/// re-optimizes an isotropic kernel once, and predicts (nugget included).
PredictiveDist local_gp_predict(const Matrix& Z, const Vector& y, const Vector& z_star,
                                const LocalConfig& config, const KernelSpec& spec0,
                                LocalGpTrace* trace = nullptr);

PredictiveDist local_gp_predict_batch(const Matrix& Z, const Vector& y, const Matrix& Z_star,
                                      const LocalConfig& config, const KernelSpec& spec0);

/// Isotropic refit used on the final local design (scale-aware bounds).
GPModel fit_isotropic_local(const Matrix& Z_design, const Vector& y_design,
                            const KernelSpec& spec0);

struct VecchiaModel {
  Matrix Z;
  Vector y;
  std::vector<Index> order;                    // permutation of 0..n-1
  std::vector<std::vector<Index>> cond_sets;   // per ordered position, earlier neighbors
  KernelSpec spec;
  double beta0 = 0.0;
  double loglik = 0.0;  // objective at the fitted hyperparameters
  int cond_size = 0;
};

std::vector<Index> maxmin_ordering(const Matrix& Z);
std::vector<Index> coordinate_ordering(const Matrix& Z);
std::vector<Index> random_ordering(Index n, std::uint64_t seed);

/// cond_sets[i] = up to m nearest earlier-ordered points (positions refer to
/// original row indices).
std::vector<std::vector<Index>> earlier_neighbor_sets(const Matrix& Z,
                                                      const std::vector<Index>& order, int m);

/// Ordered-conditional Gaussian log likelihood for given hyperparameters.
double vecchia_loglik(const Matrix& Z, const Vector& y, const std::vector<Index>& order,
                      const std::vector<std::vector<Index>>& cond_sets, const KernelSpec& spec,
                      double beta0);

/// Orders the data, builds conditioning sets, and refines the hyperparameters
/// of spec0 by maximizing the Vecchia objective (mean and signal variance
/// profiled analytically, responses standardized internally).
VecchiaModel vecchia_fit(const Matrix& Z, const Vector& y, const LocalConfig& config,
                         const KernelSpec& spec0);

/// Conditions z_star on its cond_size nearest training points.
PredictiveDist vecchia_predict(const VecchiaModel& model, const Vector& z_star);

PredictiveDist vecchia_predict_batch(const VecchiaModel& model, const Matrix& Z_star);

/// Exact GP conditional of z_star given the listed training rows.
PredictiveDist subset_gp_predict(const Matrix& Z, const Vector& y,
                                 const std::vector<Index>& subset, const KernelSpec& spec,
                                 double beta0, const Vector& z_star, bool include_nugget);

}  // namespace prewarp
