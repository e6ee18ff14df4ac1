#include "prewarp/warp.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace prewarp {

namespace {

using nlohmann::json;

// Importance order: descending key, ties by original dimension index.
std::vector<Index> order_by_descending(const Vector& key) {
  std::vector<Index> idx(static_cast<std::size_t>(key.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return key[a] > key[b]; });
  return idx;
}

WarpTransform diagonal_warp(const Vector& scale, WarpMethod method) {
  const Index p = scale.size();
  const std::vector<Index> order = order_by_descending(scale);
  WarpTransform warp;
  warp.method = method;
  warp.L = Matrix::Zero(p, p);
  warp.eigenvalues.resize(p);
  for (Index i = 0; i < p; ++i) {
    const Index k = order[static_cast<std::size_t>(i)];
    warp.L(i, k) = scale[k];
    warp.eigenvalues[i] = scale[k] * scale[k];
  }
  warp.r = static_cast<int>(p);
  return warp;
}

}  // namespace

std::string warp_method_name(WarpMethod method) {
  switch (method) {
    case WarpMethod::ard: return "ard";
    case WarpMethod::range: return "range";
    case WarpMethod::as_lebesgue: return "as-lebesgue";
    case WarpMethod::as_sample: return "as-sample";
    case WarpMethod::identity: return "identity";
  }
  throw ContractError("warp_method_name: unknown method");
}

WarpMethod warp_method_from_name(const std::string& name) {
  if (name == "ard") return WarpMethod::ard;
  if (name == "range") return WarpMethod::range;
  if (name == "as-lebesgue") return WarpMethod::as_lebesgue;
  if (name == "as-sample") return WarpMethod::as_sample;
  if (name == "identity") return WarpMethod::identity;
  throw DataError("unknown warp method name: " + name);
}

WarpTransform WarpTransform::identity(int p) {
  WarpTransform warp;
  warp.method = WarpMethod::identity;
  warp.L = Matrix::Identity(p, p);
  warp.eigenvalues = Vector::Ones(p);
  warp.r = p;
  return warp;
}

WarpTransform build_L_ard(const SensitivityScores& scores) {
  if (!(scores.scores.array() > 0.0).all())
    throw ContractError("build_L_ard: scores must be positive");
  Vector scale = scores.scores.array().rsqrt();
  return diagonal_warp(scale, WarpMethod::ard);
}

WarpTransform build_L_range(const SensitivityScores& scores) {
  if (!(scores.scores.array() > 0.0).all())
    throw ContractError("build_L_range: scores must be positive");
  const double log_gm = scores.scores.array().log().mean();
  Vector scale = scores.scores / std::exp(log_gm);
  return diagonal_warp(scale, WarpMethod::range);
}

WarpTransform build_L_as(const CMatrix& C, double eig_floor) {
  const Index p = C.C.rows();
  if (C.C.cols() != p) throw ContractError("build_L_as: C must be square");
  Matrix sym = 0.5 * (C.C + C.C.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("build_L_as: eigendecomposition failed");

  // Eigen returns ascending order; flip to descending importance.
  Vector lambda(p);
  Matrix U(p, p);
  for (Index i = 0; i < p; ++i) {
    lambda[i] = eig.eigenvalues()[p - 1 - i];
    U.col(i) = eig.eigenvectors().col(p - 1 - i);
  }
  const double lambda_max = lambda[0];
  if (!(lambda_max > 0.0)) throw NumericalError("build_L_as: no signal (largest eigenvalue <= 0)");
  lambda = lambda.cwiseMax(eig_floor * lambda_max);

  // canonical column signs: largest-magnitude entry positive
  for (Index i = 0; i < p; ++i) {
    Index imax = 0;
    U.col(i).cwiseAbs().maxCoeff(&imax);
    if (U(imax, i) < 0.0) U.col(i) = -U.col(i);
  }

  WarpTransform warp;
  warp.method = C.measure.kind == MeasureKind::lebesgue ? WarpMethod::as_lebesgue
                                                        : WarpMethod::as_sample;
  warp.eigenvalues = lambda;
  warp.L = lambda.array().sqrt().matrix().asDiagonal() * U.transpose();
  warp.r = static_cast<int>(p);
  return warp;
}

Matrix apply_warp(const Matrix& X, const WarpTransform& warp, int r) {
  const int p = warp.dim();
  if (X.cols() != p) throw ContractError("apply_warp: design dimension does not match warp");
  if (r < 1 || r > p) throw ContractError("apply_warp: rank out of range");
  return X * warp.L.topRows(r).transpose();
}

double knn_bic(double mse_value, Index n, int r) {
  if (mse_value <= 0.0) {
    std::cerr << "warning: zero k-NN mse at rank " << r << "; using machine epsilon\n";
    mse_value = std::numeric_limits<double>::epsilon();
  }
  return static_cast<double>(n) * std::log(mse_value) + static_cast<double>(r) * std::log(static_cast<double>(n));
}

double loo_knn_mse(const Matrix& Z, const Vector& y, int r, int k) {
  const Index n = Z.rows();
  Vector err2(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> dist;
    dist.reserve(static_cast<std::size_t>(n) - 1);
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = 0.0;
      for (int c = 0; c < r; ++c) {
        const double t = Z(i, c) - Z(j, c);
        d += t * t;
      }
      dist.emplace_back(d, j);
    }
    const auto kth = dist.begin() + (k - 1);
    std::nth_element(dist.begin(), kth, dist.end());  // pair ordering breaks ties by index
    std::sort(dist.begin(), kth + 1);
    double acc = 0.0;
    for (int s = 0; s < k; ++s) acc += y[dist[static_cast<std::size_t>(s)].second];
    const double pred = acc / static_cast<double>(k);
    err2[i] = (pred - y[i]) * (pred - y[i]);
  }
  return err2.mean();
}

int select_truncation(const Matrix& Z, const Vector& y, int mind, int maxd, int k) {
  const int p = static_cast<int>(Z.cols());
  const Index n = Z.rows();
  if (mind < 1 || maxd < mind || maxd > p) throw ContractError("select_truncation: bad rank interval");
  if (n <= k) throw ContractError("select_truncation: needs more points than neighbors");

  int best_r = mind;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int r = mind; r <= maxd; ++r) {
    const double bic = knn_bic(loo_knn_mse(Z, y, r, k), n, r);
    if (bic < best_bic) {
      best_bic = bic;
      best_r = r;
    }
  }
  return best_r;
}

std::string warp_to_json(const WarpTransform& warp) {
  const Index p = warp.L.rows();
  json j;
  j["method"] = warp_method_name(warp.method);
  j["p"] = p;
  j["r"] = warp.r;
  j["eigenvalues"] = std::vector<double>(warp.eigenvalues.data(),
                                         warp.eigenvalues.data() + warp.eigenvalues.size());
  std::vector<double> rowmajor;
  rowmajor.reserve(static_cast<std::size_t>(p * p));
  for (Index i = 0; i < p; ++i)
    for (Index c = 0; c < warp.L.cols(); ++c) rowmajor.push_back(warp.L(i, c));
  j["L"] = rowmajor;
  j["seed"] = warp.created_from.seed;
  j["created_from"] = {{"n", warp.created_from.n},
                       {"B", warp.created_from.n_bags},
                       {"nsub", warp.created_from.bag_size},
                       {"measure", warp.created_from.measure}};
  return j.dump(2) + "\n";
}

WarpTransform warp_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("warp_from_json: ") + e.what());
  }
  try {
    WarpTransform warp;
    warp.method = warp_method_from_name(j.at("method").get<std::string>());
    const Index p = j.at("p").get<Index>();
    warp.r = j.at("r").get<int>();
    auto eig = j.at("eigenvalues").get<std::vector<double>>();
    auto rowmajor = j.at("L").get<std::vector<double>>();
    if (static_cast<Index>(eig.size()) != p || static_cast<Index>(rowmajor.size()) != p * p)
      throw DataError("warp_from_json: inconsistent dimensions");
    warp.eigenvalues = Eigen::Map<Vector>(eig.data(), p);
    warp.L.resize(p, p);
    for (Index i = 0; i < p; ++i)
      for (Index c = 0; c < p; ++c) warp.L(i, c) = rowmajor[static_cast<std::size_t>(i * p + c)];
    warp.created_from.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("created_from")) {
      const auto& cf = j.at("created_from");
      warp.created_from.n = cf.value("n", Index{0});
      warp.created_from.n_bags = cf.value("B", 0);
      warp.created_from.bag_size = cf.value("nsub", Index{0});
      warp.created_from.measure = cf.value("measure", std::string{});
    }
    if (warp.r < 1 || warp.r > static_cast<int>(p)) throw DataError("warp_from_json: rank out of range");
    return warp;
  } catch (const json::exception& e) {
    throw DataError(std::string("warp_from_json: ") + e.what());
  }
}

}  // namespace prewarp
