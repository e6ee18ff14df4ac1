#include "prewarp/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace prewarp {

namespace {

constexpr std::uint64_t kBagIndexStream = 0xBA61;
constexpr std::uint64_t kBagFitStream = 0xBAF1;
constexpr std::uint64_t kBagMeasureStream = 0xBA3C;
constexpr double kScoreFloor = 1e-12;

Matrix rows_of(const Matrix& X, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(idx[i]);
  return out;
}

Vector entries_of(const Vector& y, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = y[idx[i]];
  return out;
}

// Average of per-point gradient outer-product contributions over given rows.
// Contributions are stored per point and reduced in index order so the result
// does not depend on the parallel schedule.
Matrix average_contributions(const GPModel& model, const Matrix& points) {
  const Index m = points.rows();
  const Index p = points.cols();
  std::vector<Matrix> contrib(static_cast<std::size_t>(m));
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < m; ++i) {
    GradientPosterior g = gradient_posterior(model, points.row(i).transpose());
    contrib[static_cast<std::size_t>(i)] = g.cov + g.mean * g.mean.transpose();
  }
  Matrix C = Matrix::Zero(p, p);
  for (Index i = 0; i < m; ++i) C += contrib[static_cast<std::size_t>(i)];
  C /= static_cast<double>(m);
  return 0.5 * (C + C.transpose());
}

FitConfig bag_fit_config(const FitConfig& fit_config, const SubbagConfig& config,
                         const std::vector<Index>& idx) {
  FitConfig fc = fit_config;
  fc.seed = bag_fit_seed(config, idx);
  return fc;
}

GPModel fit_bag(const Matrix& X, const Vector& y, const SubbagConfig& config,
                const std::vector<Index>& idx, const FitConfig& fit_config) {
  return fit_gp(rows_of(X, idx), entries_of(y, idx), bag_fit_config(fit_config, config, idx));
}

// Accumulates per-bag payloads and reduces them in content-hash order, so the
// average does not depend on how the bags were listed.
template <typename Payload, typename MakePayload>
std::vector<std::pair<std::uint64_t, Payload>> collect_bags(const Matrix& X, const Vector& y,
                                                            const SubbagConfig& config,
                                                            MakePayload&& make) {
  const int B = config.effective_bags();
  if (B < 1) throw ContractError("subbag: needs at least one bag");
  std::vector<std::pair<std::uint64_t, Payload>> out;
  std::string last_error;
  for (int b = 0; b < B; ++b) {
    std::vector<Index> idx = subbag_indices(config, X.rows(), b);
    try {
      out.emplace_back(bag_content_hash(idx), make(idx));
    } catch (const NumericalError& e) {
      last_error = e.what();
      std::cerr << "warning: dropping bag " << b << " (" << e.what() << ")\n";
    }
  }
  if (out.empty())
    throw NumericalError("subbag: every bag failed to fit; last error: " + last_error);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

}  // namespace

CMatrix estimate_C(const GPModel& model, const MeasureSpec& measure) {
  const Index p = model.dim();
  Matrix points;
  if (measure.kind == MeasureKind::sample) {
    if (model.n() == 0) throw ContractError("estimate_C: sample measure needs training points");
    points = model.X;
  } else {
    if (measure.n_mc < 1) throw ContractError("estimate_C: n_mc must be positive");
    Rng rng(mix_seed(measure.seed, 0x3C0));
    points.resize(measure.n_mc, p);
    for (Index i = 0; i < points.rows(); ++i)
      for (Index k = 0; k < p; ++k) points(i, k) = rng.uniform();
  }
  CMatrix out;
  out.C = average_contributions(model, points);
  out.measure = measure;
  out.n_bags = 1;
  return out;
}

std::vector<Index> subbag_indices(const SubbagConfig& config, Index n, int b) {
  if (!config.forced_bags.empty()) {
    const auto& bag = config.forced_bags.at(static_cast<std::size_t>(b));
    for (Index i : bag)
      if (i < 0 || i >= n) throw ContractError("subbag_indices: forced index out of range");
    return bag;
  }
  if (config.bag_size > n) throw ContractError("subbag_indices: bag size exceeds data size");
  Rng rng(mix_seed(config.seed, kBagIndexStream, static_cast<std::uint64_t>(b)));
  return sample_without_replacement(n, config.bag_size, rng);
}

std::uint64_t bag_content_hash(const std::vector<Index>& indices) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Index i : indices) {
    h ^= static_cast<std::uint64_t>(i);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t bag_fit_seed(const SubbagConfig& config, const std::vector<Index>& indices) {
  return mix_seed(config.seed, kBagFitStream, bag_content_hash(indices));
}

MeasureSpec bag_measure(const MeasureSpec& measure, const SubbagConfig& config,
                        const std::vector<Index>& indices) {
  MeasureSpec m = measure;
  if (m.kind == MeasureKind::lebesgue)
    m.seed = mix_seed(measure.seed ^ config.seed, kBagMeasureStream, bag_content_hash(indices));
  return m;
}

CMatrix single_bag_C(const Matrix& X, const Vector& y, const MeasureSpec& measure,
                     const SubbagConfig& config, const std::vector<Index>& indices,
                     const FitConfig& fit_config) {
  GPModel model = fit_bag(X, y, config, indices, fit_config);
  return estimate_C(model, bag_measure(measure, config, indices));
}

CMatrix subbag_C(const Matrix& X, const Vector& y, const MeasureSpec& measure,
                 const SubbagConfig& config, const FitConfig& fit_config) {
  std::vector<MeasureSpec> one{measure};
  return subbag_C_multi(X, y, one, config, fit_config).front();
}

std::vector<CMatrix> subbag_C_multi(const Matrix& X, const Vector& y,
                                    std::span<const MeasureSpec> measures,
                                    const SubbagConfig& config, const FitConfig& fit_config) {
  if (measures.empty()) throw ContractError("subbag_C_multi: no measures given");
  const Index p = X.cols();

  auto bags = collect_bags<std::vector<Matrix>>(X, y, config, [&](const std::vector<Index>& idx) {
    GPModel model = fit_bag(X, y, config, idx, fit_config);
    std::vector<Matrix> per_measure;
    per_measure.reserve(measures.size());
    for (const MeasureSpec& m : measures)
      per_measure.push_back(estimate_C(model, bag_measure(m, config, idx)).C);
    return per_measure;
  });

  std::vector<CMatrix> out(measures.size());
  for (std::size_t m = 0; m < measures.size(); ++m) {
    Matrix C = Matrix::Zero(p, p);
    for (const auto& [hash, per_measure] : bags) C += per_measure[m];
    out[m].C = C / static_cast<double>(bags.size());
    out[m].measure = measures[m];
    out[m].n_bags = static_cast<int>(bags.size());
  }
  return out;
}

SensitivityScores subbag_ard(const Matrix& X, const Vector& y, const SubbagConfig& config,
                             const FitConfig& fit_config) {
  auto bags = collect_bags<Vector>(X, y, config, [&](const std::vector<Index>& idx) {
    return fit_bag(X, y, config, idx, fit_config).spec.lengthscales;
  });
  Vector acc = Vector::Zero(X.cols());
  for (const auto& [hash, l] : bags) acc += l;
  SensitivityScores scores;
  scores.method = SensitivityMethod::ard;
  scores.scores = (acc / static_cast<double>(bags.size())).cwiseMax(kScoreFloor);
  return scores;
}

double range_sensitivity(const Vector& x_col, const Vector& y, const FitConfig& fit_config) {
  if (x_col.size() != y.size()) throw ContractError("range_sensitivity: size mismatch");
  const Index n = x_col.size();
  const double col_sd =
      std::sqrt((x_col.array() - x_col.mean()).square().sum() / static_cast<double>(n));
  if (col_sd == 0.0) return kScoreFloor;  // degenerate column carries no signal

  Matrix X1(n, 1);
  X1.col(0) = x_col;
  GPModel model = fit_gp(X1, y, fit_config);

  auto posterior_mean = [&](double x) {
    Matrix q(1, 1);
    q(0, 0) = x;
    return predict(model, q, false).mean[0];
  };

  // grid safeguard
  const int grid_n = 512;
  double fmax = -std::numeric_limits<double>::infinity();
  double fmin = std::numeric_limits<double>::infinity();
  double xmax = 0.0, xmin = 0.0;
  for (int i = 0; i < grid_n; ++i) {
    const double x = static_cast<double>(i) / (grid_n - 1);
    const double f = posterior_mean(x);
    if (f > fmax) {
      fmax = f;
      xmax = x;
    }
    if (f < fmin) {
      fmin = f;
      xmin = x;
    }
  }

  // climbs start at the coordinates of the extreme observed responses
  Index i_hi, i_lo;
  y.maxCoeff(&i_hi);
  y.minCoeff(&i_lo);

  auto refine = [&](double x0, double sign) {
    double x = std::clamp(x0, 0.0, 1.0);
    double f = sign * posterior_mean(x);
    for (double step = 0.02; step > 1e-5; step *= 0.5) {
      bool moved = true;
      while (moved) {
        moved = false;
        for (double cand : {std::clamp(x + step, 0.0, 1.0), std::clamp(x - step, 0.0, 1.0)}) {
          const double fc = sign * posterior_mean(cand);
          if (fc > f) {
            f = fc;
            x = cand;
            moved = true;
          }
        }
      }
    }
    return sign * f;
  };

  fmax = std::max(fmax, refine(x_col[i_hi], +1.0));
  fmax = std::max(fmax, refine(xmax, +1.0));
  fmin = std::min(fmin, refine(x_col[i_lo], -1.0));
  fmin = std::min(fmin, refine(xmin, -1.0));

  return std::max(fmax - fmin, kScoreFloor);
}

SensitivityScores subbag_range(const Matrix& X, const Vector& y, const SubbagConfig& config,
                               const FitConfig& fit_config) {
  const Index p = X.cols();
  auto bags = collect_bags<Vector>(X, y, config, [&](const std::vector<Index>& idx) {
    Vector yb = entries_of(y, idx);
    FitConfig fc = bag_fit_config(fit_config, config, idx);
    Vector bag_scores(p);
    for (Index k = 0; k < p; ++k) {
      Vector col(static_cast<Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) col[static_cast<Index>(i)] = X(idx[i], k);
      bag_scores[k] = range_sensitivity(col, yb, fc);
    }
    return bag_scores;
  });
  Vector acc = Vector::Zero(p);
  for (const auto& [hash, s] : bags) acc += s;
  SensitivityScores scores;
  scores.method = SensitivityMethod::range;
  scores.scores = (acc / static_cast<double>(bags.size())).cwiseMax(kScoreFloor);
  return scores;
}

}  // namespace prewarp
