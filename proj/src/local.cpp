#include "prewarp/local.hpp"

#include "prewarp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace prewarp {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double sq_dist(const Matrix& Z, Index i, const Vector& z) {
  double d = 0.0;
  for (Index k = 0; k < Z.cols(); ++k) {
    const double t = Z(i, k) - z[k];
    d += t * t;
  }
  return d;
}

double sq_dist_rows(const Matrix& Z, Index i, Index j) {
  double d = 0.0;
  for (Index k = 0; k < Z.cols(); ++k) {
    const double t = Z(i, k) - Z(j, k);
    d += t * t;
  }
  return d;
}

Matrix gather_rows(const Matrix& Z, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), Z.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = Z.row(idx[i]);
  return out;
}

Vector gather(const Vector& y, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = y[idx[i]];
  return out;
}

}  // namespace

double mean_sq_spacing(const Matrix& Z) {
  const Index n = Z.rows();
  const Index cap = std::min<Index>(n, 256);
  double acc = 0.0;
  Index count = 0;
  const Index stride = std::max<Index>(1, n / cap);
  for (Index i = 0; i < n; i += stride)
    for (Index j = i + stride; j < n; j += stride) {
      acc += sq_dist_rows(Z, i, j);
      ++count;
    }
  return count > 0 ? std::max(acc / static_cast<double>(count), 1e-12) : 1.0;
}

std::vector<Index> knn_indices(const Matrix& Z, const Vector& z_star, int k) {
  const Index n = Z.rows();
  if (n == 0) throw ContractError("knn: empty training set");
  if (k < 1 || k > n) throw ContractError("knn: k out of range");
  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = {sq_dist(Z, j, z_star), j};
  const auto kth = dist.begin() + (k - 1);
  std::nth_element(dist.begin(), kth, dist.end());  // pair ordering breaks ties by index
  std::sort(dist.begin(), kth + 1);
  std::vector<Index> out(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s)
    out[static_cast<std::size_t>(s)] = dist[static_cast<std::size_t>(s)].second;
  return out;
}

double knn_predict(const Matrix& Z, const Vector& y, const Vector& z_star, int k) {
  std::vector<Index> idx = knn_indices(Z, z_star, k);
  double acc = 0.0;
  for (Index j : idx) acc += y[j];
  return acc / static_cast<double>(k);
}

Vector knn_predict_batch(const Matrix& Z, const Vector& y, const Matrix& Z_star, int k) {
  const Index m = Z_star.rows();
  Vector out(m);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < m; ++i) out[i] = knn_predict(Z, y, Z_star.row(i).transpose(), k);
  return out;
}

GPModel fit_isotropic_local(const Matrix& Z_design, const Vector& y_design,
                            const KernelSpec& spec0) {
  const double scale = mean_sq_spacing(Z_design);
  FitConfig fc;
  fc.family = KernelFamily::isotropic_gaussian;
  fc.n_starts = 2;
  fc.max_iters = 40;
  fc.lengthscale_lo = 1e-4 * scale;
  fc.lengthscale_hi = 1e4 * scale;
  fc.seed = 0;  // small deterministic search
  (void)spec0;  // greedy-phase parameters do not constrain the refit
  return fit_gp(Z_design, y_design, fc);
}

PredictiveDist local_gp_predict(const Matrix& Z, const Vector& y, const Vector& z_star,
                                const LocalConfig& config, const KernelSpec& spec0,
                                LocalGpTrace* trace) {
  const Index n = Z.rows();
  if (n == 0) throw ContractError("local_gp_predict: empty training set");
  if (config.k < 1 || config.n_max < config.k)
    throw ContractError("local_gp_predict: requires 1 <= k <= n_max");
  spec0.validate();

  Index n_max = std::min(config.n_max, n);
  const Index pool_target =
      std::min<Index>(n, static_cast<Index>(config.candidate_pool) * config.n_max);
  std::vector<Index> pool = knn_indices(Z, z_star, static_cast<int>(pool_target));
  if (static_cast<Index>(pool.size()) < config.n_max) {
    std::cerr << "warning: candidate pool smaller than n_max; shrinking local design to "
              << pool.size() << " points\n";
    n_max = static_cast<Index>(pool.size());
  }
  const Index kappa = std::min<Index>(config.k, n_max);

  const double s2 = spec0.signal_variance;
  const double g = spec0.nugget;
  const double var_floor = 1e-12 * (s2 + g);

  auto kval = [&](Index a, Index b) {
    return kernel_eval(Z.row(a).transpose(), Z.row(b).transpose(), spec0);
  };
  auto kstar = [&](Index a) { return kernel_eval(Z.row(a).transpose(), z_star, spec0); };

  // incrementally grown Cholesky of K_dd + g I, with c = L^-1 k_d(z_star)
  Matrix L = Matrix::Zero(n_max, n_max);
  Vector c(n_max);
  std::vector<Index> design;
  design.reserve(static_cast<std::size_t>(n_max));

  auto append_point = [&](Index global) {
    const Index m = static_cast<Index>(design.size());
    Vector kc(m);
    for (Index j = 0; j < m; ++j) kc[j] = kval(design[static_cast<std::size_t>(j)], global);
    Vector w = L.topLeftCorner(m, m).triangularView<Eigen::Lower>().solve(kc);
    const double d2 = std::max(s2 + g - w.squaredNorm(), var_floor);
    const double d = std::sqrt(d2);
    L.row(m).head(m) = w.transpose();
    L(m, m) = d;
    c[m] = (kstar(global) - w.dot(c.head(m))) / d;
    design.push_back(global);
  };

  for (Index s = 0; s < kappa; ++s) append_point(pool[static_cast<std::size_t>(s)]);
  if (trace) {
    trace->variance_path.clear();
    trace->chosen = design;
    trace->variance_path.push_back(std::max(s2 - c.head(kappa).squaredNorm(), 0.0));
  }

  std::vector<Index> remaining(pool.begin() + static_cast<std::ptrdiff_t>(kappa), pool.end());
  while (static_cast<Index>(design.size()) < n_max) {
    const Index m = static_cast<Index>(design.size());
    double best_score = -1.0;
    std::size_t best_pos = 0;
    for (std::size_t cidx = 0; cidx < remaining.size(); ++cidx) {
      const Index cand = remaining[cidx];
      Vector kc(m);
      for (Index j = 0; j < m; ++j) kc[j] = kval(design[static_cast<std::size_t>(j)], cand);
      Vector w = L.topLeftCorner(m, m).triangularView<Eigen::Lower>().solve(kc);
      const double denom = std::max(s2 + g - w.squaredNorm(), var_floor);
      const double num = kstar(cand) - w.dot(c.head(m));
      const double score = num * num / denom;  // variance reduction at z_star
      if (score > best_score) {
        best_score = score;
        best_pos = cidx;
      }
    }
    append_point(remaining[best_pos]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_pos));
    if (trace) {
      trace->chosen = design;
      trace->variance_path.push_back(
          std::max(s2 - c.head(static_cast<Index>(design.size())).squaredNorm(), 0.0));
    }
  }

  // one isotropic re-optimization on the final design, then predict
  GPModel local = fit_isotropic_local(gather_rows(Z, design), gather(y, design), spec0);
  Matrix q(1, Z.cols());
  q.row(0) = z_star.transpose();
  return predict(local, q, true);
}

PredictiveDist local_gp_predict_batch(const Matrix& Z, const Vector& y, const Matrix& Z_star,
                                      const LocalConfig& config, const KernelSpec& spec0) {
  const Index m = Z_star.rows();
  PredictiveDist out;
  out.mean.resize(m);
  out.variance.resize(m);
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < m; ++i) {
    PredictiveDist one = local_gp_predict(Z, y, Z_star.row(i).transpose(), config, spec0);
    out.mean[i] = one.mean[0];
    out.variance[i] = one.variance[0];
  }
  return out;
}

std::vector<Index> maxmin_ordering(const Matrix& Z) {
  const Index n = Z.rows();
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n));
  if (n == 0) return order;

  // medoid start: smallest total distance to all other points
  Vector total(n);
#pragma omp parallel for schedule(static) if (n >= 256)
  for (Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Index j = 0; j < n; ++j) acc += std::sqrt(sq_dist_rows(Z, i, j));
    total[i] = acc;
  }
  Index first = 0;
  total.minCoeff(&first);
  order.push_back(first);

  Vector mindist(n);
  for (Index j = 0; j < n; ++j) mindist[j] = sq_dist_rows(Z, j, first);
  mindist[first] = -1.0;  // consumed
  for (Index step = 1; step < n; ++step) {
    Index next = 0;
    double best = -1.0;
    for (Index j = 0; j < n; ++j)
      if (mindist[j] > best) {
        best = mindist[j];
        next = j;
      }
    order.push_back(next);
    mindist[next] = -1.0;
#pragma omp parallel for schedule(static) if (n >= 2048)
    for (Index j = 0; j < n; ++j)
      if (mindist[j] >= 0.0) mindist[j] = std::min(mindist[j], sq_dist_rows(Z, j, next));
  }
  return order;
}

std::vector<Index> coordinate_ordering(const Matrix& Z) {
  std::vector<Index> order(static_cast<std::size_t>(Z.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return Z(a, 0) < Z(b, 0); });
  return order;
}

std::vector<Index> random_ordering(Index n, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(mix_seed(seed, 0x02D));
  shuffle(order, rng);
  return order;
}

std::vector<std::vector<Index>> earlier_neighbor_sets(const Matrix& Z,
                                                      const std::vector<Index>& order, int m) {
  const Index n = static_cast<Index>(order.size());
  std::vector<std::vector<Index>> sets(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (Index pos = 0; pos < n; ++pos) {
    const Index target = order[static_cast<std::size_t>(pos)];
    const Index take = std::min<Index>(m, pos);
    if (take == 0) continue;
    std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(pos));
    for (Index e = 0; e < pos; ++e) {
      const Index cand = order[static_cast<std::size_t>(e)];
      dist[static_cast<std::size_t>(e)] = {sq_dist_rows(Z, cand, target), cand};
    }
    const auto kth = dist.begin() + (take - 1);
    std::nth_element(dist.begin(), kth, dist.end());
    std::sort(dist.begin(), kth + 1);
    auto& set = sets[static_cast<std::size_t>(pos)];
    set.resize(static_cast<std::size_t>(take));
    for (Index s = 0; s < take; ++s)
      set[static_cast<std::size_t>(s)] = dist[static_cast<std::size_t>(s)].second;
  }
  return sets;
}

double vecchia_loglik(const Matrix& Z, const Vector& y, const std::vector<Index>& order,
                      const std::vector<std::vector<Index>>& cond_sets, const KernelSpec& spec,
                      double beta0) {
  spec.validate();
  const Index n = static_cast<Index>(order.size());
  const double s2g = spec.signal_variance + spec.nugget;
  Vector terms(n);
#pragma omp parallel for schedule(dynamic)
  for (Index pos = 0; pos < n; ++pos) {
    const Index target = order[static_cast<std::size_t>(pos)];
    const auto& cset = cond_sets[static_cast<std::size_t>(pos)];
    double mean = beta0;
    double var = s2g;
    if (!cset.empty()) {
      const Index m = static_cast<Index>(cset.size());
      Matrix Zc = gather_rows(Z, cset);
      Matrix Kcc = kernel_matrix(Zc, spec, true);
      Vector kc(m);
      for (Index j = 0; j < m; ++j)
        kc[j] = kernel_eval(Zc.row(j).transpose(), Z.row(target).transpose(), spec);
      CholFactor chol = jittered_llt(std::move(Kcc), spec.signal_variance);
      Vector w = chol.forward(kc);
      Vector resid = (gather(y, cset).array() - beta0).matrix();
      Vector u = chol.forward(resid);
      mean = beta0 + w.dot(u);
      var = std::max(s2g - w.squaredNorm(), 1e-12 * s2g);
    }
    const double d = y[target] - mean;
    terms[pos] = -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
  }
  return terms.sum();
}

namespace {

struct VecchiaProfile {
  double loglik;
  double beta0;
  double sigma2;
};

// Conditional pieces at unit signal variance; the constant mean and the
// signal variance then profile out in closed form.
VecchiaProfile vecchia_profile(const Matrix& Z, const Vector& ys, const std::vector<Index>& order,
                               const std::vector<std::vector<Index>>& cond_sets,
                               const Vector& lengthscales, double rel_nugget) {
  const Index n = static_cast<Index>(order.size());
  KernelSpec corr;
  corr.family = KernelFamily::separable_gaussian;
  corr.lengthscales = lengthscales;
  corr.signal_variance = 1.0;
  corr.nugget = rel_nugget;

  Vector v(n), m0(n), s(n), yt(n), logv(n);
#pragma omp parallel for schedule(dynamic)
  for (Index pos = 0; pos < n; ++pos) {
    const Index target = order[static_cast<std::size_t>(pos)];
    const auto& cset = cond_sets[static_cast<std::size_t>(pos)];
    yt[pos] = ys[target];
    if (cset.empty()) {
      v[pos] = 1.0 + rel_nugget;
      m0[pos] = 0.0;
      s[pos] = 1.0;
    } else {
      const Index m = static_cast<Index>(cset.size());
      Matrix Zc = gather_rows(Z, cset);
      Matrix Rcc = kernel_matrix(Zc, corr, true);
      Vector rc(m);
      for (Index j = 0; j < m; ++j)
        rc[j] = kernel_eval(Zc.row(j).transpose(), Z.row(target).transpose(), corr);
      CholFactor chol = jittered_llt(std::move(Rcc), 1.0 + rel_nugget);
      Vector w = chol.forward(rc);
      Vector yc = gather(ys, cset);
      Vector ones = Vector::Ones(m);
      v[pos] = std::max(1.0 + rel_nugget - w.squaredNorm(), 1e-14);
      m0[pos] = w.dot(chol.forward(yc));
      s[pos] = 1.0 - w.dot(chol.forward(ones));
    }
    logv[pos] = std::log(v[pos]);
  }

  double num = 0.0, den = 0.0;
  for (Index i = 0; i < n; ++i) {
    num += s[i] * (yt[i] - m0[i]) / v[i];
    den += s[i] * s[i] / v[i];
  }
  const double beta0 = den > 0.0 ? num / den : 0.0;
  double q = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double r = yt[i] - m0[i] - beta0 * s[i];
    q += r * r / v[i];
  }
  const double sigma2 = std::max(q / static_cast<double>(n), 1e-12);
  const double loglik = -0.5 * static_cast<double>(n) * std::log(sigma2) - 0.5 * logv.sum() -
                        0.5 * static_cast<double>(n) * (1.0 + kLog2Pi);
  return {loglik, beta0, sigma2};
}

}  // namespace

VecchiaModel vecchia_fit(const Matrix& Z, const Vector& y, const LocalConfig& config,
                         const KernelSpec& spec0) {
  const Index n = Z.rows();
  if (n != y.size()) throw ContractError("vecchia_fit: size mismatch");
  if (config.cond_size < 1 || config.cond_size >= n)
    throw ContractError("vecchia_fit: requires 1 <= cond_size < n");
  spec0.validate();
  if (spec0.dim() != Z.cols()) throw ContractError("vecchia_fit: spec dimension mismatch");

  VecchiaModel model;
  switch (config.ordering) {
    case VecchiaOrdering::maxmin: model.order = maxmin_ordering(Z); break;
    case VecchiaOrdering::coordinate: model.order = coordinate_ordering(Z); break;
    case VecchiaOrdering::random: model.order = random_ordering(n, config.seed); break;
  }
  model.cond_sets = earlier_neighbor_sets(Z, model.order, config.cond_size);
  model.cond_size = config.cond_size;

  const double y_mean = y.mean();
  const double y_sd = std::sqrt((y.array() - y_mean).square().sum() / static_cast<double>(n));
  if (y_sd == 0.0) {
    KernelSpec spec;
    spec.family = spec0.family;
    spec.lengthscales = Vector::Ones(Z.cols());
    spec.signal_variance = 1e-12;
    spec.nugget = 1e-12;
    model.Z = Z;
    model.y = y;
    model.spec = spec;
    model.beta0 = y_mean;
    model.loglik = vecchia_loglik(Z, y, model.order, model.cond_sets, spec, y_mean);
    return model;
  }
  Vector ys = (y.array() - y_mean) / y_sd;

  const bool isotropic = spec0.family == KernelFamily::isotropic_gaussian;
  const Index p = Z.cols();
  const Index d = (isotropic ? 1 : p) + 1;
  const double scale = mean_sq_spacing(Z);

  Vector lo(d), hi(d);
  for (Index k = 0; k + 1 < d; ++k) {
    lo[k] = std::log(1e-4 * scale);
    hi[k] = std::log(1e4 * scale);
  }
  lo[d - 1] = std::log(1e-8);
  hi[d - 1] = std::log(1.0);

  auto unpack = [&](const Vector& params) {
    Vector ell = isotropic ? Vector(Vector::Constant(p, std::exp(params[0])))
                           : Vector(params.head(p).array().exp().matrix());
    return std::make_pair(ell, std::exp(params[d - 1]));
  };

  BoxObjective objective = [&](const Vector& params, Vector* grad) -> double {
    if (grad) grad->setConstant(d, std::numeric_limits<double>::quiet_NaN());
    try {
      auto [ell, g] = unpack(params);
      return -vecchia_profile(Z, ys, model.order, model.cond_sets, ell, g).loglik;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  // two deterministic starts: the supplied spec and a scale-centered default
  Matrix starts(2, d);
  for (Index k = 0; k + 1 < d; ++k) {
    const double l0 = spec0.lengthscales[isotropic ? 0 : k];
    starts(0, k) = std::clamp(std::log(l0), lo[k], hi[k]);
    starts(1, k) = std::clamp(std::log(scale), lo[k], hi[k]);
  }
  const double rel0 = spec0.nugget / std::max(spec0.signal_variance, 1e-300);
  starts(0, d - 1) = std::clamp(std::log(std::max(rel0, 1e-8)), lo[d - 1], hi[d - 1]);
  starts(1, d - 1) = std::clamp(std::log(1e-4), lo[d - 1], hi[d - 1]);

  OptimOptions opts;
  opts.max_iters = 40;
  double best_f = std::numeric_limits<double>::infinity();
  Vector best_params = starts.row(0).transpose();
  for (Index s = 0; s < starts.rows(); ++s) {
    OptimResult res = nelder_mead_box(objective, starts.row(s).transpose(), lo, hi, opts);
    if (std::isfinite(res.f) && res.f < best_f) {
      best_f = res.f;
      best_params = res.x;
    }
  }

  auto [ell, g] = unpack(best_params);
  VecchiaProfile prof = vecchia_profile(Z, ys, model.order, model.cond_sets, ell, g);

  KernelSpec spec;
  spec.family = spec0.family;
  spec.lengthscales = ell;
  spec.signal_variance = prof.sigma2 * y_sd * y_sd;
  spec.nugget = prof.sigma2 * g * y_sd * y_sd;
  model.Z = Z;
  model.y = y;
  model.spec = spec;
  model.beta0 = y_mean + y_sd * prof.beta0;
  model.loglik = prof.loglik - static_cast<double>(n) * std::log(y_sd);
  return model;
}

PredictiveDist vecchia_predict(const VecchiaModel& model, const Vector& z_star) {
  const Index n = model.Z.rows();
  const int m = static_cast<int>(std::min<Index>(model.cond_size, n));
  std::vector<Index> subset = knn_indices(model.Z, z_star, m);
  return subset_gp_predict(model.Z, model.y, subset, model.spec, model.beta0, z_star, true);
}

PredictiveDist vecchia_predict_batch(const VecchiaModel& model, const Matrix& Z_star) {
  const Index m = Z_star.rows();
  PredictiveDist out;
  out.mean.resize(m);
  out.variance.resize(m);
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < m; ++i) {
    PredictiveDist one = vecchia_predict(model, Z_star.row(i).transpose());
    out.mean[i] = one.mean[0];
    out.variance[i] = one.variance[0];
  }
  return out;
}

PredictiveDist subset_gp_predict(const Matrix& Z, const Vector& y,
                                 const std::vector<Index>& subset, const KernelSpec& spec,
                                 double beta0, const Vector& z_star, bool include_nugget) {
  const Index m = static_cast<Index>(subset.size());
  if (m == 0) throw ContractError("subset_gp_predict: empty subset");
  Matrix Zs = gather_rows(Z, subset);
  Matrix Kss = kernel_matrix(Zs, spec, true);
  Vector ks(m);
  for (Index j = 0; j < m; ++j) ks[j] = kernel_eval(Zs.row(j).transpose(), z_star, spec);
  CholFactor chol = jittered_llt(std::move(Kss), spec.signal_variance);
  Vector w = chol.forward(ks);
  Vector resid = (gather(y, subset).array() - beta0).matrix();
  Vector u = chol.forward(resid);
  PredictiveDist out;
  out.mean = Vector::Constant(1, beta0 + w.dot(u));
  double var = std::max(spec.signal_variance - w.squaredNorm(), 0.0);
  if (include_nugget) var += spec.nugget;
  out.variance = Vector::Constant(1, var);
  return out;
}

}  // namespace prewarp
