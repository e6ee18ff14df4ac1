#include "prewarp/ref.hpp"

#include <algorithm>
#include <cmath>

namespace prewarp::ref {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double sq_dist_rows(const Matrix& Z, Index i, Index j, int r) {
  double d = 0.0;
  for (int k = 0; k < r; ++k) {
    const double t = Z(i, k) - Z(j, k);
    d += t * t;
  }
  return d;
}

}  // namespace

Matrix kernel_matrix(const Matrix& X, const KernelSpec& spec, bool with_nugget) {
  const Index n = X.rows();
  const Index p = X.cols();
  Matrix K(n, n);
  for (Index i = 0; i < n; ++i) {
    K(i, i) = spec.signal_variance;
    for (Index j = i + 1; j < n; ++j) {
      double q = 0.0;
      for (Index k = 0; k < p; ++k) {
        const double d = X(i, k) - X(j, k);
        q += d * d / (2.0 * spec.lengthscales[k]);
      }
      const double v = spec.signal_variance * std::exp(-q);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  if (with_nugget) K.diagonal().array() += spec.nugget;
  return K;
}

Matrix average_gradient_outer(const GPModel& model, const Matrix& points) {
  const Index m = points.rows();
  const Index p = points.cols();
  std::vector<Matrix> contrib(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    GradientPosterior g = gradient_posterior(model, points.row(i).transpose());
    contrib[static_cast<std::size_t>(i)] = g.cov + g.mean * g.mean.transpose();
  }
  Matrix C = Matrix::Zero(p, p);
  for (Index i = 0; i < m; ++i) C += contrib[static_cast<std::size_t>(i)];
  C /= static_cast<double>(m);
  return 0.5 * (C + C.transpose());
}

Vector knn_predict_batch(const Matrix& Z, const Vector& y, const Matrix& Z_star, int k) {
  const Index n = Z.rows();
  const Index m = Z_star.rows();
  Vector out(m);
  for (Index i = 0; i < m; ++i) {
    std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      double d = 0.0;
      for (Index c = 0; c < Z.cols(); ++c) {
        const double t = Z(j, c) - Z_star(i, c);
        d += t * t;
      }
      dist[static_cast<std::size_t>(j)] = {d, j};
    }
    std::sort(dist.begin(), dist.end());
    double acc = 0.0;
    for (int s = 0; s < k; ++s) acc += y[dist[static_cast<std::size_t>(s)].second];
    out[i] = acc / static_cast<double>(k);
  }
  return out;
}

double vecchia_loglik(const Matrix& Z, const Vector& y, const std::vector<Index>& order,
                      const std::vector<std::vector<Index>>& cond_sets, const KernelSpec& spec,
                      double beta0) {
  const Index n = static_cast<Index>(order.size());
  const double s2g = spec.signal_variance + spec.nugget;
  Vector terms(n);
  for (Index pos = 0; pos < n; ++pos) {
    const Index target = order[static_cast<std::size_t>(pos)];
    const auto& cset = cond_sets[static_cast<std::size_t>(pos)];
    double mean = beta0;
    double var = s2g;
    if (!cset.empty()) {
      const Index m = static_cast<Index>(cset.size());
      Matrix Zc(m, Z.cols());
      Vector yc(m), kc(m);
      for (Index j = 0; j < m; ++j) {
        Zc.row(j) = Z.row(cset[static_cast<std::size_t>(j)]);
        yc[j] = y[cset[static_cast<std::size_t>(j)]];
        kc[j] = kernel_eval(Zc.row(j).transpose(), Z.row(target).transpose(), spec);
      }
      Matrix Kcc = ref::kernel_matrix(Zc, spec, true);
      CholFactor chol = jittered_llt(std::move(Kcc), spec.signal_variance);
      Vector w = chol.forward(kc);
      Vector resid = (yc.array() - beta0).matrix();
      Vector u = chol.forward(resid);
      mean = beta0 + w.dot(u);
      var = std::max(s2g - w.squaredNorm(), 1e-12 * s2g);
    }
    const double d = y[target] - mean;
    terms[pos] = -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
  }
  return terms.sum();
}

double loo_knn_mse(const Matrix& Z, const Vector& y, int r, int k) {
  const Index n = Z.rows();
  Vector err2(n);
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> dist;
    dist.reserve(static_cast<std::size_t>(n) - 1);
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.emplace_back(sq_dist_rows(Z, i, j, r), j);
    }
    std::sort(dist.begin(), dist.end());
    double acc = 0.0;
    for (int s = 0; s < k; ++s) acc += y[dist[static_cast<std::size_t>(s)].second];
    const double pred = acc / static_cast<double>(k);
    err2[i] = (pred - y[i]) * (pred - y[i]);
  }
  return err2.mean();
}

}  // namespace prewarp::ref
