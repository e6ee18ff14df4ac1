#include "prewarp/gp.hpp"

#include "prewarp/optim.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace prewarp {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct Standardized {
  Vector y;
  double mean = 0.0;
  double sd = 1.0;
};

Standardized standardize(const Vector& y) {
  Standardized s;
  const Index n = y.size();
  s.mean = y.mean();
  double var = (y.array() - s.mean).square().sum() / static_cast<double>(n);
  s.sd = std::sqrt(var);
  if (s.sd > 0.0)
    s.y = (y.array() - s.mean) / s.sd;
  else
    s.y = Vector::Zero(n);
  return s;
}

// Correlation matrix of the Gaussian kernel (unit signal variance, no nugget).
Matrix correlation_matrix(const Matrix& X, const Vector& lengthscales) {
  const Index n = X.rows();
  const Index p = X.cols();
  Matrix R(n, n);
#pragma omp parallel for schedule(static) if (n >= 64)
  for (Index i = 0; i < n; ++i) {
    R(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      double q = 0.0;
      for (Index k = 0; k < p; ++k) {
        const double d = X(i, k) - X(j, k);
        q += d * d / (2.0 * lengthscales[k]);
      }
      const double v = std::exp(-q);
      R(i, j) = v;
      R(j, i) = v;
    }
  }
  return R;
}

// Profile log likelihood of the standardized responses at (log l, log g~),
// with the constant mean and signal variance maximized out analytically.
struct ProfilePoint {
  double loglik = -std::numeric_limits<double>::infinity();
  double beta0 = 0.0;
  double sigma2 = 1.0;
};

class ProfileObjective {
 public:
  ProfileObjective(const Matrix& X, const Vector& ys, KernelFamily family)
      : X_(X), ys_(ys), family_(family), n_(X.rows()), p_(X.cols()) {}

  Index n_params() const { return family_ == KernelFamily::isotropic_gaussian ? 2 : p_ + 1; }

  Vector lengthscales_from(const Vector& params) const {
    if (family_ == KernelFamily::isotropic_gaussian)
      return Vector::Constant(p_, std::exp(params[0]));
    return params.head(p_).array().exp();
  }

  double rel_nugget_from(const Vector& params) const { return std::exp(params[params.size() - 1]); }

  // Negative profile log likelihood; fills grad (same parameter order) when asked.
  double operator()(const Vector& params, Vector* grad, ProfilePoint* out = nullptr) const {
    const Vector ell = lengthscales_from(params);
    const double g = rel_nugget_from(params);

    Matrix R = correlation_matrix(X_, ell);
    Matrix A = R;
    A.diagonal().array() += g;
    CholFactor chol = jittered_llt(std::move(A), 1.0 + g);

    Vector ones = Vector::Ones(n_);
    Vector u = chol.solve(ys_);
    Vector v = chol.solve(ones);
    const double denom = ones.dot(v);
    const double beta0 = denom > 0.0 ? ones.dot(u) / denom : 0.0;
    Vector alpha = u - beta0 * v;
    const double q = std::max((ys_ - beta0 * ones).dot(alpha), 1e-300);
    const double sigma2 = std::max(q / static_cast<double>(n_), 1e-12);

    const double loglik = -0.5 * static_cast<double>(n_) * std::log(sigma2) - 0.5 * chol.log_det() -
                          0.5 * static_cast<double>(n_) * (1.0 + kLog2Pi);
    if (out) {
      out->loglik = loglik;
      out->beta0 = beta0;
      out->sigma2 = sigma2;
    }

    if (grad) {
      // dl/dtheta = -1/2 sum( G0 .* dA/dtheta ), G0 = A^-1 - alpha alpha^T / sigma2
      Matrix eye = Matrix::Identity(n_, n_);
      Matrix W = chol.solve(eye);
      Matrix H = (W - (alpha * alpha.transpose()) / sigma2).cwiseProduct(R);
      Vector rowsum = H.rowwise().sum();
      grad->resize(n_params());
      if (family_ == KernelFamily::isotropic_gaussian) {
        double acc = 0.0;
        for (Index k = 0; k < p_; ++k) {
          Vector xk = X_.col(k);
          acc += rowsum.dot(xk.cwiseProduct(xk)) - xk.dot(H * xk);
        }
        (*grad)[0] = -(1.0 / (2.0 * ell[0])) * acc;  // d(-loglik)... sign fixed below
      } else {
        for (Index k = 0; k < p_; ++k) {
          Vector xk = X_.col(k);
          const double acc = rowsum.dot(xk.cwiseProduct(xk)) - xk.dot(H * xk);
          (*grad)[k] = -(1.0 / (2.0 * ell[k])) * acc;
        }
      }
      (*grad)[n_params() - 1] = -0.5 * g * (W.trace() - alpha.squaredNorm() / sigma2);
      // gradients above are of the log likelihood; we minimize its negative
      *grad = -*grad;
    }
    return -loglik;
  }

 private:
  const Matrix& X_;
  const Vector& ys_;
  KernelFamily family_;
  Index n_;
  Index p_;
};

// Per-dimension squared-distance quantiles over a thinned pair sample; the
// natural scale unit for lengthscale starting values.
struct DistQuantiles {
  Vector q05;  // per dimension
  Vector q50;
  double full_q05 = 0.0;  // of the summed squared distance (isotropic)
  double full_q50 = 0.0;
};

DistQuantiles distance_quantiles(const Matrix& X) {
  const Index n = X.rows();
  const Index p = X.cols();
  const Index cap = std::min<Index>(n, 160);
  const Index stride = std::max<Index>(1, n / cap);

  std::vector<std::vector<double>> per_dim(static_cast<std::size_t>(p));
  std::vector<double> full;
  for (Index i = 0; i < n; i += stride)
    for (Index j = i + stride; j < n; j += stride) {
      double total = 0.0;
      for (Index k = 0; k < p; ++k) {
        const double t = X(i, k) - X(j, k);
        const double d2 = t * t;
        if (d2 > 0.0) per_dim[static_cast<std::size_t>(k)].push_back(d2);
        total += d2;
      }
      if (total > 0.0) full.push_back(total);
    }

  auto quantile = [](std::vector<double>& v, double q, double fallback) {
    if (v.empty()) return fallback;
    const auto pos = v.begin() + static_cast<std::ptrdiff_t>(q * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), pos, v.end());
    return *pos;
  };

  DistQuantiles out;
  out.q05.resize(p);
  out.q50.resize(p);
  for (Index k = 0; k < p; ++k) {
    auto& v = per_dim[static_cast<std::size_t>(k)];
    std::vector<double> copy = v;
    out.q05[k] = quantile(v, 0.05, 1.0);
    out.q50[k] = quantile(copy, 0.50, 1.0);
  }
  std::vector<double> full_copy = full;
  out.full_q05 = quantile(full, 0.05, 1.0);
  out.full_q50 = quantile(full_copy, 0.50, 1.0);
  return out;
}

// Starting points in log space: distance-scale-matched deterministic starts
// first (median scale, fine scale, smooth scale), stratified draws after.
Matrix start_points(const FitConfig& config, const Matrix& X, KernelFamily family, Index d,
                    const Vector& lo, const Vector& hi) {
  DistQuantiles dq = distance_quantiles(X);
  const Index p = X.cols();
  Vector l_med(d - 1), l_fine(d - 1);
  if (family == KernelFamily::isotropic_gaussian) {
    l_med[0] = dq.full_q50;
    l_fine[0] = dq.full_q05;
  } else {
    for (Index k = 0; k < p; ++k) {
      l_med[k] = dq.q50[k];
      l_fine[k] = dq.q05[k];
    }
  }

  Matrix starts(config.n_starts, d);
  auto set_start = [&](Index row, const Vector& ell, double rel_nugget) {
    for (Index k = 0; k + 1 < d; ++k) starts(row, k) = std::clamp(std::log(ell[k]), lo[k], hi[k]);
    starts(row, d - 1) = std::clamp(std::log(rel_nugget), lo[d - 1], hi[d - 1]);
  };
  set_start(0, l_med, 1e-4);
  if (config.n_starts >= 2) set_start(1, l_fine, 1e-6);
  if (config.n_starts >= 3) set_start(2, Vector(10.0 * l_med), 1e-2);

  const Index fixed = std::min<Index>(3, config.n_starts);
  const Index m = config.n_starts - fixed;
  if (m > 0) {
    Rng rng(mix_seed(config.seed, 0xA115));
    for (Index k = 0; k < d; ++k) {
      std::vector<Index> perm(static_cast<std::size_t>(m));
      for (Index i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
      shuffle(perm, rng);
      for (Index i = 0; i < m; ++i) {
        const double cell =
            (static_cast<double>(perm[static_cast<std::size_t>(i)]) + rng.uniform_open()) /
            static_cast<double>(m);
        starts(fixed + i, k) = lo[k] + (hi[k] - lo[k]) * cell;
      }
    }
  }
  return starts;
}

GPModel constant_model(const Matrix& X, const Vector& y, KernelFamily family, double mean) {
  KernelSpec spec;
  spec.family = family;
  spec.lengthscales = Vector::Ones(X.cols());
  spec.signal_variance = 1e-12;
  spec.nugget = 1e-12;
  return GPModel::from_spec(X, y, std::move(spec), mean);
}

}  // namespace

GPModel GPModel::from_spec(Matrix X, Vector y, KernelSpec spec, double beta0) {
  spec.validate();
  if (X.cols() != spec.lengthscales.size())
    throw ContractError("GPModel: design dimension does not match kernel spec");
  if (X.rows() != y.size()) throw ContractError("GPModel: response length does not match design");
  GPModel model;
  model.chol = jittered_llt(kernel_matrix(X, spec, true), spec.signal_variance);
  Vector resid = (y.array() - beta0).matrix();
  model.alpha = model.chol.solve(resid);
  model.X = std::move(X);
  model.y = std::move(y);
  model.spec = std::move(spec);
  model.beta0 = beta0;
  return model;
}

GPModel GPModel::prior(KernelSpec spec, double beta0) {
  const int p = spec.dim();
  return from_spec(Matrix(0, p), Vector(0), std::move(spec), beta0);
}

double log_marginal_likelihood(const KernelSpec& spec, double beta0, const Matrix& X,
                               const Vector& y) {
  spec.validate();
  if (X.rows() != y.size()) throw ContractError("log_marginal_likelihood: size mismatch");
  const Index n = X.rows();
  CholFactor chol = jittered_llt(kernel_matrix(X, spec, true), spec.signal_variance);
  Vector resid = (y.array() - beta0).matrix();
  Vector alpha = chol.solve(resid);
  return -0.5 * resid.dot(alpha) - 0.5 * chol.log_det() - 0.5 * static_cast<double>(n) * kLog2Pi;
}

GPModel fit_gp(const Matrix& X, const Vector& y, const FitConfig& config) {
  if (X.rows() != y.size()) throw ContractError("fit_gp: response length does not match design");
  if (X.rows() < 1) throw ContractError("fit_gp: empty design");

  Standardized std_y = standardize(y);
  if (std_y.sd == 0.0) return constant_model(X, y, config.family, std_y.mean);

  ProfileObjective objective(X, std_y.y, config.family);
  const Index d = objective.n_params();
  Vector lo(d), hi(d);
  for (Index k = 0; k + 1 < d; ++k) {
    lo[k] = std::log(config.lengthscale_lo);
    hi[k] = std::log(config.lengthscale_hi);
  }
  lo[d - 1] = std::log(config.nugget_lo);
  hi[d - 1] = std::log(config.nugget_hi);

  Matrix starts = start_points(config, X, config.family, d, lo, hi);

  // objective wrapper that maps factorization failures to +inf so a bad
  // start is abandoned instead of aborting the fit
  BoxObjective boxed = [&](const Vector& params, Vector* grad) -> double {
    try {
      return objective(params, grad);
    } catch (const NumericalError&) {
      if (grad) grad->setConstant(d, std::numeric_limits<double>::quiet_NaN());
      return std::numeric_limits<double>::infinity();
    }
  };

  OptimOptions opts;
  opts.max_iters = config.max_iters;

  double best_f = std::numeric_limits<double>::infinity();
  Vector best_params;
  int n_failed = 0;
  std::string last_error;
  for (int s = 0; s < config.n_starts; ++s) {
    try {
      Vector x0 = starts.row(s).transpose();
      OptimResult res = config.use_gradient ? minimize_box(boxed, x0, lo, hi, opts)
                                            : nelder_mead_box(boxed, x0, lo, hi, opts);
      if (std::isfinite(res.f) && res.f < best_f) {
        best_f = res.f;
        best_params = res.x;
      }
    } catch (const std::exception& e) {
      ++n_failed;
      last_error = e.what();
    }
  }
  if (!best_params.size()) {
    std::ostringstream msg;
    msg << "fit_gp: all " << config.n_starts << " starts failed (" << n_failed
        << " with errors; last: " << last_error << ")";
    throw NumericalError(msg.str());
  }

  ProfilePoint prof;
  objective(best_params, nullptr, &prof);

  KernelSpec spec;
  spec.family = config.family;
  spec.lengthscales = objective.lengthscales_from(best_params);
  const double s2 = std_y.sd * std_y.sd;
  spec.signal_variance = prof.sigma2 * s2;
  spec.nugget = prof.sigma2 * objective.rel_nugget_from(best_params) * s2;
  const double beta0 = std_y.mean + std_y.sd * prof.beta0;
  return GPModel::from_spec(X, y, std::move(spec), beta0);
}

PredictiveDist predict(const GPModel& model, const Matrix& X_star, bool include_nugget) {
  if (X_star.cols() != model.dim()) throw ContractError("predict: dimension mismatch");
  const Index m = X_star.rows();
  PredictiveDist out;
  if (model.n() == 0) {
    out.mean = Vector::Constant(m, model.beta0);
    out.variance = Vector::Constant(m, model.spec.signal_variance +
                                           (include_nugget ? model.spec.nugget : 0.0));
    return out;
  }
  Matrix kstar = cross_kernel_matrix(model.X, X_star, model.spec);  // n x m
  out.mean = model.beta0 + (kstar.transpose() * model.alpha).array();
  Matrix V = model.chol.forward(kstar);  // L^-1 kstar
  out.variance.resize(m);
  for (Index i = 0; i < m; ++i)
    out.variance[i] = std::max(model.spec.signal_variance - V.col(i).squaredNorm(), 0.0);
  if (include_nugget) out.variance.array() += model.spec.nugget;
  return out;
}

GradientPosterior gradient_posterior(const GPModel& model, const Vector& x_star) {
  if (x_star.size() != model.dim()) throw ContractError("gradient_posterior: dimension mismatch");
  GradientPosterior out;
  Matrix prior = grad_prior_cov(x_star, model.spec);
  if (model.n() == 0) {
    out.mean = Vector::Zero(x_star.size());
    out.cov = std::move(prior);
    return out;
  }
  Matrix G = grad_cross_kernel(x_star, model.X, model.spec);  // p x n
  out.mean = G * model.alpha;
  Matrix Gt = G.transpose();
  Matrix S = model.chol.forward(Gt);  // n x p
  Matrix cov = prior - S.transpose() * S;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

}  // namespace prewarp
