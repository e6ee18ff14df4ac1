#include "prewarp/kernel.hpp"

#include <cmath>
#include <sstream>

namespace prewarp {

KernelSpec KernelSpec::separable(Vector lengthscales, double signal_variance, double nugget) {
  KernelSpec spec;
  spec.family = KernelFamily::separable_gaussian;
  spec.lengthscales = std::move(lengthscales);
  spec.signal_variance = signal_variance;
  spec.nugget = nugget;
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::isotropic(int dim, double lengthscale, double signal_variance, double nugget) {
  KernelSpec spec;
  spec.family = KernelFamily::isotropic_gaussian;
  spec.lengthscales = Vector::Constant(dim, lengthscale);
  spec.signal_variance = signal_variance;
  spec.nugget = nugget;
  spec.validate();
  return spec;
}

void KernelSpec::validate() const {
  if (lengthscales.size() == 0) throw ContractError("KernelSpec: empty lengthscale vector");
  if (!(lengthscales.array() > 0.0).all())
    throw ContractError("KernelSpec: lengthscales must be positive");
  if (!(signal_variance > 0.0)) throw ContractError("KernelSpec: signal variance must be positive");
  if (!(nugget >= 0.0)) throw ContractError("KernelSpec: nugget must be non-negative");
  if (family == KernelFamily::isotropic_gaussian) {
    for (Index k = 1; k < lengthscales.size(); ++k) {
      if (lengthscales[k] != lengthscales[0])
        throw ContractError("KernelSpec: isotropic family requires equal lengthscales");
    }
  }
}

namespace {

inline double eval_rows(const Matrix& A, Index i, const Matrix& B, Index j, const KernelSpec& spec) {
  double q = 0.0;
  for (Index k = 0; k < A.cols(); ++k) {
    const double d = A(i, k) - B(j, k);
    q += d * d / (2.0 * spec.lengthscales[k]);
  }
  return spec.signal_variance * std::exp(-q);
}

}  // namespace

double kernel_eval(const Vector& x_i, const Vector& x_j, const KernelSpec& spec) {
  if (x_i.size() != x_j.size() || x_i.size() != spec.lengthscales.size()) {
    std::ostringstream msg;
    msg << "kernel_eval: dimension mismatch (" << x_i.size() << ", " << x_j.size() << ", "
        << spec.lengthscales.size() << ")";
    throw ContractError(msg.str());
  }
  double q = 0.0;
  for (Index k = 0; k < x_i.size(); ++k) {
    const double d = x_i[k] - x_j[k];
    q += d * d / (2.0 * spec.lengthscales[k]);
  }
  return spec.signal_variance * std::exp(-q);
}

Matrix kernel_matrix(const Matrix& X, const KernelSpec& spec, bool with_nugget) {
  if (X.cols() != spec.lengthscales.size())
    throw ContractError("kernel_matrix: design dimension does not match kernel spec");
  const Index n = X.rows();
  Matrix K(n, n);
#pragma omp parallel for schedule(static) if (n >= 64)
  for (Index i = 0; i < n; ++i) {
    K(i, i) = spec.signal_variance;
    for (Index j = i + 1; j < n; ++j) {
      const double v = eval_rows(X, i, X, j, spec);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  if (with_nugget) K.diagonal().array() += spec.nugget;
  return K;
}

Matrix cross_kernel_matrix(const Matrix& A, const Matrix& B, const KernelSpec& spec) {
  if (A.cols() != B.cols() || A.cols() != spec.lengthscales.size())
    throw ContractError("cross_kernel_matrix: dimension mismatch");
  Matrix K(A.rows(), B.rows());
#pragma omp parallel for schedule(static) if (A.rows() * B.rows() >= 4096)
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.rows(); ++j) K(i, j) = eval_rows(A, i, B, j, spec);
  return K;
}

Matrix grad_cross_kernel(const Vector& x_star, const Matrix& X, const KernelSpec& spec) {
  if (x_star.size() != X.cols() || x_star.size() != spec.lengthscales.size())
    throw ContractError("grad_cross_kernel: dimension mismatch");
  const Index n = X.rows();
  const Index p = x_star.size();
  Matrix G(p, n);
  for (Index j = 0; j < n; ++j) {
    const double kv = kernel_eval(x_star, X.row(j).transpose(), spec);
    for (Index k = 0; k < p; ++k)
      G(k, j) = -((x_star[k] - X(j, k)) / spec.lengthscales[k]) * kv;
  }
  return G;
}

Matrix grad_prior_cov(const Vector& x_star, const KernelSpec& spec) {
  if (x_star.size() != spec.lengthscales.size())
    throw ContractError("grad_prior_cov: dimension mismatch");
  return (spec.signal_variance * spec.lengthscales.array().inverse()).matrix().asDiagonal();
}

Vector CholFactor::solve(const Vector& b) const {
  Vector x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Matrix CholFactor::solve(const Matrix& B) const {
  Matrix X = lower.triangularView<Eigen::Lower>().solve(B);
  lower.triangularView<Eigen::Lower>().transpose().solveInPlace(X);
  return X;
}

Vector CholFactor::forward(const Vector& b) const {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

Matrix CholFactor::forward(const Matrix& B) const {
  return lower.triangularView<Eigen::Lower>().solve(B);
}

double CholFactor::log_det() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

CholFactor jittered_llt(Matrix K, double scale) {
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() == Eigen::Success) return {llt.matrixL(), 0.0};
  double jitter = 1e-8 * scale;
  const double max_jitter = 1e-4 * scale;
  double added = 0.0;
  while (jitter <= max_jitter * (1.0 + 1e-12)) {
    K.diagonal().array() += jitter - added;
    added = jitter;
    llt.compute(K);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
    jitter *= 10.0;
  }
  std::ostringstream msg;
  msg << "jittered_llt: factorization failed after jitter escalation to " << max_jitter;
  throw NumericalError(msg.str());
}

}  // namespace prewarp
