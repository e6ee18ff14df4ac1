#include "prewarp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace prewarp {

namespace {

constexpr double kLogitCap = 16.0;  // keeps the transform away from exact saturation

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

Vector to_box(const Vector& u, const Vector& lo, const Vector& hi) {
  Vector x(u.size());
  for (Index i = 0; i < u.size(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * sigmoid(u[i]);
  return x;
}

Vector from_box(const Vector& x, const Vector& lo, const Vector& hi) {
  Vector u(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    double t = (x[i] - lo[i]) / (hi[i] - lo[i]);
    t = std::clamp(t, 1e-7, 1.0 - 1e-7);
    u[i] = std::clamp(std::log(t / (1.0 - t)), -kLogitCap, kLogitCap);
  }
  return u;
}

void check_box(const Vector& x0, const Vector& lo, const Vector& hi) {
  if (x0.size() != lo.size() || x0.size() != hi.size())
    throw ContractError("minimize_box: bound dimensions do not match x0");
  for (Index i = 0; i < x0.size(); ++i)
    if (!(lo[i] < hi[i])) throw ContractError("minimize_box: requires lo < hi");
}

struct NonFinite {};

}  // namespace

OptimResult minimize_box(const BoxObjective& objective, const Vector& x0, const Vector& lo,
                         const Vector& hi, const OptimOptions& opts) {
  check_box(x0, lo, hi);
  const Index d = x0.size();

  // value/gradient in the unconstrained coordinates
  auto eval_u = [&](const Vector& u, Vector* gu) -> double {
    Vector x = to_box(u, lo, hi);
    Vector gx(d);
    double f = objective(x, gu ? &gx : nullptr);
    if (!std::isfinite(f)) throw NonFinite{};
    if (gu) {
      for (Index i = 0; i < d; ++i) {
        double s = sigmoid(u[i]);
        (*gu)[i] = gx[i] * (hi[i] - lo[i]) * s * (1.0 - s);
      }
      if (!gu->allFinite()) throw NonFinite{};
    }
    return f;
  };

  try {
    Vector u = from_box(x0, lo, hi);
    Vector g(d);
    double f = eval_u(u, &g);

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    OptimResult res;
    res.iters = 0;

    for (int iter = 0; iter < opts.max_iters; ++iter) {
      res.iters = iter + 1;
      if (g.norm() <= opts.grad_tol) {
        res.converged = true;
        break;
      }

      // two-loop recursion
      Vector q = g;
      std::vector<double> alpha(s_hist.size());
      for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
        alpha[i] = rho_hist[i] * s_hist[i].dot(q);
        q -= alpha[i] * y_hist[i];
      }
      if (!s_hist.empty()) {
        const Vector& s = s_hist.back();
        const Vector& y = y_hist.back();
        q *= s.dot(y) / y.dot(y);
      }
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        double beta = rho_hist[i] * y_hist[i].dot(q);
        q += (alpha[i] - beta) * s_hist[i];
      }
      Vector dir = -q;
      if (dir.dot(g) >= 0.0) dir = -g;  // restore descent

      // backtracking Armijo search
      double step = 1.0;
      const double slope = dir.dot(g);
      double f_new = f;
      Vector u_new = u, g_new = g;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        u_new = u + step * dir;
        for (Index i = 0; i < d; ++i) u_new[i] = std::clamp(u_new[i], -kLogitCap, kLogitCap);
        try {
          f_new = eval_u(u_new, &g_new);
        } catch (const NonFinite&) {
          step *= 0.5;
          continue;
        }
        if (f_new <= f + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        res.converged = true;  // no further progress available along descent
        break;
      }

      Vector s = u_new - u;
      Vector y = g_new - g;
      double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        s_hist.push_back(s);
        y_hist.push_back(y);
        rho_hist.push_back(1.0 / sy);
        if (static_cast<int>(s_hist.size()) > opts.lbfgs_memory) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho_hist.pop_front();
        }
      }
      if (std::abs(f - f_new) <= opts.f_tol * (1.0 + std::abs(f))) {
        u = u_new;
        f = f_new;
        g = g_new;
        res.converged = true;
        break;
      }
      u = u_new;
      f = f_new;
      g = g_new;
    }

    res.x = to_box(u, lo, hi);
    res.f = f;
    return res;
  } catch (const NonFinite&) {
    OptimResult res = nelder_mead_box(objective, x0, lo, hi, opts);
    res.used_fallback = true;
    return res;
  }
}

OptimResult nelder_mead_box(const BoxObjective& objective, const Vector& x0, const Vector& lo,
                            const Vector& hi, const OptimOptions& opts) {
  check_box(x0, lo, hi);
  const Index d = x0.size();
  const int n_pts = static_cast<int>(d) + 1;

  auto clamp_box = [&](Vector x) {
    for (Index i = 0; i < d; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  };
  auto eval = [&](const Vector& x) {
    double f = objective(x, nullptr);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  };

  std::vector<Vector> pts(n_pts);
  std::vector<double> fv(n_pts);
  pts[0] = clamp_box(x0);
  fv[0] = eval(pts[0]);
  for (Index i = 0; i < d; ++i) {
    Vector p = pts[0];
    double delta = 0.05 * (hi[i] - lo[i]);
    p[i] = (p[i] + delta <= hi[i]) ? p[i] + delta : p[i] - delta;
    pts[static_cast<std::size_t>(i) + 1] = p;
    fv[static_cast<std::size_t>(i) + 1] = eval(p);
  }

  auto order = [&]() {
    std::vector<int> idx(n_pts);
    for (int i = 0; i < n_pts; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Vector> p2(n_pts);
    std::vector<double> f2(n_pts);
    for (int i = 0; i < n_pts; ++i) {
      p2[i] = pts[idx[i]];
      f2[i] = fv[idx[i]];
    }
    pts.swap(p2);
    fv.swap(f2);
  };

  OptimResult res;
  const int max_iters = opts.max_iters * std::max<int>(4, n_pts);  // NM needs more steps
  for (int iter = 0; iter < max_iters; ++iter) {
    res.iters = iter + 1;
    order();
    double spread = 0.0;
    for (int i = 1; i < n_pts; ++i) spread = std::max(spread, (pts[i] - pts[0]).norm());
    if (std::abs(fv[n_pts - 1] - fv[0]) <= opts.f_tol * (1.0 + std::abs(fv[0])) &&
        spread <= 1e-8 * (1.0 + pts[0].norm())) {
      res.converged = true;
      break;
    }
    Vector centroid = Vector::Zero(d);
    for (int i = 0; i < n_pts - 1; ++i) centroid += pts[i];
    centroid /= static_cast<double>(n_pts - 1);

    Vector xr = clamp_box(centroid + (centroid - pts[n_pts - 1]));
    double fr = eval(xr);
    if (fr < fv[0]) {
      Vector xe = clamp_box(centroid + 2.0 * (centroid - pts[n_pts - 1]));
      double fe = eval(xe);
      if (fe < fr) {
        pts[n_pts - 1] = xe;
        fv[n_pts - 1] = fe;
      } else {
        pts[n_pts - 1] = xr;
        fv[n_pts - 1] = fr;
      }
    } else if (fr < fv[n_pts - 2]) {
      pts[n_pts - 1] = xr;
      fv[n_pts - 1] = fr;
    } else {
      Vector xc = clamp_box(centroid + 0.5 * (pts[n_pts - 1] - centroid));
      double fc = eval(xc);
      if (fc < fv[n_pts - 1]) {
        pts[n_pts - 1] = xc;
        fv[n_pts - 1] = fc;
      } else {
        for (int i = 1; i < n_pts; ++i) {
          pts[i] = clamp_box(pts[0] + 0.5 * (pts[i] - pts[0]));
          fv[i] = eval(pts[i]);
        }
      }
    }
  }
  order();
  res.x = pts[0];
  res.f = fv[0];
  return res;
}

}  // namespace prewarp
