#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "geolm/diagnostics.hpp"
#include "geolm/step.hpp"

namespace geolm {

namespace detail {

// Pivoted Gaussian elimination for the oracle's tiny polish systems. Kept
// local so the oracle shares no linear algebra with the solver's QR path.
inline bool gauss_solve(std::vector<double> A, std::vector<double> b, int n, Vector& x) {
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::abs(A[i * n + k]) > std::abs(A[piv * n + k])) piv = i;
    if (A[piv * n + k] == 0.0) return false;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(A[k * n + j], A[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      const double f = A[i * n + k] / A[k * n + k];
      for (int j = k; j < n; ++j) A[i * n + j] -= f * A[k * n + j];
      b[i] -= f * b[k];
    }
  }
  x.resize(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= A[i * n + j] * x[j];
    if (A[i * n + i] == 0.0) return false;
    x[i] = s / A[i * n + i];
  }
  return x.allFinite();
}

struct QuarticObjective {
  const Vector& r;
  const Matrix& J;
  const std::vector<Matrix>& K;
  double lambda;
  const ScalingMatrix& D;

  // Model residual R(d) = r + J d + 1/2 d^T K d per component.
  Vector model_residual(const Vector& d) const {
    Vector R = r + J * d;
    for (size_t m = 0; m < K.size(); ++m) R[static_cast<long>(m)] += 0.5 * d.dot(K[m] * d);
    return R;
  }

  double value(const Vector& d) const {
    return model_residual(d).squaredNorm() + lambda * D.apply(d).squaredNorm();
  }

  Vector gradient(const Vector& d) const {
    const Vector R = model_residual(d);
    Matrix G = J;
    for (size_t m = 0; m < K.size(); ++m) G.row(static_cast<long>(m)) += (K[m] * d).transpose();
    Vector g = 2.0 * G.transpose() * R;
    g += 2.0 * lambda * D.diag.cwiseProduct(D.apply(d));
    return g;
  }

  Matrix hessian(const Vector& d) const {
    const Vector R = model_residual(d);
    Matrix G = J;
    for (size_t m = 0; m < K.size(); ++m) G.row(static_cast<long>(m)) += (K[m] * d).transpose();
    Matrix H = 2.0 * G.transpose() * G;
    for (size_t m = 0; m < K.size(); ++m) H += 2.0 * R[static_cast<long>(m)] * K[m];
    H += Matrix(2.0 * lambda * D.diag.cwiseProduct(D.diag).asDiagonal());
    return H;
  }
};

// Standard Nelder-Mead on the quartic objective (basin finding only; a
// Newton polish refines past the f-resolution floor afterwards).
inline Vector nelder_mead(const QuarticObjective& f, const Vector& start, double scale,
                          double ftol, int max_iter) {
  const int n = static_cast<int>(start.size());
  std::vector<Vector> pts(n + 1, start);
  std::vector<double> vals(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1][i] += scale;
  for (int i = 0; i <= n; ++i) vals[i] = f.value(pts[i]);

  auto order = [&] {
    for (int i = 1; i <= n; ++i) {
      Vector p = pts[i];
      double v = vals[i];
      int j = i - 1;
      while (j >= 0 && vals[j] > v) {
        pts[j + 1] = pts[j];
        vals[j + 1] = vals[j];
        --j;
      }
      pts[j + 1] = std::move(p);
      vals[j + 1] = v;
    }
  };
  order();

  for (int it = 0; it < max_iter; ++it) {
    if (vals[n] - vals[0] <= ftol * (std::abs(vals[0]) + 1e-300)) break;
    Vector centroid = Vector::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= n;

    Vector refl = centroid + (centroid - pts[n]);
    double f_refl = f.value(refl);
    if (f_refl < vals[0]) {
      Vector exp_pt = centroid + 2.0 * (centroid - pts[n]);
      double f_exp = f.value(exp_pt);
      if (f_exp < f_refl) {
        pts[n] = std::move(exp_pt);
        vals[n] = f_exp;
      } else {
        pts[n] = std::move(refl);
        vals[n] = f_refl;
      }
    } else if (f_refl < vals[n - 1]) {
      pts[n] = std::move(refl);
      vals[n] = f_refl;
    } else {
      Vector contr = centroid + 0.5 * (pts[n] - centroid);
      double f_contr = f.value(contr);
      if (f_contr < vals[n]) {
        pts[n] = std::move(contr);
        vals[n] = f_contr;
      } else {
        for (int i = 1; i <= n; ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          vals[i] = f.value(pts[i]);
        }
      }
    }
    order();
  }
  return pts[0];
}

inline Vector newton_polish(const QuarticObjective& f, Vector d, int max_iter = 60) {
  const int n = static_cast<int>(d.size());
  for (int it = 0; it < max_iter; ++it) {
    const Vector g = f.gradient(d);
    const Matrix H = f.hessian(d);
    std::vector<double> A(n * n);
    std::vector<double> b(n);
    for (int i = 0; i < n; ++i) {
      b[i] = g[i];
      for (int j = 0; j < n; ++j) A[i * n + j] = H(i, j);
    }
    Vector step;
    if (!gauss_solve(std::move(A), std::move(b), n, step)) break;
    // Backtrack if the Newton step does not decrease f (indefinite Hessian
    // away from the minimum).
    double t = 1.0;
    const double f0 = f.value(d);
    Vector trial = d - step;
    for (int bt = 0; bt < 30 && !(f.value(trial) <= f0); ++bt) {
      t *= 0.5;
      trial = d - t * step;
    }
    if (!(f.value(trial) <= f0)) break;
    d = std::move(trial);
    if ((t * step).norm() <= 1e-15 * (1.0 + d.norm())) break;
  }
  return d;
}

}  // namespace detail

/// Brute-force minimizer of |r + J d + 1/2 d^T K d|^2 + lambda |D d|^2 over
/// the step d: the exact constrained-step oracle the perturbative
/// construction is tested against. K comes from the analytic second
/// directional derivative (polarized) when available, else central FD.
/// Multi-start simplex search (8 starts including the velocity step and 0)
/// followed by a Newton polish on the explicit quartic. Test-side only;
/// intended for n_params <= 4.
inline Vector oracle_constrained_step(const ProblemDefinition& p, const Vector& theta,
                                      double lambda, const ScalingMatrix& D,
                                      std::uint64_t seed = 0) {
  EvaluationCounters counters;
  const Vector r = eval_residuals(p, theta, counters);
  FdConfig fd;
  const Matrix J = eval_jacobian(p, theta, fd, counters, &r);
  const std::vector<Matrix> K = second_derivative_tensor(p, theta, counters);

  Vector d1;
  try {
    d1 = velocity_step(J, r, lambda, D);
  } catch (const RankDeficient&) {
    d1 = Vector::Zero(p.n_params);
  }
  const double scale = std::max(d1.norm(), 1e-8);

  detail::QuarticObjective f{r, J, K, lambda, D};

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> starts = {d1, Vector::Zero(p.n_params)};
  while (starts.size() < 8) {
    Vector s = d1;
    for (long j = 0; j < s.size(); ++j) s[j] += 0.5 * scale * normal(rng);
    starts.push_back(std::move(s));
  }

  Vector best;
  double best_val = std::numeric_limits<double>::infinity();
  for (const Vector& s : starts) {
    Vector nm = detail::nelder_mead(f, s, 0.25 * scale, 1e-14, 400 * p.n_params * p.n_params);
    Vector polished = detail::newton_polish(f, nm);
    const double v = f.value(polished);
    if (v < best_val) {
      best_val = v;
      best = std::move(polished);
    }
  }
  // Polish from the velocity step explicitly: the relevant minimum is the
  // one its basin contains.
  {
    Vector polished = detail::newton_polish(f, d1);
    const double v = f.value(polished);
    if (v < best_val) {
      best_val = v;
      best = std::move(polished);
    }
  }

  const double g_res = f.gradient(best).norm();
  const double g_ref = f.gradient(Vector::Zero(p.n_params)).norm();
  if (!best.allFinite() || g_res > 1e-6 * (1.0 + g_ref))
    throw OracleNoConverge("oracle stationarity residual " + std::to_string(g_res));
  return best;
}

}  // namespace geolm
