#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "geolm/linalg.hpp"
#include "geolm/problem.hpp"

namespace geolm {

/// Gauss-Newton Hessian J^T J (symmetric PSD).
inline Matrix gn_hessian(const Matrix& J) { return J.transpose() * J; }

/// Spectral norm of a symmetric matrix by power iteration. Diagnostics
/// precision: relative tolerance `tol`, not solver-grade.
inline double spectral_norm(const Matrix& A, double tol = 1e-6) {
  const long n = A.rows();
  if (n == 0) return 0.0;
  Vector v(n);
  for (long i = 0; i < n; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i % 7);
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Vector w = A * v;
    const double s = w.norm();
    if (s == 0.0) return 0.0;
    v = w / s;
    if (it > 0 && std::abs(s - sigma) <= tol * s) return s;
    sigma = s;
  }
  return sigma;
}

/// Full second-derivative array K as M matrices of shape N x N. Uses the
/// analytic directional second derivative (by polarization) when available,
/// otherwise central finite differences over parameter pairs. Cost:
/// N(N+1)/2 probes; diagnostics and oracle use only.
inline std::vector<Matrix> second_derivative_tensor(const ProblemDefinition& p,
                                                    const Vector& theta,
                                                    EvaluationCounters& counters,
                                                    bool prefer_analytic = true,
                                                    double fd_step = 1e-4) {
  const int n = p.n_params;
  const int m = p.n_residuals;
  std::vector<Matrix> K(m, Matrix::Zero(n, n));

  if (prefer_analytic && p.has_second_dir()) {
    // K[v,w] = (K[v+w,v+w] - K[v,v] - K[w,w]) / 2 with unit-vector probes.
    std::vector<Vector> diag(n);
    for (int mu = 0; mu < n; ++mu) {
      Vector e = Vector::Zero(n);
      e[mu] = 1.0;
      diag[mu] = p.second_dir_fn(theta, e);
      ++counters.second_deriv_evals;
      for (int i = 0; i < m; ++i) K[i](mu, mu) = diag[mu][i];
    }
    for (int mu = 0; mu < n; ++mu) {
      for (int nu = mu + 1; nu < n; ++nu) {
        Vector e = Vector::Zero(n);
        e[mu] = 1.0;
        e[nu] = 1.0;
        Vector s = p.second_dir_fn(theta, e);
        ++counters.second_deriv_evals;
        for (int i = 0; i < m; ++i) {
          const double k = 0.5 * (s[i] - diag[mu][i] - diag[nu][i]);
          K[i](mu, nu) = k;
          K[i](nu, mu) = k;
        }
      }
    }
    return K;
  }

  const double h = fd_step * (1.0 + theta.cwiseAbs().maxCoeff());
  const Vector base = eval_residuals(p, theta, counters);
  Vector probe = theta;
  std::vector<Vector> plus(n), minus(n);
  for (int mu = 0; mu < n; ++mu) {
    probe[mu] = theta[mu] + h;
    plus[mu] = eval_residuals(p, probe, counters);
    probe[mu] = theta[mu] - h;
    minus[mu] = eval_residuals(p, probe, counters);
    probe[mu] = theta[mu];
    for (int i = 0; i < m; ++i)
      K[i](mu, mu) = (plus[mu][i] - 2.0 * base[i] + minus[mu][i]) / (h * h);
  }
  for (int mu = 0; mu < n; ++mu) {
    for (int nu = mu + 1; nu < n; ++nu) {
      Vector pp = theta, pm = theta, mp = theta, mm = theta;
      pp[mu] += h; pp[nu] += h;
      pm[mu] += h; pm[nu] -= h;
      mp[mu] -= h; mp[nu] += h;
      mm[mu] -= h; mm[nu] -= h;
      Vector rpp = eval_residuals(p, pp, counters);
      Vector rpm = eval_residuals(p, pm, counters);
      Vector rmp = eval_residuals(p, mp, counters);
      Vector rmm = eval_residuals(p, mm, counters);
      for (int i = 0; i < m; ++i) {
        const double k = (rpp[i] - rpm[i] - rmp[i] + rmm[i]) / (4.0 * h * h);
        K[i](mu, nu) = k;
        K[i](nu, mu) = k;
      }
    }
  }
  return K;
}

/// Size of the curvature term the Gauss-Newton Hessian drops, and its
/// normal-plane-projected counterpart.
struct CurvatureReport {
  double gn_norm = 0.0;                        // |J^T J|
  double neglected_norm = 0.0;                 // |sum_m r_m K_m|
  double projected_neglected_norm = 0.0;       // projector at the given lambda
  double projected_neglected_norm_gn = 0.0;    // projector at lambda = 0 (NaN if J rank-deficient)
  double ratio = 0.0;                          // neglected / gn
};

inline CurvatureReport curvature_report(const ProblemDefinition& p, const Vector& theta,
                                        double lambda, const ScalingMatrix& D,
                                        EvaluationCounters& counters,
                                        bool prefer_analytic = true) {
  CurvatureReport rep;
  const Vector r = eval_residuals(p, theta, counters);
  FdConfig fd;
  const Matrix J = eval_jacobian(p, theta, fd, counters, &r);
  const std::vector<Matrix> K = second_derivative_tensor(p, theta, counters, prefer_analytic);

  rep.gn_norm = spectral_norm(gn_hessian(J));

  Matrix neglected = Matrix::Zero(p.n_params, p.n_params);
  for (int m = 0; m < p.n_residuals; ++m) neglected += r[m] * K[m];
  rep.neglected_norm = spectral_norm(neglected);
  rep.ratio = rep.gn_norm > 0.0 ? rep.neglected_norm / rep.gn_norm : 0.0;

  auto projected_norm = [&](double lam) {
    const Matrix P = projection_normal(J, lam, D);
    const Vector c = P.transpose() * r;
    Matrix proj = Matrix::Zero(p.n_params, p.n_params);
    for (int m = 0; m < p.n_residuals; ++m) proj += c[m] * K[m];
    return spectral_norm(proj);
  };
  rep.projected_neglected_norm = projected_norm(lambda);
  try {
    rep.projected_neglected_norm_gn = projected_norm(0.0);
  } catch (const RankDeficient&) {
    rep.projected_neglected_norm_gn = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

/// Max |K[u,u]| over sampled unit directions; a local stand-in for the
/// curvature bound kappa. Callers should pass the step direction in
/// `extra_directions` so the estimate covers it.
inline double estimate_kappa(const ProblemDefinition& p, const Vector& theta, const Matrix& J,
                             EvaluationCounters& counters, std::mt19937_64& rng,
                             int n_directions = 64,
                             const std::vector<Vector>& extra_directions = {},
                             const FdConfig& fd = FdConfig{.use_analytic_second = true}) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double kappa = 0.0;
  auto probe = [&](Vector u) {
    const double n = u.norm();
    if (n == 0.0) return;
    u /= n;
    Vector rpp = second_directional_derivative(p, theta, u, J, fd, counters);
    kappa = std::max(kappa, rpp.cwiseAbs().maxCoeff());
  };
  for (int i = 0; i < p.n_params; ++i) {
    Vector e = Vector::Zero(p.n_params);
    e[i] = 1.0;
    probe(e);
  }
  for (const Vector& v : extra_directions) probe(v);
  for (int i = 0; i < n_directions; ++i) {
    Vector u(p.n_params);
    for (int j = 0; j < p.n_params; ++j) u[j] = normal(rng);
    probe(u);
  }
  return kappa;
}

struct Lemma1Result {
  bool hypotheses_hold = false;
  bool conclusion_holds = true;
  double beta = 0.0;       // inflated |J^T J| bound used in the check
  double threshold = 0.0;  // |g| / (sqrt(beta kappa |r| / alpha) + beta)
};

/// Evaluates the step-ratio lemma: if zeta * Delta <= |g| / (sqrt(beta kappa
/// |r| / alpha) + beta) and |dtheta_1| <= zeta * Delta, then
/// |dtheta_2| / |dtheta_1| < alpha / 2. beta is the spectral norm of J^T J,
/// inflated slightly so it remains a true upper bound despite the iterative
/// estimate (over-reporting hypotheses_hold = false is the safe direction).
inline Lemma1Result lemma1_check(const Matrix& J, const Vector& r, double kappa, double alpha,
                                 double zeta, double delta, const Vector& dtheta1,
                                 const Vector& dtheta2) {
  Lemma1Result res;
  res.beta = spectral_norm(gn_hessian(J)) * (1.0 + 1e-5);
  const double g_norm = (J.transpose() * r).norm();
  res.threshold = g_norm / (std::sqrt(res.beta * kappa * r.norm() / alpha) + res.beta);
  const double v_norm = dtheta1.norm();
  if (v_norm == 0.0) {
    res.hypotheses_hold = false;
    res.conclusion_holds = true;
    return res;
  }
  res.hypotheses_hold = (zeta * delta <= res.threshold) && (v_norm <= zeta * delta);
  res.conclusion_holds = dtheta2.norm() / v_norm < 0.5 * alpha;
  return res;
}

}  // namespace geolm
