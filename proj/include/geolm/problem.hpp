#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "geolm/types.hpp"

namespace geolm {

/// Nonlinear least-squares problem: residual map r(theta) from R^N to R^M,
/// with optional analytic first and (directional) second derivatives.
struct ProblemDefinition {
  int n_params = 0;     // N
  int n_residuals = 0;  // M

  // r(theta), length M.
  std::function<Vector(const Vector&)> residual_fn;

  // Optional analytic Jacobian, M x N, J(m, mu) = d r_m / d theta_mu.
  std::function<Matrix(const Vector&)> jacobian_fn;

  // Optional analytic second directional derivative: (theta, v) ->
  // sum_{mu,nu} K_{m,mu,nu} v_mu v_nu, length M. Quadratic in v.
  std::function<Vector(const Vector&, const Vector&)> second_dir_fn;

  std::string name;

  bool has_jacobian() const { return static_cast<bool>(jacobian_fn); }
  bool has_second_dir() const { return static_cast<bool>(second_dir_fn); }
};

/// Per-run evaluation counters. Monotonically non-decreasing.
struct EvaluationCounters {
  long residual_evals = 0;
  long jacobian_evals = 0;
  long second_deriv_evals = 0;
};

enum class FdScheme { Forward, Central };

/// Finite-difference configuration.
///
/// Jacobian step: h_mu = jacobian_rel_step * (1 + |theta_mu|).
/// Acceleration step: accel_step along the unit direction (unit in the
/// caller-supplied scaled norm); the result is rescaled by the squared
/// direction norm, which is exact by homogeneity.
struct FdConfig {
  FdScheme jacobian_scheme = FdScheme::Forward;
  double jacobian_rel_step = 1e-6;
  FdScheme accel_scheme = FdScheme::Forward;
  double accel_step = 0.1;
  // Use analytic derivatives when the problem provides them. The second
  // derivative defaults to FD so a run's cost accounting reflects the
  // one-extra-residual-evaluation scheme.
  bool use_analytic_jacobian = true;
  bool use_analytic_second = false;
};

/// Evaluates r(theta). Counts one residual evaluation.
inline Vector eval_residuals(const ProblemDefinition& p, const Vector& theta,
                             EvaluationCounters& counters) {
  if (theta.size() != p.n_params)
    throw ShapeError("parameter vector has length " + std::to_string(theta.size()) +
                     ", expected " + std::to_string(p.n_params));
  if (!all_finite(theta)) throw NumericalFailure("non-finite parameter vector");
  Vector r = p.residual_fn(theta);
  ++counters.residual_evals;
  if (r.size() != p.n_residuals)
    throw ShapeError("residual vector has length " + std::to_string(r.size()) +
                     ", expected " + std::to_string(p.n_residuals));
  for (long m = 0; m < r.size(); ++m)
    if (!std::isfinite(r[m])) throw NumericalFailure("non-finite residual", m);
  return r;
}

/// C = 1/2 sum_m r_m^2.
inline double cost(const Vector& r) { return 0.5 * r.squaredNorm(); }

/// Jacobian at theta. Analytic when available (and enabled), otherwise finite
/// differences with per-parameter step h_mu = rel * (1 + |theta_mu|).
/// Counts one Jacobian evaluation, plus N (forward) or 2N (central) residual
/// evaluations in FD mode; forward FD reuses `cached_r` when supplied,
/// otherwise evaluates (and counts) the base point itself.
inline Matrix eval_jacobian(const ProblemDefinition& p, const Vector& theta,
                            const FdConfig& fd, EvaluationCounters& counters,
                            const Vector* cached_r = nullptr) {
  ++counters.jacobian_evals;
  if (p.has_jacobian() && fd.use_analytic_jacobian) {
    Matrix J = p.jacobian_fn(theta);
    if (J.rows() != p.n_residuals || J.cols() != p.n_params)
      throw ShapeError("jacobian has shape " + std::to_string(J.rows()) + "x" +
                       std::to_string(J.cols()));
    if (!all_finite(J)) throw NumericalFailure("non-finite Jacobian entry");
    return J;
  }

  Matrix J(p.n_residuals, p.n_params);
  Vector probe = theta;
  if (fd.jacobian_scheme == FdScheme::Forward) {
    Vector base;
    if (cached_r) {
      base = *cached_r;
    } else {
      base = eval_residuals(p, theta, counters);
    }
    for (int mu = 0; mu < p.n_params; ++mu) {
      const double h = fd.jacobian_rel_step * (1.0 + std::abs(theta[mu]));
      probe[mu] = theta[mu] + h;
      Vector rp = eval_residuals(p, probe, counters);
      probe[mu] = theta[mu];
      J.col(mu) = (rp - base) / h;
    }
  } else {
    for (int mu = 0; mu < p.n_params; ++mu) {
      const double h = fd.jacobian_rel_step * (1.0 + std::abs(theta[mu]));
      probe[mu] = theta[mu] + h;
      Vector rp = eval_residuals(p, probe, counters);
      probe[mu] = theta[mu] - h;
      Vector rm = eval_residuals(p, probe, counters);
      probe[mu] = theta[mu];
      J.col(mu) = (rp - rm) / (2.0 * h);
    }
  }
  if (!all_finite(J)) throw NumericalFailure("non-finite FD Jacobian entry");
  return J;
}

/// Directional second derivative r''_m = sum_{mu,nu} K_{m,mu,nu} v_mu v_nu.
///
/// Analytic when the problem provides it and `fd.use_analytic_second` is set.
/// Otherwise FD along the unit direction u = v / n, where n is |v| in the
/// `direction_scale` norm when given (the optimizer passes the D diagonal so
/// the step size is measured in the trust-region metric):
///   forward:  r'' ~= (2/h) * ((r(theta + h u) - r(theta)) / h - J u),
///             one extra residual evaluation given the cached base residuals;
///   central:  r'' ~= (r(theta + h u) - 2 r(theta) + r(theta - h u)) / h^2,
///             two extra evaluations, second-order accurate.
/// The result is rescaled by n^2. A zero direction returns the zero vector
/// without counting an evaluation.
inline Vector second_directional_derivative(const ProblemDefinition& p, const Vector& theta,
                                            const Vector& v, const Matrix& J,
                                            const FdConfig& fd, EvaluationCounters& counters,
                                            const Vector* cached_r = nullptr,
                                            const Vector* direction_scale = nullptr) {
  if (v.size() != p.n_params) throw ShapeError("direction vector has wrong length");
  double n = direction_scale ? direction_scale->cwiseProduct(v).norm() : v.norm();
  if (n == 0.0) return Vector::Zero(p.n_residuals);

  if (p.has_second_dir() && fd.use_analytic_second) {
    ++counters.second_deriv_evals;
    Vector rpp = p.second_dir_fn(theta, v);
    if (rpp.size() != p.n_residuals) throw ShapeError("second derivative has wrong length");
    for (long m = 0; m < rpp.size(); ++m)
      if (!std::isfinite(rpp[m])) throw NumericalFailure("non-finite second derivative", m);
    return rpp;
  }

  const Vector u = v / n;
  const double h = fd.accel_step;
  ++counters.second_deriv_evals;
  Vector rpp;
  if (fd.accel_scheme == FdScheme::Forward) {
    Vector base = cached_r ? *cached_r : eval_residuals(p, theta, counters);
    Vector rp = eval_residuals(p, theta + h * u, counters);
    rpp = (2.0 / h) * ((rp - base) / h - J * u);
  } else {
    Vector base = cached_r ? *cached_r : eval_residuals(p, theta, counters);
    Vector rp = eval_residuals(p, theta + h * u, counters);
    Vector rm = eval_residuals(p, theta - h * u, counters);
    rpp = (rp - 2.0 * base + rm) / (h * h);
  }
  rpp *= n * n;
  for (long m = 0; m < rpp.size(); ++m)
    if (!std::isfinite(rpp[m])) throw NumericalFailure("non-finite FD second derivative", m);
  return rpp;
}

}  // namespace geolm
