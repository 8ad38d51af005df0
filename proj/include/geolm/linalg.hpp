#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "geolm/types.hpp"

namespace geolm {

// Subproblem is solved to |D dtheta| within this relative band of Delta.
inline constexpr double kSubproblemSigma = 0.1;
inline constexpr int kSubproblemMaxIter = 10;
// Relative lambda floor applied when a lambda = 0 solve meets a
// rank-deficient Jacobian (scaled by max diag of J^T J).
inline constexpr double kRankFloorRel = 1e-14;

/// Diagonal scaling matrix D for the step bound |D dtheta| <= Delta.
struct ScalingMatrix {
  Vector diag;

  static ScalingMatrix identity(int n) { return ScalingMatrix{Vector::Ones(n)}; }

  Vector apply(const Vector& v) const { return diag.cwiseProduct(v); }
  double scaled_norm(const Vector& v) const { return diag.cwiseProduct(v).norm(); }
};

/// Orthogonal factorization of the augmented system [J; sqrt(lambda) D],
/// used to solve (J^T J + lambda D^T D) x = b without forming J^T J.
class RegularizedFactorization {
 public:
  RegularizedFactorization(const Matrix& J, double lambda, const ScalingMatrix& D)
      : m_(J.rows()), n_(J.cols()), lambda_(lambda) {
    Matrix A(m_ + n_, n_);
    A.topRows(m_) = J;
    A.bottomRows(n_) = Matrix((std::sqrt(lambda) * D.diag).asDiagonal());
    qr_.compute(A);
    r_factor_ = qr_.matrixQR().topRows(n_).triangularView<Eigen::Upper>();
  }

  double lambda() const { return lambda_; }
  long rank() const { return qr_.rank(); }
  bool full_rank() const { return qr_.rank() == n_; }

  /// x = (J^T J + lambda D^T D)^{-1} rhs via R^T R x = P^T rhs.
  Vector solve_normal(const Vector& rhs) const {
    Vector y = qr_.colsPermutation().transpose() * rhs;
    Vector z = r_factor_.transpose().triangularView<Eigen::Lower>().solve(y);
    Vector x = r_factor_.triangularView<Eigen::Upper>().solve(z);
    x = qr_.colsPermutation() * x;
    if (!all_finite(x)) throw NumericalFailure("non-finite regularized solve");
    return x;
  }

  /// argmin_x |J x + r|^2 + lambda |D x|^2, i.e. -(J^T J + lambda D^T D)^{-1} J^T r.
  Vector minimize_residual(const Vector& r) const {
    Vector rhs(m_ + n_);
    rhs.head(m_) = -r;
    rhs.tail(n_).setZero();
    Vector x = qr_.solve(rhs);
    if (!all_finite(x)) throw NumericalFailure("non-finite least-squares solve");
    return x;
  }

 private:
  long m_, n_;
  double lambda_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
  Matrix r_factor_;  // upper-triangular R of the pivoted augmented system
};

/// Solves (J^T J + lambda D^T D) x = rhs. Throws RankDeficient when
/// lambda = 0 and J does not have full column rank.
inline Vector solve_regularized(const Matrix& J, const Vector& rhs, double lambda,
                                const ScalingMatrix& D) {
  RegularizedFactorization fac(J, lambda, D);
  if (lambda == 0.0 && !fac.full_rank())
    throw RankDeficient("rank-deficient Jacobian in lambda = 0 solve");
  return fac.solve_normal(rhs);
}

struct SubproblemResult {
  double lambda = 0.0;
  Vector step;                 // dtheta_1
  double scaled_norm = 0.0;    // |D step|
  bool on_boundary = false;    // lambda > 0 branch taken
  bool converged = true;       // false: iteration cap hit, midpoint returned
  int iterations = 0;
  RegularizedFactorization factorization;
};

/// Solves the trust-region subproblem for the linear model: find lambda >= 0
/// with dtheta(lambda) = -(J^T J + lambda D^T D)^{-1} J^T r such that either
/// lambda = 0 and |D dtheta| <= Delta, or |D dtheta| lands within
/// [(1-sigma) Delta, (1+sigma) Delta]. Safeguarded Newton iteration on the
/// reciprocal form of phi(lambda) = |D dtheta(lambda)| - Delta (More's
/// method); on hitting the iteration cap, returns the step at the bracket
/// midpoint with `converged = false`.
inline SubproblemResult solve_subproblem(const Matrix& J, const Vector& r, const ScalingMatrix& D,
                                         double delta, double lambda_hint = 0.0) {
  const long n = J.cols();
  const Vector g = J.transpose() * r;

  // Gauss-Newton attempt; fall back to a floored lambda at rank deficiency.
  double lambda_lo = 0.0;
  {
    RegularizedFactorization fac0(J, 0.0, D);
    if (fac0.full_rank()) {
      Vector step = fac0.minimize_residual(r);
      double sn = D.scaled_norm(step);
      if (sn <= delta)
        return SubproblemResult{0.0, std::move(step), sn, false, true, 0, std::move(fac0)};
    } else {
      double max_diag = 0.0;
      for (long j = 0; j < n; ++j) max_diag = std::max(max_diag, J.col(j).squaredNorm());
      lambda_lo = kRankFloorRel * std::max(max_diag, 1.0);
      RegularizedFactorization fac(J, lambda_lo, D);
      Vector step = fac.minimize_residual(r);
      double sn = D.scaled_norm(step);
      if (sn <= delta)
        return SubproblemResult{lambda_lo, std::move(step), sn, false, true, 0, std::move(fac)};
    }
  }

  // Boundary case. psi(lambda) = |D dtheta(lambda)| is decreasing in lambda
  // and psi(|D^{-1} g| / delta) <= delta, giving the initial bracket.
  double lo = lambda_lo;
  double hi = (g.cwiseQuotient(D.diag)).norm() / delta;
  if (!(hi > lo)) hi = std::max(1.0, 2.0 * lo);
  double lambda = (lambda_hint > lo && lambda_hint < hi)
                      ? lambda_hint
                      : std::max(std::sqrt(lo * hi), 1e-3 * hi);

  std::optional<SubproblemResult> best;
  double best_err = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= kSubproblemMaxIter; ++it) {
    RegularizedFactorization fac(J, lambda, D);
    Vector step = fac.minimize_residual(r);
    const Vector dstep = D.apply(step);
    const double psi = dstep.norm();
    const double err = std::abs(psi - delta);
    const bool within_band = err <= kSubproblemSigma * delta;

    double next = lambda;
    if (!within_band) {
      if (psi > delta)
        lo = std::max(lo, lambda);
      else
        hi = std::min(hi, lambda);
      // Newton step on the reciprocal form: converges from below in the
      // 1/lambda-convex parameterization.
      Vector w = fac.solve_normal(D.diag.cwiseProduct(dstep));
      const double dpsi = -dstep.dot(D.apply(w)) / psi;
      next = lambda - (psi - delta) / delta * (psi / dpsi);
      if (!std::isfinite(next) || next <= lo || next >= hi)
        next = std::max(std::sqrt(lo * hi), lo + 1e-3 * (hi - lo));
    }
    if (err < best_err) {
      best_err = err;
      best = SubproblemResult{lambda, std::move(step), psi, true, within_band, it, std::move(fac)};
    }
    if (within_band) return *std::move(best);
    lambda = next;
  }

  // Iteration cap: bracket midpoint, flagged as unconverged.
  lambda = 0.5 * (lo + hi);
  RegularizedFactorization fac(J, lambda, D);
  Vector step = fac.minimize_residual(r);
  double sn = D.scaled_norm(step);
  if (std::abs(sn - delta) < best_err)
    return SubproblemResult{lambda, std::move(step), sn, true, false, kSubproblemMaxIter,
                            std::move(fac)};
  best->converged = false;
  return *std::move(best);
}

/// Normal-plane projector P^N = I_M - J (J^T J + lambda D^T D)^{-1} J^T.
/// Diagnostics-only: materializes an M x M matrix.
inline Matrix projection_normal(const Matrix& J, double lambda, const ScalingMatrix& D) {
  RegularizedFactorization fac(J, lambda, D);
  if (lambda == 0.0 && !fac.full_rank())
    throw RankDeficient("rank-deficient Jacobian in normal projector at lambda = 0");
  const long m = J.rows();
  Matrix X(J.cols(), m);
  for (long i = 0; i < m; ++i) X.col(i) = fac.solve_normal(J.row(i).transpose());
  return Matrix::Identity(m, m) - J * X;
}

}  // namespace geolm
