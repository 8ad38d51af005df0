#pragma once

#include <cmath>
#include <utility>

#include "geolm/linalg.hpp"
#include "geolm/problem.hpp"

namespace geolm {

/// Velocity and acceleration components of a proposed update, plus the
/// relative-contribution bound 2 |D dtheta_2| / |D dtheta_1| <= alpha.
struct StepProposal {
  Vector velocity;       // dtheta_1
  Vector acceleration;   // dtheta_2
  double lambda = 0.0;
  Vector r_second;       // directional second derivative along dtheta_1
  double alpha_ratio = 0.0;
  bool accepted_by_alpha = true;
  bool converged = false;            // |dtheta_1| = 0: stationary point
  bool accel_degraded = false;       // r'' failed; fell back to dtheta_2 = 0
  bool subproblem_converged = true;
  double scaled_velocity_norm = 0.0;       // |D dtheta_1|
  double scaled_acceleration_norm = 0.0;   // |D dtheta_2|

  Vector total() const { return velocity + acceleration; }
};

/// dtheta_1 = -(J^T J + lambda D^T D)^{-1} J^T r, the plain regularized step.
inline Vector velocity_step(const Matrix& J, const Vector& r, double lambda,
                            const ScalingMatrix& D) {
  RegularizedFactorization fac(J, lambda, D);
  if (lambda == 0.0 && !fac.full_rank())
    throw RankDeficient("rank-deficient Jacobian in velocity step at lambda = 0");
  return fac.minimize_residual(r);
}

/// dtheta_2 = -1/2 (J^T J + lambda D^T D)^{-1} J^T r''.
inline Vector acceleration_step(const Matrix& J, double lambda, const ScalingMatrix& D,
                                const Vector& r_second) {
  RegularizedFactorization fac(J, lambda, D);
  if (lambda == 0.0 && !fac.full_rank())
    throw RankDeficient("rank-deficient Jacobian in acceleration step at lambda = 0");
  return fac.minimize_residual(0.5 * r_second);
}

/// Snapshot of the optimizer state a proposal is built from.
struct StepContext {
  const Vector& theta;
  const Vector& residuals;
  const Matrix& jacobian;
  const ScalingMatrix& scaling;
  double alpha = 0.75;
  bool use_acceleration = true;
  FdConfig fd;
};

namespace detail {

// Completes a proposal given dtheta_1 and the factorization used to build it
// (the acceleration solve reuses it: same J, same lambda, one extra
// triangular solve).
inline StepProposal finish_proposal(const ProblemDefinition& p, const StepContext& ctx,
                                    const RegularizedFactorization& fac, double lambda,
                                    Vector velocity, double scaled_norm, bool sub_converged,
                                    EvaluationCounters& counters) {
  const long n = p.n_params;
  const long m = p.n_residuals;
  StepProposal prop;
  prop.lambda = lambda;
  prop.velocity = std::move(velocity);
  prop.scaled_velocity_norm = scaled_norm;
  prop.subproblem_converged = sub_converged;
  prop.acceleration = Vector::Zero(n);
  prop.r_second = Vector::Zero(m);

  if (prop.velocity.norm() == 0.0) {
    prop.converged = true;
    return prop;
  }

  if (ctx.use_acceleration) {
    try {
      prop.r_second = second_directional_derivative(p, ctx.theta, prop.velocity, ctx.jacobian,
                                                    ctx.fd, counters, &ctx.residuals,
                                                    &ctx.scaling.diag);
      prop.acceleration = fac.minimize_residual(0.5 * prop.r_second);
    } catch (const NumericalFailure&) {
      // Plain LM remains a valid step; drop the correction for this proposal.
      prop.acceleration = Vector::Zero(n);
      prop.r_second = Vector::Zero(m);
      prop.accel_degraded = true;
    }
  }

  prop.scaled_acceleration_norm = ctx.scaling.scaled_norm(prop.acceleration);
  prop.alpha_ratio = 2.0 * prop.scaled_acceleration_norm / prop.scaled_velocity_norm;
  prop.accepted_by_alpha = prop.alpha_ratio <= ctx.alpha;
  return prop;
}

}  // namespace detail

/// Builds a proposal under the step bound Delta: subproblem for
/// (lambda, dtheta_1), then the second-order correction along it.
inline StepProposal propose_step(const ProblemDefinition& p, const StepContext& ctx, double delta,
                                 EvaluationCounters& counters, double lambda_hint = 0.0) {
  SubproblemResult sub = solve_subproblem(ctx.jacobian, ctx.residuals, ctx.scaling, delta,
                                          lambda_hint);
  return detail::finish_proposal(p, ctx, sub.factorization, sub.lambda, std::move(sub.step),
                                 sub.scaled_norm, sub.converged, counters);
}

/// Builds a proposal at a directly chosen lambda (no step bound).
inline StepProposal propose_step_at_lambda(const ProblemDefinition& p, const StepContext& ctx,
                                           double lambda, EvaluationCounters& counters) {
  RegularizedFactorization fac(ctx.jacobian, lambda, ctx.scaling);
  if (lambda == 0.0 && !fac.full_rank())
    throw RankDeficient("rank-deficient Jacobian in proposal at lambda = 0");
  Vector velocity = fac.minimize_residual(ctx.residuals);
  double sn = ctx.scaling.scaled_norm(velocity);
  return detail::finish_proposal(p, ctx, fac, lambda, std::move(velocity), sn, true, counters);
}

}  // namespace geolm
