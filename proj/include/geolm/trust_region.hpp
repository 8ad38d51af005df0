#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geolm/step.hpp"

namespace geolm {

enum class Policy { DeltaBased, DirectLambda };
enum class ScalingMode { Identity, MarquardtDiag };
enum class StepOutcome { AcceptedStep, RhoRejected, AlphaRejected };
enum class FitStatus {
  GradientConverged,
  CostConverged,
  StepConverged,
  BudgetExhausted,
  NumericalFailure
};

inline const char* to_string(StepOutcome o) {
  switch (o) {
    case StepOutcome::AcceptedStep: return "accepted";
    case StepOutcome::RhoRejected: return "rho_rejected";
    case StepOutcome::AlphaRejected: return "alpha_rejected";
  }
  return "?";
}

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::GradientConverged: return "gradient_converged";
    case FitStatus::CostConverged: return "cost_converged";
    case FitStatus::StepConverged: return "step_converged";
    case FitStatus::BudgetExhausted: return "budget_exhausted";
    case FitStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

struct TrustRegionConfig {
  double delta0 = 1.0;
  double delta_hat = 1e3;
  double alpha = 0.75;
  Policy policy = Policy::DeltaBased;
  double lambda0 = 1e-3;      // DirectLambda initial lambda
  double lambda_up = 2.0;     // DirectLambda rejection factor
  double lambda_down = 3.0;   // DirectLambda acceptance factor
  double gtol = 1e-8;
  double ftol = 1e-10;
  double xtol = 1e-10;
  int max_iterations = 400;
  long max_residual_evals = std::numeric_limits<long>::max();
  long max_jacobian_evals = std::numeric_limits<long>::max();
  bool use_acceleration = true;
  ScalingMode scaling = ScalingMode::Identity;
  FdConfig fd;

  void validate() const {
    if (!(delta0 > 0.0 && delta0 < delta_hat))
      throw std::invalid_argument("require 0 < delta0 < delta_hat");
    if (!(alpha > 0.0)) throw std::invalid_argument("require alpha > 0");
    if (!(lambda_up > 1.0 && lambda_down > 1.0))
      throw std::invalid_argument("require lambda factors > 1");
    if (!(lambda0 > 0.0)) throw std::invalid_argument("require lambda0 > 0");
  }
};

struct IterationRecord {
  int iter = 0;
  Vector theta;                 // iterate the step was proposed from
  double cost = 0.0;
  double grad_norm = 0.0;
  double delta = std::numeric_limits<double>::quiet_NaN();  // NaN under DirectLambda
  double lambda = 0.0;
  double rho = std::numeric_limits<double>::quiet_NaN();    // NaN when alpha-rejected
  double step1_norm = 0.0;
  double step2_norm = 0.0;
  double alpha_ratio = 0.0;
  StepOutcome outcome = StepOutcome::AcceptedStep;
  EvaluationCounters counters;  // cumulative at end of iteration
};

struct FitResult {
  Vector theta_final;
  double cost_final = 0.0;
  FitStatus status = FitStatus::BudgetExhausted;
  EvaluationCounters counters;
  std::vector<IterationRecord> log;
  int iterations = 0;
  std::string message;
};

/// Mutable optimizer state threaded through iterate().
struct TrustRegionState {
  Vector theta;
  Vector residuals;
  Matrix jacobian;
  double cost = 0.0;
  double delta = 1.0;
  double lambda = 1e-3;
  ScalingMatrix scaling;
  int iteration = 0;
  EvaluationCounters counters;
};

/// Initializes state at theta0: one residual and one Jacobian evaluation.
inline TrustRegionState init_state(const ProblemDefinition& p, const Vector& theta0,
                                   const TrustRegionConfig& config) {
  TrustRegionState st;
  st.theta = theta0;
  st.residuals = eval_residuals(p, theta0, st.counters);
  st.cost = cost(st.residuals);
  st.jacobian = eval_jacobian(p, theta0, config.fd, st.counters, &st.residuals);
  st.delta = config.delta0;
  st.lambda = config.lambda0;
  st.scaling = ScalingMatrix::identity(p.n_params);
  if (config.scaling == ScalingMode::MarquardtDiag) {
    for (int j = 0; j < p.n_params; ++j)
      st.scaling.diag[j] = std::max(st.jacobian.col(j).norm(), 1e-8);
  }
  return st;
}

/// m(0) - m(dtheta) = -dtheta . J^T r - 1/2 |J dtheta|^2 for the first-order
/// model m(dtheta) = 1/2 |r + J dtheta|^2.
inline double model_reduction(const Matrix& J, const Vector& r, const Vector& step) {
  const Vector js = J * step;
  return -step.dot(J.transpose() * r) - 0.5 * js.squaredNorm();
}

// Model reductions below this are treated as converged rather than divided by.
inline constexpr double kModelReductionFloor = 1e-300;

/// rho = (C(theta) - C(theta + dtheta)) / (m(0) - m(dtheta)). Evaluates the
/// residuals once at theta + dtheta and hands them back for reuse on
/// acceptance. Throws DegenerateModelReduction below the floor.
inline double reduction_ratio(const ProblemDefinition& p, const Vector& theta,
                              const Vector& step, const Matrix& J, const Vector& r,
                              EvaluationCounters& counters, Vector* new_residuals = nullptr,
                              double* new_cost = nullptr) {
  const double mr = model_reduction(J, r, step);
  if (!(mr >= kModelReductionFloor))
    throw DegenerateModelReduction("model reduction " + std::to_string(mr));
  Vector rn = eval_residuals(p, theta + step, counters);
  const double cn = cost(rn);
  const double rho = (cost(r) - cn) / mr;
  if (new_residuals) *new_residuals = std::move(rn);
  if (new_cost) *new_cost = cn;
  return rho;
}

struct IterateResult {
  IterationRecord record;
  std::optional<FitStatus> terminate;  // set when the iteration itself decides
};

/// One step of the driver. DeltaBased follows the alpha-bound /
/// reduction-ratio branch structure exactly:
///   - alpha-rejected proposals shrink Delta by 1/4 and leave theta alone
///     (the next iteration re-solves the subproblem under the new Delta);
///   - otherwise rho < 1/4 shrinks Delta by 1/4; rho > 3/4 with dtheta_1 on
///     the boundary grows Delta to min(2 Delta, delta_hat); anything else
///     leaves Delta unchanged; the step is applied iff rho > 0.
/// DirectLambda applies the same alpha test and rho > 0 acceptance, scaling
/// lambda by lambda_up on rejection and 1/lambda_down on acceptance.
inline IterateResult iterate(const ProblemDefinition& p, TrustRegionState& st,
                             const TrustRegionConfig& config) {
  IterateResult out;
  IterationRecord& rec = out.record;
  rec.iter = st.iteration;
  rec.theta = st.theta;
  rec.cost = st.cost;
  rec.grad_norm = (st.jacobian.transpose() * st.residuals).norm();
  rec.delta = config.policy == Policy::DeltaBased
                  ? st.delta
                  : std::numeric_limits<double>::quiet_NaN();

  StepContext ctx{st.theta,   st.residuals,           st.jacobian, st.scaling,
                  config.alpha, config.use_acceleration, config.fd};
  StepProposal prop = config.policy == Policy::DeltaBased
                          ? propose_step(p, ctx, st.delta, st.counters, st.lambda)
                          : propose_step_at_lambda(p, ctx, st.lambda, st.counters);

  rec.lambda = prop.lambda;
  rec.step1_norm = prop.velocity.norm();
  rec.step2_norm = prop.acceleration.norm();
  rec.alpha_ratio = prop.alpha_ratio;
  if (config.policy == Policy::DeltaBased) st.lambda = std::max(prop.lambda, 0.0);

  if (prop.converged) {
    rec.outcome = StepOutcome::AcceptedStep;
    rec.counters = st.counters;
    out.terminate = FitStatus::GradientConverged;
    ++st.iteration;
    return out;
  }

  if (!prop.accepted_by_alpha) {
    rec.outcome = StepOutcome::AlphaRejected;
    if (config.policy == Policy::DeltaBased)
      st.delta *= 0.25;
    else
      st.lambda *= config.lambda_up;
    rec.counters = st.counters;
    ++st.iteration;
    return out;
  }

  const Vector step = prop.total();
  const double mr = model_reduction(st.jacobian, st.residuals, step);
  if (mr < 0.0) {
    // Only possible when the acceleration term overshoots the linear model:
    // the model predicts an uphill move, so reject and shrink.
    rec.rho = -std::numeric_limits<double>::infinity();
    rec.outcome = StepOutcome::RhoRejected;
    if (config.policy == Policy::DeltaBased)
      st.delta *= 0.25;
    else
      st.lambda *= config.lambda_up;
    rec.counters = st.counters;
    ++st.iteration;
    return out;
  }
  if (mr < kModelReductionFloor) {
    // The linear model is flat at the proposal scale: nothing left to gain.
    rec.outcome = StepOutcome::AcceptedStep;
    rec.counters = st.counters;
    out.terminate = FitStatus::StepConverged;
    ++st.iteration;
    return out;
  }
  Vector new_r;
  double new_cost = 0.0;
  const double rho =
      reduction_ratio(p, st.theta, step, st.jacobian, st.residuals, st.counters, &new_r, &new_cost);
  rec.rho = rho;

  if (config.policy == Policy::DeltaBased) {
    if (rho < 0.25) {
      st.delta *= 0.25;
    } else if (rho > 0.75 &&
               prop.scaled_velocity_norm >= (1.0 - kSubproblemSigma) * st.delta) {
      st.delta = std::min(2.0 * st.delta, config.delta_hat);
    }
  } else {
    if (rho > 0.0)
      st.lambda /= config.lambda_down;
    else
      st.lambda *= config.lambda_up;
  }

  if (rho > 0.0) {
    rec.outcome = StepOutcome::AcceptedStep;
    st.theta += step;
    st.residuals = std::move(new_r);
    st.cost = new_cost;
    st.jacobian = eval_jacobian(p, st.theta, config.fd, st.counters, &st.residuals);
    if (config.scaling == ScalingMode::MarquardtDiag) {
      for (int j = 0; j < p.n_params; ++j)
        st.scaling.diag[j] = std::max(st.scaling.diag[j], st.jacobian.col(j).norm());
    }
    // Convergence checks on the accepted step.
    if (rec.cost - new_cost <= config.ftol * rec.cost) out.terminate = FitStatus::CostConverged;
    const double scaled_step = st.scaling.scaled_norm(step);
    const double scaled_theta = st.scaling.scaled_norm(st.theta);
    if (scaled_step <= config.xtol * (config.xtol + scaled_theta))
      out.terminate = FitStatus::StepConverged;
  } else {
    rec.outcome = StepOutcome::RhoRejected;
  }

  rec.counters = st.counters;
  ++st.iteration;
  return out;
}

/// Runs the driver from theta0 to convergence or budget exhaustion. Numerical
/// failures terminate with FitStatus::NumericalFailure rather than escape.
inline FitResult run(const ProblemDefinition& p, const Vector& theta0,
                     const TrustRegionConfig& config) {
  config.validate();
  FitResult result;
  result.theta_final = theta0;
  result.cost_final = std::numeric_limits<double>::quiet_NaN();
  try {
    TrustRegionState st = init_state(p, theta0, config);
    result.status = FitStatus::BudgetExhausted;
    result.message = "iteration budget exhausted";
    for (int k = 0; k < config.max_iterations; ++k) {
      const double grad_norm = (st.jacobian.transpose() * st.residuals).norm();
      if (grad_norm <= config.gtol) {
        result.status = FitStatus::GradientConverged;
        result.message.clear();
        break;
      }
      if (st.counters.residual_evals >= config.max_residual_evals ||
          st.counters.jacobian_evals >= config.max_jacobian_evals) {
        result.message = "evaluation budget exhausted";
        break;
      }
      IterateResult step = iterate(p, st, config);
      result.log.push_back(std::move(step.record));
      if (step.terminate) {
        result.status = *step.terminate;
        result.message.clear();
        break;
      }
    }
    result.theta_final = st.theta;
    result.cost_final = st.cost;
    result.counters = st.counters;
    result.iterations = st.iteration;
  } catch (const NumericalFailure& e) {
    result.status = FitStatus::NumericalFailure;
    result.message = e.what();
  } catch (const RankDeficient& e) {
    result.status = FitStatus::NumericalFailure;
    result.message = e.what();
  }
  return result;
}

}  // namespace geolm
