#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace geolm;
using geolm::testing::curved_problem;
using geolm::testing::linear_problem;
using geolm::testing::rosenbrock_problem;

namespace {

// 1-parameter problem rigged to produce an exact reduction ratio: r(0) = r0
// with unit Jacobian, so the Gauss-Newton step is exactly -r0, and the
// value at the landing point is pinned. Lets each driver branch fire with
// hand-computable rho.
ProblemDefinition rigged_problem(double r0, double r_landed) {
  ProblemDefinition p;
  p.n_params = 1;
  p.n_residuals = 1;
  p.name = "rigged";
  p.residual_fn = [r0, r_landed](const Vector& th) {
    Vector r(1);
    if (std::abs(th[0]) < 1e-9)
      r[0] = r0;
    else if (std::abs(th[0] + r0) < 1e-9)
      r[0] = r_landed;
    else
      r[0] = r_landed;  // flat beyond the landing point
    return r;
  };
  p.jacobian_fn = [](const Vector&) {
    Matrix J(1, 1);
    J << 1.0;
    return J;
  };
  return p;
}

TrustRegionState make_state(const ProblemDefinition& p, const Vector& th,
                            const TrustRegionConfig& config) {
  return init_state(p, th, config);
}

}  // namespace

TEST_CASE("model_reduction") {
  Matrix I = Matrix::Identity(2, 2);
  CHECK(model_reduction(I, (Vector(2) << 1, 0).finished(), Vector::Zero(2)) == 0.0);
  CHECK(model_reduction(I, (Vector(2) << 1, 0).finished(), (Vector(2) << -1, 0).finished()) ==
        0.5);

  // The Gauss-Newton step minimizes the model, so its reduction is >= 0.
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix J = testing::random_matrix(5, 3, rng);
    Vector r = testing::random_vector(5, rng);
    Vector gn = (J.transpose() * J).ldlt().solve(-J.transpose() * r);
    CHECK(model_reduction(J, r, gn) >= -1e-12);
  }
}

TEST_CASE("reduction_ratio") {
  SECTION("exactly one on linear problems") {
    std::mt19937_64 rng(4);
    Matrix A = testing::random_matrix(5, 2, rng);
    ProblemDefinition p = linear_problem(A, testing::random_vector(5, rng));
    Vector th = testing::random_vector(2, rng);
    EvaluationCounters c;
    Vector r = eval_residuals(p, th, c);
    Matrix J = A;
    Vector step = testing::random_vector(2, rng) * 0.3;
    const double rho = reduction_ratio(p, th, step, J, r, c);
    CHECK(rho == Catch::Approx(1.0).epsilon(1e-12));
  }

  SECTION("negative when the cost increases") {
    ProblemDefinition p = rigged_problem(1.0, 1.5);
    EvaluationCounters c;
    Vector th = Vector::Zero(1);
    Vector r = eval_residuals(p, th, c);
    Matrix J = p.jacobian_fn(th);
    const double rho = reduction_ratio(p, th, (Vector(1) << -1.0).finished(), J, r, c);
    CHECK(rho < 0.0);
  }

  SECTION("degenerate model reduction throws") {
    ProblemDefinition p = rigged_problem(1.0, 0.5);
    EvaluationCounters c;
    Vector th = Vector::Zero(1);
    Vector r = eval_residuals(p, th, c);
    Matrix J = p.jacobian_fn(th);
    CHECK_THROWS_AS(reduction_ratio(p, th, Vector::Zero(1), J, r, c),
                    DegenerateModelReduction);
  }

  SECTION("matches an independent recomputation on the rosenbrock GA step") {
    ProblemDefinition p = rosenbrock_problem();
    Vector th = (Vector(2) << -1.2, 1.0).finished();
    EvaluationCounters c;
    Vector r = eval_residuals(p, th, c);
    FdConfig fd;
    fd.use_analytic_second = true;
    Matrix J = eval_jacobian(p, th, fd, c);
    ScalingMatrix D = ScalingMatrix::identity(2);
    Vector d1 = velocity_step(J, r, 1.0, D);
    Vector d2 = acceleration_step(J, 1.0, D, p.second_dir_fn(th, d1));
    Vector step = d1 + d2;
    const double rho = reduction_ratio(p, th, step, J, r, c);
    // Recompute from separately evaluated costs.
    EvaluationCounters c2;
    const double c_old = cost(eval_residuals(p, th, c2));
    const double c_new = cost(eval_residuals(p, th + step, c2));
    const double mr = -step.dot(J.transpose() * r) - 0.5 * (J * step).squaredNorm();
    CHECK(rho == Catch::Approx((c_old - c_new) / mr).epsilon(1e-12));
  }
}

TEST_CASE("iterate: alpha rejection shrinks Delta and keeps theta") {
  ProblemDefinition p = curved_problem();
  TrustRegionConfig config;
  config.delta0 = 64.0;
  config.delta_hat = 1024.0;
  config.fd.use_analytic_second = true;
  TrustRegionState st = make_state(p, (Vector(1) << 1.0).finished(), config);
  IterateResult res = iterate(p, st, config);
  CHECK(res.record.outcome == StepOutcome::AlphaRejected);
  CHECK(st.delta == 16.0);  // 64 / 4, exact
  CHECK(st.theta[0] == 1.0);
  CHECK(std::isnan(res.record.rho));
  // The next iteration re-solves the subproblem under the smaller radius.
  IterateResult res2 = iterate(p, st, config);
  CHECK(res2.record.delta == 16.0);
}

TEST_CASE("iterate: rho branches with exact Delta arithmetic") {
  TrustRegionConfig config;
  config.use_acceleration = false;
  config.delta0 = 4.0;
  config.delta_hat = 1000.0;

  SECTION("rho in (0, 1/4): shrink but accept") {
    ProblemDefinition p = rigged_problem(1.0, 0.95);
    TrustRegionState st = make_state(p, Vector::Zero(1), config);
    IterateResult res = iterate(p, st, config);
    // mr = 0.5, actual = 0.5 - 0.45125 = 0.04875, rho = 0.0975
    CHECK(res.record.rho == Catch::Approx(0.0975).epsilon(1e-12));
    CHECK(res.record.outcome == StepOutcome::AcceptedStep);
    CHECK(st.delta == 1.0);  // 4 / 4
    CHECK(st.theta[0] == -1.0);
  }

  SECTION("rho <= 0: shrink and reject") {
    ProblemDefinition p = rigged_problem(1.0, 1.1);
    TrustRegionState st = make_state(p, Vector::Zero(1), config);
    IterateResult res = iterate(p, st, config);
    CHECK(res.record.rho < 0.0);
    CHECK(res.record.outcome == StepOutcome::RhoRejected);
    CHECK(st.delta == 1.0);
    CHECK(st.theta[0] == 0.0);
  }

  SECTION("interior rho in (1/4, 3/4]: Delta unchanged") {
    ProblemDefinition p = rigged_problem(1.0, 0.70710678118654757);
    TrustRegionState st = make_state(p, Vector::Zero(1), config);
    IterateResult res = iterate(p, st, config);
    CHECK(res.record.rho == Catch::Approx(0.5).epsilon(1e-9));
    CHECK(st.delta == 4.0);  // untouched
    CHECK(st.theta[0] == -1.0);
  }

  SECTION("interior rho > 3/4: Delta unchanged (growth needs the boundary)") {
    ProblemDefinition p = rigged_problem(1.0, 0.1);
    TrustRegionState st = make_state(p, Vector::Zero(1), config);
    IterateResult res = iterate(p, st, config);
    CHECK(res.record.rho > 0.75);
    CHECK(st.delta == 4.0);
    CHECK(st.theta[0] == -1.0);
  }

  SECTION("boundary rho > 3/4: Delta doubles, capped by delta_hat") {
    // Exactly linear residuals keep rho = 1; a far target makes the first
    // step boundary-limited.
    Matrix A(1, 1);
    A << 1.0;
    ProblemDefinition p = linear_problem(A, (Vector(1) << 100.0).finished());
    config.delta0 = 1.0;
    TrustRegionState st = make_state(p, Vector::Zero(1), config);
    IterateResult res = iterate(p, st, config);
    CHECK(res.record.rho == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(res.record.outcome == StepOutcome::AcceptedStep);
    CHECK(st.delta == 2.0);  // min(2 * 1, 1000), exact

    config.delta_hat = 1.5;
    TrustRegionState st2 = make_state(p, Vector::Zero(1), config);
    iterate(p, st2, config);
    CHECK(st2.delta == 1.5);  // min(2, 1.5) hits the cap, exact
  }
}

TEST_CASE("iterate: DirectLambda updates lambda by the exact factors") {
  TrustRegionConfig config;
  config.policy = Policy::DirectLambda;
  config.use_acceleration = false;
  config.lambda0 = 0.5;

  SECTION("acceptance divides by lambda_down") {
    ProblemDefinition p = rigged_problem(1.0, 0.1);
    TrustRegionState st = make_state(p, Vector::Zero(1), config);
    IterateResult res = iterate(p, st, config);
    CHECK(res.record.outcome == StepOutcome::AcceptedStep);
    CHECK(st.lambda == 0.5 / 3.0);
    CHECK(std::isnan(res.record.delta));
  }

  SECTION("rejection multiplies by lambda_up") {
    ProblemDefinition p = rigged_problem(1.0, 2.0);
    TrustRegionState st = make_state(p, Vector::Zero(1), config);
    IterateResult res = iterate(p, st, config);
    CHECK(res.record.outcome == StepOutcome::RhoRejected);
    CHECK(st.lambda == 1.0);
    CHECK(st.theta[0] == 0.0);
  }

  SECTION("alpha rejection multiplies by lambda_up") {
    ProblemDefinition p = curved_problem();
    TrustRegionConfig ga = config;
    ga.use_acceleration = true;
    ga.lambda0 = 1e-9;  // effectively the Gauss-Newton step
    ga.fd.use_analytic_second = true;
    TrustRegionState st = make_state(p, (Vector(1) << 1.0).finished(), ga);
    IterateResult res = iterate(p, st, ga);
    CHECK(res.record.outcome == StepOutcome::AlphaRejected);
    CHECK(st.lambda == 2e-9);
    CHECK(st.theta[0] == 1.0);
  }
}

TEST_CASE("run: linear full-rank problem converges immediately") {
  std::vector<SuiteProblem> suite = builtin_problems();
  const SuiteProblem* lin = find_problem(suite, "linear4x2");
  REQUIRE(lin);
  TrustRegionConfig config;
  config.gtol = 1e-10;
  config.delta_hat = 1e6;
  config.delta0 = 1e3;
  FitResult res = run(lin->problem, lin->start_points[0], config);
  CHECK(res.status == FitStatus::GradientConverged);
  CHECK(res.iterations <= 10);
  for (const IterationRecord& rec : res.log)
    if (rec.outcome == StepOutcome::AcceptedStep)
      CHECK(rec.rho == Catch::Approx(1.0).epsilon(1e-12));
  EvaluationCounters c;
  Vector g = lin->problem.jacobian_fn(res.theta_final).transpose() *
             eval_residuals(lin->problem, res.theta_final, c);
  CHECK(g.norm() < 1e-10);
}

TEST_CASE("run: rosenbrock converges with and without acceleration") {
  ProblemDefinition p = rosenbrock_problem();
  for (bool accel : {false, true}) {
    TrustRegionConfig config;
    config.use_acceleration = accel;
    FitResult res = run(p, (Vector(2) << -1.2, 1.0).finished(), config);
    CAPTURE(accel);
    CHECK(res.status == FitStatus::GradientConverged);
    CHECK((res.theta_final - (Vector(2) << 1, 1).finished()).norm() < 1e-6);
  }
}

TEST_CASE("run: trajectory invariants across the suite") {
  std::vector<SuiteProblem> suite = builtin_problems();
  TrustRegionConfig base;
  for (const SuiteProblem& sp : suite) {
    for (bool accel : {false, true}) {
      for (Policy policy : {Policy::DeltaBased, Policy::DirectLambda}) {
        TrustRegionConfig config = base;
        config.use_acceleration = accel;
        config.policy = policy;
        FitResult res = run(sp.problem, sp.start_points[0], config);
        double last_cost = std::numeric_limits<double>::infinity();
        double prev_delta = config.delta0;
        for (const IterationRecord& rec : res.log) {
          if (rec.outcome == StepOutcome::AcceptedStep) {
            CHECK(rec.cost <= last_cost);
            last_cost = rec.cost;
          }
          if (!accel) CHECK(rec.outcome != StepOutcome::AlphaRejected);
          if (policy == Policy::DeltaBased) {
            CHECK(rec.delta <= config.delta_hat);
            // Delta moves only by the Algorithm-1 factors.
            const bool legal = rec.delta == prev_delta || rec.delta == 0.25 * prev_delta ||
                               rec.delta == std::min(2.0 * prev_delta, config.delta_hat);
            CHECK(legal);
            prev_delta = rec.delta;
          }
        }
      }
    }
  }
}

TEST_CASE("run: acceleration off reproduces a transparent classic-LM loop") {
  // Reference: Algorithm 1 with dtheta_2 = 0, written out directly against
  // the library's subproblem and ratio pieces.
  std::vector<SuiteProblem> suite = builtin_problems();
  const SuiteProblem* lin = find_problem(suite, "linear4x2");
  REQUIRE(lin);
  const ProblemDefinition& p = lin->problem;
  TrustRegionConfig config;
  config.use_acceleration = false;
  config.delta0 = 0.5;  // far start + small radius: several boundary steps
  FitResult res = run(p, lin->start_points[0], config);
  REQUIRE(res.status == FitStatus::GradientConverged);

  std::vector<double> ref_lambdas;
  {
    EvaluationCounters c;
    Vector th = lin->start_points[0];
    Vector r = eval_residuals(p, th, c);
    Matrix J = eval_jacobian(p, th, config.fd, c, &r);
    double delta = config.delta0;
    double hint = 0.0;
    for (int k = 0; k < 50; ++k) {
      if ((J.transpose() * r).norm() <= config.gtol) break;
      ScalingMatrix D = ScalingMatrix::identity(p.n_params);
      SubproblemResult sub = solve_subproblem(J, r, D, delta, hint);
      hint = sub.lambda;
      ref_lambdas.push_back(sub.lambda);
      Vector new_r;
      double new_cost = 0.0;
      const double rho =
          reduction_ratio(p, th, sub.step, J, r, c, &new_r, &new_cost);
      if (rho < 0.25)
        delta *= 0.25;
      else if (rho > 0.75 && sub.scaled_norm >= (1.0 - kSubproblemSigma) * delta)
        delta = std::min(2.0 * delta, config.delta_hat);
      if (rho > 0.0) {
        th += sub.step;
        r = std::move(new_r);
        J = eval_jacobian(p, th, config.fd, c, &r);
      }
    }
  }
  REQUIRE(res.log.size() == ref_lambdas.size());
  for (size_t k = 0; k < ref_lambdas.size(); ++k)
    CHECK(res.log[k].lambda == Catch::Approx(ref_lambdas[k]).margin(1e-10));
}

TEST_CASE("run: budget exhaustion reported") {
  ProblemDefinition p = rosenbrock_problem();
  TrustRegionConfig config;
  config.max_iterations = 2;
  FitResult res = run(p, (Vector(2) << -1.2, 1.0).finished(), config);
  CHECK(res.status == FitStatus::BudgetExhausted);
}

TEST_CASE("run: numerical failure becomes a status, not an exception") {
  ProblemDefinition p;
  p.n_params = 1;
  p.n_residuals = 1;
  p.residual_fn = [](const Vector& th) {
    Vector r(1);
    r[0] = th[0] < 10.0 ? 1.0 / (10.0 - th[0]) : std::numeric_limits<double>::infinity();
    return r;
  };
  TrustRegionConfig config;
  FitResult res;
  CHECK_NOTHROW(res = run(p, Vector::Zero(1), config));
  CHECK(res.status == FitStatus::NumericalFailure);
}

TEST_CASE("run: MarquardtDiag scaling converges on poorly scaled problems") {
  // Columns with very different magnitudes.
  Matrix A(3, 2);
  A << 1000.0, 0.001, 0.0, 0.002, 500.0, 0.0;
  Vector target = (Vector(2) << 2.0, 3.0).finished();
  ProblemDefinition p = testing::linear_problem(A, A * target);
  TrustRegionConfig config;
  config.scaling = ScalingMode::MarquardtDiag;
  config.gtol = 1e-6;  // gradient scale is large here
  FitResult res = run(p, Vector::Zero(2), config);
  CHECK(res.status == FitStatus::GradientConverged);
  CHECK((res.theta_final - target).norm() < 1e-4);
}
