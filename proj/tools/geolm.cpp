// geolm command-line harness: run fits on built-in or CSV-backed problems,
// compare plain and accelerated variants, and dump iteration logs.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geolm/geolm.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitBudget = 2;
constexpr int kExitNumerical = 3;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("GEOLM_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      // fall through to the fixed default
    }
  }
  return 0;
}

geolm::Vector parse_start(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) {
    size_t pos = 0;
    values.push_back(std::stod(field, &pos));
    if (pos != field.size()) throw std::invalid_argument("bad start component '" + field + "'");
  }
  geolm::Vector v(static_cast<long>(values.size()));
  for (size_t i = 0; i < values.size(); ++i) v[static_cast<long>(i)] = values[i];
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

struct FitOptions {
  std::string problem;
  std::string data_path;
  std::string start;
  std::string policy = "delta";
  std::string format = "csv";
  std::string out_path;
  bool accel = true;
  bool diagnostics = false;
  bool quiet = false;
  std::uint64_t seed = default_seed();
  geolm::TrustRegionConfig config;
};

nlohmann::json diagnostics_json(const geolm::SuiteProblem& sp, const geolm::FitResult& result,
                                std::uint64_t seed, double alpha) {
  nlohmann::json rows = nlohmann::json::array();
  std::mt19937_64 rng(seed);
  geolm::EvaluationCounters scratch;
  const auto D = geolm::ScalingMatrix::identity(sp.problem.n_params);
  for (const geolm::IterationRecord& rec : result.log) {
    geolm::CurvatureReport rep =
        geolm::curvature_report(sp.problem, rec.theta, rec.lambda, D, scratch);
    const geolm::Matrix J = sp.problem.jacobian_fn
                                ? sp.problem.jacobian_fn(rec.theta)
                                : geolm::eval_jacobian(sp.problem, rec.theta, {}, scratch);
    const geolm::Vector r = sp.problem.residual_fn(rec.theta);
    const double kappa = geolm::estimate_kappa(sp.problem, rec.theta, J, scratch, rng);
    // Reconstruct the step pair at this iterate for the lemma check.
    geolm::Vector d1, d2;
    try {
      d1 = geolm::velocity_step(J, r, rec.lambda, D);
      geolm::FdConfig fd;
      fd.use_analytic_second = true;
      geolm::Vector rpp =
          geolm::second_directional_derivative(sp.problem, rec.theta, d1, J, fd, scratch, &r);
      d2 = geolm::acceleration_step(J, rec.lambda, D, rpp);
    } catch (const std::exception&) {
      d1 = geolm::Vector::Zero(sp.problem.n_params);
      d2 = geolm::Vector::Zero(sp.problem.n_params);
    }
    geolm::Lemma1Result lem =
        geolm::lemma1_check(J, r, kappa, alpha, 1.5, rec.delta, d1, d2);
    nlohmann::json j;
    j["iter"] = rec.iter;
    j["lambda"] = rec.lambda;
    j["gn_norm"] = rep.gn_norm;
    j["neglected_norm"] = rep.neglected_norm;
    j["projected_neglected_norm"] = rep.projected_neglected_norm;
    j["projected_neglected_norm_gn"] = rep.projected_neglected_norm_gn;
    j["ratio"] = rep.ratio;
    j["kappa"] = kappa;
    j["lemma1_hypotheses"] = lem.hypotheses_hold;
    j["lemma1_conclusion"] = lem.conclusion_holds;
    rows.push_back(std::move(j));
  }
  return rows;
}

int run_fit(const FitOptions& opt) {
  std::vector<geolm::SuiteProblem> builtins = geolm::builtin_problems();
  geolm::SuiteProblem sp;
  if (!opt.data_path.empty()) {
    sp = geolm::fit_problem_from_csv(opt.problem, opt.data_path);
  } else {
    const geolm::SuiteProblem* found = geolm::find_problem(builtins, opt.problem);
    if (!found) {
      std::cerr << "unknown problem: " << opt.problem << "\n";
      return kExitUsage;
    }
    sp = *found;
  }

  geolm::TrustRegionConfig config = opt.config;
  config.use_acceleration = opt.accel;
  config.policy = opt.policy == "lambda" ? geolm::Policy::DirectLambda
                                         : geolm::Policy::DeltaBased;

  geolm::Vector theta0;
  if (!opt.start.empty()) {
    theta0 = parse_start(opt.start);
    if (theta0.size() != sp.problem.n_params) {
      std::cerr << "start point has " << theta0.size() << " components, problem needs "
                << sp.problem.n_params << "\n";
      return kExitUsage;
    }
  } else if (!sp.start_points.empty()) {
    theta0 = sp.start_points.front();
  } else {
    theta0 = geolm::Vector::Zero(sp.problem.n_params);
  }

  geolm::FitResult result = geolm::run(sp.problem, theta0, config);

  if (opt.format == "json") {
    nlohmann::json doc = geolm::fit_json(result);
    doc["problem"] = sp.problem.name;
    if (opt.diagnostics) doc["diagnostics"] = diagnostics_json(sp, result, opt.seed, config.alpha);
    const std::string text = doc.dump(2) + "\n";
    if (!opt.out_path.empty())
      write_text(opt.out_path, text);
    else
      std::cout << text;
    if (!opt.quiet) std::cerr << geolm::summary_text(sp.problem.name, result);
  } else {
    std::ostringstream log;
    geolm::write_iteration_log_csv(log, result.log);
    std::string text = log.str();
    if (opt.diagnostics) {
      nlohmann::json diag = diagnostics_json(sp, result, opt.seed, config.alpha);
      text += "# diagnostics\n" + diag.dump(2) + "\n";
    }
    if (!opt.out_path.empty()) {
      write_text(opt.out_path, text);
      if (!opt.quiet) std::cout << geolm::summary_text(sp.problem.name, result);
    } else {
      std::cout << text;
      if (!opt.quiet) std::cerr << geolm::summary_text(sp.problem.name, result);
    }
  }

  switch (result.status) {
    case geolm::FitStatus::GradientConverged:
    case geolm::FitStatus::CostConverged:
    case geolm::FitStatus::StepConverged:
      return kExitOk;
    case geolm::FitStatus::BudgetExhausted:
      return kExitBudget;
    case geolm::FitStatus::NumericalFailure:
      return kExitNumerical;
  }
  return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Levenberg-Marquardt with geodesic acceleration: fit, compare, diagnose"};
  app.require_subcommand(1);

  // list
  std::string list_tag;
  CLI::App* list_cmd = app.add_subcommand("list", "list built-in problems");
  list_cmd->add_option("--tag", list_tag, "only problems carrying this tag");

  // fit
  FitOptions fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "run one fit");
  fit_cmd->add_option("problem", fit.problem, "built-in problem or model name (with --data)")
      ->required();
  fit_cmd->add_option("--data", fit.data_path, "CSV dataset (header t,y) for a registry model");
  fit_cmd->add_option("--start", fit.start, "comma-separated start point");
  fit_cmd->add_flag("--accel,!--no-accel", fit.accel, "geodesic acceleration (default on)");
  fit_cmd->add_option("--policy", fit.policy, "delta | lambda")
      ->check(CLI::IsMember({"delta", "lambda"}));
  fit_cmd->add_option("--alpha", fit.config.alpha, "second-order contribution bound");
  fit_cmd->add_option("--delta0", fit.config.delta0, "initial trust radius");
  fit_cmd->add_option("--delta-hat", fit.config.delta_hat, "trust radius cap");
  fit_cmd->add_option("--gtol", fit.config.gtol, "gradient-norm tolerance");
  fit_cmd->add_option("--ftol", fit.config.ftol, "relative cost-reduction tolerance");
  fit_cmd->add_option("--xtol", fit.config.xtol, "relative step tolerance");
  fit_cmd->add_option("--max-iter", fit.config.max_iterations, "iteration budget");
  fit_cmd->add_option("--lambda0", fit.config.lambda0, "direct-lambda initial lambda");
  std::string fit_scaling = "identity";
  fit_cmd->add_option("--scaling", fit_scaling, "identity | marquardt")
      ->check(CLI::IsMember({"identity", "marquardt"}));
  fit_cmd->add_option("--format", fit.format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  fit_cmd->add_option("--out", fit.out_path, "write the log/document here");
  fit_cmd->add_flag("--diagnostics", fit.diagnostics, "emit curvature/lemma diagnostics");
  fit_cmd->add_flag("--quiet", fit.quiet, "suppress the summary pretty-print");
  fit_cmd->add_option("--seed", fit.seed, "seed for diagnostics sampling (env GEOLM_SEED)");

  // compare
  std::string cmp_tag, cmp_out, cmp_format = "csv";
  bool cmp_timing = false;
  std::uint64_t cmp_seed = default_seed();
  CLI::App* cmp_cmd = app.add_subcommand("compare", "head-to-head LM vs LM+GA over the suite");
  cmp_cmd->add_option("--tag", cmp_tag, "only problems carrying this tag");
  cmp_cmd->add_option("--out", cmp_out, "write the table here");
  cmp_cmd->add_option("--seed", cmp_seed, "seed (env GEOLM_SEED)");
  cmp_cmd->add_option("--format", cmp_format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmp_cmd->add_flag("--timing", cmp_timing, "include wall-time column (not byte-stable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitUsage : kExitOk;
  }

  try {
    if (list_cmd->parsed()) {
      std::cout << geolm::format_problem_listing(geolm::builtin_problems(), list_tag);
      return kExitOk;
    }
    if (fit_cmd->parsed()) {
      fit.config.scaling = fit_scaling == "marquardt" ? geolm::ScalingMode::MarquardtDiag
                                                      : geolm::ScalingMode::Identity;
      return run_fit(fit);
    }
    if (cmp_cmd->parsed()) {
      std::vector<geolm::SuiteProblem> problems = geolm::builtin_problems();
      geolm::TrustRegionConfig config;
      std::vector<geolm::CompareRow> rows = geolm::run_comparison(problems, config, cmp_tag);
      if (rows.empty()) {
        std::cerr << "no problems match tag '" << cmp_tag << "'\n";
        return kExitUsage;
      }
      std::string text = cmp_format == "json"
                             ? geolm::comparison_json(rows, cmp_timing).dump(2) + "\n"
                             : geolm::comparison_csv(rows, cmp_timing);
      if (!cmp_out.empty())
        write_text(cmp_out, text);
      else
        std::cout << text;
      return kExitOk;
    }
  } catch (const geolm::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const geolm::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
