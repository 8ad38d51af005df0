#pragma once

#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "geolm/suite.hpp"
#include "geolm/trust_region.hpp"

namespace geolm {

/// Doubles round-trip exactly through 17 significant digits.
inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline const char* kIterationLogHeader =
    "iter,cost,grad_norm,delta,lambda,rho,step1_norm,step2_norm,alpha_ratio,outcome,"
    "r_evals,j_evals,rpp_evals";

inline void write_iteration_log_csv(std::ostream& out, const std::vector<IterationRecord>& log) {
  out << kIterationLogHeader << '\n';
  for (const IterationRecord& rec : log) {
    out << rec.iter << ',' << format_double(rec.cost) << ',' << format_double(rec.grad_norm)
        << ',' << format_double(rec.delta) << ',' << format_double(rec.lambda) << ','
        << format_double(rec.rho) << ',' << format_double(rec.step1_norm) << ','
        << format_double(rec.step2_norm) << ',' << format_double(rec.alpha_ratio) << ','
        << to_string(rec.outcome) << ',' << rec.counters.residual_evals << ','
        << rec.counters.jacobian_evals << ',' << rec.counters.second_deriv_evals << '\n';
  }
}

inline nlohmann::json counters_json(const EvaluationCounters& c) {
  return {{"residual_evals", c.residual_evals},
          {"jacobian_evals", c.jacobian_evals},
          {"second_deriv_evals", c.second_deriv_evals}};
}

inline nlohmann::json record_json(const IterationRecord& rec) {
  nlohmann::json j;
  j["iter"] = rec.iter;
  j["theta"] = std::vector<double>(rec.theta.data(), rec.theta.data() + rec.theta.size());
  j["cost"] = rec.cost;
  j["grad_norm"] = rec.grad_norm;
  j["delta"] = rec.delta;
  j["lambda"] = rec.lambda;
  j["rho"] = rec.rho;
  j["step1_norm"] = rec.step1_norm;
  j["step2_norm"] = rec.step2_norm;
  j["alpha_ratio"] = rec.alpha_ratio;
  j["outcome"] = to_string(rec.outcome);
  j["counters"] = counters_json(rec.counters);
  return j;
}

inline nlohmann::json fit_json(const FitResult& result) {
  nlohmann::json j;
  j["status"] = to_string(result.status);
  j["theta"] = std::vector<double>(result.theta_final.data(),
                                   result.theta_final.data() + result.theta_final.size());
  j["cost"] = result.cost_final;
  j["counters"] = counters_json(result.counters);
  j["iterations"] = result.iterations;
  if (!result.message.empty()) j["message"] = result.message;
  nlohmann::json log = nlohmann::json::array();
  for (const IterationRecord& rec : result.log) log.push_back(record_json(rec));
  j["log"] = log;
  return j;
}

inline std::string summary_text(const std::string& problem_name, const FitResult& result) {
  std::ostringstream os;
  os << problem_name << ": " << to_string(result.status) << " after " << result.iterations
     << " iterations\n";
  os << "  theta = [";
  for (long i = 0; i < result.theta_final.size(); ++i)
    os << (i ? ", " : "") << format_double(result.theta_final[i]);
  os << "]\n";
  os << "  cost = " << format_double(result.cost_final) << "\n";
  os << "  evals: residual " << result.counters.residual_evals << ", jacobian "
     << result.counters.jacobian_evals << ", second-derivative "
     << result.counters.second_deriv_evals << "\n";
  if (!result.message.empty()) os << "  note: " << result.message << "\n";
  return os.str();
}

/// Deterministic listing of suite problems, lexicographic by name.
inline std::string format_problem_listing(const std::vector<SuiteProblem>& problems,
                                          const std::string& tag_filter = "") {
  std::ostringstream os;
  for (const SuiteProblem& sp : problems) {
    if (!tag_filter.empty() && !sp.has_tag(tag_filter)) continue;
    os << sp.problem.name << "  N=" << sp.problem.n_params << "  M=" << sp.problem.n_residuals;
    os << "  starts=" << sp.start_points.size();
    os << "  tags=";
    for (size_t i = 0; i < sp.tags.size(); ++i) os << (i ? "," : "") << sp.tags[i];
    if (sp.tags.empty()) os << "-";
    os << '\n';
  }
  return os.str();
}

}  // namespace geolm
