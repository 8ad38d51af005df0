#pragma once

#include <chrono>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "geolm/report.hpp"
#include "geolm/suite.hpp"
#include "geolm/trust_region.hpp"

namespace geolm {

struct CompareRow {
  std::string problem;
  std::string variant;  // lm|ga + delta|lambda
  int start_index = 0;
  std::string status;
  int iterations = 0;
  EvaluationCounters counters;
  double cost_final = 0.0;
  double wall_ms = 0.0;
  std::string error;  // non-empty if the run itself threw
};

/// Runs every matching problem under {LM, LM+GA} x {DeltaBased, DirectLambda}
/// from each listed start point. Individual failures become rows, not aborts.
inline std::vector<CompareRow> run_comparison(const std::vector<SuiteProblem>& problems,
                                              const TrustRegionConfig& base,
                                              const std::string& tag_filter = "") {
  struct Variant {
    const char* name;
    bool accel;
    Policy policy;
  };
  const Variant variants[] = {{"lm+delta", false, Policy::DeltaBased},
                              {"ga+delta", true, Policy::DeltaBased},
                              {"lm+lambda", false, Policy::DirectLambda},
                              {"ga+lambda", true, Policy::DirectLambda}};

  std::vector<CompareRow> rows;
  for (const SuiteProblem& sp : problems) {
    if (!tag_filter.empty() && !sp.has_tag(tag_filter)) continue;
    for (const Variant& v : variants) {
      TrustRegionConfig config = base;
      config.use_acceleration = v.accel;
      config.policy = v.policy;
      for (size_t s = 0; s < sp.start_points.size(); ++s) {
        CompareRow row;
        row.problem = sp.problem.name;
        row.variant = v.name;
        row.start_index = static_cast<int>(s);
        const auto t0 = std::chrono::steady_clock::now();
        try {
          FitResult res = run(sp.problem, sp.start_points[s], config);
          row.status = to_string(res.status);
          row.iterations = res.iterations;
          row.counters = res.counters;
          row.cost_final = res.cost_final;
        } catch (const std::exception& e) {
          row.status = "error";
          row.error = e.what();
        }
        const auto t1 = std::chrono::steady_clock::now();
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

/// CSV table. Wall times vary run to run, so the column is emitted only when
/// requested; the default table is byte-stable for a fixed seed/config.
inline std::string comparison_csv(const std::vector<CompareRow>& rows, bool timing = false) {
  std::ostringstream os;
  os << "problem,variant,start,status,iterations,r_evals,j_evals,rpp_evals,cost_final";
  if (timing) os << ",wall_ms";
  os << '\n';
  for (const CompareRow& row : rows) {
    os << row.problem << ',' << row.variant << ',' << row.start_index << ',' << row.status << ','
       << row.iterations << ',' << row.counters.residual_evals << ','
       << row.counters.jacobian_evals << ',' << row.counters.second_deriv_evals << ','
       << format_double(row.cost_final);
    if (timing) os << ',' << format_double(row.wall_ms);
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json comparison_json(const std::vector<CompareRow>& rows, bool timing = false) {
  nlohmann::json out = nlohmann::json::array();
  for (const CompareRow& row : rows) {
    nlohmann::json j;
    j["problem"] = row.problem;
    j["variant"] = row.variant;
    j["start"] = row.start_index;
    j["status"] = row.status;
    j["iterations"] = row.iterations;
    j["counters"] = counters_json(row.counters);
    j["cost_final"] = row.cost_final;
    if (timing) j["wall_ms"] = row.wall_ms;
    if (!row.error.empty()) j["error"] = row.error;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace geolm
