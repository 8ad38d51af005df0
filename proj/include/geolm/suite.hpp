#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "geolm/problem.hpp"

namespace geolm {

/// Fit data: abscissae and ordinates of equal length.
struct Dataset {
  Vector t;
  Vector y;
};

struct SuiteProblem {
  ProblemDefinition problem;
  std::optional<std::pair<Vector, double>> known_minimum;  // (theta*, C*)
  bool unique_minimum = true;
  std::vector<Vector> start_points;
  std::vector<std::string> tags;
  std::optional<Dataset> data;  // synthetic data behind data-driven problems

  bool has_tag(const std::string& tag) const {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
  }
};

inline Vector make_vector(std::initializer_list<double> values) {
  Vector v(static_cast<long>(values.size()));
  long i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

// ---------------------------------------------------------------------------
// Model registry: named residual models bindable to a dataset.
// ---------------------------------------------------------------------------

inline std::vector<std::string> model_names() { return {"exp1", "exp2", "line"}; }

/// Binds a registry model to a dataset. Models:
///   exp1: r_m = exp(-theta_1 t_m) - y_m
///   exp2: r_m = exp(-e^{theta_1} t_m) + exp(-e^{theta_2} t_m) - y_m
///         (log-parameterized decay rates; canyon-shaped)
///   line: r_m = theta_1 + theta_2 t_m - y_m
inline SuiteProblem make_model_problem(const std::string& model, Dataset data) {
  const long m = data.t.size();
  if (data.y.size() != m) throw ShapeError("dataset abscissae/ordinates lengths differ");
  if (!all_finite(data.t) || !all_finite(data.y))
    throw ShapeError("dataset contains non-finite entries");

  SuiteProblem sp;
  Vector t = data.t;
  Vector y = data.y;

  if (model == "exp1") {
    sp.problem.n_params = 1;
    sp.problem.n_residuals = static_cast<int>(m);
    sp.problem.name = "exp1";
    sp.problem.residual_fn = [t, y](const Vector& th) {
      return Vector((-th[0] * t.array()).exp() - y.array());
    };
    sp.problem.jacobian_fn = [t](const Vector& th) {
      Matrix J(t.size(), 1);
      J.col(0) = -t.array() * (-th[0] * t.array()).exp();
      return J;
    };
    sp.problem.second_dir_fn = [t](const Vector& th, const Vector& v) {
      return Vector(v[0] * v[0] * t.array().square() * (-th[0] * t.array()).exp());
    };
    sp.start_points = {make_vector({3.0}), make_vector({-0.3})};
  } else if (model == "exp2") {
    sp.problem.n_params = 2;
    sp.problem.n_residuals = static_cast<int>(m);
    sp.problem.name = "exp2";
    sp.problem.residual_fn = [t, y](const Vector& th) {
      const double a = std::exp(th[0]), b = std::exp(th[1]);
      return Vector((-a * t.array()).exp() + (-b * t.array()).exp() - y.array());
    };
    sp.problem.jacobian_fn = [t](const Vector& th) {
      Matrix J(t.size(), 2);
      for (int j = 0; j < 2; ++j) {
        const double a = std::exp(th[j]);
        J.col(j) = -t.array() * a * (-a * t.array()).exp();
      }
      return J;
    };
    sp.problem.second_dir_fn = [t](const Vector& th, const Vector& v) {
      Vector out = Vector::Zero(t.size());
      for (int j = 0; j < 2; ++j) {
        const double a = std::exp(th[j]);
        out.array() += v[j] * v[j] *
                       (t.array().square() * a * a - t.array() * a) * (-a * t.array()).exp();
      }
      return out;
    };
    sp.start_points = {make_vector({0.0, 0.1})};
  } else if (model == "line") {
    sp.problem.n_params = 2;
    sp.problem.n_residuals = static_cast<int>(m);
    sp.problem.name = "line";
    sp.problem.residual_fn = [t, y](const Vector& th) {
      return Vector(th[0] + th[1] * t.array() - y.array());
    };
    sp.problem.jacobian_fn = [t](const Vector&) {
      Matrix J(t.size(), 2);
      J.col(0).setOnes();
      J.col(1) = t;
      return J;
    };
    sp.problem.second_dir_fn = [m](const Vector&, const Vector&) { return Vector::Zero(m); };
    sp.start_points = {make_vector({0.0, 0.0})};
  } else {
    throw std::invalid_argument("unknown model: " + model);
  }
  sp.data = std::move(data);
  return sp;
}

// ---------------------------------------------------------------------------
// Built-in problems.
// ---------------------------------------------------------------------------

inline std::vector<SuiteProblem> builtin_problems() {
  std::vector<SuiteProblem> out;

  // Full-rank consistent linear system: r = A theta - b with b = A (1, 2).
  {
    Matrix A(4, 2);
    A << 1, 0, 0, 1, 1, 1, 1, -1;
    Vector b = A * make_vector({1.0, 2.0});
    SuiteProblem sp;
    sp.problem.n_params = 2;
    sp.problem.n_residuals = 4;
    sp.problem.name = "linear4x2";
    sp.problem.residual_fn = [A, b](const Vector& th) { return Vector(A * th - b); };
    sp.problem.jacobian_fn = [A](const Vector&) { return A; };
    sp.problem.second_dir_fn = [](const Vector&, const Vector&) { return Vector::Zero(4); };
    sp.known_minimum = {make_vector({1.0, 2.0}), 0.0};
    sp.start_points = {make_vector({-3.0, 5.0}), make_vector({10.0, -7.0})};
    sp.tags = {"linear", "small-curvature"};
    out.push_back(std::move(sp));
  }

  // Rosenbrock as residuals: r = (10 (theta_2 - theta_1^2), 1 - theta_1).
  {
    SuiteProblem sp;
    sp.problem.n_params = 2;
    sp.problem.n_residuals = 2;
    sp.problem.name = "rosenbrock";
    sp.problem.residual_fn = [](const Vector& th) {
      return make_vector({10.0 * (th[1] - th[0] * th[0]), 1.0 - th[0]});
    };
    sp.problem.jacobian_fn = [](const Vector& th) {
      Matrix J(2, 2);
      J << -20.0 * th[0], 10.0, -1.0, 0.0;
      return J;
    };
    sp.problem.second_dir_fn = [](const Vector&, const Vector& v) {
      return make_vector({-20.0 * v[0] * v[0], 0.0});
    };
    sp.known_minimum = {make_vector({1.0, 1.0}), 0.0};
    sp.start_points = {make_vector({-1.2, 1.0}), make_vector({2.0, -1.0})};
    sp.tags = {"canyon"};
    out.push_back(std::move(sp));
  }

  // Single exponential decay fit, noiseless data at rate 0.5.
  {
    Vector t(8), y(8);
    for (int i = 0; i < 8; ++i) {
      t[i] = 0.5 * (i + 1);
      y[i] = std::exp(-0.5 * t[i]);
    }
    SuiteProblem sp = make_model_problem("exp1", Dataset{t, y});
    sp.problem.name = "exp1";
    sp.known_minimum = {make_vector({0.5}), 0.0};
    sp.tags = {"small-curvature"};
    out.push_back(std::move(sp));
  }

  // Sum of two exponentials with log rates, noiseless data at (log 1, log 3).
  // The cost surface is a curved narrow canyon in (theta_1, theta_2).
  {
    Vector t(12), y(12);
    for (int i = 0; i < 12; ++i) {
      t[i] = 0.25 * (i + 1);
      y[i] = std::exp(-t[i]) + std::exp(-3.0 * t[i]);
    }
    SuiteProblem sp = make_model_problem("exp2", Dataset{t, y});
    sp.problem.name = "exp2";
    sp.known_minimum = {make_vector({0.0, std::log(3.0)}), 0.0};
    sp.unique_minimum = false;  // swapping the two rates gives the same fit
    sp.start_points = {make_vector({0.0, 0.1}), make_vector({-0.8, 1.8})};
    sp.tags = {"canyon"};
    out.push_back(std::move(sp));
  }

  // Straight-line model fit to deliberately incompatible data: large best-fit
  // residuals (C* = 4.375) while the curvature term is identically zero.
  {
    Vector t = make_vector({-2.0, -1.0, 1.0, 2.0});
    Vector y = make_vector({2.0, 1.0, -1.0, 3.0});
    SuiteProblem sp = make_model_problem("line", Dataset{t, y});
    sp.problem.name = "biased_line";
    sp.known_minimum = {make_vector({1.25, 0.0}), 4.375};
    sp.start_points = {make_vector({0.0, 0.0}), make_vector({5.0, 5.0})};
    sp.tags = {"linear", "large-residual", "small-curvature"};
    out.push_back(std::move(sp));
  }

  std::sort(out.begin(), out.end(), [](const SuiteProblem& a, const SuiteProblem& b) {
    return a.problem.name < b.problem.name;
  });
  return out;
}

inline const SuiteProblem* find_problem(const std::vector<SuiteProblem>& problems,
                                        const std::string& name) {
  for (const SuiteProblem& sp : problems)
    if (sp.problem.name == name) return &sp;
  return nullptr;
}

// ---------------------------------------------------------------------------
// CSV datasets: UTF-8, header "t,y", one point per line.
// ---------------------------------------------------------------------------

inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty file, expected header 't,y'", 1);
  ++line_no;
  auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    size_t b = s.find_first_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b);
  };
  if (strip(line) != "t,y") throw ParseError("expected header 't,y'", line_no);

  std::vector<double> ts, ys;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = strip(line);
    if (s.empty()) continue;
    const size_t comma = s.find(',');
    if (comma == std::string::npos) throw ParseError("expected 't,y' row", line_no);
    auto parse_field = [&](const std::string& field) {
      size_t pos = 0;
      double value;
      try {
        value = std::stod(field, &pos);
      } catch (const std::exception&) {
        throw ParseError("non-numeric entry '" + field + "'", line_no);
      }
      while (pos < field.size() && (field[pos] == ' ' || field[pos] == '\t')) ++pos;
      if (pos != field.size()) throw ParseError("trailing junk in entry '" + field + "'", line_no);
      if (!std::isfinite(value)) throw ParseError("non-finite entry '" + field + "'", line_no);
      return value;
    };
    ts.push_back(parse_field(s.substr(0, comma)));
    ys.push_back(parse_field(s.substr(comma + 1)));
  }
  Dataset d;
  d.t = Eigen::Map<const Vector>(ts.data(), static_cast<long>(ts.size()));
  d.y = Eigen::Map<const Vector>(ys.data(), static_cast<long>(ys.size()));
  return d;
}

inline void write_dataset_csv(const Dataset& d, std::ostream& out) {
  out << "t,y\n";
  char buf[128];
  for (long i = 0; i < d.t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", d.t[i], d.y[i]);
    out << buf;
  }
}

/// Loads a CSV dataset and binds the named registry model to it.
inline SuiteProblem fit_problem_from_csv(const std::string& model, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  Dataset d = read_dataset_csv(in);
  SuiteProblem sp = make_model_problem(model, std::move(d));
  if (sp.problem.n_residuals < sp.problem.n_params)
    throw ShapeError("model '" + model + "' needs at least " +
                     std::to_string(sp.problem.n_params) + " data rows, got " +
                     std::to_string(sp.problem.n_residuals));
  return sp;
}

}  // namespace geolm
