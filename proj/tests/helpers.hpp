#pragma once

#include <random>

#include "geolm/geolm.hpp"

namespace geolm::testing {

inline ProblemDefinition linear_problem(const Matrix& A, const Vector& b, std::string name = "lin") {
  ProblemDefinition p;
  p.n_params = static_cast<int>(A.cols());
  p.n_residuals = static_cast<int>(A.rows());
  p.name = std::move(name);
  p.residual_fn = [A, b](const Vector& th) { return Vector(A * th - b); };
  p.jacobian_fn = [A](const Vector&) { return A; };
  const long m = A.rows();
  p.second_dir_fn = [m](const Vector&, const Vector&) { return Vector::Zero(m); };
  return p;
}

inline ProblemDefinition rosenbrock_problem() {
  ProblemDefinition p;
  p.n_params = 2;
  p.n_residuals = 2;
  p.name = "rosenbrock";
  p.residual_fn = [](const Vector& th) {
    Vector r(2);
    r << 10.0 * (th[1] - th[0] * th[0]), 1.0 - th[0];
    return r;
  };
  p.jacobian_fn = [](const Vector& th) {
    Matrix J(2, 2);
    J << -20.0 * th[0], 10.0, -1.0, 0.0;
    return J;
  };
  p.second_dir_fn = [](const Vector&, const Vector& v) {
    Vector out(2);
    out << -20.0 * v[0] * v[0], 0.0;
    return out;
  };
  return p;
}

// One strongly curved residual plus one linear one; the +6 offset pushes the
// second-order contribution past the default alpha bound at theta = 1.
inline ProblemDefinition curved_problem() {
  ProblemDefinition p;
  p.n_params = 1;
  p.n_residuals = 2;
  p.name = "curved";
  p.residual_fn = [](const Vector& th) {
    Vector r(2);
    r << th[0], 10.0 * th[0] * th[0] + 6.0;
    return r;
  };
  p.jacobian_fn = [](const Vector& th) {
    Matrix J(2, 1);
    J << 1.0, 20.0 * th[0];
    return J;
  };
  p.second_dir_fn = [](const Vector&, const Vector& v) {
    Vector out(2);
    out << 0.0, 20.0 * v[0] * v[0];
    return out;
  };
  return p;
}

inline Matrix random_matrix(long rows, long cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix A(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) A(i, j) = normal(rng);
  return A;
}

inline Vector random_vector(long n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (long i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace geolm::testing
