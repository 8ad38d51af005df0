#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace geolm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A residual, Jacobian, or solve produced a non-finite value. `index` is the
// offending entry when known, -1 otherwise.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what, long index = -1)
      : std::runtime_error(index >= 0 ? what + " (entry " + std::to_string(index) + ")" : what),
        index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

class RankDeficient : public std::runtime_error {
 public:
  explicit RankDeficient(const std::string& what) : std::runtime_error(what) {}
};

class DegenerateModelReduction : public std::runtime_error {
 public:
  explicit DegenerateModelReduction(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class OracleNoConverge : public std::runtime_error {
 public:
  explicit OracleNoConverge(const std::string& what) : std::runtime_error(what) {}
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace geolm
