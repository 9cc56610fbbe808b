#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace dfgmvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a precision/covariance update produces a matrix that is not
/// positive definite. Inside the DF-GMVI iteration this must never happen
/// for step sizes in (0,1); it is treated as a hard failure, never patched
/// by jitter.
class PositivityLost : public std::runtime_error {
public:
  explicit PositivityLost(const std::string& what, int component = -1)
      : std::runtime_error(what), component_(component) {}
  int component() const noexcept { return component_; }

private:
  int component_;
};

/// Thrown when a target exposes only an energy function and a residual map
/// is requested from it.
class UnsupportedForm : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an iteration produces a nonfinite state (means, weights, or
/// integrand values). Comparison-method runners record this and stop.
class Divergence : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace dfgmvi
