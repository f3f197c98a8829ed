#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace gridfreq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;

/// Bad input data or inconsistent configuration (CLI exit code 1).
struct validation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A solver or integrator failed to produce a usable result (CLI exit code 2).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw validation_error(msg);
}

}  // namespace gridfreq
