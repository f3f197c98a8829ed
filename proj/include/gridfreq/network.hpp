#pragma once

#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "gridfreq/types.hpp"

namespace gridfreq {

/// One transmission line between two buses. `susceptance` is B_ij in per
/// unit; the effective coupling weight is B_ij * V_i * V_j.
struct Line {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;
};

/// Lossless network-reduced grid: a connected weighted graph over n buses
/// with m lines. Stores the oriented incidence matrix, per-line coupling
/// weights (diagonal of Gamma) and the weighted Laplacian at zero angles.
/// Immutable after construction, so it can be shared across threads.
class NetworkModel {
 public:
  NetworkModel(int n_buses, std::vector<Line> lines, Vec bus_voltage)
      : n_(n_buses), lines_(std::move(lines)), voltage_(std::move(bus_voltage)) {
    require(n_ >= 1, "network: need at least one bus");
    require(voltage_.size() == n_, "network: voltage vector size mismatch");
    require((voltage_.array() > 0.0).all(), "network: voltages must be positive");

    const int m = static_cast<int>(lines_.size());
    incidence_ = Mat::Zero(n_, m);
    weight_ = Vec::Zero(m);
    for (int e = 0; e < m; ++e) {
      const Line& l = lines_[e];
      require(l.from >= 0 && l.from < n_ && l.to >= 0 && l.to < n_,
              "network: line endpoint out of range");
      require(l.from != l.to, "network: self-loop line");
      require(l.susceptance > 0.0, "network: line susceptance must be positive");
      incidence_(l.from, e) = 1.0;
      incidence_(l.to, e) = -1.0;
      weight_(e) = l.susceptance * voltage_(l.from) * voltage_(l.to);
    }
    require(connected(), "network: graph must be connected");

    laplacian_ = incidence_ * weight_.asDiagonal() * incidence_.transpose();
  }

  /// Uniform-voltage construction where line weights are given directly.
  static NetworkModel from_weights(int n_buses, std::vector<Line> lines) {
    return NetworkModel(n_buses, std::move(lines), Vec::Ones(n_buses));
  }

  int n_buses() const { return n_; }
  int n_lines() const { return static_cast<int>(lines_.size()); }
  const std::vector<Line>& lines() const { return lines_; }
  const Mat& incidence() const { return incidence_; }
  const Vec& edge_weight() const { return weight_; }
  const Vec& bus_voltage() const { return voltage_; }
  /// Weighted Laplacian B Gamma B^T (equals the potential Hessian at 0).
  const Mat& laplacian() const { return laplacian_; }

  /// B^T theta: angle difference across each line.
  Vec edge_angles(const Vec& theta) const {
    check_dim(theta);
    Vec d(n_lines());
    for (int e = 0; e < n_lines(); ++e) d(e) = theta(lines_[e].from) - theta(lines_[e].to);
    return d;
  }

  /// Magnetic energy stored in the lines: -1^T Gamma cos(B^T theta).
  /// Invariant under theta -> theta + c*1.
  double potential(const Vec& theta) const {
    check_dim(theta);
    double acc = 0.0;
    for (int e = 0; e < n_lines(); ++e)
      acc -= weight_(e) * std::cos(theta(lines_[e].from) - theta(lines_[e].to));
    return acc;
  }

  /// B Gamma sin(B^T theta): per-bus active power drawn by the network.
  /// Entries always sum to zero (power balance over lossless lines).
  Vec potential_gradient(const Vec& theta) const {
    check_dim(theta);
    Vec g(n_), scratch(n_lines());
    gradient_into(theta.data(), g.data(), scratch);
    return g;
  }

  /// Allocation-free gradient for integrator hot loops. `theta` and `g`
  /// must point at n_buses doubles; `scratch` must have one entry per line
  /// and is owned by the caller (keeps this object shareable across
  /// threads). The sine evaluations are batched so Eigen vectorizes them.
  void gradient_into(const double* theta, double* g, Vec& scratch) const {
    const int m = n_lines();
    for (int e = 0; e < m; ++e)
      scratch(e) = theta[lines_[e].from] - theta[lines_[e].to];
    scratch = weight_.array() * scratch.array().sin();
    for (int i = 0; i < n_; ++i) g[i] = 0.0;
    for (int e = 0; e < m; ++e) {
      g[lines_[e].from] += scratch(e);
      g[lines_[e].to] -= scratch(e);
    }
  }

  /// B diag(Gamma cos(B^T theta)) B^T: symmetric, zero row sums; positive
  /// semidefinite while all angle differences stay inside (-pi/2, pi/2).
  Mat potential_hessian(const Vec& theta) const {
    check_dim(theta);
    Mat h = Mat::Zero(n_, n_);
    for (int e = 0; e < n_lines(); ++e) {
      const int i = lines_[e].from, j = lines_[e].to;
      const double w = weight_(e) * std::cos(theta(i) - theta(j));
      h(i, i) += w;
      h(j, j) += w;
      h(i, j) -= w;
      h(j, i) -= w;
    }
    return h;
  }

  /// True when every angle difference lies in (-pi/2 + rho, pi/2 - rho).
  bool edge_angles_secure(const Vec& theta, double rho) const {
    const Vec d = edge_angles(theta);
    return (d.array().abs() < M_PI / 2.0 - rho).all();
  }

 private:
  bool connected() const {
    std::vector<int> parent(n_);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    int components = n_;
    for (const Line& l : lines_) {
      const int a = find(l.from), b = find(l.to);
      if (a != b) {
        parent[a] = b;
        --components;
      }
    }
    return components == 1;
  }

  void check_dim(const Vec& theta) const {
    if (theta.size() != n_) throw validation_error("network: angle vector size mismatch");
  }

  int n_;
  std::vector<Line> lines_;
  Vec voltage_;
  Mat incidence_;
  Vec weight_;
  Mat laplacian_;
};

/// Center-of-inertia projector Pi = I - (1/n) 1 1^T. Idempotent, Pi 1 = 0,
/// and B^T Pi = B^T for any incidence matrix B.
inline Mat com_projector(int n) {
  require(n >= 1, "com_projector: n must be >= 1");
  return Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
}

/// Orthonormal basis Q (n x n-1) of the subspace orthogonal to 1, so that
/// Q Q^T = Pi and Q^T Q = I. Used to reduce out the rotational symmetry.
inline Mat com_basis(int n) {
  require(n >= 1, "com_basis: n must be >= 1");
  Mat ones = Mat::Ones(n, 1);
  Eigen::HouseholderQR<Mat> qr(ones);
  Mat q_full = qr.householderQ();
  return q_full.rightCols(n - 1);
}

}  // namespace gridfreq
