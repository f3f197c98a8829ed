#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "gridfreq/types.hpp"

namespace gridfreq {

enum class ControllerKind { droop, pure_integral, leaky_integral, dai };

inline const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::droop: return "droop";
    case ControllerKind::pure_integral: return "pure_integral";
    case ControllerKind::leaky_integral: return "leaky_integral";
    case ControllerKind::dai: return "dai";
  }
  return "?";
}

/// Secondary frequency controller attached to a subset of buses.
///
/// All per-controller vectors (time_constant, leak_gain, ...) are indexed by
/// position in `actuated`, not by bus. Buses outside `actuated` receive no
/// control injection. The internal state p has one entry per actuated bus
/// (none for droop).
struct ControllerSpec {
  ControllerKind kind = ControllerKind::pure_integral;
  std::vector<int> actuated;  // ascending bus indices

  Vec droop_inverse_gain;  // droop: u = -K^{-1} omega
  Vec time_constant;       // T_i > 0, integral family
  Vec leak_gain;           // K_i >= 0; all zero reproduces the pure integrator
  Mat comm_laplacian;      // DAI: symmetric PSD, zero row sums, connected
  Vec cost_coeff;          // DAI: diagonal of A, a_i > 0

  int n_actuated() const { return static_cast<int>(actuated.size()); }
  int state_dim() const { return kind == ControllerKind::droop ? 0 : n_actuated(); }

  static ControllerSpec droop(std::vector<int> buses, Vec inverse_gain) {
    ControllerSpec s;
    s.kind = ControllerKind::droop;
    s.actuated = std::move(buses);
    s.droop_inverse_gain = std::move(inverse_gain);
    return s;
  }

  static ControllerSpec pure_integral(std::vector<int> buses, Vec t_const) {
    ControllerSpec s;
    s.kind = ControllerKind::pure_integral;
    s.actuated = std::move(buses);
    s.time_constant = std::move(t_const);
    s.leak_gain = Vec::Zero(s.time_constant.size());
    return s;
  }

  static ControllerSpec leaky(std::vector<int> buses, Vec gain_k, Vec t_const) {
    ControllerSpec s;
    s.kind = ControllerKind::leaky_integral;
    s.actuated = std::move(buses);
    s.leak_gain = std::move(gain_k);
    s.time_constant = std::move(t_const);
    return s;
  }

  static ControllerSpec dai(std::vector<int> buses, Vec t_const, Mat laplacian, Vec costs) {
    ControllerSpec s;
    s.kind = ControllerKind::dai;
    s.actuated = std::move(buses);
    s.time_constant = std::move(t_const);
    s.comm_laplacian = std::move(laplacian);
    s.cost_coeff = std::move(costs);
    return s;
  }

  void validate(int n_buses) const {
    const int na = n_actuated();
    require(na >= 1, "controller: needs at least one actuated bus");
    for (std::size_t i = 0; i < actuated.size(); ++i) {
      require(actuated[i] >= 0 && actuated[i] < n_buses, "controller: actuated bus out of range");
      if (i > 0) require(actuated[i] > actuated[i - 1], "controller: actuated buses must ascend");
    }
    switch (kind) {
      case ControllerKind::droop:
        require(droop_inverse_gain.size() == na, "droop: gain size mismatch");
        require((droop_inverse_gain.array() > 0.0).all(), "droop: gains must be positive");
        break;
      case ControllerKind::pure_integral:
        require(time_constant.size() == na, "integral: T size mismatch");
        require((time_constant.array() > 0.0).all(), "integral: T must be positive");
        break;
      case ControllerKind::leaky_integral:
        require(time_constant.size() == na && leak_gain.size() == na,
                "leaky: parameter size mismatch");
        require((time_constant.array() > 0.0).all(), "leaky: T must be positive");
        require((leak_gain.array() >= 0.0).all(), "leaky: K must be nonnegative");
        break;
      case ControllerKind::dai: {
        require(time_constant.size() == na && cost_coeff.size() == na,
                "dai: parameter size mismatch");
        require((time_constant.array() > 0.0).all(), "dai: T must be positive");
        require((cost_coeff.array() > 0.0).all(), "dai: costs must be positive");
        require(comm_laplacian.rows() == na && comm_laplacian.cols() == na,
                "dai: laplacian size mismatch");
        require((comm_laplacian - comm_laplacian.transpose()).cwiseAbs().maxCoeff() < 1e-12,
                "dai: laplacian must be symmetric");
        require((comm_laplacian.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-9,
                "dai: laplacian rows must sum to zero");
        Eigen::SelfAdjointEigenSolver<Mat> eig(comm_laplacian);
        require(eig.eigenvalues().minCoeff() > -1e-9, "dai: laplacian must be PSD");
        if (na > 1)
          require(eig.eigenvalues()(1) > 1e-12, "dai: communication graph must be connected");
        break;
      }
    }
  }
};

/// Control injection over all n buses. Integral-family controllers inject
/// u = -p; droop injects u = -K^{-1} omega. Unactuated buses get zero.
inline Vec control_output(const ControllerSpec& spec, const Vec& p_state, const Vec& omega,
                          int n_buses) {
  Vec u = Vec::Zero(n_buses);
  const int na = spec.n_actuated();
  if (spec.kind == ControllerKind::droop) {
    if (omega.size() != n_buses) throw validation_error("control_output: omega size mismatch");
    for (int i = 0; i < na; ++i) u(spec.actuated[i]) = -spec.droop_inverse_gain(i) * omega(spec.actuated[i]);
  } else {
    if (p_state.size() != na) throw validation_error("control_output: state size mismatch");
    for (int i = 0; i < na; ++i) u(spec.actuated[i]) = -p_state(i);
  }
  return u;
}

/// dp/dt for the controller state given the measured (possibly noisy)
/// frequency at every bus. Empty for droop.
inline Vec state_derivative(const ControllerSpec& spec, const Vec& p_state,
                            const Vec& measured_freq) {
  const int na = spec.n_actuated();
  if (spec.kind == ControllerKind::droop) return Vec(0);
  if (p_state.size() != na) throw validation_error("state_derivative: state size mismatch");
  Vec w(na);
  for (int i = 0; i < na; ++i) {
    if (spec.actuated[i] >= measured_freq.size())
      throw validation_error("state_derivative: frequency vector too short");
    w(i) = measured_freq(spec.actuated[i]);
  }
  switch (spec.kind) {
    case ControllerKind::pure_integral:
      return w.cwiseQuotient(spec.time_constant);
    case ControllerKind::leaky_integral:
      return (w - spec.leak_gain.cwiseProduct(p_state)).cwiseQuotient(spec.time_constant);
    case ControllerKind::dai: {
      const Vec ap = spec.cost_coeff.cwiseProduct(p_state);
      const Vec rhs = w.cwiseQuotient(spec.cost_coeff) - spec.comm_laplacian * ap;
      return rhs.cwiseQuotient(spec.time_constant);
    }
    default:
      return Vec(0);
  }
}

/// Frequency response of one leaky channel: 1 / (T_i s + K_i), a first-order
/// lag with DC gain 1/K_i and bandwidth K_i/T_i.
inline std::complex<double> transfer_function_eval(const ControllerSpec& spec, int local_index,
                                                   std::complex<double> s) {
  require(spec.kind == ControllerKind::leaky_integral,
          "transfer_function_eval: leaky controller required");
  require(local_index >= 0 && local_index < spec.n_actuated(),
          "transfer_function_eval: index out of range");
  const std::complex<double> den =
      spec.time_constant(local_index) * s + spec.leak_gain(local_index);
  if (std::abs(den) == 0.0) throw numerical_error("transfer_function_eval: evaluation at the pole");
  return 1.0 / den;
}

/// Time-domain measurement disturbance added to the frequency seen by the
/// controllers: a constant per-bus bias plus sample-and-hold uniform noise,
/// redrawn every `interval` seconds. `sigma_zeta`/`sigma_eta` are the white
/// noise intensities used only by the linearized H2 analysis.
struct NoiseSpec {
  Vec bias_mean;    // per bus, added unconditionally
  Vec half_width;   // per bus; 0 disables the random part
  bool zero_mean = false;  // false: U[0, hw]; true: U[-hw, hw]
  Vec sigma_zeta;
  Vec sigma_eta;
  double interval = 1.0;
  std::uint64_t seed = 0;

  static NoiseSpec none(int n_buses) {
    NoiseSpec s;
    s.bias_mean = Vec::Zero(n_buses);
    s.half_width = Vec::Zero(n_buses);
    s.sigma_zeta = Vec::Zero(n_buses);
    s.sigma_eta = Vec::Zero(n_buses);
    return s;
  }

  bool active() const {
    return (bias_mean.size() && bias_mean.cwiseAbs().maxCoeff() > 0.0) ||
           (half_width.size() && half_width.maxCoeff() > 0.0);
  }

  void validate(int n_buses) const {
    require(bias_mean.size() == n_buses && half_width.size() == n_buses,
            "noise: per-bus vector size mismatch");
    require((half_width.array() >= 0.0).all(), "noise: half widths must be nonnegative");
    require(interval > 0.0, "noise: sample interval must be positive");
  }
};

}  // namespace gridfreq
