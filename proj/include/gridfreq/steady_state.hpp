#pragma once

#include <cmath>
#include <optional>

#include "gridfreq/controllers.hpp"
#include "gridfreq/dynamics.hpp"
#include "gridfreq/network.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

/// DC gain K_i^{-1} contributed by the controller at each bus (zero where no
/// controller acts). Throws if an actuated leaky gain is zero, since that
/// channel has unbounded DC gain.
inline Vec dc_gain_vector(const ControllerSpec& spec, int n_buses) {
  Vec g = Vec::Zero(n_buses);
  switch (spec.kind) {
    case ControllerKind::droop:
      for (int i = 0; i < spec.n_actuated(); ++i)
        g(spec.actuated[i]) = spec.droop_inverse_gain(i);
      break;
    case ControllerKind::leaky_integral:
      for (int i = 0; i < spec.n_actuated(); ++i) {
        require(spec.leak_gain(i) > 0.0, "dc_gain_vector: leaky gain must be positive");
        g(spec.actuated[i]) = 1.0 / spec.leak_gain(i);
      }
      break;
    default:
      throw validation_error("dc_gain_vector: controller has unbounded DC gain");
  }
  return g;
}

/// Synchronous frequency of the open loop given steady control injections:
/// (sum P* + sum u*) / sum D.
inline double sync_frequency_open(const MachineParams& params, const Vec& u_star) {
  require(u_star.size() == params.injection.size(), "sync_frequency_open: size mismatch");
  return (params.injection.sum() + u_star.sum()) / params.damping.sum();
}

/// Synchronous frequency under leaky integral control:
/// sum P* / sum (D_i + K_i^{-1}), with dc_gain = K^{-1} per bus (zero entries
/// for buses without a controller).
inline double sync_frequency_leaky(const MachineParams& params, const Vec& dc_gain) {
  require(dc_gain.size() == params.injection.size(), "sync_frequency_leaky: size mismatch");
  require((dc_gain.array() >= 0.0).all(), "sync_frequency_leaky: DC gains must be nonnegative");
  return params.injection.sum() / (params.damping.sum() + dc_gain.sum());
}

/// Smallest sum of DC gains that keeps |omega_sync| <= eps for the given
/// worst-case imbalance: max(0, |sum P*|/eps - sum D).
inline double min_dc_gain_for_band(double sum_p_star, double eps, double sum_damping) {
  require(eps > 0.0, "min_dc_gain_for_band: eps must be positive");
  return std::max(0.0, std::abs(sum_p_star) / eps - sum_damping);
}

enum class DispatchVariant { exact, leaky };

/// Quadratic dispatch with a single power-balance constraint. The exact
/// variant allocates sum(-P*) at identical marginal costs a_i u_i; the leaky
/// variant reproduces the injections realized by leaky integral control
/// (K_i u_i identical, balance discounted by the damping response).
struct DispatchProblem {
  DispatchVariant variant = DispatchVariant::exact;
  Vec cost;     // a_i (exact) or K_i (leaky), strictly positive
  Vec damping;  // used by the leaky variant only
  double sum_p_star = 0.0;

  void validate() const {
    require(cost.size() >= 1, "dispatch: empty cost vector");
    require((cost.array() > 0.0).all(), "dispatch: cost coefficients must be positive");
    if (variant == DispatchVariant::leaky)
      require(damping.size() == cost.size(), "dispatch: damping size mismatch");
  }
};

inline Vec solve_dispatch(const DispatchProblem& prob) {
  prob.validate();
  const int n = static_cast<int>(prob.cost.size());
  Vec u(n);
  if (prob.variant == DispatchVariant::exact) {
    const double inv_sum = prob.cost.cwiseInverse().sum();
    for (int i = 0; i < n; ++i) u(i) = -prob.sum_p_star / (prob.cost(i) * inv_sum);
  } else {
    const double denom = prob.damping.sum() + prob.cost.cwiseInverse().sum();
    for (int i = 0; i < n; ++i) u(i) = -prob.sum_p_star / (prob.cost(i) * denom);
  }
  return u;
}

/// Synchronous solution of the closed (or open) loop in center-of-inertia
/// coordinates.
struct SynchronousSolution {
  Vec theta_star;     // COI angles, 1^T theta = 0
  double omega_sync = 0.0;
  Vec p_star;         // controller state per actuated bus
  Vec u_star;         // realized injections, all buses
  double residual = 0.0;
  int iterations = 0;
  bool secure = false;       // B^T theta inside the rho-margin box
  double max_edge_angle = 0.0;
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iterations = 50;
  double security_margin = 0.1;  // rho
};

/// Newton iteration (flat start, halving line search) for the lossless power
/// flow  B Gamma sin(B^T theta) = P* - (D + K^{-1}) omega_sync 1  reduced to
/// the subspace orthogonal to 1. `dc_gain` may be zero for the open loop.
inline SynchronousSolution solve_synchronous(const NetworkModel& net, const MachineParams& params,
                                             const Vec& dc_gain, const SolveOptions& opts = {}) {
  const int n = net.n_buses();
  require(dc_gain.size() == n, "solve_synchronous: dc gain size mismatch");
  params.validate(n);

  const double omega_sync =
      params.injection.sum() / (params.damping.sum() + dc_gain.sum());
  const Vec inj = params.injection - (params.damping + dc_gain) * omega_sync;

  const Mat q = com_basis(n);
  Vec z = Vec::Zero(n - 1);
  Vec theta = q * z;
  Vec residual = net.potential_gradient(theta) - inj;
  double rnorm = residual.lpNorm<Eigen::Infinity>();

  int iter = 0;
  while (rnorm > opts.tol && iter < opts.max_iterations) {
    const Mat jac = q.transpose() * net.potential_hessian(theta) * q;
    const Vec step = jac.fullPivLu().solve(q.transpose() * residual);
    if (!step.allFinite())
      throw numerical_error("solve_synchronous: singular Jacobian (stressed power flow)");
    double scale = 1.0;
    for (int k = 0; k < 60; ++k) {
      const Vec z_try = z - scale * step;
      const Vec theta_try = q * z_try;
      const double r_try =
          (net.potential_gradient(theta_try) - inj).lpNorm<Eigen::Infinity>();
      if (r_try < rnorm) {
        z = z_try;
        theta = theta_try;
        rnorm = r_try;
        break;
      }
      scale *= 0.5;
      if (k == 59)
        throw numerical_error("solve_synchronous: line search stalled (likely infeasible)");
    }
    residual = net.potential_gradient(theta) - inj;
    rnorm = residual.lpNorm<Eigen::Infinity>();
    ++iter;
  }
  if (rnorm > opts.tol)
    throw numerical_error("solve_synchronous: Newton did not converge (residual " +
                          std::to_string(rnorm) + ")");

  SynchronousSolution sol;
  sol.theta_star = theta;
  sol.omega_sync = omega_sync;
  sol.u_star = -dc_gain * omega_sync;
  sol.residual = rnorm;
  sol.iterations = iter;
  sol.max_edge_angle = net.n_lines() ? net.edge_angles(theta).cwiseAbs().maxCoeff() : 0.0;
  sol.secure = sol.max_edge_angle < M_PI / 2.0 - opts.security_margin;
  return sol;
}

/// Convenience overload: the controller determines the DC gains and the
/// steady controller state p* = K^{-1} omega_sync at actuated buses.
inline SynchronousSolution solve_synchronous(const NetworkModel& net, const MachineParams& params,
                                             const ControllerSpec& ctrl,
                                             const SolveOptions& opts = {}) {
  const Vec g = dc_gain_vector(ctrl, net.n_buses());
  SynchronousSolution sol = solve_synchronous(net, params, g, opts);
  if (ctrl.kind != ControllerKind::droop) {
    sol.p_star = Vec(ctrl.n_actuated());
    for (int i = 0; i < ctrl.n_actuated(); ++i)
      sol.p_star(i) = -sol.u_star(ctrl.actuated[i]);
  }
  return sol;
}

/// Open-loop synchronous solution (no secondary control).
inline SynchronousSolution solve_synchronous_open(const NetworkModel& net,
                                                  const MachineParams& params,
                                                  const SolveOptions& opts = {}) {
  return solve_synchronous(net, params, Vec::Zero(net.n_buses()), opts);
}

}  // namespace gridfreq
