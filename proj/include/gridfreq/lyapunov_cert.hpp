#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "gridfreq/dynamics.hpp"
#include "gridfreq/network.hpp"
#include "gridfreq/steady_state.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

/// Quadratic bounds relating the potential function to the distance from the
/// operating point, valid while every angle difference stays in the
/// rho-margin security box:
///   alpha1 |d| <= |grad U(x) - grad U(y)| <= alpha2 |d|
///   alpha3 |d|^2 <= Bregman distance <= alpha4 |d|^2.
struct BregmanBounds {
  double alpha1 = 0, alpha2 = 0, alpha3 = 0, alpha4 = 0;
};

inline BregmanBounds bregman_bounds(const NetworkModel& net, double rho) {
  require(rho > 0.0 && rho < M_PI / 2.0, "bregman_bounds: rho must be in (0, pi/2)");
  const int n = net.n_buses();
  require(net.n_lines() >= 1, "bregman_bounds: network needs at least one line");
  const Mat q = com_basis(n);
  Eigen::SelfAdjointEigenSolver<Mat> eig(q.transpose() * net.laplacian() * q);
  const double lam2 = eig.eigenvalues().minCoeff();
  const double lam_max = eig.eigenvalues().maxCoeff();
  BregmanBounds b;
  b.alpha1 = std::sin(rho) * lam2;
  b.alpha2 = lam_max;
  b.alpha3 = 0.5 * std::sin(rho) * lam2;
  b.alpha4 = 0.5 * lam_max;
  return b;
}

/// Incremental state x = (delta - delta*, omega - omega*, p - p*) with the
/// angle part projected to center-of-inertia coordinates.
inline Vec incremental_state(const NetworkModel& net, const ClosedLoopState& state,
                             const SynchronousSolution& eq) {
  const int n = net.n_buses();
  require(state.ctrl_state.size() == n && eq.p_star.size() == n,
          "incremental_state: every bus must carry controller state");
  Vec x(3 * n);
  const Vec delta = state.angles.array() - state.angles.mean();
  x.head(n) = delta - eq.theta_star;
  x.segment(n, n) = state.freqs.array() - eq.omega_sync;
  x.tail(n) = state.ctrl_state - eq.p_star;
  return x;
}

/// chi = (grad U(delta) - grad U(delta*), omega - omega*, p - p*), the vector
/// whose quadratic form with H gives -dV/dt.
inline Vec chi_vector(const NetworkModel& net, const ClosedLoopState& state,
                      const SynchronousSolution& eq) {
  const int n = net.n_buses();
  Vec chi(3 * n);
  const Vec delta = state.angles.array() - state.angles.mean();
  chi.head(n) = net.potential_gradient(delta) - net.potential_gradient(eq.theta_star);
  chi.segment(n, n) = state.freqs.array() - eq.omega_sync;
  chi.tail(n) = state.ctrl_state - eq.p_star;
  return chi;
}

/// Strict Lyapunov function: kinetic energy, Bregman distance of the
/// potential, controller energy, and the cross term
/// eps (grad U(delta) - grad U(delta*))^T M (omega - omega*).
inline double lyapunov_value(const NetworkModel& net, const MachineParams& params,
                             const Vec& t_const, double eps, const ClosedLoopState& state,
                             const SynchronousSolution& eq) {
  const int n = net.n_buses();
  require(t_const.size() == n, "lyapunov_value: T must cover every bus");
  const Vec delta = state.angles.array() - state.angles.mean();
  const Vec w = state.freqs.array() - eq.omega_sync;
  const Vec dp = state.ctrl_state - eq.p_star;
  const Vec grad_diff =
      net.potential_gradient(delta) - net.potential_gradient(eq.theta_star);
  const double bregman = net.potential(delta) - net.potential(eq.theta_star) -
                         net.potential_gradient(eq.theta_star).dot(delta - eq.theta_star);
  return 0.5 * w.dot(params.inertia.cwiseProduct(w)) + bregman +
         0.5 * dp.dot(t_const.cwiseProduct(dp)) +
         eps * grad_diff.dot(params.inertia.cwiseProduct(w));
}

/// Dissipation matrix H(delta) with E(delta) = sym(M grad^2 U(delta)), so
/// that dV/dt = -chi^T H(delta) chi along closed-loop solutions.
inline Mat build_H(const NetworkModel& net, const MachineParams& params, const Vec& gain_k,
                   double eps, const Vec& delta) {
  const int n = net.n_buses();
  require(gain_k.size() == n, "build_H: gain vector must cover every bus");
  const Mat hess = net.potential_hessian(delta);
  const Mat me = params.inertia.asDiagonal() * hess;
  const Mat e = 0.5 * (me + me.transpose());
  Mat h = Mat::Zero(3 * n, 3 * n);
  h.block(0, 0, n, n) = eps * Mat::Identity(n, n);
  h.block(0, n, n, n) = 0.5 * eps * Mat(params.damping.asDiagonal());
  h.block(n, 0, n, n) = h.block(0, n, n, n);
  h.block(0, 2 * n, n, n) = 0.5 * eps * Mat::Identity(n, n);
  h.block(2 * n, 0, n, n) = h.block(0, 2 * n, n, n);
  h.block(n, n, n, n) = Mat(params.damping.asDiagonal()) - eps * e;
  h.block(2 * n, 2 * n, n, n) = gain_k.asDiagonal();
  return h;
}

/// Same with the noise-splitting shift -mu I on the controller block.
inline Mat build_H_hat(const NetworkModel& net, const MachineParams& params, const Vec& gain_k,
                       double eps, double mu, const Vec& delta) {
  Mat h = build_H(net, params, gain_k, eps, delta);
  const int n = net.n_buses();
  h.block(2 * n, 2 * n, n, n) -= mu * Mat::Identity(n, n);
  return h;
}

/// Block-diagonal lower bound of H obtained by absorbing the cross terms:
/// diag(eps/2 I, D - eps(E + D^2), K - eps I - mu I).
inline Mat build_H_prime(const NetworkModel& net, const MachineParams& params, const Vec& gain_k,
                         double eps, double mu, const Vec& delta) {
  const int n = net.n_buses();
  const Mat hess = net.potential_hessian(delta);
  const Mat me = params.inertia.asDiagonal() * hess;
  const Mat e = 0.5 * (me + me.transpose());
  Mat h = Mat::Zero(3 * n, 3 * n);
  h.block(0, 0, n, n) = 0.5 * eps * Mat::Identity(n, n);
  h.block(n, n, n, n) =
      Mat(params.damping.asDiagonal()) - eps * (e + Mat(params.damping.array().square().matrix().asDiagonal()));
  h.block(2 * n, 2 * n, n, n) =
      Mat(gain_k.asDiagonal()) - (eps + mu) * Mat::Identity(n, n);
  return h;
}

struct SandwichConstants {
  double beta1 = 0, beta2 = 0;
  BregmanBounds alphas;
};

/// beta1 |x|^2 <= V(x) <= beta2 |x|^2 over the security region, from the
/// extremal eigenvalues of M and T and the potential bounds.
inline SandwichConstants sandwich_constants(const NetworkModel& net, const MachineParams& params,
                                            const Vec& t_const, double eps, double rho) {
  const BregmanBounds a = bregman_bounds(net, rho);
  const double m_min = params.inertia.minCoeff(), m_max = params.inertia.maxCoeff();
  const double t_min = t_const.minCoeff(), t_max = t_const.maxCoeff();
  SandwichConstants s;
  s.alphas = a;
  s.beta1 = std::min({m_min - eps * m_max * m_max, t_min, a.alpha3 - eps * a.alpha2 * a.alpha2});
  s.beta2 = std::max({m_max + eps * m_max * m_max, t_max, a.alpha4 + eps * a.alpha2 * a.alpha2});
  if (s.beta1 <= 0.0)
    throw numerical_error("sandwich_constants: beta1 <= 0, eps too large for this system");
  return s;
}

/// Largest feasible cross-term weight (scaled by `safety`) keeping the
/// block bound H' positive definite over the security box and the sandwich
/// lower bound positive. Uses interval bounds on cos of the edge angles.
inline double choose_epsilon(const NetworkModel& net, const MachineParams& params,
                             const Vec& gain_k, double rho, double safety = 0.5) {
  require(safety > 0.0 && safety <= 1.0, "choose_epsilon: safety in (0,1]");
  require((gain_k.array() > 0.0).all(), "choose_epsilon: K must be positive");
  const BregmanBounds a = bregman_bounds(net, rho);
  const double m_min = params.inertia.minCoeff(), m_max = params.inertia.maxCoeff();
  const double d_min = params.damping.minCoeff(), d_max = params.damping.maxCoeff();
  require(m_min > 0.0, "choose_epsilon: every bus needs positive inertia");

  // lambda_max(E(delta)) <= lambda_max(M) lambda_max(L_B) over the box.
  Eigen::SelfAdjointEigenSolver<Mat> eig(net.laplacian());
  const double e_max = m_max * eig.eigenvalues().maxCoeff();

  const double sup = std::min({gain_k.minCoeff(),              // K - eps I > 0
                               d_min / (e_max + d_max * d_max),  // D - eps(E + D^2) > 0
                               m_min / (m_max * m_max),          // beta1 arm (inertia)
                               a.alpha3 / (a.alpha2 * a.alpha2)  // beta1 arm (potential)
                              });
  if (!(sup > 0.0)) throw numerical_error("choose_epsilon: no feasible cross-term weight");

  double eps = safety * sup;
  for (int i = 0; i < 80; ++i) {
    const bool ok = gain_k.minCoeff() - eps > 0.0 &&
                    d_min - eps * (e_max + d_max * d_max) > 0.0 &&
                    m_min - eps * m_max * m_max > 0.0 &&
                    a.alpha3 - eps * a.alpha2 * a.alpha2 > 0.0;
    if (ok) return eps;
    eps *= 0.5;
  }
  throw numerical_error("choose_epsilon: no feasible cross-term weight");
}

struct CertificateParams {
  double rho = 0.1;                // security margin (rad)
  std::optional<double> epsilon;   // cross-term weight; chosen if absent
  std::optional<double> mu;        // noise-splitting weight; optimized if absent
  double epsilon_safety = 0.5;
  int grid_points = 1000;          // samples of the security box for beta4
  int mu_grid = 24;
  std::uint64_t seed = 20240901;
};

/// Exponential stability / ISS certificate:
///   V-decay    V(x(t)) <= exp(-alpha t) V(x0)            (nominal)
///   state      |x(t)|^2 <= lambda e^{-alpha t} |x0|^2
///   ISS        |x(t)|^2 <= lambda e^{-alpha_hat t} |x0|^2 + gamma |eta|_inf^2
/// valid for initial conditions in the sublevel set Omega_c = {V <= c} and
/// noise bounded by eta_bar.
struct Certificate {
  double rho = 0, epsilon = 0, mu = 0;
  double beta1 = 0, beta2 = 0, beta3 = 0, beta3_prime = 0;
  double beta4 = 0, beta4_hat = 0, beta4_interval = 0;
  double alpha = 0, alpha_hat = 0;
  double lambda = 0, gamma = 0;
  double xi = 0, c = 0, eta_bar = 0;
  BregmanBounds alphas;
  SynchronousSolution equilibrium;
};

namespace detail {

/// Smallest eigenvalue of H (optionally shifted by mu) over sampled cosine
/// patterns of the security box, corners included.
inline double min_eig_over_box(const NetworkModel& net, const MachineParams& params,
                               const Vec& gain_k, double eps, double mu, double rho,
                               int samples, std::uint64_t seed) {
  const int n = net.n_buses();
  const int m = net.n_lines();
  const double lo = std::sin(rho);  // cos of the largest admissible angle
  DeterministicRng rng(seed);

  auto eval = [&](const Vec& cosines) {
    // Assemble E directly from the cosine pattern.
    Mat hess = Mat::Zero(n, n);
    for (int e = 0; e < m; ++e) {
      const auto& l = net.lines()[e];
      const double w = net.edge_weight()(e) * cosines(e);
      hess(l.from, l.from) += w;
      hess(l.to, l.to) += w;
      hess(l.from, l.to) -= w;
      hess(l.to, l.from) -= w;
    }
    const Mat me = params.inertia.asDiagonal() * hess;
    const Mat e_mat = 0.5 * (me + me.transpose());
    Mat h = Mat::Zero(3 * n, 3 * n);
    h.block(0, 0, n, n) = eps * Mat::Identity(n, n);
    h.block(0, n, n, n) = 0.5 * eps * Mat(params.damping.asDiagonal());
    h.block(n, 0, n, n) = h.block(0, n, n, n);
    h.block(0, 2 * n, n, n) = 0.5 * eps * Mat::Identity(n, n);
    h.block(2 * n, 0, n, n) = h.block(0, 2 * n, n, n);
    h.block(n, n, n, n) = Mat(params.damping.asDiagonal()) - eps * e_mat;
    h.block(2 * n, 2 * n, n, n) = Mat(gain_k.asDiagonal()) - mu * Mat::Identity(n, n);
    Eigen::SelfAdjointEigenSolver<Mat> eig(h);
    return eig.eigenvalues().minCoeff();
  };

  double best = eval(Vec::Constant(m, lo));
  best = std::min(best, eval(Vec::Ones(m)));
  for (int s = 0; s < samples; ++s) {
    Vec c(m);
    if (s % 4 == 0)  // random corner
      for (int e = 0; e < m; ++e) c(e) = rng.uniform01() < 0.5 ? lo : 1.0;
    else
      for (int e = 0; e < m; ++e) c(e) = rng.uniform(lo, 1.0);
    best = std::min(best, eval(c));
  }
  return best;
}

}  // namespace detail

/// Assembles the full certificate for a leaky-integral closed loop with
/// controllers and inertia on every bus. Failure to certify (no feasible
/// eps/mu, equilibrium outside the security box) throws numerical_error and
/// does not imply instability.
inline Certificate certify(const NetworkModel& net, const MachineParams& params,
                           const ControllerSpec& spec, const CertificateParams& cp = {}) {
  const int n = net.n_buses();
  require(spec.kind == ControllerKind::leaky_integral, "certify: leaky controller required");
  require(spec.n_actuated() == n, "certify: every bus must be actuated");
  require((spec.leak_gain.array() > 0.0).all(), "certify: K must be positive");
  require(params.all_inertial(), "certify: every bus needs positive inertia");
  require(cp.rho > 0.0 && cp.rho < M_PI / 2.0, "certify: rho must be in (0, pi/2)");

  Certificate cert;
  cert.rho = cp.rho;

  SolveOptions so;
  so.security_margin = cp.rho;
  cert.equilibrium = solve_synchronous(net, params, spec, so);
  if (!cert.equilibrium.secure)
    throw numerical_error("certify: equilibrium violates the security margin");

  const Vec& k = spec.leak_gain;
  cert.epsilon = cp.epsilon ? *cp.epsilon
                            : choose_epsilon(net, params, k, cp.rho, cp.epsilon_safety);

  const SandwichConstants sc =
      sandwich_constants(net, params, spec.time_constant, cert.epsilon, cp.rho);
  cert.beta1 = sc.beta1;
  cert.beta2 = sc.beta2;
  cert.alphas = sc.alphas;
  cert.beta3_prime = sc.alphas.alpha2 * sc.alphas.alpha2;
  cert.beta3 = std::min(1.0, 1.0 / cert.beta3_prime);

  cert.beta4 = detail::min_eig_over_box(net, params, k, cert.epsilon, 0.0, cp.rho,
                                        cp.grid_points, cp.seed);
  if (cert.beta4 <= 0.0)
    throw numerical_error("certify: H(delta) not positive over the security box");
  cert.alpha = cert.beta3 * cert.beta4 / cert.beta2;
  cert.lambda = cert.beta2 / cert.beta1;

  {
    Eigen::SelfAdjointEigenSolver<Mat> eig(net.laplacian());
    const double e_max = params.inertia.maxCoeff() * eig.eigenvalues().maxCoeff();
    const double d_min = params.damping.minCoeff(), d_max = params.damping.maxCoeff();
    cert.beta4_interval =
        std::min({0.5 * cert.epsilon,
                  d_min - cert.epsilon * (e_max + d_max * d_max),
                  k.minCoeff() - cert.epsilon});
  }

  // Sublevel value keeping trajectories inside the security box.
  const Vec edge_eq = net.edge_angles(cert.equilibrium.theta_star);
  cert.xi = (M_PI / 2.0 - cp.rho) - edge_eq.cwiseAbs().maxCoeff();
  require(cert.xi > 0.0, "certify: equilibrium leaves no room inside the security box");
  Eigen::SelfAdjointEigenSolver<Mat> bbt(net.incidence() * net.incidence().transpose());
  cert.c = cert.beta1 * cert.xi * cert.xi / bbt.eigenvalues().maxCoeff();

  // Noise split: maximize the admissible noise bound eta_bar = alpha_hat c mu.
  const double mu_cap = k.minCoeff() - cert.epsilon;
  require(mu_cap > 0.0, "certify: no room for the noise-splitting weight");
  auto hat_quantities = [&](double mu) {
    const double b4h = detail::min_eig_over_box(net, params, k, cert.epsilon, mu, cp.rho,
                                                cp.grid_points, cp.seed);
    const double ah = cert.beta3 * b4h / cert.beta2;
    return std::pair<double, double>(b4h, ah);
  };
  if (cp.mu) {
    cert.mu = *cp.mu;
    require(cert.mu > 0.0 && cert.mu < mu_cap, "certify: mu out of range");
  } else {
    double best_obj = -1.0, best_mu = 0.0;
    for (int i = 1; i <= cp.mu_grid; ++i) {
      const double mu = mu_cap * i / (cp.mu_grid + 1.0);
      const auto [b4h, ah] = hat_quantities(mu);
      if (b4h <= 0.0) continue;
      const double obj = ah * cert.c * mu;
      if (obj > best_obj) {
        best_obj = obj;
        best_mu = mu;
      }
    }
    if (best_obj <= 0.0) throw numerical_error("certify: no feasible noise split found");
    cert.mu = best_mu;
  }
  const auto [b4h, ah] = hat_quantities(cert.mu);
  if (b4h <= 0.0) throw numerical_error("certify: shifted H not positive over the box");
  cert.beta4_hat = b4h;
  cert.alpha_hat = ah;
  cert.gamma = 1.0 / (cert.alpha_hat * cert.beta1 * cert.mu);
  cert.eta_bar = cert.alpha_hat * cert.c * cert.mu;
  return cert;
}

/// Pointwise ISS inequality check with a tiny relative slack for roundoff.
inline bool iss_bound_holds(const Certificate& cert, double x0_sq, double t, double eta_inf_sq,
                            double x_sq) {
  const double bound = cert.lambda * std::exp(-cert.alpha_hat * t) * x0_sq +
                       cert.gamma * eta_inf_sq;
  return x_sq <= bound * (1.0 + 1e-12) + 1e-300;
}

}  // namespace gridfreq
