#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gridfreq/controllers.hpp"
#include "gridfreq/dynamics.hpp"
#include "gridfreq/network.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

/// Linearization of the closed loop around a synchronous steady state, with
/// power disturbances S_zeta zeta and measurement noise S_eta eta as inputs
/// and y = omega as output:
///   d/dt [th; w; p] = A [th; w; p] + B [zeta; eta],  y = C [th; w; p].
struct LinearSystem {
  int n = 0;
  Mat a;  // 3n x 3n
  Mat b;  // 3n x 2n
  Mat c;  // n x 3n
  // Building blocks kept for modal analysis and deflation.
  Mat laplacian;                 // L_B = Hessian of U at the operating point
  Vec inertia, damping, t_const, gain_k, sigma_zeta, sigma_eta;
};

/// Builds the linearized closed loop. Requires every bus to carry inertia
/// and a leaky/pure-integral controller (gain_k may be zero entrywise).
inline LinearSystem linearize(const NetworkModel& net, const MachineParams& params,
                              const Vec& gain_k, const Vec& t_const, const Vec& sigma_zeta,
                              const Vec& sigma_eta, const Vec& theta_star) {
  const int n = net.n_buses();
  params.validate(n);
  require(params.all_inertial(), "linearize: every bus needs positive inertia");
  require(gain_k.size() == n && t_const.size() == n, "linearize: gain size mismatch");
  require(sigma_zeta.size() == n && sigma_eta.size() == n, "linearize: sigma size mismatch");
  require((t_const.array() > 0.0).all(), "linearize: T must be positive");
  require((gain_k.array() >= 0.0).all(), "linearize: K must be nonnegative");

  LinearSystem sys;
  sys.n = n;
  sys.laplacian = net.potential_hessian(theta_star);
  sys.inertia = params.inertia;
  sys.damping = params.damping;
  sys.t_const = t_const;
  sys.gain_k = gain_k;
  sys.sigma_zeta = sigma_zeta;
  sys.sigma_eta = sigma_eta;

  const Vec mi = params.inertia.cwiseInverse();
  const Vec ti = t_const.cwiseInverse();
  sys.a = Mat::Zero(3 * n, 3 * n);
  sys.a.block(0, n, n, n) = Mat::Identity(n, n);
  sys.a.block(n, 0, n, n) = -(mi.asDiagonal() * sys.laplacian);
  sys.a.block(n, n, n, n) = (-mi.cwiseProduct(params.damping)).asDiagonal();
  sys.a.block(n, 2 * n, n, n) = (-mi).asDiagonal();
  sys.a.block(2 * n, n, n, n) = ti.asDiagonal();
  sys.a.block(2 * n, 2 * n, n, n) = (-ti.cwiseProduct(gain_k)).asDiagonal();

  sys.b = Mat::Zero(3 * n, 2 * n);
  sys.b.block(n, 0, n, n) = mi.cwiseProduct(sigma_zeta).asDiagonal();
  sys.b.block(2 * n, n, n, n) = ti.cwiseProduct(sigma_eta).asDiagonal();

  sys.c = Mat::Zero(n, 3 * n);
  sys.c.block(0, n, n, n) = Mat::Identity(n, n);
  return sys;
}

inline LinearSystem linearize(const NetworkModel& net, const MachineParams& params,
                              const ControllerSpec& spec, const Vec& sigma_zeta,
                              const Vec& sigma_eta, const Vec& theta_star) {
  require(spec.kind == ControllerKind::leaky_integral ||
              spec.kind == ControllerKind::pure_integral,
          "linearize: leaky or pure-integral controller required");
  require(spec.n_actuated() == net.n_buses(), "linearize: every bus must be actuated");
  return linearize(net, params, spec.leak_gain, spec.time_constant, sigma_zeta, sigma_eta,
                   theta_star);
}

/// Solves A^T X + X A = -W by the Bartels-Stewart method: real Schur form of
/// A, then block forward substitution over the quasi-triangular factor.
inline Mat solve_lyapunov(const Mat& a, const Mat& w) {
  const int n = static_cast<int>(a.rows());
  require(a.cols() == n && w.rows() == n && w.cols() == n, "solve_lyapunov: shape mismatch");

  Eigen::RealSchur<Mat> schur(a);
  const Mat u = schur.matrixU();
  const Mat t = schur.matrixT();
  const Mat q = u.transpose() * w * u;

  // Diagonal block boundaries of the quasi-triangular T.
  std::vector<int> starts;
  for (int i = 0; i < n;) {
    starts.push_back(i);
    i += (i + 1 < n && std::abs(t(i + 1, i)) > 0.0) ? 2 : 1;
  }
  starts.push_back(n);
  const int nb = static_cast<int>(starts.size()) - 1;
  auto blk = [&](const Mat& m, int bi, int bj) {
    return m.block(starts[bi], starts[bj], starts[bi + 1] - starts[bi],
                   starts[bj + 1] - starts[bj]);
  };

  Mat y = Mat::Zero(n, n);
  for (int j = 0; j < nb; ++j) {
    for (int i = 0; i < nb; ++i) {
      Mat rhs = -blk(q, i, j);
      for (int k = 0; k < i; ++k) rhs -= blk(t, k, i).transpose() * blk(y, k, j);
      for (int k = 0; k < j; ++k) rhs -= blk(y, i, k) * blk(t, k, j);
      // T_ii^T Y_ij + Y_ij T_jj = rhs, solved through the Kronecker form.
      const Mat tii = blk(t, i, i), tjj = blk(t, j, j);
      const int p = static_cast<int>(tii.rows()), r = static_cast<int>(tjj.rows());
      Mat sys = Mat::Zero(p * r, p * r);
      for (int col = 0; col < r; ++col) sys.block(col * p, col * p, p, p) = tii.transpose();
      for (int col = 0; col < r; ++col)
        for (int row = 0; row < r; ++row)
          sys.block(col * p, row * p, p, p) += tjj(row, col) * Mat::Identity(p, p);
      Eigen::Map<const Vec> rhs_v(rhs.data(), p * r);
      const Vec sol = sys.fullPivLu().solve(rhs_v);
      if (!sol.allFinite()) throw numerical_error("solve_lyapunov: singular block system");
      y.block(starts[i], starts[j], p, r) = Eigen::Map<const Mat>(sol.data(), p, r);
    }
  }
  Mat x = u * y * u.transpose();
  return 0.5 * (x + x.transpose());
}

struct H2Result {
  double total = 0.0;
  double power_channel = 0.0;  // from the zeta inputs
  double noise_channel = 0.0;  // from the eta inputs
};

/// Squared H2 norm of the linearized closed loop by a Lyapunov-equation
/// solve. The rotational angle mode (uniform shift, unobservable from
/// y = omega) is deflated by restricting angles to the subspace orthogonal
/// to 1; the reduced dynamics must then be Hurwitz.
inline H2Result h2_numeric(const LinearSystem& sys) {
  const int n = sys.n;
  const Mat q = com_basis(n);
  const int dim = (n - 1) + 2 * n;

  const Vec mi = sys.inertia.cwiseInverse();
  const Vec ti = sys.t_const.cwiseInverse();
  Mat a = Mat::Zero(dim, dim);
  a.block(0, n - 1, n - 1, n) = q.transpose();
  a.block(n - 1, 0, n, n - 1) = -(mi.asDiagonal() * sys.laplacian * q);
  a.block(n - 1, n - 1, n, n) = (-mi.cwiseProduct(sys.damping)).asDiagonal();
  a.block(n - 1, 2 * n - 1, n, n) = (-mi).asDiagonal();
  a.block(2 * n - 1, n - 1, n, n) = ti.asDiagonal();
  a.block(2 * n - 1, 2 * n - 1, n, n) = (-ti.cwiseProduct(sys.gain_k)).asDiagonal();

  const Eigen::EigenSolver<Mat> eig(a);
  const double max_real = eig.eigenvalues().real().maxCoeff();
  if (!(max_real < 0.0))
    throw numerical_error("h2_numeric: reduced dynamics not Hurwitz (max Re = " +
                          std::to_string(max_real) + ")");

  Mat c = Mat::Zero(n, dim);
  c.block(0, n - 1, n, n) = Mat::Identity(n, n);
  const Mat w = c.transpose() * c;
  const Mat x = solve_lyapunov(a, w);

  const double res = (a.transpose() * x + x * a + w).norm();
  if (res > 1e-8 * w.norm())
    throw numerical_error("h2_numeric: Lyapunov residual too large (" + std::to_string(res) +
                          ")");

  Mat b = Mat::Zero(dim, 2 * n);
  b.block(n - 1, 0, n, n) = mi.cwiseProduct(sys.sigma_zeta).asDiagonal();
  b.block(2 * n - 1, n, n, n) = ti.cwiseProduct(sys.sigma_eta).asDiagonal();

  H2Result r;
  const Mat xb = x * b;
  for (int col = 0; col < n; ++col) r.power_channel += b.col(col).dot(xb.col(col));
  for (int col = n; col < 2 * n; ++col) r.noise_channel += b.col(col).dot(xb.col(col));
  r.total = r.power_channel + r.noise_channel;
  return r;
}

/// Open-loop squared H2 norm for homogeneous parameters: n sigma_zeta^2/(2md).
inline double h2_open_loop(int n, double m, double d, double sigma_zeta) {
  return n * sigma_zeta * sigma_zeta / (2.0 * m * d);
}

/// Per-mode squared H2 norm of the homogeneous leaky closed loop at one
/// Laplacian eigenvalue (the lambda = 0 expression included).
inline double h2_per_mode(double m, double d, double tau, double k, double lambda,
                          double sigma_zeta, double sigma_eta) {
  const double den =
      2.0 * d * (m * k * k + (m / d + d * tau) * k + tau + lambda * tau * tau);
  return sigma_zeta * sigma_zeta / (2.0 * m * d) +
         (-(k / d) * sigma_zeta * sigma_zeta + sigma_eta * sigma_eta) / den;
}

/// Closed-form squared H2 norm for homogeneous parameters, summed over the
/// Laplacian eigenvalues (ascending, first equal to zero). k = 0 reproduces
/// the pure-integrator expression.
inline H2Result h2_closed_form(double m, double d, double tau, double k, double sigma_zeta,
                               double sigma_eta, const Vec& lambdas) {
  require(m > 0 && d > 0 && tau > 0, "h2_closed_form: m, d, tau must be positive");
  require(k >= 0, "h2_closed_form: k must be nonnegative");
  const int n = static_cast<int>(lambdas.size());
  require(n >= 1, "h2_closed_form: need at least one mode");
  require(std::abs(lambdas(0)) < 1e-9, "h2_closed_form: first eigenvalue must be zero");

  H2Result r;
  r.power_channel = h2_open_loop(n, m, d, sigma_zeta);
  for (int i = 0; i < n; ++i) {
    const double den =
        2.0 * d * (m * k * k + (m / d + d * tau) * k + tau + lambdas(i) * tau * tau);
    r.power_channel += -(k / d) * sigma_zeta * sigma_zeta / den;
    r.noise_channel += sigma_eta * sigma_eta / den;
  }
  r.total = r.power_channel + r.noise_channel;
  return r;
}

/// Gain minimizing the homogeneous H2 norm in the tau -> 0 limit: the
/// positive root of sigma_zeta^2 k^2 - 2 d sigma_eta^2 k - sigma_eta^2.
/// Returns 0 when sigma_eta = 0 (pure integral optimal for power
/// disturbances); rejects sigma_zeta = 0, where open loop is optimal and no
/// finite minimizer exists.
inline double optimal_k(double d, double sigma_zeta, double sigma_eta) {
  if (sigma_zeta <= 0.0)
    throw numerical_error("optimal_k: open loop is optimal when sigma_zeta = 0");
  if (sigma_eta == 0.0) return 0.0;
  const double sz2 = sigma_zeta * sigma_zeta, se2 = sigma_eta * sigma_eta;
  return (d * se2 + sigma_eta * std::sqrt(d * d * se2 + sz2)) / sz2;
}

/// True when leaky integral control beats the open-loop H2 norm for every
/// tau > 0: the gain condition k/d > (sigma_eta/sigma_zeta)^2.
inline bool improves_open_loop(double d, double k, double sigma_zeta, double sigma_eta) {
  require(sigma_zeta > 0.0, "improves_open_loop: sigma_zeta must be positive");
  return k / d > (sigma_eta / sigma_zeta) * (sigma_eta / sigma_zeta);
}

/// Ascending eigenvalues of the network Laplacian (lambda_1 = 0).
inline Vec laplacian_eigenvalues(const NetworkModel& net) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(net.laplacian());
  return eig.eigenvalues();
}

/// Per-mode and total report of a homogeneous H2 evaluation.
struct H2Report {
  double total = 0.0;
  std::vector<double> per_mode;
  std::string method;  // "closed-form" or "lyapunov-numeric"
  double m = 0, d = 0, tau = 0, k = 0, sigma_zeta = 0, sigma_eta = 0;
  Vec lambdas;
};

inline H2Report h2_report_closed_form(double m, double d, double tau, double k,
                                      double sigma_zeta, double sigma_eta, const Vec& lambdas) {
  H2Report rep;
  rep.method = "closed-form";
  rep.m = m;
  rep.d = d;
  rep.tau = tau;
  rep.k = k;
  rep.sigma_zeta = sigma_zeta;
  rep.sigma_eta = sigma_eta;
  rep.lambdas = lambdas;
  for (int i = 0; i < lambdas.size(); ++i)
    rep.per_mode.push_back(h2_per_mode(m, d, tau, k, lambdas(i), sigma_zeta, sigma_eta));
  rep.total = h2_closed_form(m, d, tau, k, sigma_zeta, sigma_eta, lambdas).total;
  return rep;
}

}  // namespace gridfreq
