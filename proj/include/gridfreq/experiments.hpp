#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gridfreq/csv.hpp"
#include "gridfreq/dynamics.hpp"
#include "gridfreq/linear_analysis.hpp"
#include "gridfreq/lyapunov_cert.hpp"
#include "gridfreq/metrics.hpp"
#include "gridfreq/scenario.hpp"
#include "gridfreq/steady_state.hpp"
#include "gridfreq/svg.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

/// Pre-event operating point for a controller: the synchronous equilibrium
/// when the controller pins one down (droop/leaky), otherwise the open-loop
/// power-flow solution with controllers at rest.
inline ClosedLoopState initial_state(const NetworkModel& net, const MachineParams& params,
                                     const ControllerSpec& ctrl, InitialCondition init,
                                     double rho = 0.1) {
  if (init == InitialCondition::flat) return flat_state(net, params, ctrl);
  SolveOptions so;
  so.security_margin = rho;
  ClosedLoopState s;
  if (ctrl.kind == ControllerKind::leaky_integral || ctrl.kind == ControllerKind::droop) {
    const SynchronousSolution sol = solve_synchronous(net, params, ctrl, so);
    s.angles = sol.theta_star;
    s.freqs = Vec::Constant(net.n_buses(), sol.omega_sync);
    s.ctrl_state = ctrl.kind == ControllerKind::droop ? Vec(0) : sol.p_star;
  } else {
    const SynchronousSolution sol = solve_synchronous_open(net, params, so);
    s.angles = sol.theta_star;
    s.freqs = Vec::Constant(net.n_buses(), sol.omega_sync);
    s.ctrl_state = Vec::Zero(ctrl.state_dim());
  }
  return s;
}

/// Writes a trajectory as `t,bus,theta,omega,p,u` rows (1-based bus ids;
/// p reported as zero at buses without controller state).
inline void write_trajectory_csv(const Trajectory& traj, const ControllerSpec& ctrl,
                                 const std::string& path) {
  CsvWriter csv({"t", "bus", "theta", "omega", "p", "u"});
  const int n = static_cast<int>(traj.freqs.cols());
  std::vector<int> local(n, -1);
  if (ctrl.kind != ControllerKind::droop)
    for (int i = 0; i < ctrl.n_actuated(); ++i) local[ctrl.actuated[i]] = i;
  for (int k = 0; k < traj.samples(); ++k)
    for (int b = 0; b < n; ++b) {
      csv.field(traj.times[k])
          .field(b + 1)
          .field(traj.angles(k, b))
          .field(traj.freqs(k, b))
          .field(local[b] >= 0 ? traj.ctrl(k, local[b]) : 0.0)
          .field(traj.inputs(k, b));
      csv.end_row();
    }
  csv.write(path);
}

/// Performance metrics of one controller configuration on a scenario:
/// steady-state error and convergence time from a noise-free run long
/// enough to settle, RMSE of the noisy runs against the noise-free
/// trajectory over the window, all at `report_bus`.
struct SweepMetrics {
  double steady_error = 0.0;  // per unit
  ConvergenceResult convergence;
  double rmse_avg = 0.0;  // per unit
  int realizations = 0;
};

inline SweepMetrics evaluate_metrics(const ScenarioSpec& sc, const ControllerSpec& ctrl,
                                     int n_realizations, double window_begin, double window_end,
                                     double nominal_horizon = 0.0) {
  const NetworkModel net = sc.data.build_network();
  const MachineParams params = sc.data.build_params();
  IntegrateOptions opts;
  opts.dt = sc.dt;
  opts.record_dt = sc.record_dt;

  const ClosedLoopState x0 = initial_state(net, params, ctrl, sc.initial);
  const NoiseSpec quiet = NoiseSpec::none(net.n_buses());
  const double settle_horizon = std::max(nominal_horizon, sc.horizon);
  IntegrateOptions settle_opts = opts;
  settle_opts.record_dt = std::max(opts.record_dt, 0.05);
  const Trajectory settled =
      integrate(net, params, ctrl, quiet, sc.events, x0, settle_horizon, settle_opts);

  SweepMetrics out;
  const int bus = sc.report_bus;
  out.steady_error = settled.freqs(settled.samples() - 1, bus);

  // Convergence is measured on the post-event slice of the error signal.
  double event_time = 0.0;
  for (const Event& e : sc.events.events) event_time = std::max(event_time, e.time);
  std::vector<double> times;
  std::vector<double> err;
  for (int k = 0; k < settled.samples(); ++k)
    if (settled.times[k] >= event_time) {
      times.push_back(settled.times[k] - event_time);
      err.push_back(settled.freqs(k, bus));
    }
  Vec err_v = Eigen::Map<Vec>(err.data(), static_cast<int>(err.size()));
  if (std::abs(out.steady_error) > 1e-9) {
    out.convergence = convergence_time(times, err_v, out.steady_error);
  } else {
    const double peak = err_v.cwiseAbs().maxCoeff();
    out.convergence = convergence_time_absolute(times, err_v, std::max(0.05 * peak, 1e-12));
  }

  if (n_realizations > 0) {
    // Reference for the noise response: the noise-free run on the same grid.
    const Trajectory nominal =
        integrate(net, params, ctrl, quiet, sc.events, x0, sc.horizon, opts);
    std::vector<double> ref_t;
    std::vector<double> ref_f;
    for (int k = 0; k < nominal.samples(); ++k)
      if (nominal.times[k] >= window_begin - 1e-12 && nominal.times[k] <= window_end + 1e-12) {
        ref_t.push_back(nominal.times[k]);
        ref_f.push_back(nominal.freqs(k, bus));
      }
    require(!ref_t.empty(), "evaluate_metrics: window outside the horizon");

    std::vector<double> rmses(n_realizations, 0.0);
    NoiseSpec noisy = sc.noise;
    noisy.zero_mean = true;
    parallel_runs(n_realizations, [&](int r) {
      NoiseSpec local = noisy;
      local.seed = sc.noise.seed + 1000003ULL * static_cast<std::uint64_t>(r + 1);
      const Trajectory t = integrate(net, params, ctrl, local, sc.events, x0, sc.horizon, opts);
      double acc = 0.0;
      int count = 0;
      std::size_t j = 0;
      for (int k = 0; k < t.samples(); ++k) {
        if (t.times[k] < window_begin - 1e-12 || t.times[k] > window_end + 1e-12) continue;
        while (j + 1 < ref_t.size() && std::abs(ref_t[j] - t.times[k]) > 1e-9) ++j;
        const double d = t.freqs(k, bus) - ref_f[j];
        acc += d * d;
        ++count;
      }
      rmses[r] = std::sqrt(acc / count);
    });
    for (double v : rmses) out.rmse_avg += v;
    out.rmse_avg /= n_realizations;
    out.realizations = n_realizations;
  }
  return out;
}

namespace detail {

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw validation_error("cannot create output directory " + dir);
}

}  // namespace detail

/// simulate: one run per configured controller; per-controller trajectory
/// CSV, frequency and controller-injection plots, and a metrics summary.
inline std::vector<std::string> run_simulate(const ScenarioSpec& sc, const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  const NetworkModel net = sc.data.build_network();
  const MachineParams params = sc.data.build_params();
  std::vector<std::string> files;

  LinePlot freq_all("Frequency at bus " + std::to_string(sc.report_bus + 1), "time [s]",
                    "frequency [Hz]");
  CsvWriter metrics({"controller", "steady_error_hz", "t_conv_s", "converged"});

  for (const NamedController& nc : sc.controllers) {
    IntegrateOptions opts;
    opts.dt = sc.dt;
    opts.record_dt = sc.record_dt;
    const ClosedLoopState x0 = initial_state(net, params, nc.spec, sc.initial);
    const Trajectory traj =
        integrate(net, params, nc.spec, sc.noise, sc.events, x0, sc.horizon, opts);

    const std::string traj_file = detail::join_path(out_dir, sc.name + "_" + nc.name + "_traj.csv");
    write_trajectory_csv(traj, nc.spec, traj_file);
    files.push_back(traj_file);

    std::vector<double> ts(traj.times.begin(), traj.times.end());
    std::vector<double> f_hz;
    for (int k = 0; k < traj.samples(); ++k)
      f_hz.push_back(traj.freqs(k, sc.report_bus) * sc.base_hz);
    freq_all.add_series(nc.name, ts, f_hz);

    LinePlot freq_one("Frequency at bus " + std::to_string(sc.report_bus + 1) + " (" + nc.name +
                          ")",
                      "time [s]", "frequency [Hz]");
    freq_one.add_series(nc.name, ts, f_hz);
    const std::string freq_file = detail::join_path(out_dir, sc.name + "_" + nc.name + "_freq.svg");
    freq_one.write(freq_file);
    files.push_back(freq_file);

    if (nc.spec.kind != ControllerKind::droop) {
      LinePlot power("Controller injections (" + nc.name + ")", "time [s]", "u [pu]");
      for (int i = 0; i < nc.spec.n_actuated(); ++i) {
        std::vector<double> u;
        for (int k = 0; k < traj.samples(); ++k)
          u.push_back(traj.inputs(k, nc.spec.actuated[i]));
        power.add_series("bus " + std::to_string(nc.spec.actuated[i] + 1), ts, u);
      }
      const std::string pw_file =
          detail::join_path(out_dir, sc.name + "_" + nc.name + "_power.svg");
      power.write(pw_file);
      files.push_back(pw_file);
    }

    const SweepMetrics m = evaluate_metrics(sc, nc.spec, 0, 0.0, sc.horizon);
    metrics.field(nc.name)
        .field(m.steady_error * sc.base_hz)
        .field(m.convergence.time)
        .field(m.convergence.converged ? 1 : 0);
    metrics.end_row();
  }

  const std::string all_file = detail::join_path(out_dir, sc.name + "_freq_all.svg");
  freq_all.write(all_file);
  files.push_back(all_file);
  const std::string metrics_file = detail::join_path(out_dir, sc.name + "_metrics.csv");
  metrics.write(metrics_file);
  files.push_back(metrics_file);
  return files;
}

/// steady: synchronous solution and dispatch table per droop/leaky
/// controller: `bus,u_star,marginal_cost,theta_star` plus a summary row of
/// the synchronous frequency.
inline std::vector<std::string> run_steady(const ScenarioSpec& sc, const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  const NetworkModel net = sc.data.build_network();
  MachineParams params = sc.data.build_params();
  // Steady state of interest is the post-event one.
  params.injection = sc.events.injection_at(params.injection, sc.horizon + 1.0);
  std::vector<std::string> files;

  for (const NamedController& nc : sc.controllers) {
    if (nc.spec.kind != ControllerKind::leaky_integral && nc.spec.kind != ControllerKind::droop)
      continue;
    SolveOptions so;
    so.security_margin = sc.certify_rho;
    const SynchronousSolution sol = solve_synchronous(net, params, nc.spec, so);
    CsvWriter csv({"bus", "u_star", "marginal_cost", "theta_star"});
    std::vector<int> local(net.n_buses(), -1);
    for (int i = 0; i < nc.spec.n_actuated(); ++i) local[nc.spec.actuated[i]] = i;
    for (int b = 0; b < net.n_buses(); ++b) {
      double marginal = 0.0;
      if (local[b] >= 0 && nc.spec.kind == ControllerKind::leaky_integral)
        marginal = nc.spec.leak_gain(local[b]) * sol.u_star(b);
      csv.field(b + 1).field(sol.u_star(b)).field(marginal).field(sol.theta_star(b));
      csv.end_row();
    }
    const std::string path = detail::join_path(out_dir, sc.name + "_" + nc.name + "_steady.csv");
    csv.write(path);
    files.push_back(path);

    CsvWriter summary({"controller", "omega_sync_pu", "omega_sync_hz", "residual", "secure"});
    summary.field(nc.name)
        .field(sol.omega_sync)
        .field(sol.omega_sync * sc.base_hz)
        .field(sol.residual)
        .field(sol.secure ? 1 : 0);
    summary.end_row();
    const std::string sum_path =
        detail::join_path(out_dir, sc.name + "_" + nc.name + "_steady_summary.csv");
    summary.write(sum_path);
    files.push_back(sum_path);
  }
  return files;
}

/// h2sweep: closed-form and Lyapunov-numeric squared H2 norms over a gain
/// grid, on the homogeneous system defined by the scenario's h2 block and
/// the network Laplacian spectrum.
inline std::vector<std::string> run_h2sweep(const ScenarioSpec& sc, const std::string& out_dir,
                                            const std::vector<double>& k_values,
                                            const std::vector<double>& tau_values) {
  require(sc.h2.has_value(), "h2sweep: scenario has no h2 block");
  detail::ensure_dir(out_dir);
  const auto& h = *sc.h2;
  const NetworkModel net = sc.data.build_network();
  const Vec lambdas = laplacian_eigenvalues(net);
  const int n = net.n_buses();

  std::vector<std::pair<double, double>> grid;
  for (double k : (k_values.empty() ? std::vector<double>{h.k} : k_values))
    for (double tau : (tau_values.empty() ? std::vector<double>{h.tau} : tau_values))
      grid.emplace_back(k, tau);

  MachineParams hp;
  hp.inertia = Vec::Constant(n, h.m);
  hp.damping = Vec::Constant(n, h.d);
  hp.injection = Vec::Zero(n);

  CsvWriter csv({"k", "tau", "h2_total", "h2_power_channel", "h2_noise_channel", "method"});
  for (const auto& [k, tau] : grid) {
    const H2Result cf = h2_closed_form(h.m, h.d, tau, k, h.sigma_zeta, h.sigma_eta, lambdas);
    csv.field(k).field(tau).field(cf.total).field(cf.power_channel).field(cf.noise_channel);
    csv.field(std::string("closed-form"));
    csv.end_row();
    const LinearSystem sys =
        linearize(net, hp, Vec::Constant(n, k), Vec::Constant(n, tau),
                  Vec::Constant(n, h.sigma_zeta), Vec::Constant(n, h.sigma_eta), Vec::Zero(n));
    const H2Result num = h2_numeric(sys);
    csv.field(k).field(tau).field(num.total).field(num.power_channel).field(num.noise_channel);
    csv.field(std::string("lyapunov-numeric"));
    csv.end_row();
  }
  const std::string path = detail::join_path(out_dir, sc.name + "_h2sweep.csv");
  csv.write(path);

  LinePlot plot("Squared H2 norm", tau_values.empty() ? "k" : "tau", "|G|^2");
  std::vector<double> xs, ys;
  for (const auto& [k, tau] : grid) {
    xs.push_back(tau_values.empty() ? k : tau);
    ys.push_back(h2_closed_form(h.m, h.d, tau, k, h.sigma_zeta, h.sigma_eta, lambdas).total);
  }
  plot.add_series("closed-form", xs, ys);
  const std::string svg = detail::join_path(out_dir, sc.name + "_h2sweep.svg");
  plot.write(svg);
  return {path, svg};
}

/// certify: certificate constants for the first leaky controller.
inline std::vector<std::string> run_certify(const ScenarioSpec& sc, const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  const NetworkModel net = sc.data.build_network();
  const MachineParams params = sc.data.build_params();
  const NamedController* leaky = nullptr;
  for (const auto& nc : sc.controllers)
    if (nc.spec.kind == ControllerKind::leaky_integral) {
      leaky = &nc;
      break;
    }
  require(leaky != nullptr, "certify: scenario has no leaky controller");

  CertificateParams cp;
  cp.rho = sc.certify_rho;
  const Certificate cert = certify(net, params, leaky->spec, cp);

  CsvWriter csv({"constant", "value"});
  auto put = [&](const char* name, double v) {
    csv.field(std::string(name)).field(v);
    csv.end_row();
  };
  put("rho", cert.rho);
  put("epsilon", cert.epsilon);
  put("mu", cert.mu);
  put("beta1", cert.beta1);
  put("beta2", cert.beta2);
  put("beta3", cert.beta3);
  put("beta3_prime", cert.beta3_prime);
  put("beta4", cert.beta4);
  put("beta4_hat", cert.beta4_hat);
  put("beta4_interval", cert.beta4_interval);
  put("alpha", cert.alpha);
  put("alpha_hat", cert.alpha_hat);
  put("lambda", cert.lambda);
  put("gamma", cert.gamma);
  put("xi", cert.xi);
  put("c", cert.c);
  put("eta_bar", cert.eta_bar);
  put("alpha1", cert.alphas.alpha1);
  put("alpha2", cert.alphas.alpha2);
  put("alpha3", cert.alphas.alpha3);
  put("alpha4", cert.alphas.alpha4);
  put("omega_sync", cert.equilibrium.omega_sync);
  const std::string path = detail::join_path(out_dir, sc.name + "_certificate.csv");
  csv.write(path);
  return {path};
}

/// tune: DC-gain arithmetic from the tune block, metric sweeps over the k
/// and tau grids (Monte-Carlo RMSE), regression fits and the selected tau*.
inline std::vector<std::string> run_tune(const ScenarioSpec& sc, const std::string& out_dir) {
  require(sc.tune.has_value(), "tune: scenario has no tune block");
  detail::ensure_dir(out_dir);
  const auto& tb = *sc.tune;
  std::vector<std::string> files;

  const NamedController* leaky = nullptr;
  for (const auto& nc : sc.controllers)
    if (nc.spec.kind == ControllerKind::leaky_integral) leaky = &nc;
  require(leaky != nullptr, "tune: scenario has no leaky controller");

  {  // Gain selection arithmetic.
    const GainTuning g = tune_gains(tb.cost_ratios, tb.eps, tb.worst_sum_p_star, tb.sum_damping);
    CsvWriter csv({"unit", "cost_ratio", "dc_gain", "gain_k"});
    for (int i = 0; i < tb.cost_ratios.size(); ++i) {
      csv.field(i + 1)
          .field(tb.cost_ratios(i))
          .field(g.dc_gain(i))
          .field(g.zero_bound ? 0.0 : g.gain_k(i));
      csv.end_row();
    }
    const std::string path = detail::join_path(out_dir, sc.name + "_gain_selection.csv");
    csv.write(path);
    files.push_back(path);
  }

  auto sweep = [&](const std::vector<double>& grid, bool vary_k, const std::string& label) {
    CsvWriter csv({"k_or_tau", "steady_error_hz", "t_conv_s", "rmse_hz"});
    std::vector<TauSample> samples;
    for (double v : grid) {
      ControllerSpec spec = leaky->spec;
      if (vary_k) {
        // Scale the gain profile so min(K) = v, preserving sharing ratios.
        const double base = spec.leak_gain.minCoeff();
        spec.leak_gain *= v / base;
      } else {
        spec.time_constant.setConstant(v);
      }
      const SweepMetrics m = evaluate_metrics(sc, spec, tb.realizations, tb.window_begin,
                                              tb.window_end, tb.nominal_horizon);
      csv.field(v)
          .field(m.steady_error * sc.base_hz)
          .field(m.convergence.time)
          .field(m.rmse_avg * sc.base_hz);
      csv.end_row();
      if (!vary_k) samples.push_back({v, m.convergence.time, m.rmse_avg * sc.base_hz});
    }
    const std::string path = detail::join_path(out_dir, sc.name + "_sweep_" + label + ".csv");
    csv.write(path);
    files.push_back(path);
    return samples;
  };

  if (!tb.k_grid.empty()) sweep(tb.k_grid, true, "k");
  if (!tb.tau_grid.empty()) {
    const std::vector<TauSample> samples = sweep(tb.tau_grid, false, "tau");
    if (samples.size() >= 4) {
      const TuningFit fit = fit_and_select_tau(samples, tb.gamma);
      CsvWriter csv({"a", "b", "c", "d", "alpha_fit", "gamma", "tau_star"});
      csv.field(fit.a).field(fit.b).field(fit.c).field(fit.d).field(fit.alpha).field(fit.gamma);
      csv.field(fit.tau_star ? *fit.tau_star : std::nan(""));
      csv.end_row();
      const std::string path = detail::join_path(out_dir, sc.name + "_tau_fit.csv");
      csv.write(path);
      files.push_back(path);
    }
  }
  return files;
}

}  // namespace gridfreq
