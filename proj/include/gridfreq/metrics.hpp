#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "gridfreq/steady_state.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

struct ConvergenceResult {
  double time = 0.0;
  bool converged = false;
  bool absolute_band = false;  // fallback banding used (degenerate steady state)
};

/// First sample time after which the error signal stays within
/// [0.95, 1.05] x steady_value. Rejects steady_value = 0, where the relative
/// band degenerates; use convergence_time_absolute for that case.
inline ConvergenceResult convergence_time(const std::vector<double>& times, const Vec& error,
                                          double steady_value) {
  require(static_cast<int>(times.size()) == error.size(), "convergence_time: size mismatch");
  require(!times.empty(), "convergence_time: empty series");
  if (steady_value == 0.0)
    throw validation_error("convergence_time: steady value of zero degenerates the band");
  const double half = 0.05 * std::abs(steady_value);
  int last_violation = -1;
  for (int i = 0; i < error.size(); ++i)
    if (std::abs(error(i) - steady_value) > half) last_violation = i;
  ConvergenceResult r;
  if (last_violation + 1 >= error.size()) {
    r.converged = false;
    r.time = times.back();
  } else {
    r.converged = true;
    r.time = last_violation < 0 ? times.front() : times[last_violation + 1];
  }
  return r;
}

/// Fallback banding against an absolute half width (used when the steady
/// error is zero, e.g. pure integral control): |error| <= half_band.
inline ConvergenceResult convergence_time_absolute(const std::vector<double>& times,
                                                   const Vec& error, double half_band) {
  require(static_cast<int>(times.size()) == error.size(), "convergence_time: size mismatch");
  require(half_band > 0.0, "convergence_time: band must be positive");
  int last_violation = -1;
  for (int i = 0; i < error.size(); ++i)
    if (std::abs(error(i)) > half_band) last_violation = i;
  ConvergenceResult r;
  r.absolute_band = true;
  if (last_violation + 1 >= error.size()) {
    r.converged = false;
    r.time = times.back();
  } else {
    r.converged = true;
    r.time = last_violation < 0 ? times.front() : times[last_violation + 1];
  }
  return r;
}

/// Root-mean-square deviation of the series from `reference` over the time
/// window [w0, w1].
inline double rmse(const std::vector<double>& times, const Vec& series, double reference,
                   double w0, double w1) {
  require(static_cast<int>(times.size()) == series.size(), "rmse: size mismatch");
  require(w1 > w0, "rmse: empty window");
  double acc = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] >= w0 - 1e-12 && times[i] <= w1 + 1e-12) {
      const double d = series(static_cast<int>(i)) - reference;
      acc += d * d;
      ++count;
    }
  require(count > 0, "rmse: window contains no samples");
  return std::sqrt(acc / count);
}

struct MetricsReport {
  double steady_state_error = 0.0;
  ConvergenceResult convergence;
  double rmse_value = 0.0;
  double window_begin = 0.0, window_end = 0.0;
  int n_realizations = 0;
};

struct GainTuning {
  Vec gain_k;      // K_i; meaningful only when zero_bound is false
  Vec dc_gain;     // K_i^{-1}
  double sum_dc_gain = 0.0;
  bool zero_bound = false;  // damping alone meets the band; no control needed
};

/// Gains meeting a frequency band of width eps under the worst-case
/// imbalance: the total DC gain sits exactly at the banded-restoration lower
/// bound and is apportioned inversely to the cost ratios, so that
/// K_i is proportional to a_i.
inline GainTuning tune_gains(const Vec& cost_ratios, double eps, double worst_sum_p_star,
                             double sum_damping) {
  require(cost_ratios.size() >= 1, "tune_gains: empty cost vector");
  require((cost_ratios.array() > 0.0).all(), "tune_gains: ratios must be positive");
  GainTuning g;
  g.sum_dc_gain = min_dc_gain_for_band(worst_sum_p_star, eps, sum_damping);
  const int n = static_cast<int>(cost_ratios.size());
  g.dc_gain = Vec::Zero(n);
  g.gain_k = Vec::Zero(n);
  if (g.sum_dc_gain <= 0.0) {
    g.zero_bound = true;
    return g;
  }
  const double inv_sum = cost_ratios.cwiseInverse().sum();
  for (int i = 0; i < n; ++i) {
    g.dc_gain(i) = g.sum_dc_gain / (cost_ratios(i) * inv_sum);
    g.gain_k(i) = 1.0 / g.dc_gain(i);
  }
  return g;
}

struct TauSample {
  double tau = 0.0;
  double t_conv = 0.0;
  double f_rmse = 0.0;
};

struct TuningFit {
  double a = 0, b = 0;            // T_conv(tau) ~ a tau + b
  double c = 0, d = 0, alpha = 0;  // f_RMSE(tau) ~ c exp(-alpha tau) + d
  double gamma = 0;
  std::optional<double> tau_star;  // absent when the fitted shape is invalid
};

namespace detail {

/// Least-squares (c, d) for fixed alpha; returns the residual sum of squares.
inline double exp_fit_given_alpha(const std::vector<TauSample>& s, double alpha, double& c,
                                  double& d) {
  const int n = static_cast<int>(s.size());
  double se = 0, see = 0, sf = 0, sef = 0;
  for (const TauSample& p : s) {
    const double e = std::exp(-alpha * p.tau);
    se += e;
    see += e * e;
    sf += p.f_rmse;
    sef += e * p.f_rmse;
  }
  const double det = see * n - se * se;
  if (std::abs(det) < 1e-300) {
    c = 0;
    d = sf / n;
  } else {
    c = (sef * n - se * sf) / det;
    d = (see * sf - se * sef) / det;
  }
  double rss = 0;
  for (const TauSample& p : s) {
    const double r = c * std::exp(-alpha * p.tau) + d - p.f_rmse;
    rss += r * r;
  }
  return rss;
}

}  // namespace detail

/// Fits the convergence-time line and the RMSE exponential over tau samples,
/// then selects tau* = max{(1/alpha) log(alpha c / (gamma a)), 0}, the
/// minimizer of gamma T_conv(tau) + f_RMSE(tau).
///
/// The exponential decay rate is initialized by tail-offset log regression
/// and refined by a variable-projection search (c and d eliminated in closed
/// form at each candidate alpha).
inline TuningFit fit_and_select_tau(const std::vector<TauSample>& samples, double gamma) {
  require(samples.size() >= 4, "fit_and_select_tau: need at least 4 samples");
  require(gamma > 0.0, "fit_and_select_tau: gamma must be positive");
  double tau_min = std::numeric_limits<double>::max(), tau_max = 0.0;
  for (const TauSample& s : samples) {
    require(s.tau > 0.0, "fit_and_select_tau: tau samples must be positive");
    tau_min = std::min(tau_min, s.tau);
    tau_max = std::max(tau_max, s.tau);
  }
  require(tau_max >= 10.0 * tau_min, "fit_and_select_tau: samples must span a decade");

  TuningFit fit;
  fit.gamma = gamma;

  {  // Linear least squares for T_conv.
    const int n = static_cast<int>(samples.size());
    double st = 0, stt = 0, sy = 0, sty = 0;
    for (const TauSample& s : samples) {
      st += s.tau;
      stt += s.tau * s.tau;
      sy += s.t_conv;
      sty += s.tau * s.t_conv;
    }
    const double det = stt * n - st * st;
    fit.a = (sty * n - st * sy) / det;
    fit.b = (stt * sy - st * sty) / det;
  }

  {  // Exponential fit by variable projection over alpha.
    double best_alpha = 1.0 / tau_max, best_c = 0, best_d = 0;
    double best_rss = std::numeric_limits<double>::max();
    // Tail-mean offset, then log-linear slope as the initial candidate.
    std::vector<TauSample> sorted = samples;
    std::sort(sorted.begin(), sorted.end(),
              [](const TauSample& x, const TauSample& y) { return x.tau < y.tau; });
    const double d0 = sorted.back().f_rmse;
    double sl_t = 0, sl_tt = 0, sl_y = 0, sl_ty = 0;
    int nl = 0;
    for (const TauSample& s : sorted)
      if (s.f_rmse - d0 > 1e-12) {
        const double ly = std::log(s.f_rmse - d0);
        sl_t += s.tau;
        sl_tt += s.tau * s.tau;
        sl_y += ly;
        sl_ty += s.tau * ly;
        ++nl;
      }
    if (nl >= 2) {
      const double det = sl_tt * nl - sl_t * sl_t;
      if (std::abs(det) > 1e-300) {
        const double slope = (sl_ty * nl - sl_t * sl_y) / det;
        if (slope < 0) {
          double c, d;
          const double rss = detail::exp_fit_given_alpha(samples, -slope, c, d);
          best_alpha = -slope;
          best_c = c;
          best_d = d;
          best_rss = rss;
        }
      }
    }
    // Log-spaced sweep, then golden-section refinement.
    const double a_lo = 1e-3 / tau_max, a_hi = 1e3 / tau_min;
    const int grid = 240;
    for (int i = 0; i <= grid; ++i) {
      const double alpha = a_lo * std::pow(a_hi / a_lo, static_cast<double>(i) / grid);
      double c, d;
      const double rss = detail::exp_fit_given_alpha(samples, alpha, c, d);
      if (rss < best_rss) {
        best_rss = rss;
        best_alpha = alpha;
        best_c = c;
        best_d = d;
      }
    }
    double lo = best_alpha / 3.0, hi = best_alpha * 3.0;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double c1, d1, c2, d2;
    double f1 = detail::exp_fit_given_alpha(samples, x1, c1, d1);
    double f2 = detail::exp_fit_given_alpha(samples, x2, c2, d2);
    for (int it = 0; it < 120; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = detail::exp_fit_given_alpha(samples, x1, c1, d1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = detail::exp_fit_given_alpha(samples, x2, c2, d2);
      }
    }
    const double alpha = 0.5 * (lo + hi);
    double c, d;
    const double rss = detail::exp_fit_given_alpha(samples, alpha, c, d);
    if (rss <= best_rss) {
      best_alpha = alpha;
      best_c = c;
      best_d = d;
    }
    fit.alpha = best_alpha;
    fit.c = best_c;
    fit.d = best_d;
  }

  if (fit.a > 0.0 && fit.c > 0.0 && fit.alpha > 0.0) {
    const double arg = fit.alpha * fit.c / (gamma * fit.a);
    fit.tau_star = std::max(std::log(arg) / fit.alpha, 0.0);
  }
  return fit;
}

/// Spearman rank correlation between two equally long sequences.
inline double spearman(const Vec& x, const Vec& y) {
  require(x.size() == y.size() && x.size() >= 2, "spearman: need two equal series");
  const int n = static_cast<int>(x.size());
  auto ranks = [n](const Vec& v) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a) < v(b); });
    Vec r(n);
    for (int i = 0; i < n; ++i) r(idx[i]) = i;
    return r;
  };
  const Vec rx = ranks(x), ry = ranks(y);
  const double mx = rx.mean(), my = ry.mean();
  const double num = ((rx.array() - mx) * (ry.array() - my)).sum();
  const double den = std::sqrt(((rx.array() - mx).square().sum()) *
                               ((ry.array() - my).square().sum()));
  return den == 0.0 ? 0.0 : num / den;
}

}  // namespace gridfreq
