#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "gridfreq/controllers.hpp"
#include "gridfreq/network.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

/// Per-bus machine data. Buses with zero inertia are treated as first-order
/// (frequency-algebraic) load buses; they still need positive damping.
struct MachineParams {
  Vec inertia;    // M_i >= 0
  Vec damping;    // D_i > 0
  Vec injection;  // P*_i, net power injection

  void validate(int n_buses) const {
    require(inertia.size() == n_buses && damping.size() == n_buses &&
                injection.size() == n_buses,
            "machine params: size mismatch");
    require((inertia.array() >= 0.0).all(), "machine params: inertia must be nonnegative");
    require((damping.array() > 0.0).all(), "machine params: damping must be positive");
  }

  bool all_inertial() const { return (inertia.array() > 0.0).all(); }
};

enum class Frame { absolute, center_of_inertia };

/// Snapshot of the closed loop: angles, frequencies (algebraic entries
/// filled in), controller state, and the coordinate frame of the angles.
struct ClosedLoopState {
  Vec angles;
  Vec freqs;
  Vec ctrl_state;
  Frame frame = Frame::absolute;
  double time = 0.0;
};

/// Step change of the net injection at one bus.
struct Event {
  double time = 0.0;
  int bus = 0;
  double delta_p = 0.0;
};

struct EventSchedule {
  std::vector<Event> events;

  void validate(int n_buses) const {
    for (std::size_t i = 0; i < events.size(); ++i) {
      require(events[i].bus >= 0 && events[i].bus < n_buses, "events: bus out of range");
      if (i > 0) require(events[i].time >= events[i - 1].time, "events: times must not decrease");
    }
  }

  /// Injection vector with all events at time <= t applied.
  Vec injection_at(const Vec& base, double t) const {
    Vec p = base;
    for (const Event& e : events)
      if (e.time <= t) p(e.bus) += e.delta_p;
    return p;
  }
};

namespace detail {

/// Uniform double in [0,1) from a SplitMix64 stream. Hand-rolled so that
/// trajectories are bit-identical across standard libraries.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::uint64_t state_;
};

}  // namespace detail

/// Closed-loop vector field with the state packed as
///   x = [theta(n); omega at inertial buses; p(state_dim)].
/// Zero-inertia buses satisfy D_i w_i = P*_i - grad U_i + u_i algebraically.
///
/// Instances carry integration workspace: share the NetworkModel across
/// threads, not the ClosedLoopOde.
class ClosedLoopOde {
 public:
  ClosedLoopOde(const NetworkModel& net, const MachineParams& params, const ControllerSpec& ctrl,
                Frame frame = Frame::absolute)
      : net_(net), params_(params), ctrl_(ctrl), frame_(frame) {
    params_.validate(net.n_buses());
    ctrl_.validate(net.n_buses());
    const int n = net.n_buses();
    for (int i = 0; i < n; ++i)
      if (params_.inertia(i) > 0.0) inertial_.push_back(i);
    droop_shift_ = Vec::Zero(n);
    if (ctrl_.kind == ControllerKind::droop)
      for (int i = 0; i < ctrl_.n_actuated(); ++i)
        droop_shift_(ctrl_.actuated[i]) = ctrl_.droop_inverse_gain(i);
    local_idx_.assign(n, -1);
    if (ctrl_.kind != ControllerKind::droop)
      for (int i = 0; i < ctrl_.n_actuated(); ++i) local_idx_[ctrl_.actuated[i]] = i;
    for (int i = 0; i < n; ++i)
      require(params_.inertia(i) > 0.0 || params_.damping(i) > 0.0,
              "dynamics: zero damping at a zero-inertia bus");
    grad_.resize(n);
    omega_.resize(n);
    edge_scratch_.resize(net.n_lines());
    const int na = ctrl_.n_actuated();
    ap_.resize(na);
    lap_.resize(na);
  }

  int n_buses() const { return net_.n_buses(); }
  int n_inertial() const { return static_cast<int>(inertial_.size()); }
  int state_size() const { return n_buses() + n_inertial() + ctrl_.state_dim(); }
  const std::vector<int>& inertial_buses() const { return inertial_; }
  Frame frame() const { return frame_; }
  const ControllerSpec& controller() const { return ctrl_; }

  /// Full frequency vector: dynamic entries copied from x, algebraic entries
  /// solved from the load-bus power balance.
  Vec full_freq(const Vec& x, const Vec& injection) const {
    net_.gradient_into(x.data(), grad_.data(), edge_scratch_);
    fill_freq(x, injection);
    return omega_;
  }

  Vec ctrl_state(const Vec& x) const { return x.tail(ctrl_.state_dim()); }

  /// dx/dt written into dx without allocating. `eta` is the measurement
  /// disturbance held constant over the step; `injection` already includes
  /// events.
  void rhs_into(const Vec& x, const Vec& eta, const Vec& injection, Vec& dx) const {
    const int n = n_buses();
    net_.gradient_into(x.data(), grad_.data(), edge_scratch_);
    fill_freq(x, injection);
    const double* p = x.data() + n + n_inertial();

    if (frame_ == Frame::center_of_inertia) {
      const double mean = omega_.mean();
      for (int i = 0; i < n; ++i) dx(i) = omega_(i) - mean;
    } else {
      dx.head(n) = omega_;
    }

    int iw = 0;
    for (int i = 0; i < n; ++i) {
      if (!(params_.inertia(i) > 0.0)) continue;
      double u = 0.0;
      if (ctrl_.kind == ControllerKind::droop) {
        u = -droop_shift_(i) * (omega_(i) + eta(i));
      } else if (local_idx_[i] >= 0) {
        u = -p[local_idx_[i]];
      }
      dx(n + iw++) = (-params_.damping(i) * omega_(i) + injection(i) - grad_(i) + u) /
                     params_.inertia(i);
    }

    const int na = ctrl_.n_actuated();
    double* dp = dx.data() + n + n_inertial();
    switch (ctrl_.kind) {
      case ControllerKind::droop:
        break;
      case ControllerKind::pure_integral:
        for (int i = 0; i < na; ++i) {
          const int b = ctrl_.actuated[i];
          dp[i] = (omega_(b) + eta(b)) / ctrl_.time_constant(i);
        }
        break;
      case ControllerKind::leaky_integral:
        for (int i = 0; i < na; ++i) {
          const int b = ctrl_.actuated[i];
          dp[i] = (omega_(b) + eta(b) - ctrl_.leak_gain(i) * p[i]) / ctrl_.time_constant(i);
        }
        break;
      case ControllerKind::dai:
        for (int i = 0; i < na; ++i) ap_(i) = ctrl_.cost_coeff(i) * p[i];
        lap_.noalias() = ctrl_.comm_laplacian * ap_;
        for (int i = 0; i < na; ++i) {
          const int b = ctrl_.actuated[i];
          dp[i] = ((omega_(b) + eta(b)) / ctrl_.cost_coeff(i) - lap_(i)) /
                  ctrl_.time_constant(i);
        }
        break;
    }
  }

  Vec rhs(const Vec& x, const Vec& eta, const Vec& injection) const {
    Vec dx(state_size());
    rhs_into(x, eta, injection, dx);
    return dx;
  }

  Vec pack(const ClosedLoopState& s) const {
    Vec x(state_size());
    x.head(n_buses()) = s.angles;
    for (int k = 0; k < n_inertial(); ++k) x(n_buses() + k) = s.freqs(inertial_[k]);
    x.tail(ctrl_.state_dim()) = s.ctrl_state;
    return x;
  }

  ClosedLoopState unpack(const Vec& x, const Vec& injection, double t) const {
    ClosedLoopState s;
    s.angles = x.head(n_buses());
    s.freqs = full_freq(x, injection);
    s.ctrl_state = ctrl_state(x);
    s.frame = frame_;
    s.time = t;
    return s;
  }

 private:
  void fill_freq(const Vec& x, const Vec& injection) const {
    const int n = n_buses();
    const double* p = x.data() + n + n_inertial();
    int iw = 0;
    for (int i = 0; i < n; ++i) {
      if (params_.inertia(i) > 0.0) {
        omega_(i) = x(n + iw++);
      } else {
        const double u_state = local_idx_[i] >= 0 ? -p[local_idx_[i]] : 0.0;
        omega_(i) = (injection(i) - grad_(i) + u_state) /
                    (params_.damping(i) + droop_shift_(i));
      }
    }
  }

  const NetworkModel& net_;
  MachineParams params_;
  ControllerSpec ctrl_;
  Frame frame_;
  std::vector<int> inertial_;
  std::vector<int> local_idx_;
  Vec droop_shift_;
  mutable Vec grad_, omega_, ap_, lap_, edge_scratch_;
};

/// Public wrapper matching the closed-loop equations: returns the full time
/// derivative of (angles, freqs at inertial buses, controller state).
inline Vec rhs(const NetworkModel& net, const MachineParams& params, const ControllerSpec& ctrl,
               const Vec& noise_value, const ClosedLoopState& state) {
  ClosedLoopOde ode(net, params, ctrl, state.frame);
  return ode.rhs(ode.pack(state), noise_value, params.injection);
}

/// Recorded time series. Rows are samples; u is the realized injection of
/// the controllers (all buses).
struct Trajectory {
  std::vector<double> times;
  Mat angles;   // samples x n
  Mat freqs;    // samples x n
  Mat ctrl;     // samples x state_dim
  Mat inputs;   // samples x n
  int samples() const { return static_cast<int>(times.size()); }

  ClosedLoopState at(int k, Frame frame) const {
    ClosedLoopState s;
    s.angles = angles.row(k).transpose();
    s.freqs = freqs.row(k).transpose();
    s.ctrl_state = ctrl.row(k).transpose();
    s.frame = frame;
    s.time = times[k];
    return s;
  }
};

struct IntegrateOptions {
  double dt = 1e-3;
  double record_dt = 0.0;  // 0: record every step
  Frame frame = Frame::absolute;
};

/// Fixed-step RK4 integration of the closed loop. Noise is piecewise
/// constant between its sample instants; segment boundaries are placed at
/// every event time and noise resample time so steps never straddle a
/// discontinuity. Deterministic for a fixed seed.
inline Trajectory integrate(const NetworkModel& net, const MachineParams& params,
                            const ControllerSpec& ctrl, const NoiseSpec& noise,
                            const EventSchedule& events, const ClosedLoopState& initial,
                            double t_end, const IntegrateOptions& opts = {}) {
  require(opts.dt > 0.0, "integrate: dt must be positive");
  require(t_end > 0.0, "integrate: t_end must be positive");
  noise.validate(net.n_buses());
  events.validate(net.n_buses());

  ClosedLoopOde ode(net, params, ctrl, opts.frame);
  const int n = net.n_buses();
  const double record_dt = opts.record_dt > 0.0 ? opts.record_dt : opts.dt;

  // Segment boundaries: sorted unique union of event and resample times.
  std::vector<double> boundaries;
  for (const Event& e : events.events)
    if (e.time > 0.0 && e.time < t_end) boundaries.push_back(e.time);
  if (noise.active())
    for (double t = noise.interval; t < t_end; t += noise.interval) boundaries.push_back(t);
  boundaries.push_back(t_end);
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end(),
                               [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                   boundaries.end());

  detail::DeterministicRng rng(noise.seed);
  auto draw_noise = [&]() {
    Vec eta = noise.bias_mean;
    if (noise.active())
      for (int i = 0; i < n; ++i) {
        const double hw = noise.half_width(i);
        const double lo = noise.zero_mean ? -hw : 0.0;
        eta(i) += rng.uniform(lo, hw);
      }
    return eta;
  };

  const int expected = static_cast<int>(std::round(t_end / record_dt)) + 1;
  Trajectory traj;
  traj.times.reserve(expected);
  traj.angles.resize(expected, n);
  traj.freqs.resize(expected, n);
  traj.ctrl.resize(expected, ctrl.state_dim());
  traj.inputs.resize(expected, n);

  Vec x = ode.pack(initial);
  Vec eta = draw_noise();
  double t = 0.0;
  double next_record = 0.0;
  int row = 0;

  auto record = [&](double tr) {
    const Vec inj = events.injection_at(params.injection, tr);
    const Vec omega = ode.full_freq(x, inj);
    const Vec p = ode.ctrl_state(x);
    const Vec u = control_output(ctrl, p, omega + eta, n);
    if (row >= traj.angles.rows()) {
      traj.angles.conservativeResize(row + 16, Eigen::NoChange);
      traj.freqs.conservativeResize(row + 16, Eigen::NoChange);
      traj.ctrl.conservativeResize(row + 16, Eigen::NoChange);
      traj.inputs.conservativeResize(row + 16, Eigen::NoChange);
    }
    traj.times.push_back(tr);
    traj.angles.row(row) = x.head(n).transpose();
    traj.freqs.row(row) = omega.transpose();
    traj.ctrl.row(row) = p.transpose();
    traj.inputs.row(row) = u.transpose();
    ++row;
  };

  record(0.0);
  next_record = record_dt;

  const int sz = ode.state_size();
  Vec k1(sz), k2(sz), k3(sz), k4(sz), stage(sz);
  for (double boundary : boundaries) {
    const Vec inj = events.injection_at(params.injection, (t + boundary) / 2.0);
    while (t < boundary - 1e-12) {
      const double h = std::min(opts.dt, boundary - t);
      ode.rhs_into(x, eta, inj, k1);
      stage.noalias() = x + (0.5 * h) * k1;
      ode.rhs_into(stage, eta, inj, k2);
      stage.noalias() = x + (0.5 * h) * k2;
      ode.rhs_into(stage, eta, inj, k3);
      stage.noalias() = x + h * k3;
      ode.rhs_into(stage, eta, inj, k4);
      x.noalias() += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += h;
      if (!x.allFinite())
        throw numerical_error("integrate: state diverged (non-finite) at t = " +
                              std::to_string(t));
      if (t >= next_record - 1e-9) {
        record(t);
        next_record += record_dt;
      }
    }
    t = boundary;
    if (noise.active() && boundary < t_end &&
        std::abs(std::remainder(boundary, noise.interval)) < 1e-9)
      eta = draw_noise();
  }

  traj.angles.conservativeResize(row, Eigen::NoChange);
  traj.freqs.conservativeResize(row, Eigen::NoChange);
  traj.ctrl.conservativeResize(row, Eigen::NoChange);
  traj.inputs.conservativeResize(row, Eigen::NoChange);
  return traj;
}

/// Flat start: all angles, frequencies and controller states at zero.
inline ClosedLoopState flat_state(const NetworkModel& net, const MachineParams&,
                                  const ControllerSpec& ctrl, Frame frame = Frame::absolute) {
  ClosedLoopState s;
  s.angles = Vec::Zero(net.n_buses());
  s.freqs = Vec::Zero(net.n_buses());
  s.ctrl_state = Vec::Zero(ctrl.state_dim());
  s.frame = frame;
  return s;
}

/// LaSalle function for the pure-integral closed loop:
///   0.5 w^T M w + U(theta) - theta^T P* + 0.5 (theta - theta0')^T T^{-1} (theta - theta0')
/// whose derivative along trajectories is -w^T D w.
inline double lasalle_value(const NetworkModel& net, const MachineParams& params,
                            const Vec& t_const, const ClosedLoopState& state, const Vec& theta0p,
                            const Vec& injection) {
  require(t_const.size() == net.n_buses(), "lasalle: T must cover every bus");
  const Vec d = state.angles - theta0p;
  return 0.5 * state.freqs.dot(params.inertia.cwiseProduct(state.freqs)) +
         net.potential(state.angles) - state.angles.dot(injection) +
         0.5 * d.dot(d.cwiseQuotient(t_const));
}

/// Runs `fn(run_index)` for run_index in [0, n_runs) on a small thread pool.
/// Results must be written to pre-sized storage inside fn.
inline void parallel_runs(int n_runs, const std::function<void(int)>& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(n_runs));
  if (workers <= 1) {
    for (int i = 0; i < n_runs; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_runs; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace gridfreq
