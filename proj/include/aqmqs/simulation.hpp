#pragma once

// Closed-loop simulation of the fluid model (nonlinear, with any AQM
// controller) and of the linearized multiple-delay model under structured
// state feedback.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqmqs/aqm.hpp"
#include "aqmqs/dde.hpp"
#include "aqmqs/fluid_model.hpp"
#include "aqmqs/history.hpp"

namespace aqmqs {

enum class DelayMode { Frozen, StateDependent };

inline const char* to_string(DelayMode m) {
  return m == DelayMode::Frozen ? "frozen" : "state-dep";
}

inline DelayMode parse_delay_mode(const std::string& s) {
  if (s == "frozen") return DelayMode::Frozen;
  if (s == "state-dep" || s == "state-dependent") return DelayMode::StateDependent;
  throw std::invalid_argument("unknown delay mode '" + s + "' (expected frozen|state-dep)");
}

/// Uniform-grid record of a fluid simulation.
struct Trajectory {
  double dt = 0.0;
  std::vector<double> time;
  std::vector<double> queue;              // b [pkt]
  std::vector<Eigen::VectorXd> rates;     // x_i, per connection [pkt/s]
  std::vector<Eigen::VectorXd> drop;      // p_i emitted by the router
  std::vector<Eigen::VectorXd> rtt;       // tau_i [s]

  std::size_t size() const { return time.size(); }
  std::size_t n_sources() const { return rates.empty() ? 0 : static_cast<std::size_t>(rates.front().size()); }
};

struct SimulationOptions {
  double duration = 100.0;
  double dt = 1e-3;
  DelayMode mode = DelayMode::Frozen;
  double initial_queue = 0.0;
  Eigen::VectorXd initial_rates;  // defaults to the equilibrium rates
  double x_min = 1e-6;
  bool tail_drop_on_overflow = true;  // full buffer loses the excess arrivals
};

/// Run the fluid model in closed loop with `controller`. At every grid point
/// the controller sees b(t) and the arrival rates x_i(t - tau_i^f); the
/// sources react to p_i(t - tau_i^b).
inline Trajectory simulate_closed_loop(const NetworkConfig& cfg, const EquilibriumPoint& eq,
                                       AqmController& controller, const SimulationOptions& opt) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.size());
  const double C = cfg.capacity;
  const Eigen::VectorXd Tp = cfg.propagation();
  const Eigen::VectorXd tau_f = cfg.forward_delay();
  const Eigen::VectorXd tau0 = eq.tau0;
  const Eigen::VectorXd tau_b0 = eq.tau_b0;

  Eigen::VectorXd x_init = opt.initial_rates.size() == 0 ? eq.x0 : opt.initial_rates;
  if (x_init.size() != n) throw std::invalid_argument("initial_rates must have one entry per source");
  if (!(opt.initial_queue >= 0.0 && opt.initial_queue <= cfg.buffer_max))
    throw std::invalid_argument("initial_queue must lie in [0, buffer_max]");

  // Delay bounds for the step-size check and history horizon.
  std::vector<double> delays;
  double max_delay = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (opt.mode == DelayMode::Frozen) {
      delays.insert(delays.end(), {tau0[i], tau_f[i], tau_b0[i]});
      max_delay = std::max(max_delay, tau0[i]);
    } else {
      delays.insert(delays.end(), {Tp[i], tau_f[i], Tp[i] - tau_f[i]});
      max_delay = std::max(max_delay, cfg.buffer_max / C + Tp[i]);
    }
  }
  // Backward delays of zero are not admissible: p would be needed at the stage time.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tb_min = opt.mode == DelayMode::Frozen ? tau_b0[i] : Tp[i] - tau_f[i];
    if (!(tb_min > 0.0)) throw std::invalid_argument("backward delay must be positive");
  }
  check_step_size(opt.dt, delays);
  const std::size_t steps = step_count(opt.duration, opt.dt);
  const double horizon = max_delay + 2.0 * opt.dt;

  Eigen::VectorXd y0(n + 1);
  y0.head(n) = x_init;
  y0[n] = opt.initial_queue;

  // Router decision at t = 0 from the constant pre-history.
  Eigen::VectorXd arrivals0 = x_init;
  Eigen::VectorXd p_init = controller.observe(0.0, opt.initial_queue, arrivals0);
  const Eigen::VectorXd eta = cfg.eta();
  auto apply_overflow = [&](Eigen::VectorXd& p, double b, const Eigen::VectorXd& arrivals) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = clamp_probability(p[i]);
    if (opt.tail_drop_on_overflow && b >= cfg.buffer_max) {
      const double loss = overflow_fraction(C, eta, arrivals);
      p = p.cwiseMax(loss);
    }
  };
  apply_overflow(p_init, opt.initial_queue, arrivals0);
  HistoryBuffer p_hist(n, horizon, p_init);
  p_hist.push(0.0, p_init);

  auto rtt_at = [&](double b, Eigen::Index i) {
    if (opt.mode == DelayMode::Frozen) return tau0[i];
    return std::clamp(b, 0.0, cfg.buffer_max) / C + Tp[i];
  };

  DelayedSignals past;
  past.x_rtt.resize(n);
  past.x_fwd.resize(n);
  past.p_bwd.resize(n);
  DdeRhs rhs = [&](const DelayedState& s) -> Eigen::VectorXd {
    const double b = s.now(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double tau = rtt_at(b, i);
      const double tb = tau - tau_f[i];
      past.x_rtt[i] = s.lag(i, tau);
      past.x_fwd[i] = s.lag(i, tau_f[i]);
      past.p_bwd[i] = p_hist.value(s.time() - tb, i);
    }
    const FluidDerivative d = nonlinear_rhs(cfg, s.now().head(n), b, past, opt.x_min);
    Eigen::VectorXd out(n + 1);
    out.head(n) = d.dx;
    out[n] = d.db;
    return out;
  };
  DdeProjection project = [&](Eigen::VectorXd& y) {
    for (Eigen::Index i = 0; i < n; ++i) y[i] = std::max(y[i], opt.x_min);
    y[n] = std::clamp(y[n], 0.0, cfg.buffer_max);
  };

  DdeStepper stepper(rhs, HistoryBuffer(n + 1, horizon, y0), 0.0, opt.dt, delays, project);

  Trajectory traj;
  traj.dt = opt.dt;
  traj.time.reserve(steps + 1);
  traj.queue.reserve(steps + 1);
  traj.rates.reserve(steps + 1);
  traj.drop.reserve(steps + 1);
  traj.rtt.reserve(steps + 1);
  auto record = [&](double t, const Eigen::VectorXd& y, const Eigen::VectorXd& p) {
    traj.time.push_back(t);
    traj.queue.push_back(y[n]);
    traj.rates.push_back(y.head(n));
    traj.drop.push_back(p);
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = rtt_at(y[n], i);
    traj.rtt.push_back(r);
  };
  record(0.0, stepper.state(), p_init);

  Eigen::VectorXd arrivals(n);
  for (std::size_t k = 0; k < steps; ++k) {
    stepper.step();
    const double t = stepper.time();
    const Eigen::VectorXd& y = stepper.state();
    for (Eigen::Index i = 0; i < n; ++i)
      arrivals[i] = tau_f[i] > 0.0 ? stepper.history().value(t - tau_f[i], i) : y[i];
    Eigen::VectorXd p = controller.observe(t, y[n], arrivals);
    if (p.size() != n) throw std::runtime_error("controller returned the wrong number of probabilities");
    apply_overflow(p, y[n], arrivals);
    p_hist.push(t, p);
    record(t, y, p);
  }
  return traj;
}

/// Deviation trajectory of the linear closed loop.
struct LinearTrajectory {
  double dt = 0.0;
  std::vector<double> time;
  std::vector<Eigen::VectorXd> state;  // [delta x; delta b]
  bool diverged = false;

  double norm_at(std::size_t k) const { return state[k].norm(); }
};

/// dX = A X + A_d [x(t - tau^f); b] + B K1 x(t - tau) + B K2 b(t - tau^b),
/// integrated without clamps. Growth beyond `divergence_norm` stops the run
/// and sets `diverged`.
inline LinearTrajectory simulate_linear(const LinearModel& m, const Eigen::MatrixXd& K1,
                                        const Eigen::MatrixXd& K2,
                                        const Eigen::VectorXd& initial_deviation, double duration,
                                        double dt, double divergence_norm = 1e12) {
  const auto n = static_cast<Eigen::Index>(m.n_sources);
  if (initial_deviation.size() != n + 1) throw std::invalid_argument("initial deviation must have N+1 entries");
  if (K1.rows() != n || K1.cols() != n || K2.rows() != n || K2.cols() != n)
    throw std::invalid_argument("gain matrices must be N x N");
  const Eigen::MatrixXd BK1 = m.B * K1;
  const Eigen::MatrixXd BK2 = m.B * K2;

  std::vector<double> delays;
  double max_delay = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    delays.insert(delays.end(), {m.tau_f[i], m.tau_b[i], m.tau[i]});
    max_delay = std::max({max_delay, m.tau_f[i], m.tau_b[i], m.tau[i]});
  }
  check_step_size(dt, delays);
  const std::size_t steps = step_count(duration, dt);

  Eigen::VectorXd xf(n + 1), xr(n), bb(n);
  DdeRhs rhs = [&](const DelayedState& s) -> Eigen::VectorXd {
    for (Eigen::Index i = 0; i < n; ++i) {
      xf[i] = s.lag(i, m.tau_f[i]);
      xr[i] = s.lag(i, m.tau[i]);
      bb[i] = s.lag(n, m.tau_b[i]);
    }
    xf[n] = s.now(n);
    return m.A * s.now() + m.A_d * xf + BK1 * xr + BK2 * bb;
  };
  DdeStepper stepper(rhs, HistoryBuffer(n + 1, max_delay + 2.0 * dt, initial_deviation), 0.0, dt,
                     delays);
  LinearTrajectory out;
  out.dt = dt;
  out.time.push_back(0.0);
  out.state.push_back(stepper.state());
  for (std::size_t k = 0; k < steps; ++k) {
    stepper.step();
    out.time.push_back(stepper.time());
    out.state.push_back(stepper.state());
    if (stepper.state().norm() > divergence_norm) {
      out.diverged = true;
      break;
    }
  }
  return out;
}

/// CSV with header time,b,x_1..x_N,p_1..p_N and 17 significant digits.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const std::size_t n = traj.n_sources();
  os << "time,b";
  for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
  for (std::size_t i = 1; i <= n; ++i) os << ",p_" << i;
  os << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t k = 0; k < traj.size(); ++k) {
    put(traj.time[k]);
    os << ',';
    put(traj.queue[k]);
    for (std::size_t i = 0; i < n; ++i) {
      os << ',';
      put(traj.rates[k][static_cast<Eigen::Index>(i)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      os << ',';
      put(traj.drop[k][static_cast<Eigen::Index>(i)]);
    }
    os << '\n';
  }
}

}  // namespace aqmqs
