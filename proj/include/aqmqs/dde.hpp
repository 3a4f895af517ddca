#pragma once

// Fixed-step RK4 integration of delay-differential equations with a bounded
// history. The time grid is t0 + k*dt; stage values of delayed signals come
// from cubic Hermite interpolation of the recorded solution.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aqmqs/errors.hpp"
#include "aqmqs/history.hpp"

namespace aqmqs {

/// What a right-hand side sees at one stage: the stage time, the stage state
/// and read access to the past solution.
class DelayedState {
 public:
  DelayedState(double t, const Eigen::VectorXd& y, const HistoryBuffer& past)
      : t_(t), y_(y), past_(past) {}

  double time() const { return t_; }
  const Eigen::VectorXd& now() const { return y_; }
  double now(Eigen::Index i) const { return y_[i]; }

  /// Component i at time t - delay. A zero delay reads the stage state.
  double lag(Eigen::Index i, double delay) const {
    if (delay <= 0.0) return y_[i];
    return past_.value(t_ - delay, i);
  }

  const HistoryBuffer& history() const { return past_; }

 private:
  double t_;
  const Eigen::VectorXd& y_;
  const HistoryBuffer& past_;
};

using DdeRhs = std::function<Eigen::VectorXd(const DelayedState&)>;
using DdeProjection = std::function<void(Eigen::VectorXd&)>;

/// Smallest strictly positive entry; +inf when none.
inline double min_positive_delay(std::span<const double> delays) {
  double m = std::numeric_limits<double>::infinity();
  for (double d : delays)
    if (d > 0.0) m = std::min(m, d);
  return m;
}

/// Throws when dt is not small enough for the declared delays.
inline void check_step_size(double dt, std::span<const double> delays) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  for (double d : delays)
    if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("delays must be finite and >= 0");
  const double dmin = min_positive_delay(delays);
  if (dt > dmin / 5.0 * (1.0 + 1e-12))
    throw std::invalid_argument("dt too large: must not exceed min(delay)/5 = " +
                                std::to_string(dmin / 5.0));
}

/// Explicit RK4 stepper. The derivative at every accepted grid point is kept
/// in the history so the past solution is interpolated with C1 continuity.
class DdeStepper {
 public:
  DdeStepper(DdeRhs rhs, HistoryBuffer history, double t0, double dt,
             std::span<const double> delays, DdeProjection project = {})
      : rhs_(std::move(rhs)), project_(std::move(project)), past_(std::move(history)),
        t0_(t0), dt_(dt) {
    check_step_size(dt, delays);
    y_ = past_.pre_history(t0);
    if (project_) project_(y_);
    check_finite(y_);
    slope_ = rhs_(DelayedState(t0, y_, past_));
    check_finite(slope_);
    past_.push(t0, y_, slope_);
  }

  double time() const { return t0_ + static_cast<double>(steps_) * dt_; }
  double dt() const { return dt_; }
  std::size_t steps() const { return steps_; }
  const Eigen::VectorXd& state() const { return y_; }
  const Eigen::VectorXd& derivative() const { return slope_; }
  const HistoryBuffer& history() const { return past_; }

  void step() {
    const double t = time();
    const double h = dt_;
    const Eigen::VectorXd& k1 = slope_;
    Eigen::VectorXd ys = y_ + 0.5 * h * k1;
    const Eigen::VectorXd k2 = rhs_(DelayedState(t + 0.5 * h, ys, past_));
    ys = y_ + 0.5 * h * k2;
    const Eigen::VectorXd k3 = rhs_(DelayedState(t + 0.5 * h, ys, past_));
    ys = y_ + h * k3;
    const Eigen::VectorXd k4 = rhs_(DelayedState(t + h, ys, past_));
    Eigen::VectorXd next = y_ + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (project_) project_(next);
    check_finite(next);

    ++steps_;
    y_ = std::move(next);
    slope_ = rhs_(DelayedState(time(), y_, past_));
    check_finite(slope_);
    past_.push(time(), y_, slope_);
  }

 private:
  static void check_finite(const Eigen::VectorXd& v) {
    if (!v.allFinite()) throw NonFiniteError("DDE state became non-finite");
  }

  DdeRhs rhs_;
  DdeProjection project_;
  HistoryBuffer past_;
  double t0_;
  double dt_;
  std::size_t steps_ = 0;
  Eigen::VectorXd y_;
  Eigen::VectorXd slope_;
};

struct DdeSolution {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
};

/// Number of grid steps covering `duration`; duration must be a whole
/// multiple of dt up to rounding.
inline std::size_t step_count(double duration, double dt) {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw std::invalid_argument("duration must be positive");
  const double r = duration / dt;
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-6 * std::max(1.0, r))
    throw std::invalid_argument("duration must be a multiple of dt");
  return static_cast<std::size_t>(n);
}

/// Integrate y' = f(t, y(t), y(t - delays)) on [0, duration] from the given
/// pre-history (constant vector or callable).
inline DdeSolution integrate_dde(const DdeRhs& rhs, HistoryBuffer::PreHistory initial_history,
                                 Eigen::Index dim, double duration, double dt,
                                 std::span<const double> delays, DdeProjection project = {}) {
  const std::size_t n = step_count(duration, dt);
  double max_delay = 0.0;
  for (double d : delays) max_delay = std::max(max_delay, d);
  HistoryBuffer hist(dim, max_delay + 2.0 * dt, std::move(initial_history));
  DdeStepper stepper(rhs, std::move(hist), 0.0, dt, delays, std::move(project));
  DdeSolution sol;
  sol.times.reserve(n + 1);
  sol.states.reserve(n + 1);
  sol.times.push_back(stepper.time());
  sol.states.push_back(stepper.state());
  for (std::size_t k = 0; k < n; ++k) {
    stepper.step();
    sol.times.push_back(stepper.time());
    sol.states.push_back(stepper.state());
  }
  return sol;
}

inline DdeSolution integrate_dde(const DdeRhs& rhs, const Eigen::VectorXd& constant_history,
                                 double duration, double dt, std::span<const double> delays,
                                 DdeProjection project = {}) {
  Eigen::VectorXd c = constant_history;
  return integrate_dde(rhs, [c](double) { return c; }, c.size(), duration, dt, delays,
                       std::move(project));
}

}  // namespace aqmqs
