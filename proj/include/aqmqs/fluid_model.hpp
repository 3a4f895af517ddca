#pragma once

// Fluid description of N heterogeneous TCP sources sharing one bottleneck
// router: network parameters, the rate/queue dynamics, the operating point and
// its multiple-delay linearization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aqmqs/errors.hpp"

namespace aqmqs {

/// One TCP source (a bundle of `eta` identical long-lived connections).
struct SourceConfig {
  int eta = 1;           // sessions
  double Tp = 0.1;       // propagation time [s]
  double tau_f = 0.05;   // forward delay source -> router [s]
};

/// A single router with capacity C shared by an ordered list of sources.
/// The position of a source in `sources` is its index everywhere else.
struct NetworkConfig {
  double capacity = 1.0;     // C [pkt/s]
  double buffer_max = 1.0;   // [pkt]
  double target_queue = 0.5; // b0 [pkt]
  std::vector<SourceConfig> sources;

  std::size_t size() const { return sources.size(); }

  void validate() const {
    if (!(capacity > 0.0) || !std::isfinite(capacity))
      throw std::invalid_argument("capacity must be positive");
    if (!(target_queue > 0.0) || !(target_queue < buffer_max) || !std::isfinite(buffer_max))
      throw std::invalid_argument("target_queue must lie strictly between 0 and buffer_max");
    if (sources.empty())
      throw std::invalid_argument("at least one source is required");
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const auto& s = sources[i];
      const std::string tag = "sources[" + std::to_string(i) + "]";
      if (s.eta < 1) throw std::invalid_argument(tag + ".eta must be >= 1");
      if (!(s.Tp > 0.0) || !std::isfinite(s.Tp)) throw std::invalid_argument(tag + ".Tp must be positive");
      if (!(s.tau_f >= 0.0) || s.tau_f > s.Tp) throw std::invalid_argument(tag + ".tau_f must lie in [0, Tp]");
    }
  }

  Eigen::VectorXd eta() const {
    Eigen::VectorXd v(size());
    for (std::size_t i = 0; i < size(); ++i) v[i] = sources[i].eta;
    return v;
  }
  Eigen::VectorXd propagation() const {
    Eigen::VectorXd v(size());
    for (std::size_t i = 0; i < size(); ++i) v[i] = sources[i].Tp;
    return v;
  }
  Eigen::VectorXd forward_delay() const {
    Eigen::VectorXd v(size());
    for (std::size_t i = 0; i < size(); ++i) v[i] = sources[i].tau_f;
    return v;
  }
};

/// Operating point around which the dynamics are linearized.
struct EquilibriumPoint {
  double b0 = 0.0;
  Eigen::VectorXd tau0;    // RTT [s]
  Eigen::VectorXd tau_b0;  // backward delay [s]
  Eigen::VectorXd x0;      // per-connection rate [pkt/s]
  Eigen::VectorXd p0;      // drop probability
  Eigen::VectorXd W0;      // window [pkt]
  double kappa = 1.0;
};

/// How the capacity is shared between sources at equilibrium. An empty
/// `shares` vector means every connection gets the same rate.
struct RateSplit {
  std::vector<double> shares;

  static RateSplit fair() { return {}; }
  static RateSplit weighted(std::vector<double> s) { return {std::move(s)}; }
  bool is_fair() const { return shares.empty(); }
};

/// Operating point of the fluid model. Drop probabilities follow
/// p0 = 2 / (2 + kappa * W0^2); kappa = 1 makes the point an exact fixed
/// point of `nonlinear_rhs`.
inline EquilibriumPoint compute_equilibrium(const NetworkConfig& cfg,
                                            const RateSplit& split = RateSplit::fair(),
                                            double kappa = 1.0) {
  cfg.validate();
  if (!(kappa > 0.0) || !std::isfinite(kappa))
    throw std::invalid_argument("kappa must be positive");
  const std::size_t n = cfg.size();
  Eigen::VectorXd share = Eigen::VectorXd::Ones(n);
  if (!split.is_fair()) {
    if (split.shares.size() != n)
      throw std::invalid_argument("rate_split must have one share per source");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(split.shares[i] > 0.0) || !std::isfinite(split.shares[i]))
        throw std::invalid_argument("rate shares must be positive");
      share[i] = split.shares[i];
    }
  }

  const Eigen::VectorXd eta = cfg.eta();
  EquilibriumPoint eq;
  eq.kappa = kappa;
  eq.b0 = cfg.target_queue;
  eq.x0 = share * (cfg.capacity / eta.dot(share));
  eq.tau0 = cfg.propagation().array() + cfg.target_queue / cfg.capacity;
  eq.tau_b0 = eq.tau0 - cfg.forward_delay();
  eq.W0 = eq.x0.cwiseProduct(eq.tau0);
  eq.p0 = (2.0 / (2.0 + kappa * eq.W0.array().square())).matrix();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(eq.p0[i] > 0.0 && eq.p0[i] < 1.0))
      throw std::domain_error("equilibrium drop probability outside (0,1) for source " +
                              std::to_string(i));
  }
  return eq;
}

/// Delayed signal samples consumed by the fluid dynamics.
struct DelayedSignals {
  Eigen::VectorXd x_rtt;  // x_i(t - tau_i)
  Eigen::VectorXd x_fwd;  // x_i(t - tau_i^f)
  Eigen::VectorXd p_bwd;  // p_i(t - tau_i^b)
};

struct FluidDerivative {
  Eigen::VectorXd dx;
  double db = 0.0;
};

/// Per-connection rate and queue dynamics. The RTT entering the coefficients
/// is b/C + Tp_i. Rates are floored at `x_min` inside the 1/x term and db is
/// clamped at the empty and full buffer.
inline FluidDerivative nonlinear_rhs(const NetworkConfig& cfg, const Eigen::VectorXd& x, double b,
                                     const DelayedSignals& past, double x_min = 1e-6) {
  const std::size_t n = cfg.size();
  const double C = cfg.capacity;
  const double bq = std::clamp(b, 0.0, cfg.buffer_max);

  double inflow = 0.0;
  for (std::size_t j = 0; j < n; ++j) inflow += cfg.sources[j].eta * past.x_fwd[j];

  FluidDerivative out;
  out.dx.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = bq / C + cfg.sources[i].Tp;
    const double xi = std::max(x[i], x_min);
    const double xd = past.x_rtt[i];
    const double pd = past.p_bwd[i];
    out.dx[i] = xd * (1.0 - pd) / (xi * tau * tau) - xd * xi * pd / 2.0 + xi / tau -
                xi / (tau * C) * inflow;
  }
  out.db = inflow - C;
  if (b <= 0.0 && out.db < 0.0) out.db = 0.0;
  if (b >= cfg.buffer_max && out.db > 0.0) out.db = 0.0;

  if (!std::isfinite(out.db) || !out.dx.allFinite())
    throw NonFiniteError("fluid dynamics produced a non-finite derivative");
  return out;
}

/// Multiple-delay linear model around an equilibrium:
///   dX = A X + A_d [x(t - tau^f); b] + B p(t - tau^b)
/// with X = [delta x_1 .. delta x_N, delta b].
struct LinearModel {
  std::size_t n_sources = 0;
  Eigen::MatrixXd A;
  Eigen::MatrixXd A_d;
  Eigen::MatrixXd B;
  Eigen::VectorXd a, h, f, e;
  Eigen::VectorXd eta;
  Eigen::VectorXd tau_f, tau_b, tau;

  std::size_t state_dim() const { return n_sources + 1; }

  /// Assemble A, A_d, B from the coefficient vectors.
  void assemble() {
    const auto n = static_cast<Eigen::Index>(n_sources);
    A = Eigen::MatrixXd::Zero(n + 1, n + 1);
    A_d = Eigen::MatrixXd::Zero(n + 1, n + 1);
    B = Eigen::MatrixXd::Zero(n + 1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      A(i, i) = a[i];
      A(i, n) = h[i];
      B(i, i) = e[i];
      A_d.row(i).head(n) = f[i] * eta.transpose();
    }
    A_d.row(n).head(n) = eta.transpose();
  }
};

inline LinearModel linearize(const EquilibriumPoint& eq, const NetworkConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.size();
  if (static_cast<std::size_t>(eq.x0.size()) != n || static_cast<std::size_t>(eq.p0.size()) != n ||
      static_cast<std::size_t>(eq.tau0.size()) != n)
    throw std::invalid_argument("equilibrium does not match the network size");
  const double C = cfg.capacity;
  const auto& x = eq.x0.array();
  const auto& p = eq.p0.array();
  const auto& t = eq.tau0.array();

  LinearModel m;
  m.n_sources = n;
  m.eta = cfg.eta();
  m.a = (-(1.0 - p) / (x * t.square()) - x * p / 2.0).matrix();
  m.h = (-2.0 * (1.0 - p) / (C * t.cube())).matrix();
  m.f = (-x / (t * C)).matrix();
  m.e = (-1.0 / t.square() - x.square() / 2.0).matrix();
  m.tau = eq.tau0;
  m.tau_f = cfg.forward_delay();
  m.tau_b = eq.tau0 - m.tau_f;
  m.assemble();
  return m;
}

}  // namespace aqmqs
