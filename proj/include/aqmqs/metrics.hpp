#pragma once

// Queue and rate statistics of a fluid run.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "aqmqs/fluid_model.hpp"
#include "aqmqs/simulation.hpp"

namespace aqmqs {

/// (sum x)^2 / (n sum x^2).
inline double jain_index(std::span<const double> rates) {
  if (rates.empty()) throw std::invalid_argument("jain_index needs at least one rate");
  double s = 0.0, s2 = 0.0;
  for (double x : rates) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("rates must be finite and non-negative");
    s += x;
    s2 += x * x;
  }
  if (s2 == 0.0) throw std::invalid_argument("jain_index is undefined for all-zero rates");
  return s * s / (static_cast<double>(rates.size()) * s2);
}

inline double jain_index(const Eigen::VectorXd& rates) {
  return jain_index(std::span<const double>(rates.data(), static_cast<std::size_t>(rates.size())));
}

struct MetricsReport {
  double warmup = 0.0;          // [s]
  std::size_t samples = 0;
  double queue_mean = 0.0;      // [pkt]
  double queue_std = 0.0;       // [pkt]
  double delay_ms = 0.0;        // mean queue / C
  double jitter_ms = 0.0;       // queue std / C
  Eigen::VectorXd rate_mean;    // per source [pkt/s]
  Eigen::VectorXd rate_std;
  double jain = 0.0;            // of rate_mean
};

/// Population statistics over samples with t >= warmup.
inline MetricsReport compute_metrics(const Trajectory& traj, const NetworkConfig& cfg, double warmup) {
  if (!(cfg.capacity > 0.0)) throw std::invalid_argument("capacity must be positive");
  const auto n = static_cast<Eigen::Index>(traj.n_sources());
  MetricsReport r;
  r.warmup = warmup;
  r.rate_mean = Eigen::VectorXd::Zero(n);
  r.rate_std = Eigen::VectorXd::Zero(n);
  std::size_t first = 0;
  while (first < traj.size() && traj.time[first] < warmup) ++first;
  r.samples = traj.size() - first;
  if (r.samples == 0) throw std::invalid_argument("no samples after the warmup cutoff");
  const double cnt = static_cast<double>(r.samples);

  for (std::size_t k = first; k < traj.size(); ++k) {
    r.queue_mean += traj.queue[k];
    r.rate_mean += traj.rates[k];
  }
  r.queue_mean /= cnt;
  r.rate_mean /= cnt;
  for (std::size_t k = first; k < traj.size(); ++k) {
    const double dq = traj.queue[k] - r.queue_mean;
    r.queue_std += dq * dq;
    r.rate_std += (traj.rates[k] - r.rate_mean).array().square().matrix();
  }
  r.queue_std = std::sqrt(r.queue_std / cnt);
  r.rate_std = (r.rate_std / cnt).array().sqrt().matrix();
  r.delay_ms = 1000.0 * r.queue_mean / cfg.capacity;
  r.jitter_ms = 1000.0 * r.queue_std / cfg.capacity;
  r.jain = jain_index(r.rate_mean);
  return r;
}

}  // namespace aqmqs
