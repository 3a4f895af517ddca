#pragma once

// Router drop policies behind a common interface: the structured state
// feedback and the DropTail / RED / REM / PI baselines.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aqmqs/fluid_model.hpp"

namespace aqmqs {

inline double clamp_probability(double p) {
  if (std::isnan(p)) return 1.0;
  return std::clamp(p, 0.0, 1.0);
}

/// A drop policy observed once per simulation grid step. Outputs are
/// per-source drop probabilities in [0, 1].
class AqmController {
 public:
  virtual ~AqmController() = default;

  /// `arrival_rates[i]` is the per-connection rate of source i as seen at the
  /// router, i.e. x_i(t - tau_i^f).
  virtual Eigen::VectorXd observe(double t, double queue,
                                  const Eigen::VectorXd& arrival_rates) = 0;

  /// Update rate in Hz; empty for controllers evaluated at every observation.
  virtual std::optional<double> sampling_frequency() const { return std::nullopt; }

  virtual std::string name() const = 0;
};

// --- structured state feedback -------------------------------------------

/// Diagonal gains: k1 [probability per pkt/s], k2 [probability per pkt].
struct StateFeedbackGains {
  Eigen::VectorXd k1;
  Eigen::VectorXd k2;

  Eigen::MatrixXd K1() const { return k1.asDiagonal(); }
  Eigen::MatrixXd K2() const { return k2.asDiagonal(); }

  void validate(std::size_t n) const {
    if (static_cast<std::size_t>(k1.size()) != n || static_cast<std::size_t>(k2.size()) != n)
      throw std::invalid_argument("gain vectors must have one entry per source");
    if (!k1.allFinite() || !k2.allFinite()) throw std::invalid_argument("gains must be finite");
  }

  static StateFeedbackGains zero(std::size_t n) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))};
  }

  /// Gains published for the three-source example (units 1e-3).
  static StateFeedbackGains paper_example() {
    StateFeedbackGains g;
    g.k1 = Eigen::Vector3d(-0.09e-3, 0.61e-3, 0.76e-3);
    g.k2 = Eigen::Vector3d(0.27e-3, 0.13e-3, 0.08e-3);
    return g;
  }
};

/// p_i = clamp(p0_i + k1_i (x_i - x0_i) + k2_i (b - b0)).
inline Eigen::VectorXd state_feedback_control(const EquilibriumPoint& eq,
                                              const StateFeedbackGains& gains, double queue,
                                              const Eigen::VectorXd& arrival_rates) {
  const Eigen::Index n = eq.p0.size();
  Eigen::VectorXd p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p[i] = clamp_probability(eq.p0[i] + gains.k1[i] * (arrival_rates[i] - eq.x0[i]) +
                             gains.k2[i] * (queue - eq.b0));
  }
  return p;
}

class StateFeedbackController final : public AqmController {
 public:
  StateFeedbackController(EquilibriumPoint eq, StateFeedbackGains gains)
      : eq_(std::move(eq)), gains_(std::move(gains)) {
    gains_.validate(static_cast<std::size_t>(eq_.p0.size()));
  }

  Eigen::VectorXd observe(double, double queue, const Eigen::VectorXd& rates) override {
    return state_feedback_control(eq_, gains_, queue, rates);
  }
  std::string name() const override { return "SF"; }

  const StateFeedbackGains& gains() const { return gains_; }

 private:
  EquilibriumPoint eq_;
  StateFeedbackGains gains_;
};

// --- baselines: pure update laws -------------------------------------------

struct RedParams {
  double min_th = 50.0;
  double max_th = 300.0;
  double w_q = 5.99e-6;
  double max_p = 0.1;
  double fs = 160.0;

  void validate() const {
    if (!(min_th < max_th)) throw std::invalid_argument("RED requires min_th < max_th");
    if (!(w_q > 0.0 && w_q <= 1.0)) throw std::invalid_argument("RED requires 0 < w_q <= 1");
    if (!(max_p >= 0.0 && max_p <= 1.0)) throw std::invalid_argument("RED requires max_p in [0,1]");
    if (!(fs > 0.0)) throw std::invalid_argument("RED requires fs > 0");
  }
};

struct RedState {
  double avg = 0.0;
};

/// Drop probability for a given average queue (non-gentle variant).
inline double red_probability(const RedParams& prm, double avg) {
  if (avg < prm.min_th) return 0.0;
  if (avg >= prm.max_th) return 1.0;
  return clamp_probability(prm.max_p * (avg - prm.min_th) / (prm.max_th - prm.min_th));
}

inline double red_control(RedState& st, const RedParams& prm, double queue) {
  st.avg = (1.0 - prm.w_q) * st.avg + prm.w_q * queue;
  return red_probability(prm, st.avg);
}

struct RemParams {
  double gamma = 0.003;
  double phi = 1.001;
  double q_ref = 100.0;
  double fs = 160.0;

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("REM requires gamma > 0");
    if (!(phi > 1.0)) throw std::invalid_argument("REM requires phi > 1");
    if (!(fs > 0.0)) throw std::invalid_argument("REM requires fs > 0");
  }
};

struct RemState {
  double price = 0.0;
};

inline double rem_probability(const RemParams& prm, double price) {
  return clamp_probability(1.0 - std::pow(prm.phi, -price));
}

inline double rem_control(RemState& st, const RemParams& prm, double queue) {
  st.price = std::max(0.0, st.price + prm.gamma * (queue - prm.q_ref));
  return rem_probability(prm, st.price);
}

struct PiParams {
  double a = 1.483e-5;
  double b = 1.479e-5;
  double q_ref = 100.0;
  double fs = 160.0;

  void validate() const {
    if (!(fs > 0.0)) throw std::invalid_argument("PI requires fs > 0");
  }
};

struct PiState {
  double p = 0.0;
  double prev_error = 0.0;
};

/// p_k = clamp(p_{k-1} + a e_k - b e_{k-1}), e = queue - q_ref.
inline double pi_control(PiState& st, const PiParams& prm, double queue) {
  const double err = queue - prm.q_ref;
  st.p = clamp_probability(st.p + prm.a * err - prm.b * st.prev_error);
  st.prev_error = err;
  return st.p;
}

inline double droptail_control(double buffer_max, double queue) {
  return queue >= buffer_max ? 1.0 : 0.0;
}

/// Fraction of the aggregate arrival rate a full buffer cannot absorb,
/// max(0, 1 - C / sum_j eta_j x_j).
inline double overflow_fraction(double capacity, const Eigen::VectorXd& eta,
                                const Eigen::VectorXd& arrival_rates) {
  const double load = eta.dot(arrival_rates);
  if (!(load > capacity)) return 0.0;
  return clamp_probability(1.0 - capacity / load);
}

// --- controller objects ----------------------------------------------------

/// Baseline emitting one probability for all sources, updated on its own
/// 1/fs grid and held constant in between.
template <class Params, class State, double (*Law)(State&, const Params&, double)>
class SampledController final : public AqmController {
 public:
  SampledController(std::string name, Params prm, std::size_t n_sources, State initial = {})
      : name_(std::move(name)), prm_(prm), state_(initial), n_(n_sources) {
    prm_.validate();
  }

  Eigen::VectorXd observe(double t, double queue, const Eigen::VectorXd&) override {
    const double period = 1.0 / prm_.fs;
    while (t + 1e-12 >= next_update_) {
      p_ = Law(state_, prm_, queue);
      ++updates_;
      next_update_ = static_cast<double>(updates_) * period;
    }
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_), p_);
  }

  std::optional<double> sampling_frequency() const override { return prm_.fs; }
  std::string name() const override { return name_; }
  const State& state() const { return state_; }
  const Params& params() const { return prm_; }

 private:
  std::string name_;
  Params prm_;
  State state_;
  std::size_t n_;
  double p_ = 0.0;
  double next_update_ = 0.0;
  std::size_t updates_ = 0;
};

using RedController = SampledController<RedParams, RedState, &red_control>;
using RemController = SampledController<RemParams, RemState, &rem_control>;
using PiController = SampledController<PiParams, PiState, &pi_control>;

/// Tail drop at fluid scale: while the buffer is full the router loses the
/// part of the arrivals exceeding capacity, otherwise nothing.
class DropTailController final : public AqmController {
 public:
  explicit DropTailController(const NetworkConfig& cfg)
      : buffer_max_(cfg.buffer_max), capacity_(cfg.capacity), eta_(cfg.eta()) {}

  Eigen::VectorXd observe(double, double queue, const Eigen::VectorXd& rates) override {
    const double p = droptail_control(buffer_max_, queue) * overflow_fraction(capacity_, eta_, rates);
    return Eigen::VectorXd::Constant(eta_.size(), p);
  }
  std::string name() const override { return "DT"; }

 private:
  double buffer_max_;
  double capacity_;
  Eigen::VectorXd eta_;
};

/// Holds p at a fixed vector regardless of observations.
class ConstantController final : public AqmController {
 public:
  explicit ConstantController(Eigen::VectorXd p) : p_(std::move(p)) {
    for (Eigen::Index i = 0; i < p_.size(); ++i) p_[i] = clamp_probability(p_[i]);
  }
  Eigen::VectorXd observe(double, double, const Eigen::VectorXd&) override { return p_; }
  std::string name() const override { return "const"; }

 private:
  Eigen::VectorXd p_;
};

}  // namespace aqmqs
