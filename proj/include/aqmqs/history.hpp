#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

namespace aqmqs {

/// Bounded record of past samples of a vector signal.
///
/// Samples are pushed with strictly increasing time stamps. Queries between
/// two samples interpolate: cubic Hermite when both samples carry a
/// derivative, linear otherwise. Queries before the first pushed sample return
/// the pre-history function; queries newer than the last sample are rejected.
class HistoryBuffer {
 public:
  using PreHistory = std::function<Eigen::VectorXd(double)>;

  HistoryBuffer(Eigen::Index dim, double horizon, Eigen::VectorXd constant_pre_history)
      : dim_(dim), horizon_(horizon), constant_(std::move(constant_pre_history)) {
    if (constant_.size() != dim_) throw std::invalid_argument("pre-history has wrong dimension");
    check_horizon();
  }

  HistoryBuffer(Eigen::Index dim, double horizon, PreHistory pre_history)
      : dim_(dim), horizon_(horizon), pre_(std::move(pre_history)) {
    if (!pre_) throw std::invalid_argument("pre-history function is empty");
    check_horizon();
  }

  Eigen::Index dim() const { return dim_; }
  double horizon() const { return horizon_; }
  bool empty() const { return times_.empty(); }
  std::size_t size() const { return times_.size(); }
  double latest_time() const { return times_.back(); }
  double earliest_time() const { return times_.front(); }

  /// Append a sample; `derivative` may be empty (linear interpolation).
  void push(double t, const Eigen::VectorXd& value, const Eigen::VectorXd& derivative = {}) {
    if (value.size() != dim_) throw std::invalid_argument("sample has wrong dimension");
    if (derivative.size() != 0 && derivative.size() != dim_)
      throw std::invalid_argument("derivative has wrong dimension");
    if (!times_.empty() && !(t > times_.back()))
      throw std::invalid_argument("history samples must be strictly increasing in time");
    if (times_.empty()) start_ = t;
    times_.push_back(t);
    values_.push_back(value);
    slopes_.push_back(derivative);
    while (times_.size() > 2 && times_[1] < t - horizon_) {
      times_.pop_front();
      values_.pop_front();
      slopes_.pop_front();
    }
  }

  double value(double t, Eigen::Index i) const {
    if (times_.empty() || t < start_) return pre_history(t)[i];
    const std::size_t k = locate(t);
    if (times_[k] == t) return values_[k][i];
    return interpolate(k, t, i);
  }

  Eigen::VectorXd value(double t) const {
    if (times_.empty() || t < start_) return pre_history(t);
    const std::size_t k = locate(t);
    if (times_[k] == t) return values_[k];
    Eigen::VectorXd out(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) out[i] = interpolate(k, t, i);
    return out;
  }

  Eigen::VectorXd pre_history(double t) const { return pre_ ? pre_(t) : constant_; }

 private:
  void check_horizon() const {
    if (!(horizon_ >= 0.0)) throw std::invalid_argument("history horizon must be non-negative");
  }

  // Index of the last sample with time <= t.
  std::size_t locate(double t) const {
    if (t > times_.back())
      throw std::out_of_range("history query is newer than the latest sample");
    if (t < times_.front())
      throw std::out_of_range("history query is older than the retained window");
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return static_cast<std::size_t>(std::distance(times_.begin(), it)) - 1;
  }

  double interpolate(std::size_t k, double t, Eigen::Index i) const {
    const double t0 = times_[k];
    const double h = times_[k + 1] - t0;
    const double s = (t - t0) / h;
    const double y0 = values_[k][i];
    const double y1 = values_[k + 1][i];
    if (slopes_[k].size() == 0 || slopes_[k + 1].size() == 0) return y0 + s * (y1 - y0);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * y0 + h10 * h * slopes_[k][i] + h01 * y1 + h11 * h * slopes_[k + 1][i];
  }

  Eigen::Index dim_;
  double horizon_;
  Eigen::VectorXd constant_;
  PreHistory pre_;
  double start_ = 0.0;
  std::deque<double> times_;
  std::deque<Eigen::VectorXd> values_;
  std::deque<Eigen::VectorXd> slopes_;
};

}  // namespace aqmqs
