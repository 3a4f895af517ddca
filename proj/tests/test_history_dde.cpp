#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "aqmqs/dde.hpp"
#include "aqmqs/history.hpp"

using namespace aqmqs;

namespace {

// Exact solution of y'(t) = -y(t-1), y = 1 on t <= 0, by the method of steps:
// on [k, k+1] y is a polynomial p_k(t - k), p_k(s) = p_{k-1}(1) - int_0^s p_{k-1}(u) du.
class DelayedDecayOracle {
 public:
  explicit DelayedDecayOracle(int intervals) {
    std::vector<double> prev = {1.0};  // pre-history
    for (int k = 0; k < intervals; ++k) {
      std::vector<double> next(prev.size() + 1, 0.0);
      next[0] = eval(prev, k == 0 ? 0.0 : 1.0);
      for (std::size_t j = 0; j < prev.size(); ++j) next[j + 1] = -prev[j] / static_cast<double>(j + 1);
      pieces_.push_back(next);
      prev = next;
    }
  }

  double operator()(double t) const {
    if (t <= 0.0) return 1.0;
    const auto k = std::min(static_cast<std::size_t>(std::floor(t)), pieces_.size() - 1);
    return eval(pieces_[k], t - static_cast<double>(k));
  }

 private:
  static double eval(const std::vector<double>& c, double s) {
    double v = 0.0;
    for (std::size_t j = c.size(); j-- > 0;) v = v * s + c[j];
    return v;
  }
  std::vector<std::vector<double>> pieces_;
};

double delayed_decay_error(double dt, double t_end) {
  const DelayedDecayOracle exact(static_cast<int>(t_end) + 1);
  const double delays[] = {1.0};
  DdeRhs rhs = [](const DelayedState& s) { return Eigen::VectorXd::Constant(1, -s.lag(0, 1.0)); };
  const auto sol = integrate_dde(rhs, Eigen::VectorXd::Ones(1), t_end, dt, delays);
  return std::abs(sol.states.back()[0] - exact(t_end));
}

}  // namespace

TEST(Oracle, MethodOfStepsClosedForm) {
  const DelayedDecayOracle y(3);
  EXPECT_NEAR(y(0.5), 0.5, 1e-15);
  EXPECT_NEAR(y(1.0), 0.0, 1e-15);
  EXPECT_NEAR(y(1.5), 1.0 - 1.5 + 0.125, 1e-15);
  EXPECT_NEAR(y(2.0), -0.5, 1e-15);
}

TEST(HistoryBuffer, RecordedSamplesAreReturnedBitExactly) {
  HistoryBuffer h(2, 10.0, Eigen::VectorXd(Eigen::Vector2d(1.0, 2.0)));
  std::vector<double> ts;
  for (int k = 0; k < 50; ++k) {
    const double t = 0.1 * k + 1e-3 * std::sin(k);
    ts.push_back(t);
    h.push(t, Eigen::Vector2d(std::exp(t), std::cos(3 * t)), Eigen::Vector2d(std::exp(t), -3 * std::sin(3 * t)));
  }
  for (double t : ts) {
    EXPECT_EQ(h.value(t, 0), std::exp(t));
    EXPECT_EQ(h.value(t)[1], std::cos(3 * t));
  }
}

TEST(HistoryBuffer, QueriesBeforeFirstSampleUsePreHistory) {
  HistoryBuffer h(1, 5.0, HistoryBuffer::PreHistory([](double t) { return Eigen::VectorXd::Constant(1, 2 * t); }));
  h.push(0.0, Eigen::VectorXd::Constant(1, 7.0));
  EXPECT_DOUBLE_EQ(h.value(-0.25, 0), -0.5);
  EXPECT_DOUBLE_EQ(h.value(0.0, 0), 7.0);
}

TEST(HistoryBuffer, LinearWithoutSlopesHermiteWithSlopes) {
  HistoryBuffer lin(1, 5.0, Eigen::VectorXd(Eigen::VectorXd::Zero(1)));
  lin.push(0.0, Eigen::VectorXd::Constant(1, 0.0));
  lin.push(1.0, Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_DOUBLE_EQ(lin.value(0.25, 0), 0.25);

  // Cubic Hermite reproduces cubics exactly.
  auto f = [](double t) { return 2 * t * t * t - t * t + 3 * t - 1; };
  auto df = [](double t) { return 6 * t * t - 2 * t + 3; };
  HistoryBuffer cub(1, 5.0, Eigen::VectorXd(Eigen::VectorXd::Zero(1)));
  for (double t : {0.0, 0.5, 1.25}) cub.push(t, Eigen::VectorXd::Constant(1, f(t)), Eigen::VectorXd::Constant(1, df(t)));
  for (double t : {0.1, 0.3, 0.77, 1.0, 1.2}) EXPECT_NEAR(cub.value(t, 0), f(t), 1e-13);
}

TEST(HistoryBuffer, RejectsFutureQueriesAndOutOfOrderSamples) {
  HistoryBuffer h(1, 0.5, Eigen::VectorXd(Eigen::VectorXd::Zero(1)));
  for (int k = 0; k <= 20; ++k) h.push(0.1 * k, Eigen::VectorXd::Constant(1, k));
  EXPECT_THROW(h.value(2.05, 0), std::out_of_range);
  EXPECT_THROW(h.push(2.0, Eigen::VectorXd::Zero(1)), std::invalid_argument);
  // Older than the retained window.
  EXPECT_THROW(h.value(0.5, 0), std::out_of_range);
  EXPECT_NO_THROW(h.value(1.5, 0));
  EXPECT_LE(h.earliest_time(), 2.0 - 0.5);
}

TEST(Dde, DelayedDecayMatchesClosedFormAtOneAndTwo) {
  const double delays[] = {1.0};
  DdeRhs rhs = [](const DelayedState& s) { return Eigen::VectorXd::Constant(1, -s.lag(0, 1.0)); };
  const auto sol = integrate_dde(rhs, Eigen::VectorXd::Ones(1), 2.0, 1e-3, delays);
  ASSERT_EQ(sol.times.size(), 2001u);
  EXPECT_NEAR(sol.states[1000][0], 0.0, 1e-6);
  EXPECT_NEAR(sol.states[2000][0], -0.5, 1e-6);
  EXPECT_DOUBLE_EQ(sol.times.back(), 2.0);
}

TEST(Dde, ZeroDelayReducesToOde) {
  DdeRhs rhs = [](const DelayedState& s) { return Eigen::VectorXd::Constant(1, -s.now(0)); };
  const auto sol = integrate_dde(rhs, Eigen::VectorXd::Ones(1), 1.0, 1e-3, std::vector<double>{});
  EXPECT_NEAR(sol.states.back()[0], std::exp(-1.0), 1e-9);
}

// On [0, 4] the exact solution is piecewise polynomial of degree <= 4 and the
// scheme reproduces it to rounding, so the convergence order is measured
// where truncation error is visible.
TEST(Dde, FourthOrderConvergenceOnDelayedDecay) {
  for (double t_end : {5.0, 6.0}) {
    const double e1 = delayed_decay_error(1e-2, t_end);
    const double e2 = delayed_decay_error(5e-3, t_end);
    EXPECT_GT(e1, 0.0);
    EXPECT_GE(e1 / e2, 8.0) << "t=" << t_end << " e1=" << e1 << " e2=" << e2;
  }
  const double c1 = delayed_decay_error(0.1, 8.0);
  const double c2 = delayed_decay_error(0.05, 8.0);
  EXPECT_GE(c1 / c2, 8.0);
}

TEST(Dde, StepSizeGuard) {
  const double delays[] = {0.05, 0.2};
  EXPECT_NO_THROW(check_step_size(0.01, delays));
  EXPECT_THROW(check_step_size(0.011, delays), std::invalid_argument);
  EXPECT_THROW(check_step_size(0.0, delays), std::invalid_argument);
  EXPECT_THROW(step_count(1.0, 0.3), std::invalid_argument);
  EXPECT_EQ(step_count(1.0, 0.25), 4u);
}

TEST(Dde, NonFiniteStateIsSignalled) {
  DdeRhs rhs = [](const DelayedState& s) {
    return Eigen::VectorXd::Constant(1, s.time() > 0.5 ? std::numeric_limits<double>::infinity() : 0.0);
  };
  EXPECT_THROW(integrate_dde(rhs, Eigen::VectorXd::Ones(1), 1.0, 0.01, std::vector<double>{}), NonFiniteError);
}

TEST(Dde, ProjectionIsAppliedEveryStep) {
  DdeRhs rhs = [](const DelayedState&) { return Eigen::VectorXd::Constant(1, -1.0); };
  DdeProjection clamp = [](Eigen::VectorXd& y) { y[0] = std::max(y[0], 0.25); };
  const auto sol = integrate_dde(rhs, Eigen::VectorXd::Ones(1), 2.0, 0.01, std::vector<double>{}, clamp);
  for (const auto& y : sol.states) EXPECT_GE(y[0], 0.25);
  EXPECT_DOUBLE_EQ(sol.states.back()[0], 0.25);
}

TEST(Dde, GridTimesAreExactMultiples) {
  const double delays[] = {0.3};
  DdeRhs rhs = [](const DelayedState& s) { return Eigen::VectorXd::Constant(1, -s.lag(0, 0.3)); };
  const auto sol = integrate_dde(rhs, Eigen::VectorXd::Ones(1), 3.0, 0.01, delays);
  for (std::size_t k = 0; k < sol.times.size(); ++k) EXPECT_EQ(sol.times[k], 0.01 * static_cast<double>(k));
}
