#pragma once

// Stability certificates for given gains and the alternating synthesis of
// structured state-feedback gains.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqmqs/aqm.hpp"
#include "aqmqs/fluid_model.hpp"
#include "aqmqs/lmi.hpp"
#include "aqmqs/qs_stability.hpp"

namespace aqmqs {

struct CertifyOptions {
  DdForm form = DdForm::Exact;
  double variable_bound = 1.0;  // box bound on P entries and Q diagonals
  double gain_bound = 1.0;      // box bound on K entries during synthesis
  double eps = 1e-8;            // strictness: lambda_min >= eps * trace / dim
  lmi::SolverOptions solver = {};
};

/// Outcome of a certificate search with the gains held fixed.
struct GainCertificate {
  bool certified = false;
  DdForm form = DdForm::Exact;
  SeparatorVariables vars;
  Eigen::MatrixXd M;
  double lambda_min = -std::numeric_limits<double>::infinity();
  double trace_scale = 0.0;  // trace(M) / dim
  lmi::FeasibilityResult solve;
};

namespace detail {

// theta layout for the step-1 problem: upper triangle of P (row-major), then
// q0f, q0b, q0, q1f, q1b, q1.
inline std::size_t p_entry_count(Index n) { return static_cast<std::size_t>((n + 1) * (n + 2) / 2); }

inline SeparatorVariables decode_separator(const VectorXd& theta, Index n) {
  SeparatorVariables v;
  v.P = MatrixXd::Zero(n + 1, n + 1);
  Index k = 0;
  for (Index r = 0; r <= n; ++r)
    for (Index c = r; c <= n; ++c, ++k) v.P(r, c) = v.P(c, r) = theta[k];
  for (VectorXd* q : {&v.q0f, &v.q0b, &v.q0, &v.q1f, &v.q1b, &v.q1}) {
    *q = theta.segment(k, n);
    k += n;
  }
  return v;
}

inline lmi::AffineMatrixMap separator_map(const LinearModel& m, const MatrixXd& K1,
                                          const MatrixXd& K2, const CertifyOptions& opt) {
  const auto n = static_cast<Index>(m.n_sources);
  std::vector<lmi::Variable> vars;
  for (Index r = 0; r <= n; ++r)
    for (Index c = r; c <= n; ++c)
      vars.push_back({"P(" + std::to_string(r) + "," + std::to_string(c) + ")", lmi::VarKind::SymEntry,
                      opt.variable_bound, 0, r, c});
  for (const char* name : {"q0f", "q0b", "q0", "q1f", "q1b", "q1"})
    for (Index i = 0; i < n; ++i)
      vars.push_back({std::string(name) + "_" + std::to_string(i + 1), lmi::VarKind::DiagPositive,
                      opt.variable_bound});
  auto f = [&](const VectorXd& theta) {
    return assemble_dd_condition(m, K1, K2, decode_separator(theta, n), opt.form).M;
  };
  return lmi::AffineMatrixMap::from_affine(f, std::move(vars), {{"P", n + 1, 1e-9}});
}

}  // namespace detail

/// Judge a given (M, separator) pair with the strictness rule.
inline GainCertificate judge_certificate(const LinearModel& m, const MatrixXd& K1, const MatrixXd& K2,
                                         const SeparatorVariables& v, const CertifyOptions& opt) {
  GainCertificate c;
  c.form = opt.form;
  c.vars = v;
  c.M = assemble_dd_condition(m, K1, K2, v, opt.form).M;
  c.lambda_min = min_eigenvalue(c.M);
  c.trace_scale = std::abs(c.M.trace()) / static_cast<double>(c.M.rows());
  bool cones = Eigen::LLT<MatrixXd>(v.P).info() == Eigen::Success;
  for (const VectorXd* q : {&v.q0f, &v.q0b, &v.q0, &v.q1f, &v.q1b, &v.q1})
    cones = cones && (q->array() > 0.0).all();
  c.certified = cones && certified_positive(c.M, opt.eps);
  return c;
}

/// Fix the gains and search (P, Q) maximising lambda_min of the condition
/// matrix. A certified result proves stability of the linear closed loop.
inline GainCertificate check_gains(const LinearModel& m, const StateFeedbackGains& gains,
                                   const CertifyOptions& opt = {}) {
  gains.validate(m.n_sources);
  const MatrixXd K1 = gains.K1();
  const MatrixXd K2 = gains.K2();
  const lmi::AffineMatrixMap map = detail::separator_map(m, K1, K2, opt);
  lmi::SolverOptions so = opt.solver;
  so.tol = 0.0;
  const lmi::FeasibilityResult res = lmi::solve_sdp_feasibility(map, so);
  GainCertificate c =
      judge_certificate(m, K1, K2, detail::decode_separator(res.theta, static_cast<Index>(m.n_sources)), opt);
  c.solve = res;
  return c;
}

struct SynthesisResult {
  bool converged = false;
  std::string status;
  int outer_iterations = 0;
  StateFeedbackGains gains;
  GainCertificate certificate;
  std::vector<double> step1_t;  // optimal margin of each step-1 problem
  std::vector<double> step2_t;
};

/// Alternation between the separator (gains fixed) and the gains together
/// with the Q0 blocks and Q1^b (P, Q1, Q1^f fixed). Each outer iteration runs
/// step 1 then, if not yet certified, step 2; a certified step ends the loop.
inline SynthesisResult synthesize_gains(const LinearModel& m, const StateFeedbackGains& k_init,
                                        int outer_budget, const CertifyOptions& opt = {}) {
  const auto n = static_cast<Index>(m.n_sources);
  k_init.validate(m.n_sources);
  SynthesisResult out;
  out.gains = k_init;
  if (outer_budget <= 0) {
    out.status = "outer budget is zero";
    return out;
  }
  for (Index i = 0; i < n; ++i) {
    if (!(std::abs(k_init.k1[i]) < opt.gain_bound && std::abs(k_init.k2[i]) < opt.gain_bound))
      throw std::invalid_argument("initial gains must lie inside the gain bound");
  }
  lmi::SolverOptions so = opt.solver;
  so.tol = -std::numeric_limits<double>::infinity();  // always optimise fully

  StateFeedbackGains K = k_init;
  for (int it = 1; it <= outer_budget; ++it) {
    out.outer_iterations = it;
    // Step 1: separator for the current gains.
    const MatrixXd K1 = K.K1(), K2 = K.K2();
    const lmi::AffineMatrixMap map1 = detail::separator_map(m, K1, K2, opt);
    const lmi::FeasibilityResult r1 = lmi::solve_sdp_feasibility(map1, so);
    const SeparatorVariables v1 = detail::decode_separator(r1.theta, n);
    out.step1_t.push_back(r1.lambda_min);
    GainCertificate c1 = judge_certificate(m, K1, K2, v1, opt);
    c1.solve = r1;
    out.gains = K;
    out.certificate = c1;
    if (c1.certified) {
      out.converged = true;
      out.status = "certified after step 1";
      return out;
    }

    // Step 2: gains plus the remaining Q blocks, with P, Q1, Q1^f held.
    std::vector<lmi::Variable> vars;
    for (Index i = 0; i < n; ++i) vars.push_back({"k1_" + std::to_string(i + 1), lmi::VarKind::Free, opt.gain_bound});
    for (Index i = 0; i < n; ++i) vars.push_back({"k2_" + std::to_string(i + 1), lmi::VarKind::Free, opt.gain_bound});
    for (const char* name : {"q0f", "q0b", "q0", "q1b"})
      for (Index i = 0; i < n; ++i)
        vars.push_back({std::string(name) + "_" + std::to_string(i + 1), lmi::VarKind::DiagPositive,
                        opt.variable_bound});
    auto unpack = [&](const VectorXd& th, StateFeedbackGains& g, SeparatorVariables& v) {
      g.k1 = th.segment(0, n);
      g.k2 = th.segment(n, n);
      v = v1;
      v.q0f = th.segment(2 * n, n);
      v.q0b = th.segment(3 * n, n);
      v.q0 = th.segment(4 * n, n);
      v.q1b = th.segment(5 * n, n);
    };
    auto f2 = [&](const VectorXd& th) {
      StateFeedbackGains g;
      SeparatorVariables v;
      unpack(th, g, v);
      return assemble_dd_condition(m, g.K1(), g.K2(), v, opt.form).M;
    };
    const lmi::AffineMatrixMap map2 = lmi::AffineMatrixMap::from_affine(f2, std::move(vars));
    VectorXd start(6 * n);
    start << K.k1, K.k2, v1.q0f, v1.q0b, v1.q0, v1.q1b;
    // The step-1 optimum may sit numerically on a box face; pull it inside.
    for (Index k = 2 * n; k < 6 * n; ++k)
      start[k] = std::clamp(start[k], 1e-12 * opt.variable_bound, (1.0 - 1e-12) * opt.variable_bound);
    const lmi::FeasibilityResult r2 = lmi::solve_sdp_feasibility(map2, so, start);
    out.step2_t.push_back(r2.lambda_min);
    StateFeedbackGains g2;
    SeparatorVariables v2;
    unpack(r2.theta, g2, v2);
    K = g2;
    GainCertificate c2 = judge_certificate(m, K.K1(), K.K2(), v2, opt);
    c2.solve = r2;
    out.gains = K;
    out.certificate = c2;
    if (c2.certified) {
      out.converged = true;
      out.status = "certified after step 2";
      return out;
    }
  }
  out.status = "not certified within the outer budget";
  return out;
}

/// Delay-independent certificate for fixed gains.
struct IodCertificate {
  bool certified = false;
  Eigen::MatrixXd P;
  Eigen::VectorXd qf, qb, q;
  Eigen::MatrixXd M;
  double lambda_min = -std::numeric_limits<double>::infinity();
  lmi::FeasibilityResult solve;
};

inline IodCertificate certify_iod(const LinearModel& m, const StateFeedbackGains& gains,
                                  const CertifyOptions& opt = {}) {
  gains.validate(m.n_sources);
  const auto n = static_cast<Index>(m.n_sources);
  const MatrixXd K1 = gains.K1(), K2 = gains.K2();
  std::vector<lmi::Variable> vars;
  for (Index r = 0; r <= n; ++r)
    for (Index c = r; c <= n; ++c)
      vars.push_back({"P(" + std::to_string(r) + "," + std::to_string(c) + ")", lmi::VarKind::SymEntry,
                      opt.variable_bound, 0, r, c});
  for (const char* name : {"qf", "qb", "q"})
    for (Index i = 0; i < n; ++i)
      vars.push_back({std::string(name) + "_" + std::to_string(i + 1), lmi::VarKind::DiagPositive,
                      opt.variable_bound});
  auto decode = [n](const VectorXd& th, IodCertificate& c) {
    c.P = MatrixXd::Zero(n + 1, n + 1);
    Index k = 0;
    for (Index r = 0; r <= n; ++r)
      for (Index col = r; col <= n; ++col, ++k) c.P(r, col) = c.P(col, r) = th[k];
    c.qf = th.segment(k, n);
    c.qb = th.segment(k + n, n);
    c.q = th.segment(k + 2 * n, n);
  };
  auto f = [&](const VectorXd& th) {
    IodCertificate c;
    decode(th, c);
    return assemble_iod_condition(m, K1, K2, c.P, c.qf, c.qb, c.q).M;
  };
  const auto map = lmi::AffineMatrixMap::from_affine(f, std::move(vars), {{"P", n + 1, 1e-9}});
  lmi::SolverOptions so = opt.solver;
  so.tol = 0.0;
  IodCertificate c;
  c.solve = lmi::solve_sdp_feasibility(map, so);
  decode(c.solve.theta, c);
  c.M = assemble_iod_condition(m, K1, K2, c.P, c.qf, c.qb, c.q).M;
  c.lambda_min = min_eigenvalue(c.M);
  c.certified = c.solve.feasible() && certified_positive(c.M, opt.eps);
  return c;
}

}  // namespace aqmqs
