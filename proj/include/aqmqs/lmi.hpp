#pragma once

// Small dense semidefinite feasibility solver.
//
// Given M(theta) = M0 + sum_k theta_k M_k (symmetric d x d), it maximises t
// subject to M(theta) - t I >= 0, box bounds on every variable, strict
// positivity of diagonal-positive variables and P_g(theta) - eps I >= 0 for
// each positive-definite group. The method is a primal log-det barrier with
// damped Newton centering.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace aqmqs::lmi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class VarKind { Free, DiagPositive, SymEntry };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Free;
  double bound = 1e4;  // |theta| <= bound (upper bound for DiagPositive)
  int group = -1;      // SymEntry: owning positive-definite group
  Index row = 0, col = 0;
};

struct PdGroup {
  std::string name;
  Index dim = 0;
  double eps = 1e-9;
};

class AffineMatrixMap {
 public:
  AffineMatrixMap() = default;
  explicit AffineMatrixMap(MatrixXd constant) : m0_(std::move(constant)) {
    check_symmetric(m0_, "constant term");
  }

  Index dim() const { return m0_.rows(); }
  std::size_t size() const { return vars_.size(); }
  const MatrixXd& constant() const { return m0_; }
  const MatrixXd& coefficient(std::size_t k) const { return coeffs_[k]; }
  const Variable& variable(std::size_t k) const { return vars_[k]; }
  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<PdGroup>& groups() const { return groups_; }

  std::size_t add_variable(Variable v, MatrixXd coeff) {
    if (coeff.rows() != dim() || coeff.cols() != dim())
      throw std::invalid_argument("coefficient of '" + v.name + "' has wrong size");
    check_symmetric(coeff, v.name);
    if (!(v.bound > 0.0)) throw std::invalid_argument("variable bound must be positive");
    if (v.kind == VarKind::SymEntry) {
      if (v.group < 0 || static_cast<std::size_t>(v.group) >= groups_.size())
        throw std::invalid_argument("symmetric entry refers to an unknown group");
      const Index gd = groups_[static_cast<std::size_t>(v.group)].dim;
      if (v.row < 0 || v.col < 0 || v.row >= gd || v.col >= gd || v.row > v.col)
        throw std::invalid_argument("symmetric entry index must be in the upper triangle");
    }
    vars_.push_back(std::move(v));
    coeffs_.push_back(std::move(coeff));
    return vars_.size() - 1;
  }

  std::size_t add_free(std::string name, MatrixXd coeff, double bound = 1e4) {
    return add_variable({std::move(name), VarKind::Free, bound}, std::move(coeff));
  }
  std::size_t add_diag_positive(std::string name, MatrixXd coeff, double bound = 1e4) {
    return add_variable({std::move(name), VarKind::DiagPositive, bound}, std::move(coeff));
  }
  int add_group(std::string name, Index group_dim, double eps = 1e-9) {
    groups_.push_back({std::move(name), group_dim, eps});
    return static_cast<int>(groups_.size()) - 1;
  }
  std::size_t add_sym_entry(std::string name, int group, Index row, Index col, MatrixXd coeff,
                            double bound = 1e4) {
    Variable v{std::move(name), VarKind::SymEntry, bound, group, row, col};
    return add_variable(std::move(v), std::move(coeff));
  }

  MatrixXd evaluate(const VectorXd& theta) const {
    check_theta(theta);
    MatrixXd out = m0_;
    for (std::size_t k = 0; k < vars_.size(); ++k)
      if (theta[static_cast<Index>(k)] != 0.0) out += theta[static_cast<Index>(k)] * coeffs_[k];
    return out;
  }

  /// Symmetric matrix of group g reassembled from its entry variables.
  MatrixXd group_matrix(int g, const VectorXd& theta) const {
    const Index gd = groups_.at(static_cast<std::size_t>(g)).dim;
    MatrixXd P = MatrixXd::Zero(gd, gd);
    for (std::size_t k = 0; k < vars_.size(); ++k) {
      const auto& v = vars_[k];
      if (v.kind != VarKind::SymEntry || v.group != g) continue;
      P(v.row, v.col) = theta[static_cast<Index>(k)];
      P(v.col, v.row) = theta[static_cast<Index>(k)];
    }
    return P;
  }

  void check_theta(const VectorXd& theta) const {
    if (static_cast<std::size_t>(theta.size()) != vars_.size())
      throw std::invalid_argument("theta has the wrong number of entries");
  }

  /// Build the map from an evaluator that is affine in theta.
  static AffineMatrixMap from_affine(const std::function<MatrixXd(const VectorXd&)>& f,
                                     std::vector<Variable> vars, std::vector<PdGroup> groups = {}) {
    const auto n = static_cast<Index>(vars.size());
    MatrixXd m0 = f(VectorXd::Zero(n));
    m0 = (0.5 * (m0 + m0.transpose())).eval();
    AffineMatrixMap map(m0);
    map.groups_ = std::move(groups);
    for (Index k = 0; k < n; ++k) {
      VectorXd ek = VectorXd::Zero(n);
      ek[k] = 1.0;
      MatrixXd mk = f(ek) - m0;
      mk = (0.5 * (mk + mk.transpose())).eval();
      map.add_variable(std::move(vars[static_cast<std::size_t>(k)]), std::move(mk));
    }
    return map;
  }

 private:
  static void check_symmetric(const MatrixXd& m, const std::string& what) {
    if (m.rows() != m.cols()) throw std::invalid_argument(what + " is not square");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw std::invalid_argument(what + " is not symmetric");
  }

  MatrixXd m0_;
  std::vector<Variable> vars_;
  std::vector<MatrixXd> coeffs_;
  std::vector<PdGroup> groups_;
};

enum class Verdict { Feasible, InfeasibleWithinBudget };

inline const char* to_string(Verdict v) {
  return v == Verdict::Feasible ? "feasible" : "infeasible-within-budget";
}

struct TraceRow {
  int iteration = 0;
  double t = 0.0;
  double step = 0.0;
  double barrier_weight = 0.0;
};

struct FeasibilityResult {
  Verdict verdict = Verdict::InfeasibleWithinBudget;
  VectorXd theta;
  double lambda_min = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();  // bound on the optimal t
  int iterations = 0;
  std::string status;
  std::vector<TraceRow> trace;

  bool feasible() const { return verdict == Verdict::Feasible; }
};

struct SolverOptions {
  double tol = 0.0;              // feasible iff achieved lambda_min >= tol
  int max_iterations = 400;      // Newton iterations
  double gap = 1e-8;             // stop when m/s < gap * max(1, |t|)
  double barrier_growth = 10.0;
  bool stop_when_feasible = false;
  bool record_trace = false;
};

namespace detail {

// Log-det barrier contribution of F(y) = F0 + sum_j y_j F_j over a subset
// of the variables.
struct LmiBlock {
  MatrixXd F0;
  std::vector<std::pair<Index, MatrixXd>> terms;  // (variable index in y, F_j)

  std::optional<Eigen::LLT<MatrixXd>> factor(const VectorXd& y) const {
    MatrixXd F = F0;
    for (const auto& [j, Fj] : terms)
      if (y[j] != 0.0) F += y[j] * Fj;
    Eigen::LLT<MatrixXd> llt(F);
    if (llt.info() != Eigen::Success) return std::nullopt;
    // Reject numerically indefinite factors.
    const auto& d = llt.matrixLLT().diagonal();
    if (!(d.array() > 0.0).all() || !d.allFinite()) return std::nullopt;
    return llt;
  }

  static double logdet(const Eigen::LLT<MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }

  void accumulate(const Eigen::LLT<MatrixXd>& llt, VectorXd& grad, MatrixXd& hess) const {
    std::vector<MatrixXd> G;
    G.reserve(terms.size());
    const auto L = llt.matrixL();
    for (const auto& term : terms) {
      MatrixXd X = L.solve(term.second);
      MatrixXd Gj = L.solve(X.transpose());
      G.push_back(std::move(Gj));
    }
    for (std::size_t a = 0; a < terms.size(); ++a) {
      const Index ja = terms[a].first;
      grad[ja] -= G[a].trace();
      for (std::size_t b = a; b < terms.size(); ++b) {
        const Index jb = terms[b].first;
        const double v = G[a].cwiseProduct(G[b]).sum();
        hess(ja, jb) += v;
        if (a != b) hess(jb, ja) += v;
      }
    }
  }
};

}  // namespace detail

/// Default interior starting point: zero for free variables, half the bound
/// (at most 1) for positive scalars and a scaled identity for PD groups.
inline VectorXd default_start(const AffineMatrixMap& map) {
  VectorXd theta = VectorXd::Zero(static_cast<Index>(map.size()));
  for (std::size_t k = 0; k < map.size(); ++k) {
    const auto& v = map.variable(k);
    if (v.kind == VarKind::DiagPositive) theta[static_cast<Index>(k)] = std::min(1.0, 0.5 * v.bound);
    if (v.kind == VarKind::SymEntry && v.row == v.col)
      theta[static_cast<Index>(k)] = std::min(1.0, 0.5 * v.bound);
  }
  return theta;
}

inline FeasibilityResult solve_sdp_feasibility(const AffineMatrixMap& map,
                                               const SolverOptions& opt = {},
                                               std::optional<VectorXd> start = std::nullopt) {
  const auto nv = static_cast<Index>(map.size());
  const Index d = map.dim();
  const Index ny = nv + 1;  // y = (theta, t)
  FeasibilityResult res;
  if (d == 0) throw std::invalid_argument("matrix map has zero dimension");

  // Barrier blocks.
  std::vector<detail::LmiBlock> blocks;
  {
    detail::LmiBlock main;
    main.F0 = map.constant();
    for (Index k = 0; k < nv; ++k) {
      const MatrixXd& c = map.coefficient(static_cast<std::size_t>(k));
      if (c.cwiseAbs().maxCoeff() > 0.0) main.terms.emplace_back(k, c);
    }
    main.terms.emplace_back(nv, -MatrixXd::Identity(d, d));
    blocks.push_back(std::move(main));
  }
  for (std::size_t g = 0; g < map.groups().size(); ++g) {
    const auto& grp = map.groups()[g];
    detail::LmiBlock b;
    b.F0 = -grp.eps * MatrixXd::Identity(grp.dim, grp.dim);
    for (Index k = 0; k < nv; ++k) {
      const auto& v = map.variable(static_cast<std::size_t>(k));
      if (v.kind != VarKind::SymEntry || v.group != static_cast<int>(g)) continue;
      MatrixXd E = MatrixXd::Zero(grp.dim, grp.dim);
      E(v.row, v.col) = 1.0;
      E(v.col, v.row) = 1.0;
      b.terms.emplace_back(k, std::move(E));
    }
    blocks.push_back(std::move(b));
  }
  VectorXd lo(nv), hi(nv);
  for (Index k = 0; k < nv; ++k) {
    const auto& v = map.variable(static_cast<std::size_t>(k));
    hi[k] = v.bound;
    lo[k] = v.kind == VarKind::DiagPositive ? 0.0 : -v.bound;
  }
  double degree = 0.0;
  for (const auto& b : blocks) degree += static_cast<double>(b.F0.rows());
  degree += 2.0 * static_cast<double>(nv);

  VectorXd theta = start ? *start : default_start(map);
  map.check_theta(theta);
  for (Index k = 0; k < nv; ++k) {
    if (!(theta[k] > lo[k] && theta[k] < hi[k]))
      throw std::invalid_argument("starting point is not strictly inside the variable bounds");
  }
  const double lmin0 = [&] {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(map.evaluate(theta), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }();
  VectorXd y(ny);
  y.head(nv) = theta;
  y[nv] = lmin0 - (0.5 * std::abs(lmin0) + 1e-3);

  auto barrier = [&](const VectorXd& yy, std::vector<Eigen::LLT<MatrixXd>>* factors) -> std::optional<double> {
    double phi = 0.0;
    for (Index k = 0; k < nv; ++k) {
      const double a = yy[k] - lo[k];
      const double b = hi[k] - yy[k];
      if (!(a > 0.0 && b > 0.0)) return std::nullopt;
      phi -= std::log(a) + std::log(b);
    }
    for (const auto& blk : blocks) {
      auto f = blk.factor(yy);
      if (!f) return std::nullopt;
      phi -= detail::LmiBlock::logdet(*f);
      if (factors) factors->push_back(std::move(*f));
    }
    return phi;
  };

  std::vector<Eigen::LLT<MatrixXd>> factors;
  if (!barrier(y, &factors)) {
    // Pure group / box infeasibility of the starting point.
    throw std::invalid_argument("starting point violates a positive-definite group constraint");
  }
  double s = std::max(1e-6, factors.front().solve(MatrixXd::Identity(d, d)).trace());
  int iters = 0;
  res.status = "budget exhausted";
  bool done = false;
  while (!done) {
    // Centering by damped Newton.
    for (;;) {
      if (iters >= opt.max_iterations) {
        done = true;
        break;
      }
      factors.clear();
      const auto phi = barrier(y, &factors);
      VectorXd grad = VectorXd::Zero(ny);
      MatrixXd hess = MatrixXd::Zero(ny, ny);
      for (Index k = 0; k < nv; ++k) {
        const double a = y[k] - lo[k];
        const double b = hi[k] - y[k];
        grad[k] += -1.0 / a + 1.0 / b;
        hess(k, k) += 1.0 / (a * a) + 1.0 / (b * b);
      }
      for (std::size_t bi = 0; bi < blocks.size(); ++bi) blocks[bi].accumulate(factors[bi], grad, hess);
      grad[nv] -= s;
      const double f0 = -s * y[nv] + *phi;

      Eigen::LDLT<MatrixXd> ldlt(hess);
      VectorXd dy = ldlt.solve(-grad);
      if (!dy.allFinite()) {
        hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
        dy = Eigen::LDLT<MatrixXd>(hess).solve(-grad);
      }
      const double dec2 = -grad.dot(dy);
      ++iters;
      if (!(dec2 > 0.0) || !std::isfinite(dec2)) break;

      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        const VectorXd yn = y + alpha * dy;
        const auto phin = barrier(yn, nullptr);
        if (phin && (-s * yn[nv] + *phin) <= f0 - 0.25 * alpha * dec2) {
          y = yn;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (opt.record_trace) res.trace.push_back({iters, y[nv], accepted ? alpha : 0.0, s});
      if (!accepted || dec2 < 1e-9) break;
    }
    const double gap = degree / s;
    res.upper_bound = y[nv] + gap;
    if (done) break;
    if (opt.stop_when_feasible && y[nv] >= opt.tol) {
      res.status = "feasible point found";
      break;
    }
    if (res.upper_bound < opt.tol) {
      res.status = "optimum below tolerance";
      break;
    }
    if (gap < opt.gap * std::max(1.0, std::abs(y[nv]))) {
      res.status = "converged";
      break;
    }
    s *= opt.barrier_growth;
  }

  res.theta = y.head(nv);
  res.iterations = iters;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(map.evaluate(res.theta), Eigen::EigenvaluesOnly);
  res.lambda_min = es.eigenvalues()(0);
  bool cones_ok = true;
  for (std::size_t g = 0; g < map.groups().size(); ++g) {
    Eigen::LLT<MatrixXd> llt(map.group_matrix(static_cast<int>(g), res.theta));
    if (llt.info() != Eigen::Success) cones_ok = false;
  }
  for (Index k = 0; k < nv; ++k)
    if (map.variable(static_cast<std::size_t>(k)).kind == VarKind::DiagPositive && !(res.theta[k] > 0.0))
      cones_ok = false;
  res.verdict = (cones_ok && res.lambda_min >= opt.tol) ? Verdict::Feasible
                                                        : Verdict::InfeasibleWithinBudget;
  return res;
}

/// CSV dump of a solver trace: iteration,t,step,barrier_weight.
inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration,t,step,barrier_weight\n";
  for (const auto& r : trace) os << r.iteration << ',' << r.t << ',' << r.step << ',' << r.barrier_weight << '\n';
}

}  // namespace aqmqs::lmi
