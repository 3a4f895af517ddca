#pragma once

// Quadratic-separation stability conditions for the closed loop
//   dX = A X + A_d [x(t - tau^f); b] + B K1 x(t - tau) + B K2 b(t - tau^b).
//
// Block ordering used throughout (N sources, X = [x; b] of size N+1):
//   z = [dX, x, b*1, x, dx, db*1, dx]                          (7N+1)
//   w = [X, x(t-tau^f), b(t-tau^b), x(t-tau), w1, w2, w3]      (7N+1)
//   xi = [X, x(t-tau^f), b(t-tau^b), x(t-tau)]                 (4N+1)
// with w1 = x - x(t-tau^f), w2 = b*1 - b(t-tau^b), w3 = x - x(t-tau).

#include <cmath>
#include <limits>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqmqs/fluid_model.hpp"

namespace aqmqs {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Ad_bar = A_d [I_N; 0], E1 = [I_N 0], E2 = [0_N 1].
struct HelperMatrices {
  MatrixXd Ad_bar;  // (N+1) x N
  MatrixXd E1;      // N x (N+1)
  MatrixXd E2;      // N x (N+1)
};

inline HelperMatrices build_helper_matrices(const LinearModel& m) {
  const auto n = static_cast<Index>(m.n_sources);
  if (m.A_d.rows() != n + 1 || m.A_d.cols() != n + 1)
    throw std::invalid_argument("A_d must be (N+1)x(N+1)");
  HelperMatrices h;
  h.Ad_bar = m.A_d.leftCols(n);
  h.E1 = MatrixXd::Zero(n, n + 1);
  h.E1.leftCols(n).setIdentity();
  h.E2 = MatrixXd::Zero(n, n + 1);
  h.E2.col(n).setOnes();
  return h;
}

/// Decision variables of the delay-dependent separator.
struct SeparatorVariables {
  MatrixXd P;  // (N+1)x(N+1), symmetric positive definite
  VectorXd q0f, q0b, q0, q1f, q1b, q1;

  static SeparatorVariables identity(std::size_t n_sources) {
    const auto n = static_cast<Index>(n_sources);
    SeparatorVariables v;
    v.P = MatrixXd::Identity(n + 1, n + 1);
    v.q0f = v.q0b = v.q0 = v.q1f = v.q1b = v.q1 = VectorXd::Ones(n);
    return v;
  }

  SeparatorVariables scaled(double s) const {
    SeparatorVariables v = *this;
    v.P *= s;
    v.q0f *= s;
    v.q0b *= s;
    v.q0 *= s;
    v.q1f *= s;
    v.q1b *= s;
    v.q1 *= s;
    return v;
  }

  void check(std::size_t n_sources) const {
    const auto n = static_cast<Index>(n_sources);
    if (P.rows() != n + 1 || P.cols() != n + 1) throw std::invalid_argument("P must be (N+1)x(N+1)");
    for (const VectorXd* q : {&q0f, &q0b, &q0, &q1f, &q1b, &q1})
      if (q->size() != n) throw std::invalid_argument("separator diagonals must have N entries");
  }
};

/// Printed: lower-right blocks Q1 T and Q1^f T^f exactly as published.
/// Exact: lower-right blocks Q1 and Q1^f, whose Schur complement equals
/// (N1+N2)' Theta (N1+N2), i.e. the full kernel condition.
enum class DdForm { Printed, Exact };

inline const char* to_string(DdForm f) { return f == DdForm::Printed ? "printed" : "exact"; }

struct DdConditionBlocks {
  DdForm form = DdForm::Exact;
  std::size_t n_sources = 0;
  MatrixXd Ad_bar, E1, E2;
  MatrixXd T, Tf, Tb;      // diagonal delay matrices
  MatrixXd Theta11, Theta12, Theta22;
  MatrixXd Theta;          // (14N+2) square
  MatrixXd N1, N2;         // (14N+2) x (4N+1)
  MatrixXd Xi1;            // (4N+1) square
  MatrixXd Xi2;            // (4N+1) x N
  MatrixXd M;              // (6N+1) square

  /// (N1+N2)' Theta (N1+N2) = Xi1 + N2' Theta N2.
  MatrixXd congruent() const {
    const MatrixXd Nt = N1 + N2;
    MatrixXd out = Nt.transpose() * Theta * Nt;
    return 0.5 * (out + out.transpose());
  }
};

namespace detail {

inline MatrixXd block_diag(const std::vector<MatrixXd>& blocks) {
  Index r = 0, c = 0;
  for (const auto& b : blocks) {
    r += b.rows();
    c += b.cols();
  }
  MatrixXd out = MatrixXd::Zero(r, c);
  r = c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

inline MatrixXd diag(const VectorXd& v) { return v.asDiagonal(); }

inline void check_gain_shapes(const LinearModel& m, const MatrixXd& K1, const MatrixXd& K2) {
  const auto n = static_cast<Index>(m.n_sources);
  if (K1.rows() != n || K1.cols() != n || K2.rows() != n || K2.cols() != n)
    throw std::invalid_argument("gain matrices must be N x N");
  if (m.A.rows() != n + 1 || m.B.rows() != n + 1 || m.B.cols() != n)
    throw std::invalid_argument("linear model matrices have inconsistent dimensions");
  if (m.tau.size() != n || m.tau_f.size() != n || m.tau_b.size() != n)
    throw std::invalid_argument("delay vectors must have N entries");
}

}  // namespace detail

inline DdConditionBlocks assemble_dd_condition(const LinearModel& m, const MatrixXd& K1,
                                               const MatrixXd& K2, const SeparatorVariables& v,
                                               DdForm form = DdForm::Exact) {
  detail::check_gain_shapes(m, K1, K2);
  v.check(m.n_sources);
  for (Index i = 0; i < m.tau.size(); ++i)
    if (!(m.tau[i] > 0.0 && m.tau_f[i] >= 0.0 && m.tau_b[i] > 0.0))
      throw std::invalid_argument("delays must be positive (forward delay may be zero)");

  const auto n = static_cast<Index>(m.n_sources);
  const Index nx = n + 1;
  const Index nxi = 4 * n + 1;
  const Index nz = 7 * n + 1;
  using detail::diag;

  DdConditionBlocks d;
  d.form = form;
  d.n_sources = m.n_sources;
  const HelperMatrices hm = build_helper_matrices(m);
  d.Ad_bar = hm.Ad_bar;
  d.E1 = hm.E1;
  d.E2 = hm.E2;
  d.T = diag(m.tau);
  d.Tf = diag(m.tau_f);
  d.Tb = diag(m.tau_b);

  const VectorXd tf2 = m.tau_f.array().square();
  const VectorXd tb2 = m.tau_b.array().square();
  const VectorXd t2 = m.tau.array().square();
  const MatrixXd Zx = MatrixXd::Zero(nx, nx);
  d.Theta11 = detail::block_diag({Zx, diag(-v.q0f), diag(-v.q0b), diag(-v.q0),
                                  diag(-v.q1f.cwiseProduct(tf2)), diag(-v.q1b.cwiseProduct(tb2)),
                                  diag(-v.q1.cwiseProduct(t2))});
  d.Theta12 = MatrixXd::Zero(nz, nz);
  d.Theta12.topLeftCorner(nx, nx) = -v.P;
  d.Theta22 = detail::block_diag({Zx, diag(v.q0f), diag(v.q0b), diag(v.q0), diag(v.q1f),
                                  diag(v.q1b), diag(v.q1)});
  d.Theta.resize(2 * nz, 2 * nz);
  d.Theta << d.Theta11, d.Theta12, d.Theta12.transpose(), d.Theta22;

  const MatrixXd& A = m.A;
  const MatrixXd& Ad = d.Ad_bar;
  const MatrixXd& E1 = d.E1;
  const MatrixXd& E2 = d.E2;
  MatrixXd E121(3 * n, nx);
  E121 << E1, E2, E1;

  // N1: rows of the kernel parametrisation that do not involve the gains.
  d.N1 = MatrixXd::Zero(2 * nz, nxi);
  Index r = 0;
  d.N1.block(r, 0, nx, nx) = A;
  d.N1.block(r, nx, nx, n) = Ad;
  r += nx;
  d.N1.block(r, 0, 3 * n, nx) = E121;
  r += 3 * n;
  d.N1.block(r, 0, n, nx) = E1 * A;
  d.N1.block(r, nx, n, n) = E1 * Ad;
  r += n;
  d.N1.block(r, nx, n, n) = E2 * Ad;
  r += n;
  d.N1.block(r, 0, n, nx) = E1 * A;
  d.N1.block(r, nx, n, n) = E1 * Ad;
  r += n;
  d.N1.block(r, 0, nxi, nxi).setIdentity();
  r += nxi;
  d.N1.block(r, 0, 3 * n, nx) = E121;
  d.N1.block(r, nx, 3 * n, 3 * n) = -MatrixXd::Identity(3 * n, 3 * n);

  // N2: the gain-dependent rows.
  const MatrixXd BK1 = m.B * K1;
  const MatrixXd BK2 = m.B * K2;
  const Index kc = 2 * n + 1;  // first column of the b(t-tau^b) block
  d.N2 = MatrixXd::Zero(2 * nz, nxi);
  d.N2.block(0, kc, nx, n) = BK2;
  d.N2.block(0, kc + n, nx, n) = BK1;
  r = nx + 3 * n;
  d.N2.block(r, kc, n, n) = E1 * BK2;
  d.N2.block(r, kc + n, n, n) = E1 * BK1;
  r += 2 * n;
  d.N2.block(r, kc, n, n) = E1 * BK2;
  d.N2.block(r, kc + n, n, n) = E1 * BK1;

  const MatrixXd ThN1 = d.Theta * d.N1;
  d.Xi1 = d.N1.transpose() * ThN1 + d.N2.transpose() * ThN1 + ThN1.transpose() * d.N2;
  d.Xi1 = (0.5 * (d.Xi1 + d.Xi1.transpose())).eval();

  d.Xi2 = MatrixXd::Zero(nxi, n);
  d.Xi2.block(kc, 0, n, n) = (E1 * BK2).transpose();
  d.Xi2.block(kc + n, 0, n, n) = (E1 * BK1).transpose();

  const MatrixXd Q1T = diag(v.q1.cwiseProduct(m.tau));
  const MatrixXd Q1fTf = diag(v.q1f.cwiseProduct(m.tau_f));
  const MatrixXd lower1 = form == DdForm::Printed ? Q1T : diag(v.q1);
  const MatrixXd lower2 = form == DdForm::Printed ? Q1fTf : diag(v.q1f);

  const Index dm = nxi + 2 * n;
  d.M = MatrixXd::Zero(dm, dm);
  d.M.topLeftCorner(nxi, nxi) = d.Xi1;
  d.M.block(0, nxi, nxi, n) = d.Xi2 * Q1T;
  d.M.block(0, nxi + n, nxi, n) = d.Xi2 * Q1fTf;
  d.M.block(nxi, 0, n, nxi) = (d.Xi2 * Q1T).transpose();
  d.M.block(nxi + n, 0, n, nxi) = (d.Xi2 * Q1fTf).transpose();
  d.M.block(nxi, nxi, n, n) = lower1;
  d.M.block(nxi + n, nxi + n, n, n) = lower2;
  return d;
}

/// Descriptor pair (E, A_cal) of the delay-dependent interconnection, with
/// E z = A_cal w. Both are (10N+1) x (7N+1).
struct Interconnection {
  MatrixXd E;
  MatrixXd A_cal;
};

inline Interconnection build_dd_interconnection(const LinearModel& m, const MatrixXd& K1,
                                                const MatrixXd& K2) {
  detail::check_gain_shapes(m, K1, K2);
  const auto n = static_cast<Index>(m.n_sources);
  const Index nx = n + 1;
  const Index rows = 10 * n + 1;
  const Index cols = 7 * n + 1;
  const HelperMatrices hm = build_helper_matrices(m);
  const MatrixXd In = MatrixXd::Identity(n, n);

  Interconnection ic;
  ic.E = MatrixXd::Zero(rows, cols);
  ic.A_cal = MatrixXd::Zero(rows, cols);
  // Leading identity rows for dX and the three current-signal copies.
  ic.E.topLeftCorner(nx + 3 * n, nx + 3 * n).setIdentity();
  Index r = nx + 3 * n;
  const MatrixXd* sel[3] = {&hm.E1, &hm.E2, &hm.E1};
  for (int k = 0; k < 3; ++k) {
    ic.E.block(r + k * n, 0, n, nx) = *sel[k];
    ic.E.block(r + k * n, nx + 3 * n + k * n, n, n) = -In;
  }

  ic.A_cal.block(0, 0, nx, nx) = m.A;
  ic.A_cal.block(0, nx, nx, n) = hm.Ad_bar;
  ic.A_cal.block(0, nx + n, nx, n) = m.B * K2;
  ic.A_cal.block(0, nx + 2 * n, nx, n) = m.B * K1;
  for (int k = 0; k < 3; ++k) ic.A_cal.block(nx + k * n, 0, n, nx) = *sel[k];
  r = nx + 6 * n;
  for (int k = 0; k < 3; ++k) {
    ic.A_cal.block(r + k * n, 0, n, nx) = *sel[k];
    ic.A_cal.block(r + k * n, nx + k * n, n, n) = -In;
    ic.A_cal.block(r + k * n, nx + 3 * n + k * n, n, n) = -In;
  }
  return ic;
}

/// Delay-independent condition with E = I: [A_cal; I]' Theta_iod [A_cal; I].
struct IodCondition {
  MatrixXd A_cal;  // (4N+1) square
  MatrixXd Theta;  // 2(4N+1) square, 8x8 blocks
  MatrixXd M;      // (4N+1) square
};

inline IodCondition assemble_iod_condition(const LinearModel& m, const MatrixXd& K1,
                                           const MatrixXd& K2, const MatrixXd& P,
                                           const VectorXd& qf, const VectorXd& qb,
                                           const VectorXd& q) {
  detail::check_gain_shapes(m, K1, K2);
  const auto n = static_cast<Index>(m.n_sources);
  const Index nx = n + 1;
  const Index dim = 4 * n + 1;
  if (P.rows() != nx || P.cols() != nx) throw std::invalid_argument("P must be (N+1)x(N+1)");
  if (qf.size() != n || qb.size() != n || q.size() != n)
    throw std::invalid_argument("separator diagonals must have N entries");
  const HelperMatrices hm = build_helper_matrices(m);
  using detail::diag;

  IodCondition c;
  c.A_cal = MatrixXd::Zero(dim, dim);
  c.A_cal.block(0, 0, nx, nx) = m.A;
  c.A_cal.block(0, nx, nx, n) = hm.Ad_bar;
  c.A_cal.block(0, nx + n, nx, n) = m.B * K2;
  c.A_cal.block(0, nx + 2 * n, nx, n) = m.B * K1;
  c.A_cal.block(nx, 0, n, nx) = hm.E1;
  c.A_cal.block(nx + n, 0, n, nx) = hm.E2;
  c.A_cal.block(nx + 2 * n, 0, n, nx) = hm.E1;

  const MatrixXd Zx = MatrixXd::Zero(nx, nx);
  const MatrixXd T11 = detail::block_diag({Zx, diag(-qf), diag(-qb), diag(-q)});
  const MatrixXd T22 = detail::block_diag({Zx, diag(qf), diag(qb), diag(q)});
  MatrixXd T12 = MatrixXd::Zero(dim, dim);
  T12.topLeftCorner(nx, nx) = -P;
  c.Theta.resize(2 * dim, 2 * dim);
  c.Theta << T11, T12, T12.transpose(), T22;

  MatrixXd basis(2 * dim, dim);
  basis << c.A_cal, MatrixXd::Identity(dim, dim);
  c.M = basis.transpose() * c.Theta * basis;
  c.M = (0.5 * (c.M + c.M.transpose())).eval();
  return c;
}

inline double min_eigenvalue(const MatrixXd& S) {
  if (S.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Strict positivity test: lambda_min >= eps * (trace / dim) and lambda_min > 0.
inline bool certified_positive(const MatrixXd& S, double eps = 1e-8) {
  const double lmin = min_eigenvalue(S);
  const double scale = std::abs(S.trace()) / static_cast<double>(S.rows());
  return lmin > 0.0 && lmin >= eps * scale;
}

/// Orthonormal basis of ker [E  -A_cal].
inline MatrixXd kernel_basis(const MatrixXd& E, const MatrixXd& A_cal) {
  if (E.rows() != A_cal.rows()) throw std::invalid_argument("E and A_cal need equal row counts");
  MatrixXd G(E.rows(), E.cols() + A_cal.cols());
  G << E, -A_cal;
  Eigen::JacobiSVD<MatrixXd> svd(G, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = std::max(G.rows(), G.cols()) * std::numeric_limits<double>::epsilon() *
                     (sv.size() ? sv(0) : 0.0);
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  const Index k = G.cols() - rank;
  if (k == 0) throw std::domain_error("[E -A_cal] has full column rank: the kernel is trivial");
  return svd.matrixV().rightCols(k);
}

/// lambda_min of basis' Theta basis for an orthonormal kernel basis.
inline double kernel_form_min_eigenvalue(const MatrixXd& E, const MatrixXd& A_cal,
                                         const MatrixXd& Theta) {
  const MatrixXd Nk = kernel_basis(E, A_cal);
  if (Theta.rows() != Nk.rows() || Theta.cols() != Nk.rows())
    throw std::invalid_argument("Theta size does not match [E -A_cal]");
  return min_eigenvalue(Nk.transpose() * Theta * Nk);
}

inline bool kernel_form_check(const MatrixXd& E, const MatrixXd& A_cal, const MatrixXd& Theta,
                              double tol = 1e-9) {
  return kernel_form_min_eigenvalue(E, A_cal, Theta) > tol;
}

}  // namespace aqmqs
