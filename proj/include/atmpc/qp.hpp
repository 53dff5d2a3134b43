#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <limits>

#include "atmpc/errors.hpp"

namespace atmpc {

/// Convex quadratic program
///   minimize    1/2 x' hessian x + linear' x
///   subject to  ineq_A x <= ineq_b,  eq_A x == eq_b
struct QuadraticProgram {
  Eigen::SparseMatrix<double> hessian;
  Eigen::VectorXd linear;
  Eigen::SparseMatrix<double> ineq_A;
  Eigen::VectorXd ineq_b;
  Eigen::SparseMatrix<double> eq_A;
  Eigen::VectorXd eq_b;

  int vars() const { return static_cast<int>(linear.size()); }
};

struct QpSettings {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  int max_iter = 200000;
  double sigma = 1e-6;
  double alpha = 1.6;
  double rho = 0.1;
  double eq_rho_scale = 1e3;
  double infeas_tol = 1e-7;
  int check_interval = 25;
  bool polish = true;
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd dual;  // multipliers for [ineq; eq] rows
  double value = 0.0;
  int iterations = 0;
  bool polished = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpWork {
  Eigen::SparseMatrix<double> P, C;
  Eigen::VectorXd q, lo, up, rho;
  int n = 0, m = 0;
};

inline QpWork assemble(const QuadraticProgram& qp, const QpSettings& st) {
  QpWork w;
  w.n = qp.vars();
  const int mi = static_cast<int>(qp.ineq_b.size());
  const int me = static_cast<int>(qp.eq_b.size());
  w.m = mi + me;
  w.P = qp.hessian;
  w.q = qp.linear;
  w.C.resize(w.m, w.n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(qp.ineq_A.nonZeros() + qp.eq_A.nonZeros());
  for (int k = 0; k < qp.ineq_A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.ineq_A, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  for (int k = 0; k < qp.eq_A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.eq_A, k); it; ++it)
      trips.emplace_back(mi + static_cast<int>(it.row()),
                         static_cast<int>(it.col()), it.value());
  w.C.setFromTriplets(trips.begin(), trips.end());
  w.lo.resize(w.m);
  w.up.resize(w.m);
  w.rho.resize(w.m);
  for (int i = 0; i < mi; ++i) {
    w.lo[i] = -kInf;
    w.up[i] = qp.ineq_b[i];
    w.rho[i] = st.rho;
  }
  for (int i = 0; i < me; ++i) {
    w.lo[mi + i] = qp.eq_b[i];
    w.up[mi + i] = qp.eq_b[i];
    w.rho[mi + i] = st.rho * st.eq_rho_scale;
  }
  return w;
}

inline Eigen::SparseMatrix<double> kkt_matrix(const QpWork& w, double sigma) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(w.P.nonZeros() + 2 * w.C.nonZeros() + w.n + w.m);
  for (int k = 0; k < w.P.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(w.P, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  for (int i = 0; i < w.n; ++i) trips.emplace_back(i, i, sigma);
  for (int k = 0; k < w.C.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(w.C, k); it; ++it) {
      trips.emplace_back(w.n + static_cast<int>(it.row()),
                         static_cast<int>(it.col()), it.value());
      trips.emplace_back(static_cast<int>(it.col()),
                         w.n + static_cast<int>(it.row()), it.value());
    }
  for (int i = 0; i < w.m; ++i)
    trips.emplace_back(w.n + i, w.n + i, -1.0 / w.rho[i]);
  Eigen::SparseMatrix<double> K(w.n + w.m, w.n + w.m);
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

// Equality-constrained KKT solve on the detected active set, with light
// regularization and one round of iterative refinement.
inline bool polish_solution(const QpWork& w, QpResult& res, double act_tol) {
  std::vector<int> active;
  for (int i = 0; i < w.m; ++i) {
    bool eq = (w.lo[i] == w.up[i]);
    double zi = (w.C.row(i) * res.x).value();
    if (eq || std::abs(zi - w.up[i]) < act_tol || res.dual[i] > act_tol)
      active.push_back(i);
  }
  const int ma = static_cast<int>(active.size());
  const double delta = 1e-9;
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < w.P.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(w.P, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  for (int i = 0; i < w.n; ++i) trips.emplace_back(i, i, delta);
  Eigen::SparseMatrix<double, Eigen::RowMajor> Cr(w.C);
  for (int a = 0; a < ma; ++a) {
    int i = active[a];
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Cr, i);
         it; ++it) {
      trips.emplace_back(w.n + a, static_cast<int>(it.col()), it.value());
      trips.emplace_back(static_cast<int>(it.col()), w.n + a, it.value());
    }
    trips.emplace_back(w.n + a, w.n + a, -delta);
  }
  Eigen::SparseMatrix<double> K(w.n + ma, w.n + ma);
  K.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) return false;
  Eigen::VectorXd rhs(w.n + ma);
  rhs.head(w.n) = -w.q;
  for (int a = 0; a < ma; ++a) rhs[w.n + a] = w.up[active[a]];
  Eigen::VectorXd sol = lu.solve(rhs);
  // one refinement pass against the unregularized system
  {
    Eigen::VectorXd resid(w.n + ma);
    Eigen::VectorXd Px = w.P * sol.head(w.n);
    Eigen::VectorXd Cty = Eigen::VectorXd::Zero(w.n);
    Eigen::VectorXd Cx = w.C * sol.head(w.n);
    for (int a = 0; a < ma; ++a)
      Cty += w.C.row(active[a]).transpose() * sol[w.n + a];
    resid.head(w.n) = rhs.head(w.n) - (Px + Cty);
    for (int a = 0; a < ma; ++a) resid[w.n + a] = rhs[w.n + a] - Cx[active[a]];
    sol += lu.solve(resid);
  }
  Eigen::VectorXd x = sol.head(w.n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(w.m);
  for (int a = 0; a < ma; ++a) y[active[a]] = sol[w.n + a];
  // accept only if primal feasible and multipliers have admissible signs
  Eigen::VectorXd Cx = w.C * x;
  for (int i = 0; i < w.m; ++i) {
    if (Cx[i] > w.up[i] + 1e-8) return false;
    if (w.lo[i] > -kInf && Cx[i] < w.lo[i] - 1e-8) return false;
    if (w.lo[i] == -kInf && y[i] < -1e-7) return false;
  }
  Eigen::VectorXd dual_res = w.P * x + w.q + w.C.transpose() * y;
  double prim = 0.0;
  for (int i = 0; i < w.m; ++i) prim = std::max(prim, Cx[i] - w.up[i]);
  if (dual_res.lpNorm<Eigen::Infinity>() <=
      std::max(res.dual_residual, 1e-9) + 1e-9) {
    res.x = x;
    res.dual = y;
    res.primal_residual = std::max(0.0, prim);
    res.dual_residual = dual_res.lpNorm<Eigen::Infinity>();
    res.polished = true;
  }
  return res.polished;
}

}  // namespace detail

/// Operator-splitting (ADMM) solve with a terminal active-set polish.
/// Throws InfeasibleError on a primal infeasibility certificate and
/// MaxIterationsError when the iteration cap is hit.
inline QpResult solve_qp(const QuadraticProgram& qp,
                         const QpSettings& st = QpSettings{}) {
  using detail::kInf;
  detail::QpWork w = detail::assemble(qp, st);
  const int n = w.n, m = w.m;

  // hessian sanity: symmetric, PSD to tolerance
  {
    Eigen::MatrixXd Pd(w.P);
    if ((Pd - Pd.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw Error("solve_qp: hessian not symmetric");
  }

  QpResult res;
  if (m == 0) {
    Eigen::MatrixXd Pd(w.P);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(
        Pd + st.sigma * Eigen::MatrixXd::Identity(n, n));
    res.x = ldlt.solve(-w.q);
    res.dual.resize(0);
    res.value = 0.5 * res.x.dot(w.P * res.x) + w.q.dot(res.x);
    return res;
  }

  Eigen::SparseMatrix<double> K = detail::kkt_matrix(w, st.sigma);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(K);
  if (ldlt.info() != Eigen::Success)
    throw Error("solve_qp: KKT factorization failed");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd rhs(n + m), sol(n + m);
  Eigen::VectorXd x_prev, y_prev;

  int it = 0;
  for (; it < st.max_iter; ++it) {
    x_prev = x;
    y_prev = y;
    rhs.head(n) = st.sigma * x - w.q;
    rhs.tail(m) = z - y.cwiseQuotient(w.rho);
    sol = ldlt.solve(rhs);
    Eigen::VectorXd x_t = sol.head(n);
    Eigen::VectorXd z_t = z + (sol.tail(m) - y).cwiseQuotient(w.rho);
    x = st.alpha * x_t + (1 - st.alpha) * x;
    Eigen::VectorXd z_nom =
        st.alpha * z_t + (1 - st.alpha) * z + y.cwiseQuotient(w.rho);
    Eigen::VectorXd z_new = z_nom.cwiseMin(w.up).cwiseMax(w.lo);
    y = w.rho.cwiseProduct(z_nom - z_new);
    z = z_new;

    if (it % st.check_interval != 0) continue;
    Eigen::VectorXd Cx = w.C * x;
    Eigen::VectorXd rp = Cx - z;
    Eigen::VectorXd rd = w.P * x + w.q + w.C.transpose() * y;
    double prim = rp.lpNorm<Eigen::Infinity>();
    double dual = rd.lpNorm<Eigen::Infinity>();
    double eps_p = st.eps_abs +
                   st.eps_rel * std::max(Cx.lpNorm<Eigen::Infinity>(),
                                         z.lpNorm<Eigen::Infinity>());
    double eps_d =
        st.eps_abs +
        st.eps_rel * std::max({(w.P * x).lpNorm<Eigen::Infinity>(),
                               (w.C.transpose() * y).lpNorm<Eigen::Infinity>(),
                               w.q.lpNorm<Eigen::Infinity>()});
    if (prim <= eps_p && dual <= eps_d) {
      res.primal_residual = prim;
      res.dual_residual = dual;
      break;
    }
    // primal infeasibility certificate on the dual increment
    Eigen::VectorXd dy = y - y_prev;
    double dy_norm = dy.lpNorm<Eigen::Infinity>();
    if (dy_norm > 1e-12) {
      Eigen::VectorXd dyn = dy / dy_norm;
      bool sign_ok = true;
      double gap = 0.0;
      for (int i = 0; i < m; ++i) {
        if (w.lo[i] == -kInf) {
          if (dyn[i] < -st.infeas_tol) { sign_ok = false; break; }
          gap += w.up[i] * std::max(dyn[i], 0.0);
        } else {
          gap += w.up[i] * std::max(dyn[i], 0.0) +
                 w.lo[i] * std::min(dyn[i], 0.0);
        }
      }
      if (sign_ok &&
          (w.C.transpose() * dyn).lpNorm<Eigen::Infinity>() < st.infeas_tol &&
          gap < -st.infeas_tol)
        throw InfeasibleError("solve_qp: primal infeasibility certificate");
    }
  }
  if (it >= st.max_iter)
    throw MaxIterationsError("solve_qp: iteration cap reached");

  res.x = x;
  res.dual = y;
  res.iterations = it;
  if (st.polish) detail::polish_solution(w, res, 1e-6);
  res.value = 0.5 * res.x.dot(w.P * res.x) + w.q.dot(res.x);
  return res;
}

/// Dense convenience overload.
inline QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& q,
                         const Eigen::MatrixXd& Ain, const Eigen::VectorXd& bin,
                         const Eigen::MatrixXd& Aeq = Eigen::MatrixXd(),
                         const Eigen::VectorXd& beq = Eigen::VectorXd(),
                         const QpSettings& st = QpSettings{}) {
  QuadraticProgram qp;
  qp.hessian = H.sparseView();
  qp.linear = q;
  qp.ineq_A = Ain.sparseView();
  qp.ineq_b = bin;
  if (Aeq.size()) {
    qp.eq_A = Aeq.sparseView();
    qp.eq_b = beq;
  } else {
    qp.eq_A.resize(0, q.size());
  }
  if (!Ain.size()) qp.ineq_A.resize(0, q.size());
  return solve_qp(qp, st);
}

}  // namespace atmpc
