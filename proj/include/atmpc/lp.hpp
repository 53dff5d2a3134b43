#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "atmpc/errors.hpp"

namespace atmpc {

/// Dense linear program
///   minimize    objective' x
///   subject to  ineq_A x <= ineq_b
///               eq_A x == eq_b
///               x_i >= 0 for i with nonneg[i] set (x free otherwise)
///
/// Matrices may be empty (0 rows). Solved by a two-phase tableau simplex
/// with Bland's pivot rule, so repeated runs on the same data are
/// bit-identical and cycling cannot occur.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd ineq_A;
  Eigen::VectorXd ineq_b;
  Eigen::MatrixXd eq_A;
  Eigen::VectorXd eq_b;
  std::vector<bool> nonneg;  // empty means all variables free
};

struct LpResult {
  Eigen::VectorXd x;
  double value = 0.0;
};

namespace detail {

class SimplexTableau {
 public:
  // Standard form: min c'y s.t. A y = b, y >= 0, with b >= 0 on entry.
  SimplexTableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
      : m_(static_cast<int>(A.rows())), n_(static_cast<int>(A.cols())) {
    // columns: n structural + m artificial, plus rhs
    T_.setZero(m_ + 1, n_ + m_ + 1);
    T_.block(0, 0, m_, n_) = A;
    T_.block(0, n_, m_, m_).setIdentity();
    T_.col(n_ + m_).head(m_) = b;
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
  }

  // Phase 1: minimize sum of artificials. Returns false if infeasible.
  bool phase1(double tol) {
    Eigen::RowVectorXd cost = Eigen::RowVectorXd::Zero(n_ + m_);
    cost.segment(n_, m_).setOnes();
    setObjectiveRow(cost);
    iterate(tol);
    if (T_(m_, n_ + m_) < -tol) return false;  // positive artificial residual
    driveOutArtificials(tol);
    block_artificials_ = true;
    return true;
  }

  // Phase 2 with the original structural cost. Throws on unboundedness.
  void phase2(const Eigen::VectorXd& c, double tol) {
    Eigen::RowVectorXd cost = Eigen::RowVectorXd::Zero(n_ + m_);
    cost.head(n_) = c.transpose();
    setObjectiveRow(cost);
    iterate(tol);
  }

  Eigen::VectorXd solution() const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < m_; ++i)
      if (basis_[i] < n_) y[basis_[i]] = T_(i, n_ + m_);
    return y;
  }

 private:
  void setObjectiveRow(const Eigen::RowVectorXd& cost) {
    blocked_.assign(n_ + m_, false);
    if (block_artificials_)
      for (int j = n_; j < n_ + m_; ++j) blocked_[j] = true;
    T_.row(m_).head(n_ + m_) = cost;
    T_(m_, n_ + m_) = 0.0;
    // price out basic columns
    for (int i = 0; i < m_; ++i) {
      double cb = cost[basis_[i]];
      if (cb != 0.0) T_.row(m_) -= cb * T_.row(i);
    }
  }

  void iterate(double tol) {
    for (;;) {
      // Bland: entering = lowest index with negative reduced cost
      int enter = -1;
      for (int j = 0; j < n_ + m_; ++j) {
        if (blocked_[j]) continue;
        if (T_(m_, j) < -tol) { enter = j; break; }
      }
      if (enter < 0) return;  // optimal
      // ratio test; Bland tie-break on lowest basis index
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        double a = T_(i, enter);
        if (a > tol) {
          double ratio = T_(i, n_ + m_) / a;
          if (ratio < best - tol ||
              (ratio < best + tol && (leave < 0 || basis_[i] < basis_[leave]))) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) throw UnboundedError("simplex: unbounded direction");
      pivot(leave, enter);
    }
  }

  void pivot(int row, int col) {
    T_.row(row) /= T_(row, col);
    for (int i = 0; i <= m_; ++i) {
      if (i == row) continue;
      double f = T_(i, col);
      if (f != 0.0) T_.row(i) -= f * T_.row(row);
    }
    basis_[row] = col;
  }

  // After phase 1, pivot basic artificials out when possible.
  void driveOutArtificials(double tol) {
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_) continue;
      int col = -1;
      for (int j = 0; j < n_; ++j)
        if (std::abs(T_(i, j)) > tol) { col = j; break; }
      if (col >= 0) pivot(i, col);
      // else the row is redundant; the artificial stays basic at zero
    }
  }

  int m_, n_;
  Eigen::MatrixXd T_;
  std::vector<int> basis_;
  std::vector<bool> blocked_;
  bool block_artificials_ = false;
};

}  // namespace detail

/// Solve the LP. Throws InfeasibleError / UnboundedError.
inline LpResult solve_lp(const LinearProgram& lp, double tol = 1e-9) {
  const int n = static_cast<int>(lp.objective.size());
  const int mi = static_cast<int>(lp.ineq_A.rows());
  const int me = static_cast<int>(lp.eq_A.rows());
  if ((mi && lp.ineq_A.cols() != n) || (me && lp.eq_A.cols() != n))
    throw Error("solve_lp: dimension mismatch");

  std::vector<bool> nonneg = lp.nonneg;
  if (nonneg.empty()) nonneg.assign(n, false);

  // Column layout in standard form: one column per nonneg var, a (+,-) pair
  // per free var, then one slack per inequality row.
  std::vector<int> pos(n), neg(n, -1);
  int nc = 0;
  for (int j = 0; j < n; ++j) {
    pos[j] = nc++;
    if (!nonneg[j]) neg[j] = nc++;
  }
  const int nslack = mi;
  const int ncols = nc + nslack;
  const int mrows = mi + me;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(mrows, ncols);
  Eigen::VectorXd b(mrows);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(ncols);
  for (int j = 0; j < n; ++j) {
    c[pos[j]] = lp.objective[j];
    if (neg[j] >= 0) c[neg[j]] = -lp.objective[j];
  }
  for (int i = 0; i < mi; ++i) {
    for (int j = 0; j < n; ++j) {
      A(i, pos[j]) = lp.ineq_A(i, j);
      if (neg[j] >= 0) A(i, neg[j]) = -lp.ineq_A(i, j);
    }
    A(i, nc + i) = 1.0;
    b[i] = lp.ineq_b[i];
  }
  for (int i = 0; i < me; ++i) {
    for (int j = 0; j < n; ++j) {
      A(mi + i, pos[j]) = lp.eq_A(i, j);
      if (neg[j] >= 0) A(mi + i, neg[j]) = -lp.eq_A(i, j);
    }
    b[mi + i] = lp.eq_b[i];
  }
  for (int i = 0; i < mrows; ++i) {
    if (b[i] < 0) { A.row(i) = -A.row(i); b[i] = -b[i]; }
  }

  detail::SimplexTableau tab(A, b);
  if (!tab.phase1(tol)) throw InfeasibleError("solve_lp: infeasible");
  tab.phase2(c, tol);

  Eigen::VectorXd y = tab.solution();
  LpResult res;
  res.x.resize(n);
  for (int j = 0; j < n; ++j)
    res.x[j] = y[pos[j]] - (neg[j] >= 0 ? y[neg[j]] : 0.0);
  res.value = lp.objective.dot(res.x);
  return res;
}

}  // namespace atmpc
