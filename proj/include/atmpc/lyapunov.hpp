#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "atmpc/errors.hpp"

namespace atmpc {

/// Solve the discrete Lyapunov equation  Psi' X Psi - X + Q = 0  via the
/// Kronecker linearization. Requires Psi Schur stable.
inline Eigen::MatrixXd discrete_lyapunov(const Eigen::MatrixXd& Psi,
                                         const Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(Psi.rows());
  Eigen::MatrixXd PT = Psi.transpose();
  Eigen::MatrixXd K = Eigen::MatrixXd::Identity(n * n, n * n);
  // K = I - kron(Psi', Psi')
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      K.block(i * n, j * n, n, n) -= PT(i, j) * PT;
  Eigen::VectorXd q(Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n));
  Eigen::VectorXd x = K.partialPivLu().solve(q);
  Eigen::MatrixXd X(Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n));
  return 0.5 * (X + X.transpose());
}

struct CostMatrixResult {
  Eigen::MatrixXd W;
  double max_residual_eig = 0.0;  // max over vertices of lambda_max(residual)
  int iterations = 0;
  bool reused_previous = false;   // fell back to w_prev to keep monotonicity
};

/// Common quadratic cost matrix for the lifted vertex dynamics: W > 0 with
///   Psi_j' W Psi_j - W + qbar <= 0   for every vertex lift,
/// and W <= w_prev when supplied.
///
/// Iteration: start from the nominal Lyapunov solution; while some vertex
/// residual has a positive eigenvalue, absorb its positive part through a
/// Lyapunov solve along that vertex (the increment is PSD, so already
/// satisfied vertices can only be perturbed, never structurally broken).
/// When the converged W is not below w_prev, w_prev itself is returned: the
/// vertex set only shrinks between calls, so the previous W stays feasible.
inline CostMatrixResult find_cost_matrix(
    const std::vector<Eigen::MatrixXd>& vertex_lifts,
    const Eigen::MatrixXd& qbar, const Eigen::MatrixXd& nominal_lift,
    const std::optional<Eigen::MatrixXd>& w_prev = std::nullopt,
    double tol = 1e-9, int max_iter = 5000) {
  if (vertex_lifts.empty()) throw Error("find_cost_matrix: no vertex lifts");
  const int n = static_cast<int>(qbar.rows());
  for (const auto& Psi : vertex_lifts)
    if (Psi.eigenvalues().cwiseAbs().maxCoeff() >= 1.0)
      throw InfeasibleLmiError("find_cost_matrix: vertex lift not Schur stable");

  Eigen::MatrixXd W = discrete_lyapunov(nominal_lift, qbar);
  CostMatrixResult out;
  for (int it = 0; it < max_iter; ++it) {
    double worst = -std::numeric_limits<double>::infinity();
    int worst_j = -1;
    Eigen::MatrixXd worst_res;
    for (size_t j = 0; j < vertex_lifts.size(); ++j) {
      const Eigen::MatrixXd& Psi = vertex_lifts[j];
      Eigen::MatrixXd Rres = Psi.transpose() * W * Psi - W + qbar;
      Rres = 0.5 * (Rres + Rres.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Rres);
      double ev = es.eigenvalues().maxCoeff();
      if (ev > worst) {
        worst = ev;
        worst_j = static_cast<int>(j);
        worst_res = Rres;
      }
    }
    out.iterations = it;
    out.max_residual_eig = worst;
    if (worst <= tol) break;
    if (it + 1 >= max_iter)
      throw InfeasibleLmiError(
          "find_cost_matrix: no common certificate within iteration cap");
    // absorb the positive part of the worst residual
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(worst_res);
    Eigen::MatrixXd Rplus =
        es.eigenvectors() *
        es.eigenvalues().cwiseMax(0.0).asDiagonal() *
        es.eigenvectors().transpose();
    Eigen::MatrixXd dW =
        discrete_lyapunov(vertex_lifts[worst_j], (1.0 + 1e-6) * Rplus);
    W += 0.5 * (dW + dW.transpose());
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esW(W);
  if (esW.eigenvalues().minCoeff() <= 0)
    throw InfeasibleLmiError("find_cost_matrix: result not positive definite");

  if (w_prev) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W - *w_prev);
    if (es.eigenvalues().maxCoeff() > 1e-9) {
      out.W = *w_prev;
      out.reused_previous = true;
      // recertify the fallback against the current vertex set
      double worst = -std::numeric_limits<double>::infinity();
      for (const auto& Psi : vertex_lifts) {
        Eigen::MatrixXd Rres =
            Psi.transpose() * out.W * Psi - out.W + qbar;
        Rres = 0.5 * (Rres + Rres.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esr(Rres);
        worst = std::max(worst, esr.eigenvalues().maxCoeff());
      }
      out.max_residual_eig = worst;
      if (worst > 1e-7)
        throw InfeasibleLmiError(
            "find_cost_matrix: previous W no longer feasible");
      return out;
    }
  }
  out.W = W;
  return out;
}

}  // namespace atmpc
