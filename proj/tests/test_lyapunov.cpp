#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "atmpc/lyapunov.hpp"
#include "atmpc/polytope.hpp"
#include "test_models.hpp"

using namespace atmpc;

namespace {

// lifted prediction dynamics [x; v_0..v_{N-1}] -> [phi x + B v_0; shift(v)]
Eigen::MatrixXd lift(const Eigen::MatrixXd& phi, const Eigen::VectorXd& B,
                     int N) {
  const int nx = static_cast<int>(phi.rows());
  Eigen::MatrixXd Psi = Eigen::MatrixXd::Zero(nx + N, nx + N);
  Psi.topLeftCorner(nx, nx) = phi;
  Psi.block(0, nx, nx, 1) = B;
  Psi.block(nx, nx + 1, N - 1, N - 1) =
      Eigen::MatrixXd::Identity(N - 1, N - 1);
  return Psi;
}

Eigen::MatrixXd lifted_cost(const test_models::Benchmark2D& m, int N) {
  const int nx = 2;
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(1, N);
  E(0, 0) = 1.0;
  Eigen::MatrixXd Qbar = Eigen::MatrixXd::Zero(nx + N, nx + N);
  Qbar.topLeftCorner(nx, nx) =
      m.Q + m.K.transpose() * m.R * m.K;
  Qbar.topRightCorner(nx, N) = m.K.transpose() * m.R * E;
  Qbar.bottomLeftCorner(N, nx) = E.transpose() * m.R * m.K;
  Qbar.bottomRightCorner(N, N) = E.transpose() * m.R * E;
  return Qbar;
}

std::vector<Eigen::MatrixXd> benchmark_lifts(
    const test_models::Benchmark2D& m, int N, double scale = 1.0) {
  Ellipsoid ball(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 1.0);
  auto vs = vertices(ellipsoid_outer_polytope(ball, 8));
  std::vector<Eigen::MatrixXd> lifts;
  for (const auto& v : vs.points) {
    Eigen::Vector2d th = scale * v;
    lifts.push_back(lift(m.phi(th), m.B(th), N));
  }
  return lifts;
}

}  // namespace

TEST(DiscreteLyapunov, ScalarClosedForm) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(1, 1, 0.5);
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(1, 1, 3.0);
  auto X = discrete_lyapunov(a, q);
  EXPECT_NEAR(X(0, 0), 3.0 / (1.0 - 0.25), 1e-12);
}

TEST(DiscreteLyapunov, ResidualVanishes) {
  Eigen::MatrixXd Psi(3, 3);
  Psi << 0.4, 0.1, 0, -0.2, 0.5, 0.1, 0, 0.05, 0.3;
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(3, 3);
  auto X = discrete_lyapunov(Psi, Q);
  Eigen::MatrixXd res = Psi.transpose() * X * Psi - X + Q;
  EXPECT_LT(res.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FindCostMatrix, SingleZeroVertexGivesStageCost) {
  Eigen::MatrixXd Psi = Eigen::MatrixXd::Zero(3, 3);
  Eigen::MatrixXd Qbar(3, 3);
  Qbar << 2, 0.5, 0, 0.5, 3, 0.1, 0, 0.1, 1;
  Qbar = 0.5 * (Qbar + Qbar.transpose());
  auto r = find_cost_matrix({Psi}, Qbar, Psi);
  EXPECT_LT((r.W - Qbar).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(r.max_residual_eig, 1e-9);
}

TEST(FindCostMatrix, SingleVertexMatchesLyapunovSolution) {
  Eigen::MatrixXd Psi(2, 2);
  Psi << 0.6, 0.2, -0.1, 0.5;
  Eigen::MatrixXd Qbar = Eigen::MatrixXd::Identity(2, 2);
  auto r = find_cost_matrix({Psi}, Qbar, Psi);
  Eigen::MatrixXd X = discrete_lyapunov(Psi, Qbar);
  EXPECT_LT((r.W - X).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FindCostMatrix, BenchmarkVertexSetFeasible) {
  test_models::Benchmark2D m;
  const int N = 10;
  Eigen::MatrixXd Qbar = lifted_cost(m, N);
  auto lifts = benchmark_lifts(m, N);
  Eigen::MatrixXd nominal = lift(m.phi(Eigen::Vector2d::Zero()),
                                 m.B(Eigen::Vector2d::Zero()), N);
  auto r = find_cost_matrix(lifts, Qbar, nominal, std::nullopt, 1e-9);
  EXPECT_LE(r.max_residual_eig, 1e-9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.W);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  // independently recheck the vertex inequality
  for (const auto& Psi : lifts) {
    Eigen::MatrixXd res = Psi.transpose() * r.W * Psi - r.W + Qbar;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(
        0.5 * (res + res.transpose()));
    EXPECT_LE(er.eigenvalues().maxCoeff(), 1e-9);
  }
}

TEST(FindCostMatrix, MonotoneUnderShrinkingVertexSet) {
  test_models::Benchmark2D m;
  const int N = 10;
  Eigen::MatrixXd Qbar = lifted_cost(m, N);
  Eigen::MatrixXd nominal = lift(m.phi(Eigen::Vector2d::Zero()),
                                 m.B(Eigen::Vector2d::Zero()), N);
  auto W0 = find_cost_matrix(benchmark_lifts(m, N), Qbar, nominal).W;
  auto r1 = find_cost_matrix(benchmark_lifts(m, N, 0.5), Qbar, nominal, W0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r1.W - W0);
  EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-9);
}

TEST(FindCostMatrix, Deterministic) {
  test_models::Benchmark2D m;
  const int N = 10;
  Eigen::MatrixXd Qbar = lifted_cost(m, N);
  Eigen::MatrixXd nominal = lift(m.phi(Eigen::Vector2d::Zero()),
                                 m.B(Eigen::Vector2d::Zero()), N);
  auto a = find_cost_matrix(benchmark_lifts(m, N), Qbar, nominal);
  auto b = find_cost_matrix(benchmark_lifts(m, N), Qbar, nominal);
  EXPECT_TRUE((a.W.array() == b.W.array()).all());
}

TEST(FindCostMatrix, RejectsUnstableVertex) {
  Eigen::MatrixXd Psi = Eigen::MatrixXd::Identity(2, 2) * 1.05;
  EXPECT_THROW(
      find_cost_matrix({Psi}, Eigen::MatrixXd::Identity(2, 2), Psi),
      InfeasibleLmiError);
}
