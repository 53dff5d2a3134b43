#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "atmpc/estimator.hpp"
#include "test_models.hpp"

using namespace atmpc;

namespace {

ParametricModel benchmark_model() {
  test_models::Benchmark2D m;
  ParametricModel p;
  p.A0 = m.A0;
  p.B0 = m.B0;
  p.dA = {m.A1, m.A2};
  p.dB = {m.B1, m.B2};
  return p;
}

// closed-loop rollout of plant + estimator with u = K x
struct Rollout {
  ParametricModel model = benchmark_model();
  test_models::Benchmark2D m;
  Eigen::Matrix2d Ke;
  EstimatorSettings cfg;
  EstimatorState s;
  Eigen::Vector2d x;
  Eigen::Vector2d theta_star;

  Rollout(const Eigen::Vector2d& th_star, const Eigen::Vector2d& x0)
      : x(x0), theta_star(th_star) {
    Ke = m.phi(Eigen::Vector2d::Zero());
    s = make_estimator(model, Eigen::Vector2d::Zero(),
                       0.15 * Eigen::Matrix2d::Identity(), 1.0, x0);
  }

  MeasurementInfo step() {
    auto info = estimator_measure(s, x, cfg);
    Eigen::VectorXd u = m.K * x;
    estimator_propagate(s, model, x, u, Ke, info);
    x = model.A(theta_star) * x + model.B(theta_star) * u;
    return info;
  }
};

}  // namespace

TEST(Regressor, BenchmarkColumns) {
  auto p = benchmark_model();
  Eigen::Vector2d x(1.0, 0.0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd g = p.regressor(x, u);
  EXPECT_NEAR(g(0, 0), -0.12, 1e-15);
  EXPECT_NEAR(g(1, 0), -0.12, 1e-15);
  EXPECT_NEAR(g(0, 1), 0.12, 1e-15);
  EXPECT_NEAR(g(1, 1), 0.12, 1e-15);
}

TEST(Regressor, ReconstructsTransition) {
  auto p = benchmark_model();
  Eigen::Vector2d x(0.7, -1.3), th(0.3, -0.4);
  Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd lhs = p.A(th) * x + p.B(th) * u;
  Eigen::VectorXd rhs = p.A0 * x + p.B0 * u + p.regressor(x, u) * th;
  EXPECT_LT((lhs - rhs).norm(), 1e-14);
}

TEST(FilterUpdate, TwoStepsConstantRegressor) {
  // w0 = 0, Ke = 0.5 I, constant g:  w1 = g,  w2 = g - 0.5 g = 0.5 g
  Eigen::Matrix2d g;
  g << 1, 2, 3, 4;
  Eigen::Matrix2d Ke = 0.5 * Eigen::Matrix2d::Identity();
  Eigen::MatrixXd w = Eigen::Matrix2d::Zero();
  w = filter_update(w, g, Ke);
  EXPECT_LT((w - g).norm(), 1e-15);
  w = filter_update(w, g, Ke);
  EXPECT_LT((w - 0.5 * g).norm(), 1e-15);
}

TEST(RlsUpdate, ScalarCase) {
  // gamma = 1, w = 1, forgetting 0.5: gamma+ = 1.5; innovation 0.3 moves the
  // estimate by 0.3 / 1.5 = 0.2
  EstimatorState s;
  s.theta_hat = Eigen::VectorXd::Constant(1, 1.0);
  s.gamma = Eigen::MatrixXd::Constant(1, 1, 1.0);
  rls_update(s, Eigen::MatrixXd::Constant(1, 1, 1.0),
             Eigen::VectorXd::Constant(1, 0.3), 0.5);
  EXPECT_NEAR(s.gamma(0, 0), 1.5, 1e-15);
  EXPECT_NEAR(s.theta_hat[0], 1.2, 1e-15);
}

TEST(MakeEstimator, InitialBoundFromInformationMatrix) {
  auto p = benchmark_model();
  auto s = make_estimator(p, Eigen::Vector2d::Zero(),
                          0.15 * Eigen::Matrix2d::Identity(), 1.0,
                          Eigen::Vector2d(8, 8));
  EXPECT_NEAR(s.bound, 0.15, 1e-15);
  // outer polytope of a ball with matched level is the unit-offset cover
  EXPECT_LT((s.fss.offsets.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(EstimatorStep, BoundHalvesPerUpdate) {
  Rollout r(Eigen::Vector2d(-0.2, 0.5), Eigen::Vector2d(8, 8));
  double b0 = r.s.bound;
  auto i1 = r.step();
  EXPECT_TRUE(i1.triggered);
  EXPECT_NEAR(r.s.bound, 0.5 * b0, 1e-15);
  r.step();
  EXPECT_NEAR(r.s.bound, 0.25 * b0, 1e-15);
}

TEST(EstimatorStep, ErrorRegressorIdentity) {
  // x_tilde_k = w_k (theta* - theta_hat_{k-1}) holds exactly along the loop,
  // including across estimate updates
  Rollout r(Eigen::Vector2d(-0.2, 0.5), Eigen::Vector2d(8, 8));
  for (int k = 0; k < 25; ++k) {
    Eigen::VectorXd theta_prev = r.s.theta_hat;
    Eigen::MatrixXd w_prev = r.s.w;
    r.step();
    Eigen::VectorXd x_tilde = r.x - r.s.x_hat;
    Eigen::VectorXd pred = r.s.w * (r.theta_star - r.s.theta_hat);
    EXPECT_LT((x_tilde - pred).lpNorm<Eigen::Infinity>(), 1e-10)
        << "step " << k;
    (void)theta_prev;
    (void)w_prev;
  }
}

TEST(EstimatorStep, CredibleSetContainsTruth) {
  // theta~' Gamma theta~ <= bound at every step, for many random truths
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ud(-1, 1);
  int tested = 0;
  while (tested < 30) {
    Eigen::Vector2d th(ud(rng), ud(rng));
    if (th.norm() > 1.0) continue;
    ++tested;
    Rollout r(th, Eigen::Vector2d(8, 8));
    for (int k = 0; k < 30; ++k) {
      r.step();
      Eigen::Vector2d d = th - Eigen::Vector2d(r.s.theta_hat);
      EXPECT_LE(d.dot(r.s.gamma * d), r.s.bound + 1e-12)
          << "truth " << th.transpose() << " step " << k;
      EXPECT_TRUE(r.s.fss.contains(th, 1e-10));
    }
  }
}

TEST(EstimatorStep, CoverOffsetsNeverGrow) {
  Rollout r(Eigen::Vector2d(0.3, -0.1), Eigen::Vector2d(8, 8));
  Eigen::VectorXd prev = r.s.fss.offsets;
  for (int k = 0; k < 20; ++k) {
    r.step();
    EXPECT_TRUE((r.s.fss.offsets.array() <= prev.array() + 1e-15).all());
    prev = r.s.fss.offsets;
  }
}

TEST(EstimatorStep, FreezeLeavesStatisticsBitIdentical) {
  // push the trigger thresholds up so no update ever fires
  Rollout r(Eigen::Vector2d(-0.2, 0.5), Eigen::Vector2d(8, 8));
  r.cfg.eps_x = 1e9;
  r.cfg.eps_r = 1e9;
  Eigen::VectorXd th0 = r.s.theta_hat;
  Eigen::MatrixXd g0 = r.s.gamma;
  double b0 = r.s.bound;
  Eigen::VectorXd off0 = r.s.fss.offsets;
  for (int k = 0; k < 10; ++k) {
    auto info = r.step();
    EXPECT_FALSE(info.triggered);
  }
  EXPECT_TRUE((r.s.theta_hat.array() == th0.array()).all());
  EXPECT_TRUE((r.s.gamma.array() == g0.array()).all());
  EXPECT_EQ(r.s.bound, b0);
  EXPECT_TRUE((r.s.fss.offsets.array() == off0.array()).all());
  // but the filter and predictor kept moving
  EXPECT_GT(r.s.w.norm(), 0.0);
}

TEST(EstimatorStep, TriggerIsInclusive) {
  EstimatorSettings cfg;
  Eigen::VectorXd xt = Eigen::VectorXd::Zero(2);
  EXPECT_TRUE(should_update(xt, cfg.eps_r, cfg));       // bound == eps_r
  xt[0] = cfg.eps_x;
  EXPECT_TRUE(should_update(xt, 0.0, cfg));             // error == eps_x
  xt[0] = 0.0;
  EXPECT_FALSE(should_update(xt, cfg.eps_r * 0.5, cfg));
}
