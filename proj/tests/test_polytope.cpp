#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "atmpc/polytope.hpp"

using namespace atmpc;

namespace {

// Uniformly random point on the boundary of an ellipsoid.
Eigen::VectorXd boundary_point(const Ellipsoid& E, std::mt19937& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd u(E.center.size());
  for (int i = 0; i < u.size(); ++i) u[i] = nd(rng);
  u.normalize();
  // x = c + sqrt(level) * L^-T u  with shape = L L'
  Eigen::LLT<Eigen::MatrixXd> llt(E.shape);
  Eigen::MatrixXd Linv =
      llt.matrixL().solve(Eigen::MatrixXd::Identity(u.size(), u.size()));
  return E.center + std::sqrt(E.level) * Linv.transpose() * u;
}

}  // namespace

TEST(Support, UnitBoxDirections) {
  Polytope box = Polytope::box(2, 1.0);
  EXPECT_NEAR(support(box, Eigen::Vector2d(1, 0)).value, 1.0, 1e-9);
  EXPECT_NEAR(support(box, Eigen::Vector2d(1, 1)).value, 2.0, 1e-9);
  Polytope state = Polytope::box(2, 17.0);
  EXPECT_NEAR(support(state, Eigen::Vector2d(1, 1)).value, 34.0, 1e-9);
}

TEST(Support, ErrorsOnUnboundedAndEmpty) {
  Eigen::MatrixXd A(1, 2);
  A << 1, 0;
  Polytope halfspace(A, Eigen::VectorXd::Ones(1));
  EXPECT_THROW(support(halfspace, Eigen::Vector2d(0, 1)), UnboundedError);
  Eigen::MatrixXd A2(2, 1);
  A2 << 1, -1;
  Eigen::VectorXd b2(2);
  b2 << 0, -1;
  Polytope empty(A2, b2);
  EXPECT_THROW(support(empty, Eigen::VectorXd::Ones(1)), InfeasibleError);
}

TEST(RemoveRedundancy, DropsDuplicateAndLooseRows) {
  Polytope box = Polytope::box(2, 1.0);
  Eigen::MatrixXd A(box.rows() + 2, 2);
  A << box.normals, box.normals.row(0), Eigen::RowVector2d(1, 0);
  Eigen::VectorXd b(box.rows() + 2);
  b << box.offsets, 1.0, 100.0;
  Polytope r = remove_redundancy(Polytope(A, b));
  EXPECT_EQ(r.rows(), 4);
  for (int i = 0; i < r.rows(); ++i)
    EXPECT_NEAR(r.offsets[i], 1.0, 1e-12);
}

TEST(RemoveRedundancy, MatchesBruteForceOracleOnRandomPolygons) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI), off(0.5, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 20;
    Eigen::MatrixXd A(m, 2);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
      double a = ang(rng);
      A.row(i) << std::cos(a), std::sin(a);
      b[i] = off(rng);
    }
    Polytope P(A, b);
    Polytope R = remove_redundancy(P);

    // oracle: a row is irredundant iff maximizing its normal over the other
    // rows (offset relaxed) exceeds its offset
    int irredundant = 0;
    for (int i = 0; i < m; ++i) {
      Eigen::MatrixXd A2 = A;
      Eigen::VectorXd b2 = b;
      b2[i] += 1.0;
      double h = support(Polytope(A2, b2), A.row(i).transpose()).value;
      // duplicates: count only the first of an identical group
      bool firstDup = true;
      for (int j = 0; j < i; ++j)
        if ((A.row(j) - A.row(i)).norm() < 1e-12 &&
            std::abs(b[j] - b[i]) < 1e-12)
          firstDup = false;
      if (h > b[i] + 1e-8 && firstDup) ++irredundant;
    }
    EXPECT_EQ(R.rows(), irredundant) << "trial " << trial;

    // set equality on sampled points
    std::uniform_real_distribution<double> pt(-3, 3);
    for (int s = 0; s < 200; ++s) {
      Eigen::Vector2d x(pt(rng), pt(rng));
      EXPECT_EQ(P.contains(x, 1e-9), R.contains(x, 1e-9));
    }
  }
}

TEST(RemoveRedundancy, IrredundancyPostcondition) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI), off(0.5, 2.0);
  Eigen::MatrixXd A(12, 2);
  Eigen::VectorXd b(12);
  for (int i = 0; i < 12; ++i) {
    double a = ang(rng);
    A.row(i) << std::cos(a), std::sin(a);
    b[i] = off(rng);
  }
  Polytope R = remove_redundancy(Polytope(A, b));
  for (int i = 0; i < R.rows(); ++i) {
    Eigen::MatrixXd A2 = R.normals;
    Eigen::VectorXd b2 = R.offsets;
    b2[i] += 10.0;
    double h = support(Polytope(A2, b2), R.normals.row(i).transpose()).value;
    EXPECT_GT(h, R.offsets[i] + 1e-8);
  }
}

TEST(RemoveRedundancy, ThrowsOnEmpty) {
  Eigen::MatrixXd A(2, 1);
  A << 1, -1;
  Eigen::VectorXd b(2);
  b << 0, -1;
  EXPECT_THROW(remove_redundancy(Polytope(A, b)), InfeasibleError);
}

TEST(Intersect, IdempotentAndHalfspace) {
  Polytope box = Polytope::box(2, 1.0);
  Polytope same = intersect(box, box);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> pt(-2, 2);
  for (int s = 0; s < 500; ++s) {
    Eigen::Vector2d x(pt(rng), pt(rng));
    EXPECT_EQ(box.contains(x), same.contains(x));
  }
  Eigen::MatrixXd H(1, 2);
  H << 1, 0;
  Polytope half(H, Eigen::VectorXd::Zero(1));
  Polytope left = intersect(box, half);
  EXPECT_TRUE(left.contains(Eigen::Vector2d(-0.5, 0.5)));
  EXPECT_FALSE(left.contains(Eigen::Vector2d(0.5, 0.5)));
}

TEST(Intersect, OuterPolytopeSelfIntersectionIsIdentity) {
  Ellipsoid ball(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 1.0);
  Polytope oct = ellipsoid_outer_polytope(ball, 8);
  Polytope same = intersect(oct, oct);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> pt(-2, 2);
  for (int s = 0; s < 1000; ++s) {
    Eigen::Vector2d x(pt(rng), pt(rng));
    EXPECT_EQ(oct.contains(x), same.contains(x));
  }
}

TEST(Intersect, EmptySignalled) {
  Polytope box = Polytope::box(1, 1.0);
  Eigen::MatrixXd A(1, 1);
  A << -1;
  Polytope far(A, Eigen::VectorXd::Constant(1, -2.0));  // x >= 2
  EXPECT_THROW(intersect(box, far), EmptyIntersectionError);
}

TEST(Vertices, BoxAndTriangle) {
  auto vs = vertices(Polytope::box(2, 1.0));
  EXPECT_EQ(vs.points.size(), 4u);
  for (const auto& p : vs.points) {
    EXPECT_NEAR(std::abs(p[0]), 1.0, 1e-10);
    EXPECT_NEAR(std::abs(p[1]), 1.0, 1e-10);
  }
  Eigen::MatrixXd A(3, 2);
  A << -1, 0, 0, -1, 1, 1;
  Eigen::VectorXd b(3);
  b << 0, 0, 1;
  auto tri = vertices(Polytope(A, b));
  ASSERT_EQ(tri.points.size(), 3u);
}

TEST(Vertices, OuterPolytopeVerticesLieOnTwoFacets) {
  std::mt19937 rng(13);
  std::normal_distribution<double> nd;
  Eigen::Matrix2d Mr;
  Mr << 1.5 + std::abs(nd(rng)), nd(rng) * 0.2, nd(rng) * 0.2,
      1.0 + std::abs(nd(rng));
  Eigen::Matrix2d S = Mr * Mr.transpose();
  Ellipsoid E(Eigen::Vector2d(0.3, -0.2), S, 0.8);
  Polytope P = ellipsoid_outer_polytope(E, 8);
  auto vs = vertices(P);
  EXPECT_EQ(vs.points.size(), 8u);
  for (const auto& v : vs.points) {
    int active = 0;
    for (int i = 0; i < P.rows(); ++i)
      if (std::abs(P.normals.row(i).dot(v) - P.offsets[i]) < 1e-8) ++active;
    EXPECT_EQ(active, 2);
  }
}

TEST(Vertices, RoundTripMembership) {
  // polytope -> vertices -> hull (via tangent rows at vertex pairs) equals
  // the source on membership of sampled points
  Polytope P = ellipsoid_outer_polytope(
      Ellipsoid(Eigen::Vector2d(0.1, 0.2), Eigen::Matrix2d::Identity(), 1.0), 8);
  auto vs = vertices(P);
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> pt(-2, 2);
  for (int s = 0; s < 1000; ++s) {
    Eigen::Vector2d x(pt(rng), pt(rng));
    // hull membership by LP: x = sum w_i v_i, w >= 0, sum w = 1
    LinearProgram lp;
    const int n = static_cast<int>(vs.points.size());
    lp.objective = Eigen::VectorXd::Zero(n);
    lp.eq_A.resize(3, n);
    for (int i = 0; i < n; ++i) {
      lp.eq_A(0, i) = vs.points[i][0];
      lp.eq_A(1, i) = vs.points[i][1];
      lp.eq_A(2, i) = 1.0;
    }
    lp.eq_b.resize(3);
    lp.eq_b << x[0], x[1], 1.0;
    lp.nonneg.assign(n, true);
    bool inHull = true;
    try {
      solve_lp(lp);
    } catch (const InfeasibleError&) {
      inHull = false;
    }
    EXPECT_EQ(P.contains(x, 1e-7), inHull) << x.transpose();
  }
}

TEST(Vertices, DimensionGuard) {
  EXPECT_THROW(vertices(Polytope::box(4, 1.0)), DimensionUnsupportedError);
  auto seg = vertices(Polytope::box(1, 2.0));
  EXPECT_EQ(seg.points.size(), 2u);
  auto cube = vertices(Polytope::box(3, 1.0));
  EXPECT_EQ(cube.points.size(), 8u);
}

TEST(OuterPolytope, UnitBallFourDirectionsIsUnitBox) {
  Ellipsoid ball(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 1.0);
  Polytope P = ellipsoid_outer_polytope(ball, 4);
  EXPECT_EQ(P.rows(), 4);
  Polytope box = Polytope::box(2, 1.0);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> pt(-2, 2);
  for (int s = 0; s < 500; ++s) {
    Eigen::Vector2d x(pt(rng), pt(rng));
    EXPECT_EQ(P.contains(x), box.contains(x));
  }
}

TEST(OuterPolytope, ContainmentAndMonotonicity) {
  std::mt19937 rng(29);
  Ellipsoid ball(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 1.0);
  Polytope oct = ellipsoid_outer_polytope(ball, 8);
  Polytope box = ellipsoid_outer_polytope(ball, 4);
  for (int s = 0; s < 1000; ++s) {
    Eigen::VectorXd x = boundary_point(ball, rng);
    EXPECT_TRUE(oct.contains(x, 1e-9));
  }
  // nested direction sets (4 axis directions are a subset of the 8): the
  // octagon is contained in the box
  std::uniform_real_distribution<double> pt(-2, 2);
  for (int s = 0; s < 500; ++s) {
    Eigen::Vector2d x(pt(rng), pt(rng));
    if (oct.contains(x, 0.0)) EXPECT_TRUE(box.contains(x, 1e-9));
  }
}

TEST(OuterPolytope, InitialConfidenceSetIsUnitBall) {
  // Gamma = 0.15 I, level 0.15: radius sqrt(0.15/0.15) = 1
  Ellipsoid E(Eigen::Vector2d::Zero(), 0.15 * Eigen::Matrix2d::Identity(), 0.15);
  Polytope P = ellipsoid_outer_polytope(E, 8);
  for (int i = 0; i < P.rows(); ++i) EXPECT_NEAR(P.offsets[i], 1.0, 1e-12);
}

TEST(NonnegFactor, IdentityAndScalarCases) {
  Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd H = nonneg_factor(I2, I2);
  EXPECT_LT((H - I2).cwiseAbs().maxCoeff(), 1e-10);

  Eigen::MatrixXd V(2, 1);
  V << 1, -1;
  Eigen::MatrixXd M(1, 1);
  M << 1;
  Eigen::MatrixXd h = nonneg_factor(V, M);
  EXPECT_NEAR(h(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(h(0, 1), 0.0, 1e-10);

  Eigen::MatrixXd Hc = nonneg_factor(V, 0.5 * V);
  EXPECT_LT((Hc - 0.5 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(),
            1e-10);
  EXPECT_NEAR(inf_norm(Hc), 0.5, 1e-10);
}

TEST(NonnegFactor, RandomFeasibleInstances) {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI), sc(0.1, 0.9);
  for (int trial = 0; trial < 100; ++trial) {
    // V = octagon rows; M = rows strictly inside the conic hull (scaled
    // convex combinations of V rows)
    Eigen::MatrixXd V(8, 2);
    for (int i = 0; i < 8; ++i) {
      double a = 2 * M_PI * i / 8;
      V.row(i) << std::cos(a), std::sin(a);
    }
    Eigen::MatrixXd M(3, 2);
    for (int i = 0; i < 3; ++i) {
      double a = ang(rng);
      M.row(i) << sc(rng) * std::cos(a), sc(rng) * std::sin(a);
    }
    Eigen::MatrixXd H = nonneg_factor(V, M);
    EXPECT_LE((H * V - M).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GE(H.minCoeff(), -1e-12);
  }
}

TEST(NonnegFactor, ConicInfeasibleSignalled) {
  Eigen::MatrixXd V(1, 2);
  V << 1, 0;
  Eigen::MatrixXd M(1, 2);
  M << 0, 1;
  EXPECT_THROW(nonneg_factor(V, M), ConicInfeasibleError);
}

TEST(Ellipsoid, MembershipExactness) {
  Eigen::Matrix2d S;
  S << 2.0, 0.3, 0.3, 1.0;
  Ellipsoid E(Eigen::Vector2d(1, -1), S, 0.7);
  std::mt19937 rng(37);
  for (int s = 0; s < 200; ++s) {
    Eigen::VectorXd x = boundary_point(E, rng);
    Eigen::VectorXd d = x - E.center;
    EXPECT_NEAR(d.dot(E.shape * d), E.level, 1e-12);
    EXPECT_TRUE(E.contains(x, 1e-9));
    EXPECT_FALSE(E.contains(E.center + 1.001 * d, 0.0));
  }
  EXPECT_THROW(Ellipsoid(Eigen::Vector2d::Zero(),
                         -Eigen::Matrix2d::Identity(), 1.0),
               Error);
}
