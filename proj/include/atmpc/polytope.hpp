#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "atmpc/errors.hpp"
#include "atmpc/lp.hpp"

namespace atmpc {

/// H-representation polytope {x : normals x <= offsets}.
struct Polytope {
  Eigen::MatrixXd normals;
  Eigen::VectorXd offsets;

  Polytope() = default;
  Polytope(Eigen::MatrixXd A, Eigen::VectorXd b)
      : normals(std::move(A)), offsets(std::move(b)) {
    if (normals.rows() != offsets.size() || normals.rows() < 1)
      throw Error("Polytope: inconsistent rows");
    for (int i = 0; i < normals.rows(); ++i)
      if (normals.row(i).norm() == 0.0) throw Error("Polytope: zero normal row");
  }

  int dim() const { return static_cast<int>(normals.cols()); }
  int rows() const { return static_cast<int>(normals.rows()); }

  bool contains(const Eigen::VectorXd& x, double tol = 1e-9) const {
    return ((normals * x - offsets).array() <= tol).all();
  }

  /// Axis-aligned box {x : |x_i| <= r}.
  static Polytope box(int dim, double r) {
    Eigen::MatrixXd A(2 * dim, dim);
    A << Eigen::MatrixXd::Identity(dim, dim), -Eigen::MatrixXd::Identity(dim, dim);
    return Polytope(A, Eigen::VectorXd::Constant(2 * dim, r));
  }
};

/// Ellipsoid {x : (x - center)' shape (x - center) <= level}, shape SPD.
struct Ellipsoid {
  Eigen::VectorXd center;
  Eigen::MatrixXd shape;
  double level = 1.0;

  Ellipsoid() = default;
  Ellipsoid(Eigen::VectorXd c, Eigen::MatrixXd S, double lv)
      : center(std::move(c)), shape(std::move(S)), level(lv) {
    if (shape.rows() != shape.cols() || shape.rows() != center.size())
      throw Error("Ellipsoid: dimension mismatch");
    if (!(level > 0)) throw Error("Ellipsoid: level must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(shape);
    if (es.eigenvalues().minCoeff() <= 0) throw Error("Ellipsoid: shape not SPD");
  }

  bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const {
    Eigen::VectorXd d = x - center;
    return d.dot(shape * d) <= level + tol;
  }
};

struct VertexSet {
  std::vector<Eigen::VectorXd> points;
};

struct SupportResult {
  double value;
  Eigen::VectorXd maximizer;
};

/// Support function h_P(c) = max c'x over P, with a maximizer.
inline SupportResult support(const Polytope& P, const Eigen::VectorXd& c) {
  LinearProgram lp;
  lp.objective = -c;
  lp.ineq_A = P.normals;
  lp.ineq_b = P.offsets;
  try {
    auto r = solve_lp(lp);
    return {-r.value, r.x};
  } catch (const UnboundedError&) {
    throw UnboundedError("support: unbounded in the given direction");
  } catch (const InfeasibleError&) {
    throw InfeasibleError("support: empty polytope");
  }
}

/// Drop rows that do not change the set. Each retained row is irredundant:
/// deleting it strictly increases the support in its normal direction.
inline Polytope remove_redundancy(const Polytope& P, double tol = 1e-8) {
  {
    LinearProgram probe;
    probe.objective = Eigen::VectorXd::Zero(P.dim());
    probe.ineq_A = P.normals;
    probe.ineq_b = P.offsets;
    try {
      solve_lp(probe);
    } catch (const InfeasibleError&) {
      throw InfeasibleError("remove_redundancy: empty polytope");
    }
  }
  Eigen::MatrixXd A = P.normals;
  Eigen::VectorXd b = P.offsets;
  int i = 0;
  while (i < A.rows() && A.rows() > 1) {
    const int m = static_cast<int>(A.rows());
    // Test row i against the others, with its own offset relaxed so the
    // test stays bounded even when the row is a facet of an unbounded cone.
    Eigen::MatrixXd At(m, A.cols());
    Eigen::VectorXd bt(m);
    int r = 0;
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      At.row(r) = A.row(j);
      bt[r++] = b[j];
    }
    At.row(m - 1) = A.row(i);
    bt[m - 1] = b[i] + 1.0;
    Polytope test(At, bt);
    double h = support(test, A.row(i).transpose()).value;
    if (h <= b[i] + tol) {
      // redundant: remove row i in place
      Eigen::MatrixXd A2(m - 1, A.cols());
      Eigen::VectorXd b2(m - 1);
      r = 0;
      for (int j = 0; j < m; ++j) {
        if (j == i) continue;
        A2.row(r) = A.row(j);
        b2[r++] = b[j];
      }
      A = std::move(A2);
      b = std::move(b2);
    } else {
      ++i;
    }
  }
  return Polytope(A, b);
}

/// Intersection: row concatenation + redundancy removal. Throws
/// EmptyIntersectionError when the result is empty.
inline Polytope intersect(const Polytope& P1, const Polytope& P2) {
  if (P1.dim() != P2.dim()) throw Error("intersect: dimension mismatch");
  Eigen::MatrixXd A(P1.rows() + P2.rows(), P1.dim());
  A << P1.normals, P2.normals;
  Eigen::VectorXd b(P1.rows() + P2.rows());
  b << P1.offsets, P2.offsets;
  Polytope cat(A, b);
  // feasibility probe
  LinearProgram lp;
  lp.objective = Eigen::VectorXd::Zero(P1.dim());
  lp.ineq_A = A;
  lp.ineq_b = b;
  try {
    solve_lp(lp);
  } catch (const InfeasibleError&) {
    throw EmptyIntersectionError("intersect: empty intersection");
  }
  return remove_redundancy(cat);
}

namespace detail {

inline void dedupe_points(std::vector<Eigen::VectorXd>& pts, double tol = 1e-8) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : out)
      if ((p - q).norm() < tol) { dup = true; break; }
    if (!dup) out.push_back(p);
  }
  pts = std::move(out);
}

// Enumerate extreme points by intersecting all d-subsets of facets and
// keeping feasible intersection points. Exact at desk scale (d <= 3).
inline std::vector<Eigen::VectorXd> vertices_by_basis(const Polytope& P) {
  const int d = P.dim();
  const int m = P.rows();
  std::vector<Eigen::VectorXd> pts;
  std::vector<int> idx(d);
  auto visit = [&](const std::vector<int>& sel) {
    Eigen::MatrixXd D(d, d);
    Eigen::VectorXd rhs(d);
    for (int r = 0; r < d; ++r) {
      D.row(r) = P.normals.row(sel[r]);
      rhs[r] = P.offsets[sel[r]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
    if (!lu.isInvertible()) return;
    Eigen::VectorXd v = lu.solve(rhs);
    if (P.contains(v, 1e-8)) pts.push_back(v);
  };
  // iterate over combinations in lexicographic order
  std::vector<int> comb(d);
  for (int i = 0; i < d; ++i) comb[i] = i;
  if (m < d) return pts;
  for (;;) {
    visit(comb);
    int k = d - 1;
    while (k >= 0 && comb[k] == m - d + k) --k;
    if (k < 0) break;
    ++comb[k];
    for (int j = k + 1; j < d; ++j) comb[j] = comb[j - 1] + 1;
  }
  dedupe_points(pts);
  return pts;
}

}  // namespace detail

/// Extreme points of a bounded polytope, dimensions 1-3 only.
/// 2D uses the ordered adjacent-facet walk on the irredundant rows;
/// 1D and 3D fall back to facet-basis enumeration.
inline VertexSet vertices(const Polytope& P) {
  const int d = P.dim();
  if (d < 1 || d > 3)
    throw DimensionUnsupportedError("vertices: only dimensions 1-3 supported");
  // boundedness probe in +-coordinate directions
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    c[j] = 1.0;
    support(P, c);
    support(P, -c);
  }
  VertexSet vs;
  if (d == 2) {
    Polytope Q = remove_redundancy(P);
    const int m = Q.rows();
    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::atan2(Q.normals(a, 1), Q.normals(a, 0)) <
             std::atan2(Q.normals(b, 1), Q.normals(b, 0));
    });
    for (int i = 0; i < m; ++i) {
      int a = order[i], b = order[(i + 1) % m];
      Eigen::Matrix2d D;
      D << Q.normals.row(a), Q.normals.row(b);
      if (std::abs(D.determinant()) < 1e-12) continue;
      Eigen::Vector2d v = D.inverse() * Eigen::Vector2d(Q.offsets[a], Q.offsets[b]);
      if (Q.contains(v, 1e-8)) vs.points.emplace_back(v);
    }
    detail::dedupe_points(vs.points);
  } else {
    vs.points = detail::vertices_by_basis(remove_redundancy(P));
  }
  return vs;
}

/// Unit directions uniformly spread over the sphere: {+1,-1} in 1D, equal
/// angles in 2D, a Fibonacci lattice in 3D.
inline std::vector<Eigen::VectorXd> uniform_directions(int dim, int n) {
  std::vector<Eigen::VectorXd> dirs;
  dirs.reserve(n);
  if (dim == 1) {
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd d(1);
      d[0] = (i % 2 == 0) ? 1.0 : -1.0;
      dirs.push_back(d);
    }
    detail::dedupe_points(dirs);
  } else if (dim == 2) {
    for (int i = 0; i < n; ++i) {
      double a = 2.0 * std::numbers::pi * i / n;
      Eigen::VectorXd d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
  } else if (dim == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
      double z = 1.0 - 2.0 * (i + 0.5) / n;
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double a = golden * i;
      Eigen::VectorXd d(3);
      d << r * std::cos(a), r * std::sin(a), z;
      dirs.push_back(d);
    }
  } else {
    throw DimensionUnsupportedError("uniform_directions: dimensions 1-3 only");
  }
  return dirs;
}

/// Outer polytopic approximation of an ellipsoid by tangent halfspaces:
/// for each direction d, adds d'x <= d'c + sqrt(level * d' shape^-1 d).
/// The result contains the ellipsoid by construction.
inline Polytope ellipsoid_outer_polytope(const Ellipsoid& E,
                                         const std::vector<Eigen::VectorXd>& dirs) {
  if (dirs.empty()) throw Error("ellipsoid_outer_polytope: no directions");
  const int d = static_cast<int>(E.center.size());
  Eigen::LLT<Eigen::MatrixXd> llt(E.shape);
  if (llt.info() != Eigen::Success)
    throw Error("ellipsoid_outer_polytope: shape not SPD");
  Eigen::MatrixXd A(static_cast<int>(dirs.size()), d);
  Eigen::VectorXd b(static_cast<int>(dirs.size()));
  for (size_t i = 0; i < dirs.size(); ++i) {
    const Eigen::VectorXd& dir = dirs[i];
    A.row(i) = dir.transpose();
    double quad = dir.dot(llt.solve(dir));
    b[i] = dir.dot(E.center) + std::sqrt(std::max(0.0, E.level * quad));
  }
  return Polytope(A, b);
}

inline Polytope ellipsoid_outer_polytope(const Ellipsoid& E, int n_dirs) {
  const int d = static_cast<int>(E.center.size());
  if (n_dirs < d + 1)
    throw Error("ellipsoid_outer_polytope: need at least dim+1 directions");
  return ellipsoid_outer_polytope(E, uniform_directions(d, n_dirs));
}

/// Nonnegative factor H with H V = M, each row minimizing its own sum.
/// Throws ConicInfeasibleError when a row of M is outside the conic hull
/// of the rows of V.
inline Eigen::MatrixXd nonneg_factor(const Eigen::MatrixXd& V,
                                     const Eigen::MatrixXd& M) {
  if (V.cols() != M.cols()) throw Error("nonneg_factor: dimension mismatch");
  const int nv = static_cast<int>(V.rows());
  Eigen::MatrixXd H(M.rows(), nv);
  for (int i = 0; i < M.rows(); ++i) {
    LinearProgram lp;
    lp.objective = Eigen::VectorXd::Ones(nv);
    lp.eq_A = V.transpose();
    lp.eq_b = M.row(i).transpose();
    lp.nonneg.assign(nv, true);
    try {
      H.row(i) = solve_lp(lp).x.transpose();
    } catch (const InfeasibleError&) {
      throw ConicInfeasibleError("nonneg_factor: target row outside conic hull");
    }
  }
  return H;
}

/// max row sum of |H| (induced infinity norm).
inline double inf_norm(const Eigen::MatrixXd& H) {
  return H.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace atmpc
