#pragma once

#include <Eigen/Dense>
#include <vector>

#include "atmpc/polytope.hpp"

namespace atmpc {

inline double spectral_radius(const Eigen::MatrixXd& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

/// Maximal RPI set for x+ = phi_j x over the vertex maps, subject to the
/// constraint polytope (rows C x <= d, typically (F+GK) x <= 1).
///
/// Breadth-first expansion over vertex-map sequences: a candidate row
/// c' phi_j is kept only if it is not already implied by the accumulated
/// rows. The fixed point is reached when a whole level adds nothing; the
/// result is then pruned to its irredundant core.
inline Polytope mrpi_set(const std::vector<Eigen::MatrixXd>& vertex_maps,
                         const Polytope& constraint, int max_iter = 500,
                         double tol = 1e-9) {
  if (vertex_maps.empty()) throw Error("mrpi_set: no vertex maps");
  for (const auto& phi : vertex_maps)
    if (spectral_radius(phi) >= 1.0)
      throw UnstableError("mrpi_set: vertex map not Schur stable");

  Eigen::MatrixXd A = constraint.normals;
  Eigen::VectorXd b = constraint.offsets;
  // frontier rows from the previous level, paired with their offsets
  Eigen::MatrixXd frontA = A;
  Eigen::VectorXd frontb = b;

  for (int level = 0; level < max_iter; ++level) {
    std::vector<Eigen::RowVectorXd> newRows;
    std::vector<double> newOffs;
    Polytope current(A, b);
    for (const auto& phi : vertex_maps) {
      Eigen::MatrixXd cand = frontA * phi;
      for (int i = 0; i < cand.rows(); ++i) {
        double h = support(current, cand.row(i).transpose()).value;
        if (h > frontb[i] + tol) {
          newRows.emplace_back(cand.row(i));
          newOffs.push_back(frontb[i]);
          // grow the working set so later candidates see this row
          A.conservativeResize(A.rows() + 1, Eigen::NoChange);
          A.row(A.rows() - 1) = cand.row(i);
          b.conservativeResize(b.size() + 1);
          b[b.size() - 1] = frontb[i];
          current = Polytope(A, b);
        }
      }
    }
    if (newRows.empty()) return remove_redundancy(Polytope(A, b));
    frontA.resize(static_cast<int>(newRows.size()), A.cols());
    frontb.resize(static_cast<int>(newRows.size()));
    for (size_t i = 0; i < newRows.size(); ++i) {
      frontA.row(static_cast<int>(i)) = newRows[i];
      frontb[static_cast<int>(i)] = newOffs[i];
    }
  }
  throw IterationCapError("mrpi_set: no fixed point within max_iter levels");
}

/// Certified one-step contraction factor of {Vx <= 1} under the vertex
/// maps: max over maps and rows of support_{Vx<=1}(row of V phi).
inline double contraction_factor(const Eigen::MatrixXd& V,
                                 const std::vector<Eigen::MatrixXd>& vertex_maps) {
  Polytope P(V, Eigen::VectorXd::Ones(V.rows()));
  double worst = 0.0;
  for (const auto& phi : vertex_maps) {
    Eigen::MatrixXd R = V * phi;
    for (int i = 0; i < R.rows(); ++i)
      worst = std::max(worst, support(P, R.row(i).transpose()).value);
  }
  return worst;
}

/// Shape matrix V of a lambda-contractive set for the vertex maps, grown
/// by backward set iteration from the seed:
///   P_{i+1} = P_i  intersect  {x : phi_j x in lambda_c P_i, all j}
/// until phi_j {Vx<=1} subset lambda_c {Vx<=1} is certified for every j.
inline Eigen::MatrixXd lambda_contractive_shape(
    const std::vector<Eigen::MatrixXd>& vertex_maps, double lambda_c,
    const Polytope& seed, int max_iter = 100, double tol = 1e-10) {
  if (!(lambda_c > 0.0 && lambda_c < 1.0))
    throw Error("lambda_contractive_shape: lambda_c must lie in (0,1)");
  if ((seed.offsets.array() <= 0).any())
    throw Error("lambda_contractive_shape: seed must contain 0 in its interior");
  // normalize seed rows to offset 1
  Eigen::MatrixXd V = seed.normals.array().colwise() / seed.offsets.array();
  for (int it = 0; it < max_iter; ++it) {
    if (contraction_factor(V, vertex_maps) <= lambda_c + tol) return V;
    Eigen::MatrixXd grown(V.rows() * (1 + static_cast<int>(vertex_maps.size())),
                          V.cols());
    grown.topRows(V.rows()) = V;
    int r = static_cast<int>(V.rows());
    for (const auto& phi : vertex_maps) {
      grown.middleRows(r, V.rows()) = V * phi / lambda_c;
      r += static_cast<int>(V.rows());
    }
    Polytope pruned =
        remove_redundancy(Polytope(grown, Eigen::VectorXd::Ones(grown.rows())));
    V = pruned.normals.array().colwise() / pruned.offsets.array();
  }
  throw NotContractiveError(
      "lambda_contractive_shape: not certified within max_iter");
}

}  // namespace atmpc
