#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <vector>

#include "atmpc/errors.hpp"
#include "atmpc/estimator.hpp"
#include "atmpc/invariant_sets.hpp"
#include "atmpc/lyapunov.hpp"
#include "atmpc/polytope.hpp"
#include "atmpc/qp.hpp"

namespace atmpc {

/// Mixed state/input constraint  F x + G u <= 1  with prestabilizing
/// feedback u = K x + v.
struct ConstraintData {
  Eigen::MatrixXd F;
  Eigen::MatrixXd G;
  Eigen::MatrixXd K;

  Eigen::MatrixXd FGK() const { return F + G * K; }
};

/// Error-tube cross-section {e : V e <= alpha} plus the constraint
/// tightening factor H: H V = F + G K, H >= 0 with minimal row sums.
/// Both are computed once and held fixed afterwards.
struct TubeShape {
  Eigen::MatrixXd V;
  Eigen::MatrixXd H;
  double h_norm = 0.0;  // ||H||_inf, scales the admissible terminal tube size
};

inline TubeShape make_tube_shape(const std::vector<Eigen::MatrixXd>& vertex_maps,
                                 const Eigen::MatrixXd& fgk,
                                 double lambda_c = 0.95) {
  Polytope cons(fgk, Eigen::VectorXd::Ones(fgk.rows()));
  Polytope Z = mrpi_set(vertex_maps, cons);
  Eigen::MatrixXd Zn = Z.normals.array().colwise() / Z.offsets.array();
  TubeShape ts;
  ts.V = lambda_contractive_shape(
      vertex_maps, lambda_c, Polytope(Zn, Eigen::VectorXd::Ones(Zn.rows())));
  ts.H = nonneg_factor(ts.V, fgk);
  ts.h_norm = inf_norm(ts.H);
  return ts;
}

/// Per-vertex closed-loop data relative to the current nominal model.
struct VertexTransition {
  Eigen::MatrixXd phi;   // A(th_j) + B(th_j) K
  Eigen::MatrixXd dphi;  // phi_j - phi_hat
  Eigen::MatrixXd dB;    // B_j - B_hat
  Eigen::MatrixXd H;     // H_j V = V phi_j, H_j >= 0
};

struct VertexDataSet {
  Eigen::MatrixXd phi_hat;
  Eigen::MatrixXd B_hat;
  std::vector<VertexTransition> vertices;
  double max_h_norm = 0.0;  // max_j ||H_j||_inf, must be < 1
};

inline VertexDataSet build_vertex_data(
    const ParametricModel& model, const Eigen::MatrixXd& K,
    const Eigen::VectorXd& theta_hat,
    const std::vector<Eigen::VectorXd>& vertex_thetas,
    const Eigen::MatrixXd& V) {
  if (vertex_thetas.empty())
    throw Error("build_vertex_data: empty vertex set");
  VertexDataSet d;
  d.phi_hat = model.A(theta_hat) + model.B(theta_hat) * K;
  d.B_hat = model.B(theta_hat);
  for (const auto& th : vertex_thetas) {
    VertexTransition t;
    t.phi = model.A(th) + model.B(th) * K;
    t.dphi = t.phi - d.phi_hat;
    t.dB = model.B(th) - d.B_hat;
    t.H = nonneg_factor(V, V * t.phi);
    d.max_h_norm = std::max(d.max_h_norm, inf_norm(t.H));
    d.vertices.push_back(std::move(t));
  }
  if (d.max_h_norm >= 1.0)
    throw NotContractiveError(
        "build_vertex_data: tube shape not contractive on the vertex set");
  return d;
}

/// Supports of the constraint, mismatch and tube rows over the l-step image
/// of the terminal set {ZA x <= 1} under each vertex map.
struct SupportTriplet {
  double f_bar = 0.0;  // max |support| of constraint rows
  double c_bar = 0.0;  // max |support| of model-mismatch rows
  double g_bar = 0.0;  // max width of tube rows
};

inline SupportTriplet support_triplet(const Eigen::MatrixXd& ZA,
                                      const VertexDataSet& vd,
                                      const Eigen::MatrixXd& fgk,
                                      const Eigen::MatrixXd& V, int l) {
  Polytope Z(ZA, Eigen::VectorXd::Ones(ZA.rows()));
  SupportTriplet t;
  for (const auto& vt : vd.vertices) {
    Eigen::MatrixXd Pl =
        Eigen::MatrixXd::Identity(vt.phi.rows(), vt.phi.cols());
    for (int i = 0; i < l; ++i) Pl = vt.phi * Pl;
    Eigen::MatrixXd PlT = Pl.transpose();
    for (int r = 0; r < fgk.rows(); ++r)
      t.f_bar = std::max(
          t.f_bar, std::abs(support(Z, PlT * fgk.row(r).transpose()).value));
    Eigen::MatrixXd Cm = V * vt.dphi;
    for (int r = 0; r < Cm.rows(); ++r)
      t.c_bar = std::max(
          t.c_bar, std::abs(support(Z, PlT * Cm.row(r).transpose()).value));
    Eigen::MatrixXd Gm = V * vt.phi;
    for (int r = 0; r < Gm.rows(); ++r) {
      Eigen::VectorXd c = PlT * Gm.row(r).transpose();
      t.g_bar =
          std::max(t.g_bar, support(Z, c).value + support(Z, -c).value);
    }
  }
  return t;
}

struct HorizonResult {
  int M = 0;
  double gamma = 0.0;      // admissible upper terminal tube size
  double gamma_lo = 0.0;   // lower threshold it must clear
};

/// Smallest settling horizon M such that, after M steps inside the terminal
/// set, a terminal tube size gamma in [gamma_lo, gamma_hi] exists.
inline HorizonResult find_horizon_and_gamma(const Eigen::MatrixXd& ZA,
                                            const VertexDataSet& vd,
                                            const Eigen::MatrixXd& fgk,
                                            const TubeShape& tube,
                                            int l_max = 50) {
  if (vd.max_h_norm >= 1.0 || tube.h_norm <= 0.0)
    throw NotContractiveError("find_horizon_and_gamma: invalid tube data");
  for (int l = 0; l <= l_max; ++l) {
    SupportTriplet t = support_triplet(ZA, vd, fgk, tube.V, l);
    double glo = (t.c_bar + t.g_bar) / (1.0 - vd.max_h_norm);
    double ghi = (1.0 - t.f_bar) / tube.h_norm;
    if (ghi >= glo && ghi >= 0.0) return {l, ghi, glo};
  }
  throw HorizonCapError(
      "find_horizon_and_gamma: no admissible horizon within the cap");
}

enum class Mode { adaptive, simplified, robust };

struct ControllerConfig {
  int N = 10;               // input prediction horizon
  double lambda_c = 0.95;   // contraction rate of the tube shape
  int l_max = 50;           // settling-horizon search cap
  Eigen::MatrixXd Q;        // stage cost on x
  Eigen::MatrixXd R;        // stage cost on u
  QpSettings qp;
};

struct MpcSolution {
  Eigen::VectorXd u;        // applied input K x + v_0
  Eigen::VectorXd v;        // optimal correction sequence, stacked
  Eigen::VectorXd alpha;    // tube sizes alpha_1 .. alpha_{N+M}, stacked
  double value = 0.0;       // full cost including the x' Wxx x constant
  int iterations = 0;
};

namespace detail {

/// Lifted autonomous prediction matrix for [x; v_0..v_{N-1}].
inline Eigen::MatrixXd prediction_lift(const Eigen::MatrixXd& phi,
                                       const Eigen::MatrixXd& B, int N) {
  const int nx = static_cast<int>(phi.rows());
  const int nu = static_cast<int>(B.cols());
  Eigen::MatrixXd Psi = Eigen::MatrixXd::Zero(nx + N * nu, nx + N * nu);
  Psi.topLeftCorner(nx, nx) = phi;
  Psi.block(0, nx, nx, nu) = B;
  if (N > 1)
    Psi.block(nx, nx + nu, (N - 1) * nu, (N - 1) * nu) =
        Eigen::MatrixXd::Identity((N - 1) * nu, (N - 1) * nu);
  return Psi;
}

/// Stage cost of the lifted state under u = K x + v_0.
inline Eigen::MatrixXd lifted_cost(const Eigen::MatrixXd& Q,
                                   const Eigen::MatrixXd& R,
                                   const Eigen::MatrixXd& K, int N) {
  const int nx = static_cast<int>(Q.rows());
  const int nu = static_cast<int>(R.rows());
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(nu, N * nu);
  E.leftCols(nu) = Eigen::MatrixXd::Identity(nu, nu);
  Eigen::MatrixXd Qbar(nx + N * nu, nx + N * nu);
  Qbar.topLeftCorner(nx, nx) = Q + K.transpose() * R * K;
  Qbar.topRightCorner(nx, N * nu) = K.transpose() * R * E;
  Qbar.bottomLeftCorner(N * nu, nx) = E.transpose() * R * K;
  Qbar.bottomRightCorner(N * nu, N * nu) = E.transpose() * R * E;
  return Qbar;
}

}  // namespace detail

/// Everything the per-step QP depends on besides the measured state: the
/// inequality template A d <= b0 + Bx x and the cost blocks. Rebuilt only
/// when the controller ingredients change.
struct ProblemTemplate {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b0;
  Eigen::MatrixXd Bx;
  Eigen::SparseMatrix<double> hessian;
  Eigen::MatrixXd Wxx;
  Eigen::MatrixXd Wvx;
  int N = 0, M = 0, n_u = 0, n_v = 0;
};

/// Tube MPC controller state. `tube` is fixed after construction; the
/// terminal set ZA, horizon M, terminal size gamma and cost matrix W evolve
/// according to the mode.
struct Controller {
  ParametricModel model;
  ConstraintData cons;
  ControllerConfig cfg;
  Mode mode = Mode::adaptive;

  TubeShape tube;
  Eigen::VectorXd theta_hat;
  std::vector<Eigen::VectorXd> vertex_thetas;
  VertexDataSet vdata;
  Eigen::MatrixXd ZA;     // terminal set rows, offsets 1
  Eigen::MatrixXd D;      // D V = ZA, D >= 0
  int M = 0;
  double gamma = 0.0;
  Eigen::MatrixXd W;
  double cost_residual = 0.0;  // max vertex-LMI eigenvalue of the latest W

  ProblemTemplate tmpl;
};

/// Assemble the inequality template and cost blocks from the current
/// controller ingredients. Decision d = [v_0..v_{N-1}; alpha_1..alpha_{N+M}]
/// with alpha_0 = 0 and the nominal trajectory eliminated:
///   z_l = phi_hat^l x + sum_i phi_hat^{l-1-i} B_hat v_i.
inline ProblemTemplate assemble_problem(const Controller& c) {
  const int nx = c.model.n_x();
  const int nu = c.model.n_u();
  const int N = c.cfg.N;
  const int L = N + c.M;
  const int nV = static_cast<int>(c.tube.V.rows());
  const int ncon = static_cast<int>(c.cons.F.rows());
  const int nZ = static_cast<int>(c.ZA.rows());
  const int nvar = N * nu + L * nV;
  const Eigen::MatrixXd fgk = c.cons.FGK();

  // nominal trajectory coefficients z_l = Zx[l] x + Zv[l] v
  std::vector<Eigen::MatrixXd> Zx(L + 1), Zv(L + 1);
  Zx[0] = Eigen::MatrixXd::Identity(nx, nx);
  Zv[0] = Eigen::MatrixXd::Zero(nx, N * nu);
  for (int l = 0; l < L; ++l) {
    Zx[l + 1] = c.vdata.phi_hat * Zx[l];
    Zv[l + 1] = c.vdata.phi_hat * Zv[l];
    if (l < N) Zv[l + 1].middleCols(l * nu, nu) += c.vdata.B_hat;
  }

  const int nvert = static_cast<int>(c.vdata.vertices.size());
  const int rows = L * nV            // alpha >= 0
                   + L * ncon        // stage constraints l = 0..L-1
                   + nvert * L * nV  // tube recursions
                   + nZ              // terminal set rows
                   + nV;             // terminal tube size
  ProblemTemplate t;
  t.N = N;
  t.M = c.M;
  t.n_u = nu;
  t.n_v = nV;
  t.b0 = Eigen::VectorXd::Zero(rows);
  t.Bx = Eigen::MatrixXd::Zero(rows, nx);

  auto acol = [&](int l) { return N * nu + (l - 1) * nV; };  // alpha_l block
  std::vector<Eigen::Triplet<double>> trip;
  auto add_block = [&](int r0, int c0, const Eigen::MatrixXd& Mblk) {
    for (int i = 0; i < Mblk.rows(); ++i)
      for (int j = 0; j < Mblk.cols(); ++j)
        if (Mblk(i, j) != 0.0) trip.emplace_back(r0 + i, c0 + j, Mblk(i, j));
  };

  int r = 0;
  // -alpha_l <= 0
  for (int l = 1; l <= L; ++l, r += nV)
    add_block(r, acol(l), -Eigen::MatrixXd::Identity(nV, nV));
  // H alpha_l + fgk z_l + G v_l <= 1
  for (int l = 0; l < L; ++l, r += ncon) {
    Eigen::MatrixXd coef_v = fgk * Zv[l];
    if (l < N) coef_v.middleCols(l * nu, nu) += c.cons.G;
    add_block(r, 0, coef_v);
    if (l >= 1) add_block(r, acol(l), c.tube.H);
    t.b0.segment(r, ncon).setOnes();
    t.Bx.middleRows(r, ncon) = -fgk * Zx[l];
  }
  // H_j alpha_l + V (dphi_j z_l + dB_j v_l) - alpha_{l+1} <= 0
  for (const auto& vt : c.vdata.vertices) {
    Eigen::MatrixXd Vdphi = c.tube.V * vt.dphi;
    Eigen::MatrixXd VdB = c.tube.V * vt.dB;
    for (int l = 0; l < L; ++l, r += nV) {
      Eigen::MatrixXd coef_v = Vdphi * Zv[l];
      if (l < N) coef_v.middleCols(l * nu, nu) += VdB;
      add_block(r, 0, coef_v);
      if (l >= 1) add_block(r, acol(l), vt.H);
      add_block(r, acol(l + 1), -Eigen::MatrixXd::Identity(nV, nV));
      t.Bx.middleRows(r, nV) = -Vdphi * Zx[l];
    }
  }
  // ZA z_N + D alpha_N <= 1
  add_block(r, 0, c.ZA * Zv[N]);
  add_block(r, acol(N), c.D);
  t.b0.segment(r, nZ).setOnes();
  t.Bx.middleRows(r, nZ) = -c.ZA * Zx[N];
  r += nZ;
  // alpha_L <= gamma
  add_block(r, acol(L), Eigen::MatrixXd::Identity(nV, nV));
  t.b0.segment(r, nV).setConstant(c.gamma);
  r += nV;

  t.A.resize(rows, nvar);
  t.A.setFromTriplets(trip.begin(), trip.end());

  // cost: [x; v]' W [x; v] -> hessian 2 Wvv on the v block
  t.Wxx = c.W.topLeftCorner(nx, nx);
  t.Wvx = c.W.bottomLeftCorner(N * nu, nx);
  Eigen::MatrixXd Wvv = c.W.bottomRightCorner(N * nu, N * nu);
  std::vector<Eigen::Triplet<double>> htrip;
  for (int i = 0; i < N * nu; ++i)
    for (int j = 0; j < N * nu; ++j)
      if (Wvv(i, j) != 0.0) htrip.emplace_back(i, j, 2.0 * Wvv(i, j));
  t.hessian.resize(nvar, nvar);
  t.hessian.setFromTriplets(htrip.begin(), htrip.end());
  return t;
}

/// Vertices of the current parameter cover, shared helper.
inline std::vector<Eigen::VectorXd> cover_vertices(const Polytope& fss) {
  auto vs = vertices(fss);
  std::vector<Eigen::VectorXd> out;
  for (const auto& p : vs.points) out.push_back(p);
  return out;
}

/// Build the controller at time zero from the initial parameter cover.
inline Controller make_controller(const ParametricModel& model,
                                  const ConstraintData& cons,
                                  const ControllerConfig& cfg,
                                  const Polytope& fss0,
                                  const Eigen::VectorXd& theta0, Mode mode) {
  Controller c;
  c.model = model;
  c.cons = cons;
  c.cfg = cfg;
  c.mode = mode;
  c.theta_hat = theta0;
  c.vertex_thetas = cover_vertices(fss0);

  std::vector<Eigen::MatrixXd> maps;
  for (const auto& th : c.vertex_thetas)
    maps.push_back(model.A(th) + model.B(th) * cons.K);
  const Eigen::MatrixXd fgk = cons.FGK();
  c.tube = make_tube_shape(maps, fgk, cfg.lambda_c);
  c.vdata = build_vertex_data(model, cons.K, theta0, c.vertex_thetas,
                              c.tube.V);

  Polytope Z = mrpi_set(maps, Polytope(fgk, Eigen::VectorXd::Ones(fgk.rows())));
  c.ZA = Z.normals.array().colwise() / Z.offsets.array();
  c.D = nonneg_factor(c.tube.V, c.ZA);
  auto hg = find_horizon_and_gamma(c.ZA, c.vdata, fgk, c.tube, cfg.l_max);
  c.M = hg.M;
  c.gamma = hg.gamma;

  std::vector<Eigen::MatrixXd> lifts;
  for (const auto& th : c.vertex_thetas)
    lifts.push_back(detail::prediction_lift(
        model.A(th) + model.B(th) * cons.K, model.B(th), cfg.N));
  Eigen::MatrixXd qbar = detail::lifted_cost(cfg.Q, cfg.R, cons.K, cfg.N);
  Eigen::MatrixXd nominal = detail::prediction_lift(
      c.vdata.phi_hat, c.vdata.B_hat, cfg.N);
  auto cw = find_cost_matrix(lifts, qbar, nominal);
  c.W = cw.W;
  c.cost_residual = cw.max_residual_eig;

  c.tmpl = assemble_problem(c);
  return c;
}

/// Refresh the controller after an estimator update. In simplified mode only
/// the nominal model and the tube mismatch data move; in adaptive mode the
/// terminal set, settling horizon, terminal size and cost matrix move too
/// (monotonically: M never grows, gamma never shrinks, W never grows).
inline void controller_update(Controller& c, const Eigen::VectorXd& theta_hat,
                              const Polytope& fss) {
  if (c.mode == Mode::robust) return;
  c.theta_hat = theta_hat;
  c.vertex_thetas = cover_vertices(fss);
  c.vdata = build_vertex_data(c.model, c.cons.K, theta_hat, c.vertex_thetas,
                              c.tube.V);
  if (c.mode == Mode::adaptive) {
    const Eigen::MatrixXd fgk = c.cons.FGK();
    std::vector<Eigen::MatrixXd> maps;
    for (const auto& vt : c.vdata.vertices) maps.push_back(vt.phi);
    Polytope Z =
        mrpi_set(maps, Polytope(fgk, Eigen::VectorXd::Ones(fgk.rows())));
    Eigen::MatrixXd ZA2 = Z.normals.array().colwise() / Z.offsets.array();
    auto hg2 = find_horizon_and_gamma(ZA2, c.vdata, fgk, c.tube, c.cfg.l_max);
    if (hg2.M <= c.M) {
      c.ZA = ZA2;
      c.D = nonneg_factor(c.tube.V, c.ZA);
      c.M = hg2.M;
      c.gamma = std::max(c.gamma, hg2.gamma);
    } else {
      // keep the previous terminal set; the horizon can only improve there
      auto hg = find_horizon_and_gamma(c.ZA, c.vdata, fgk, c.tube,
                                       c.cfg.l_max);
      c.M = std::min(c.M, hg.M);
      c.gamma = std::max(c.gamma, hg.gamma);
    }

    std::vector<Eigen::MatrixXd> lifts;
    for (const auto& th : c.vertex_thetas)
      lifts.push_back(detail::prediction_lift(
          c.model.A(th) + c.model.B(th) * c.cons.K, c.model.B(th), c.cfg.N));
    Eigen::MatrixXd qbar =
        detail::lifted_cost(c.cfg.Q, c.cfg.R, c.cons.K, c.cfg.N);
    Eigen::MatrixXd nominal =
        detail::prediction_lift(c.vdata.phi_hat, c.vdata.B_hat, c.cfg.N);
    auto cw = find_cost_matrix(lifts, qbar, nominal, c.W);
    c.W = cw.W;
    c.cost_residual = cw.max_residual_eig;
  }
  c.tmpl = assemble_problem(c);
}

/// Solve the per-step QP at the measured state and return the applied input.
inline MpcSolution controller_step(const Controller& c,
                                   const Eigen::VectorXd& x, int step = -1) {
  const ProblemTemplate& t = c.tmpl;
  QuadraticProgram qp;
  qp.hessian = t.hessian;
  qp.linear = Eigen::VectorXd::Zero(t.A.cols());
  qp.linear.head(t.N * t.n_u) = 2.0 * t.Wvx * x;
  qp.ineq_A = t.A;
  qp.ineq_b = t.b0 + t.Bx * x;
  QpResult r;
  try {
    r = solve_qp(qp, c.cfg.qp);
  } catch (const InfeasibleError& e) {
    throw InfeasibleAtStepError(
        step, std::string("tube MPC QP infeasible: ") + e.what());
  }
  MpcSolution sol;
  sol.v = r.x.head(t.N * t.n_u);
  sol.alpha = r.x.tail(r.x.size() - t.N * t.n_u);
  sol.u = c.cons.K * x + sol.v.head(t.n_u);
  sol.value = r.value + x.dot(t.Wxx * x);
  sol.iterations = r.iterations;
  return sol;
}

}  // namespace atmpc
