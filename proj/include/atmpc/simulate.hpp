#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "atmpc/errors.hpp"
#include "atmpc/estimator.hpp"
#include "atmpc/scenario.hpp"
#include "atmpc/tube_mpc.hpp"

namespace atmpc {

struct TraceRecord {
  int k = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd theta_hat;
  double stage_cost = 0.0;
  double value = 0.0;         // optimal cost of the per-step program
  double bound = 0.0;         // parameter ellipsoid level
  double gamma = 0.0;
  int M = 0;
  bool updated = false;
  double violation = 0.0;     // max over rows of F x + G u - 1
};

struct PerformanceReport {
  std::string mode;
  double jp = 0.0;            // sum of stage costs / T_stp
  int steps = 0;
  bool feasible = true;
  int infeasible_step = -1;
  double max_violation = 0.0;
  double final_x_norm = 0.0;
  double final_bound = 0.0;
  double max_lyapunov_residual = 0.0;
};

/// Monitors evaluated along the rollout; `verify` reports each one.
struct MonitorReport {
  bool containment = true;        // theta* in cover, error within ellipsoid
  bool bound_decay = true;        // bound halves exactly per update
  bool horizon_monotone = true;   // M never grows
  bool gamma_monotone = true;     // gamma never shrinks
  bool cost_monotone = true;      // max-eig(W_next - W) <= 1e-9
  bool lyapunov = true;           // value decrease covers the stage cost
  bool constraints = true;        // violation <= 1e-8
  bool cost_certificate = true;   // vertex-LMI residual <= 1e-7 per update
  double worst_cost_eig = 0.0;
  double worst_cost_residual = 0.0;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  PerformanceReport report;
  MonitorReport monitors;
  std::map<int, VertexSet> snapshots;  // parameter-cover vertices at step k
};

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::adaptive: return "adaptive";
    case Mode::simplified: return "simplified";
    default: return "robust";
  }
}

/// Closed-loop rollout of plant, estimator and controller for T_stp + 1
/// controller calls (k = 0..T_stp). Deterministic: no randomness anywhere.
inline RunResult run_closed_loop(const ScenarioConfig& cfg, Mode mode,
                                 const std::set<int>& snapshot_ks = {}) {
  RunResult out;
  out.report.mode = mode_name(mode);

  EstimatorSettings es;
  es.forgetting = cfg.forgetting;
  es.eps_x = cfg.eps_x;
  es.eps_r = cfg.eps_r;
  es.pol_directions = cfg.pol_directions;
  if (mode == Mode::robust) {
    es.eps_x = std::numeric_limits<double>::infinity();
    es.eps_r = std::numeric_limits<double>::infinity();
  }
  const int nth = cfg.model.n_theta();
  Eigen::MatrixXd Ke =
      cfg.kappa * Eigen::MatrixXd::Identity(cfg.model.n_x(), cfg.model.n_x());
  EstimatorState st = make_estimator(
      cfg.model, Eigen::VectorXd::Zero(nth),
      cfg.gamma0_scale * Eigen::MatrixXd::Identity(nth, nth), cfg.r0, cfg.x0,
      cfg.pol_directions);

  ConstraintData cons{cfg.F, cfg.G, cfg.K};
  ControllerConfig cc;
  cc.N = cfg.N;
  cc.lambda_c = cfg.lambda_c;
  cc.Q = cfg.Q;
  cc.R = cfg.R;
  Controller ctrl = make_controller(cfg.model, cons, cc, st.fss,
                                    st.theta_hat, mode);
  out.monitors.worst_cost_residual = ctrl.cost_residual;
  if (ctrl.cost_residual > 1e-7) out.monitors.cost_certificate = false;

  Eigen::VectorXd x = cfg.x0;
  double jp = 0.0;
  double prev_value = 0.0, prev_stage = 0.0;
  bool have_prev = false;
  double expected_bound = st.bound;
  int M_prev = ctrl.M;
  double g_prev = ctrl.gamma;
  Eigen::MatrixXd W_prev = ctrl.W;

  for (int k = 0; k <= cfg.t_stp; ++k) {
    if (snapshot_ks.count(k)) {
      out.snapshots[k] = vertices(st.fss);
    }
    auto info = estimator_measure(st, x, es);
    if (info.triggered) {
      expected_bound *= cfg.forgetting;
      controller_update(ctrl, st.theta_hat, st.fss);
      out.monitors.worst_cost_residual = std::max(
          out.monitors.worst_cost_residual, ctrl.cost_residual);
      if (ctrl.cost_residual > 1e-7) out.monitors.cost_certificate = false;
    }
    // monitors: containment and exact bound decay
    if (nth > 0) {
      Eigen::VectorXd d = cfg.theta_star - st.theta_hat;
      if (d.dot(st.gamma * d) > st.bound + 1e-12) out.monitors.containment = false;
      if (!st.fss.contains(cfg.theta_star, 1e-10))
        out.monitors.containment = false;
    }
    if (st.bound != expected_bound) out.monitors.bound_decay = false;
    if (ctrl.M > M_prev) out.monitors.horizon_monotone = false;
    if (ctrl.gamma < g_prev - 1e-15) out.monitors.gamma_monotone = false;
    {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ew(ctrl.W - W_prev);
      double e = ew.eigenvalues().maxCoeff();
      out.monitors.worst_cost_eig = std::max(out.monitors.worst_cost_eig, e);
      if (e > 1e-9) out.monitors.cost_monotone = false;
    }
    M_prev = ctrl.M;
    g_prev = ctrl.gamma;
    W_prev = ctrl.W;

    MpcSolution sol;
    try {
      sol = controller_step(ctrl, x, k);
    } catch (const InfeasibleAtStepError& e) {
      out.report.feasible = false;
      out.report.infeasible_step = e.step;
      break;
    }

    TraceRecord rec;
    rec.k = k;
    rec.x = x;
    rec.u = sol.u;
    rec.theta_hat = st.theta_hat;
    rec.stage_cost = x.dot(cfg.Q * x) + sol.u.dot(cfg.R * sol.u);
    rec.value = sol.value;
    rec.bound = st.bound;
    rec.gamma = ctrl.gamma;
    rec.M = ctrl.M;
    rec.updated = info.triggered;
    rec.violation = (cfg.F * x + cfg.G * sol.u).maxCoeff() - 1.0;
    out.trace.push_back(rec);

    jp += rec.stage_cost;
    out.report.max_violation =
        std::max(out.report.max_violation, rec.violation);
    if (rec.violation > 1e-8) out.monitors.constraints = false;
    if (have_prev) {
      double res = sol.value - prev_value + prev_stage;
      out.report.max_lyapunov_residual =
          std::max(out.report.max_lyapunov_residual, res);
      if (res > 1e-5) out.monitors.lyapunov = false;
    }
    prev_value = sol.value;
    prev_stage = rec.stage_cost;
    have_prev = true;

    estimator_propagate(st, cfg.model, x, sol.u, Ke, info);
    x = cfg.model.A(cfg.theta_star) * x + cfg.model.B(cfg.theta_star) * sol.u;
  }

  out.report.jp = jp / cfg.t_stp;
  out.report.steps = static_cast<int>(out.trace.size());
  out.report.final_x_norm = x.norm();
  out.report.final_bound = st.bound;
  return out;
}

struct ComparisonResult {
  RunResult adaptive;
  RunResult simplified;
  RunResult robust;
};

/// Run all three modes on the same scenario and enforce the performance
/// ordering adaptive <= simplified <= robust (up to 1e-9).
inline ComparisonResult compare_modes(const ScenarioConfig& cfg,
                                      const std::set<int>& snapshot_ks = {}) {
  ComparisonResult r;
  r.adaptive = run_closed_loop(cfg, Mode::adaptive, snapshot_ks);
  r.simplified = run_closed_loop(cfg, Mode::simplified, snapshot_ks);
  r.robust = run_closed_loop(cfg, Mode::robust, snapshot_ks);
  double ja = r.adaptive.report.jp;
  double js = r.simplified.report.jp;
  double jr = r.robust.report.jp;
  if (!(ja <= js + 1e-9 && js <= jr + 1e-9)) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "mode ordering violated: adaptive %.12g, simplified %.12g, "
                  "robust %.12g",
                  ja, js, jr);
    throw OrderingViolationError(buf);
  }
  return r;
}

namespace io_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::ordered_json report_json(const PerformanceReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["jp"] = r.jp;
  j["steps"] = r.steps;
  j["feasible"] = r.feasible;
  j["infeasible_step"] = r.infeasible_step;
  j["max_violation"] = r.max_violation;
  j["final_x_norm"] = r.final_x_norm;
  j["final_bound"] = r.final_bound;
  j["max_lyapunov_residual"] = r.max_lyapunov_residual;
  return j;
}

}  // namespace io_detail

/// Vertex set as {"points": [[...], ...]} — the wire format for set data.
inline nlohmann::ordered_json vertex_set_json(const VertexSet& vs) {
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (const auto& p : vs.points) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int i = 0; i < p.size(); ++i) row.push_back(p[i]);
    pts.push_back(row);
  }
  nlohmann::ordered_json j;
  j["points"] = pts;
  return j;
}

/// Polytope as {"normals": [[...]], "offsets": [...]}.
inline nlohmann::ordered_json polytope_json(const Polytope& p) {
  nlohmann::ordered_json normals = nlohmann::ordered_json::array();
  for (int r = 0; r < p.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < p.dim(); ++c) row.push_back(p.normals(r, c));
    normals.push_back(row);
  }
  nlohmann::ordered_json offsets = nlohmann::ordered_json::array();
  for (int r = 0; r < p.rows(); ++r) offsets.push_back(p.offsets[r]);
  nlohmann::ordered_json j;
  j["normals"] = normals;
  j["offsets"] = offsets;
  return j;
}

/// Write trace.csv, sets_k{k}.json and report.json with stable field order
/// and full-precision doubles, so reruns are byte-identical.
inline void export_artifacts(const RunResult& run, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::ofstream csv(fs::path(out_dir) / "trace.csv");
  if (!csv) throw Error("export_artifacts: cannot write trace.csv");
  const int nx = run.trace.empty() ? 0 : static_cast<int>(run.trace[0].x.size());
  const int nu = run.trace.empty() ? 0 : static_cast<int>(run.trace[0].u.size());
  const int nth =
      run.trace.empty() ? 0 : static_cast<int>(run.trace[0].theta_hat.size());
  csv << "k";
  for (int i = 0; i < nx; ++i) csv << ",x" << i;
  for (int i = 0; i < nu; ++i) csv << ",u" << i;
  for (int i = 0; i < nth; ++i) csv << ",theta_hat" << i;
  csv << ",stage_cost,value,bound,gamma,M,updated,violation\n";
  for (const auto& r : run.trace) {
    csv << r.k;
    for (int i = 0; i < nx; ++i) csv << "," << io_detail::fmt(r.x[i]);
    for (int i = 0; i < nu; ++i) csv << "," << io_detail::fmt(r.u[i]);
    for (int i = 0; i < nth; ++i)
      csv << "," << io_detail::fmt(r.theta_hat[i]);
    csv << "," << io_detail::fmt(r.stage_cost) << ","
        << io_detail::fmt(r.value) << "," << io_detail::fmt(r.bound) << ","
        << io_detail::fmt(r.gamma) << "," << r.M << ","
        << (r.updated ? 1 : 0) << "," << io_detail::fmt(r.violation) << "\n";
  }
  csv.close();

  for (const auto& [k, vs] : run.snapshots) {
    std::ofstream sf(fs::path(out_dir) / ("sets_k" + std::to_string(k) +
                                          ".json"));
    if (!sf) throw Error("export_artifacts: cannot write set snapshot");
    sf << vertex_set_json(vs).dump(2) << "\n";
  }

  std::ofstream rf(fs::path(out_dir) / "report.json");
  if (!rf) throw Error("export_artifacts: cannot write report.json");
  rf << io_detail::report_json(run.report).dump(2) << "\n";
}

}  // namespace atmpc
