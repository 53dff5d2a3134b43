#pragma once

#include <Eigen/Dense>
#include <vector>

#include "atmpc/errors.hpp"
#include "atmpc/polytope.hpp"

namespace atmpc {

/// Plant with affine parameter dependence:
///   x+ = A(theta) x + B(theta) u,  A = A0 + sum th_i A_i,  B likewise.
struct ParametricModel {
  Eigen::MatrixXd A0;
  Eigen::MatrixXd B0;
  std::vector<Eigen::MatrixXd> dA;  // one per parameter
  std::vector<Eigen::MatrixXd> dB;

  int n_x() const { return static_cast<int>(A0.rows()); }
  int n_u() const { return static_cast<int>(B0.cols()); }
  int n_theta() const { return static_cast<int>(dA.size()); }

  Eigen::MatrixXd A(const Eigen::VectorXd& th) const {
    Eigen::MatrixXd a = A0;
    for (int i = 0; i < n_theta(); ++i) a += th[i] * dA[i];
    return a;
  }
  Eigen::MatrixXd B(const Eigen::VectorXd& th) const {
    Eigen::MatrixXd b = B0;
    for (int i = 0; i < n_theta(); ++i) b += th[i] * dB[i];
    return b;
  }

  /// Regressor g(x, u): column i is dA[i] x + dB[i] u, so that
  /// x+ = A0 x + B0 u + g(x, u) theta.
  Eigen::MatrixXd regressor(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& u) const {
    Eigen::MatrixXd g(n_x(), n_theta());
    for (int i = 0; i < n_theta(); ++i) g.col(i) = dA[i] * x + dB[i] * u;
    return g;
  }
};

struct EstimatorSettings {
  double forgetting = 0.5;   // lambda in (0, 1)
  double eps_x = 1e-3;       // update trigger on the prediction error
  double eps_r = 1e-3;       // update trigger on the bound
  int pol_directions = 8;    // facets of the ellipsoid outer polytope
};

/// Recursive least-squares set-membership estimator state. The filtered
/// regressor w and the one-step predictor x_hat always advance; the
/// statistics (theta_hat, gamma, bound) advance only while triggered.
struct EstimatorState {
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd gamma;      // information matrix, PD
  double bound = 0.0;         // ellipsoid level (shrinks by lambda per update)
  Eigen::MatrixXd w;          // filtered regressor, starts at zero
  Eigen::VectorXd x_hat;      // one-step state prediction
  Polytope fss;               // polytopic parameter cover, intersected over time
  int updates = 0;            // number of performed statistic updates

  Ellipsoid credible_set() const {
    return Ellipsoid(theta_hat, gamma, bound);
  }
};

/// Initial state for a parameter ball ||theta - c||^2_{Gamma0} <= level0 with
/// bound seeded at maxeig(Gamma0) * r0^2.
inline EstimatorState make_estimator(const ParametricModel& model,
                                     const Eigen::VectorXd& theta0,
                                     const Eigen::MatrixXd& gamma0, double r0,
                                     const Eigen::VectorXd& x0,
                                     int pol_directions = 8) {
  EstimatorState s;
  s.theta_hat = theta0;
  s.gamma = gamma0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma0);
  if (es.eigenvalues().minCoeff() <= 0)
    throw Error("make_estimator: gamma0 must be positive definite");
  s.bound = es.eigenvalues().maxCoeff() * r0 * r0;
  s.w = Eigen::MatrixXd::Zero(model.n_x(), model.n_theta());
  s.x_hat = x0;
  s.fss = ellipsoid_outer_polytope(s.credible_set(),
                                   uniform_directions(model.n_theta(),
                                                      pol_directions));
  return s;
}

/// w+ = g(x, u) - Ke w  (filter gain Ke = A0 + B0 K at the current feedback
/// is supplied by the caller; any Schur-stable choice works).
inline Eigen::MatrixXd filter_update(const Eigen::MatrixXd& w,
                                     const Eigen::MatrixXd& g,
                                     const Eigen::MatrixXd& Ke) {
  return g - Ke * w;
}

/// x_hat+ = A0 x + B0 u + g(x, u) theta_new + Ke x_tilde
///          + Ke w (theta_old - theta_new)
/// The last term keeps the invariant  x_tilde = w (theta* - theta_hat)
/// intact when the estimate moves between steps.
inline Eigen::VectorXd predict_state(const ParametricModel& model,
                                     const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& theta_new,
                                     const Eigen::VectorXd& theta_old,
                                     const Eigen::VectorXd& x_tilde,
                                     const Eigen::MatrixXd& w,
                                     const Eigen::MatrixXd& Ke) {
  return model.A0 * x + model.B0 * u + model.regressor(x, u) * theta_new +
         Ke * x_tilde + Ke * w * (theta_old - theta_new);
}

/// One RLS step on (theta_hat, gamma) given the prediction error
/// x_tilde = x - x_hat and the pre-update filtered regressor w:
///   gamma+     = lambda gamma + w' w
///   theta_hat+ = theta_hat + gamma+^{-1} w' x_tilde
inline void rls_update(EstimatorState& s, const Eigen::MatrixXd& w,
                       const Eigen::VectorXd& x_tilde, double forgetting) {
  s.gamma = forgetting * s.gamma + w.transpose() * w;
  Eigen::LLT<Eigen::MatrixXd> llt(s.gamma);
  if (llt.info() != Eigen::Success)
    throw Error("rls_update: information matrix lost positive definiteness");
  s.theta_hat += llt.solve(w.transpose() * x_tilde);
}

/// Trigger: update statistics whenever the prediction error or the current
/// bound is still significant (inclusive thresholds).
inline bool should_update(const Eigen::VectorXd& x_tilde, double bound,
                          const EstimatorSettings& cfg) {
  return x_tilde.norm() >= cfg.eps_x || bound >= cfg.eps_r;
}

/// What a measurement step produced; needed again when propagating.
struct MeasurementInfo {
  bool triggered = false;
  Eigen::VectorXd x_tilde;
  Eigen::VectorXd theta_old;
};

/// Statistics half-step, run when the new state x_k arrives and before the
/// control is computed: innovation, then (when triggered) RLS, bound decay
/// bound+ = lambda bound, and a row-wise tightening of the polytopic cover.
/// The cover keeps the same fixed normals, so tightening is a min of offsets.
inline MeasurementInfo estimator_measure(EstimatorState& s,
                                         const Eigen::VectorXd& x_now,
                                         const EstimatorSettings& cfg) {
  MeasurementInfo info;
  info.x_tilde = x_now - s.x_hat;
  info.theta_old = s.theta_hat;
  info.triggered = should_update(info.x_tilde, s.bound, cfg);
  if (info.triggered) {
    rls_update(s, s.w, info.x_tilde, cfg.forgetting);
    s.bound *= cfg.forgetting;
    s.updates += 1;
    Polytope cover = ellipsoid_outer_polytope(
        s.credible_set(),
        uniform_directions(static_cast<int>(s.theta_hat.size()),
                           cfg.pol_directions));
    s.fss = Polytope(s.fss.normals, s.fss.offsets.cwiseMin(cover.offsets));
    // the intersection must stay nonempty (the true parameter lives in it)
    (void)support(s.fss, Eigen::VectorXd::Unit(s.fss.normals.cols(), 0));
  }
  return info;
}

/// Propagation half-step, run after the control u_k is known. Advances the
/// one-step predictor and the filtered regressor; these always run, even
/// when the statistics are frozen, so a later trigger still fires correctly.
inline void estimator_propagate(EstimatorState& s, const ParametricModel& model,
                                const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u,
                                const Eigen::MatrixXd& Ke,
                                const MeasurementInfo& info) {
  s.x_hat = predict_state(model, x, u, s.theta_hat, info.theta_old,
                          info.x_tilde, s.w, Ke);
  s.w = filter_update(s.w, model.regressor(x, u), Ke);
}

}  // namespace atmpc
