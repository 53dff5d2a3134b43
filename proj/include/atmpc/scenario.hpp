#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "atmpc/errors.hpp"
#include "atmpc/estimator.hpp"
#include "atmpc/tube_mpc.hpp"

namespace atmpc {

namespace config_detail {

/// Minimal TOML-style value: number, string, or nested array.
struct Value {
  std::variant<double, std::string, std::vector<Value>> v;

  bool is_number() const { return std::holds_alternative<double>(v); }
  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_array() const {
    return std::holds_alternative<std::vector<Value>>(v);
  }
  double num() const { return std::get<double>(v); }
  const std::string& str() const { return std::get<std::string>(v); }
  const std::vector<Value>& arr() const {
    return std::get<std::vector<Value>>(v);
  }
};

inline void skip_ws(const std::string& s, size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

inline Value parse_value(const std::string& s, size_t& i,
                         const std::string& where) {
  skip_ws(s, i);
  if (i >= s.size()) throw SchemaError(where + ": missing value");
  if (s[i] == '[') {
    ++i;
    std::vector<Value> items;
    for (;;) {
      skip_ws(s, i);
      if (i >= s.size()) throw SchemaError(where + ": unterminated array");
      if (s[i] == ']') {
        ++i;
        break;
      }
      items.push_back(parse_value(s, i, where));
      skip_ws(s, i);
      if (i < s.size() && s[i] == ',') ++i;
    }
    return Value{items};
  }
  if (s[i] == '"') {
    size_t end = s.find('"', i + 1);
    if (end == std::string::npos)
      throw SchemaError(where + ": unterminated string");
    std::string out = s.substr(i + 1, end - i - 1);
    i = end + 1;
    return Value{out};
  }
  size_t start = i;
  while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#') ++i;
  std::string tok = s.substr(start, i - start);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t'))
    tok.pop_back();
  if (tok == "true") return Value{1.0};
  if (tok == "false") return Value{0.0};
  try {
    size_t used = 0;
    double d = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return Value{d};
  } catch (const std::exception&) {
    throw SchemaError(where + ": cannot parse value '" + tok + "'");
  }
}

/// key/value text with [section] headers, # comments, and nested arrays
/// (arrays may continue across lines).
inline std::map<std::string, Value> parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scenario file: " + path);
  std::map<std::string, Value> out;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside strings
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line = line.substr(0, i);
        break;
      }
    }
    size_t i = 0;
    skip_ws(line, i);
    if (i >= line.size() || line[i] == '\r') continue;
    if (line[i] == '[') {
      size_t end = line.find(']', i);
      if (end == std::string::npos)
        throw SchemaError(path + ":" + std::to_string(lineno) +
                          ": bad section header");
      section = line.substr(i + 1, end - i - 1);
      continue;
    }
    size_t eq = line.find('=', i);
    if (eq == std::string::npos)
      throw SchemaError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = line.substr(i, eq - i);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
      key.pop_back();
    std::string full = section.empty() ? key : section + "." + key;
    // gather continuation lines until brackets balance
    std::string rhs = line.substr(eq + 1);
    auto balance = [](const std::string& s) {
      int b = 0;
      for (char ch : s) {
        if (ch == '[') ++b;
        if (ch == ']') --b;
      }
      return b;
    };
    while (balance(rhs) > 0) {
      std::string more;
      if (!std::getline(in, more))
        throw SchemaError(full + ": unterminated array");
      ++lineno;
      bool s2 = false;
      for (size_t j = 0; j < more.size(); ++j) {
        if (more[j] == '"') s2 = !s2;
        if (more[j] == '#' && !s2) {
          more = more.substr(0, j);
          break;
        }
      }
      rhs += " " + more;
    }
    size_t p = 0;
    out[full] = parse_value(rhs, p, full);
  }
  return out;
}

inline Eigen::VectorXd to_vector(const Value& v, const std::string& where) {
  if (!v.is_array()) throw SchemaError(where + ": expected an array");
  Eigen::VectorXd out(static_cast<int>(v.arr().size()));
  for (size_t i = 0; i < v.arr().size(); ++i) {
    if (!v.arr()[i].is_number())
      throw SchemaError(where + ": expected numbers");
    out[static_cast<int>(i)] = v.arr()[i].num();
  }
  return out;
}

inline Eigen::MatrixXd to_matrix(const Value& v, const std::string& where) {
  if (!v.is_array() || v.arr().empty())
    throw SchemaError(where + ": expected a matrix (array of rows)");
  const size_t rows = v.arr().size();
  Eigen::MatrixXd out;
  for (size_t r = 0; r < rows; ++r) {
    Eigen::VectorXd row =
        to_vector(v.arr()[r], where + "[" + std::to_string(r) + "]");
    if (r == 0) out.resize(static_cast<int>(rows), row.size());
    if (row.size() != out.cols())
      throw SchemaError(where + ": ragged matrix rows");
    out.row(static_cast<int>(r)) = row;
  }
  return out;
}

}  // namespace config_detail

struct ScenarioConfig {
  ParametricModel model;
  double r0 = 1.0;               // radius of the initial parameter ball
  Eigen::MatrixXd F, G;          // mixed constraint rows F x + G u <= 1
  Eigen::MatrixXd Q, R;
  Eigen::MatrixXd K;
  bool k_synthesized = false;
  int N = 10;
  double forgetting = 0.5;
  double gamma0_scale = 0.15;    // Gamma_0 = scale * I
  double eps_x = 1e-3;
  double eps_r = 1e-3;
  double kappa = 0.5;            // estimator filter gain Ke = kappa * I
  int pol_directions = 8;
  double lambda_c = 0.95;
  int t_stp = 20;
  Eigen::VectorXd theta_star;
  Eigen::VectorXd x0;
  Mode mode = Mode::adaptive;
  unsigned seed = 0;
};

/// Nominal discrete-time LQ gain (u = K x) by Riccati fixed-point iteration.
inline Eigen::MatrixXd lq_gain(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B,
                               const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& R) {
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < 10000; ++it) {
    Eigen::MatrixXd BtP = B.transpose() * P;
    Eigen::MatrixXd Kn =
        -(R + BtP * B).ldlt().solve(BtP * A).eval();
    Eigen::MatrixXd Pn = Q + Kn.transpose() * R * Kn +
                         (A + B * Kn).transpose() * P * (A + B * Kn);
    double diff = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (diff < 1e-12) return Kn;
  }
  throw Error("lq_gain: Riccati iteration did not converge");
}

inline Mode parse_mode(const std::string& s) {
  if (s == "adaptive") return Mode::adaptive;
  if (s == "simplified") return Mode::simplified;
  if (s == "robust") return Mode::robust;
  throw SchemaError("mode: expected adaptive|simplified|robust, got '" + s +
                    "'");
}

inline ScenarioConfig load_scenario(const std::string& path) {
  using namespace config_detail;
  auto kv = parse_file(path);
  auto need = [&](const std::string& key) -> const Value& {
    auto it = kv.find(key);
    if (it == kv.end()) throw SchemaError("missing required field: " + key);
    return it->second;
  };
  auto opt_num = [&](const std::string& key, double dflt) {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    if (!it->second.is_number())
      throw SchemaError(key + ": expected a number");
    return it->second.num();
  };

  ScenarioConfig c;
  c.model.A0 = to_matrix(need("model.A0"), "model.A0");
  c.model.B0 = to_matrix(need("model.B0"), "model.B0");
  const int nx = c.model.n_x();
  const int nu = c.model.n_u();
  if (c.model.A0.cols() != nx) throw SchemaError("model.A0: must be square");
  if (c.model.B0.rows() != nx)
    throw SchemaError("model.B0: row count must match model.A0");
  if (auto it = kv.find("model.A_theta"); it != kv.end()) {
    if (!it->second.is_array())
      throw SchemaError("model.A_theta: expected an array of matrices");
    for (size_t i = 0; i < it->second.arr().size(); ++i)
      c.model.dA.push_back(to_matrix(
          it->second.arr()[i],
          "model.A_theta[" + std::to_string(i) + "]"));
  }
  if (auto it = kv.find("model.B_theta"); it != kv.end()) {
    if (!it->second.is_array())
      throw SchemaError("model.B_theta: expected an array of matrices");
    for (size_t i = 0; i < it->second.arr().size(); ++i)
      c.model.dB.push_back(to_matrix(
          it->second.arr()[i],
          "model.B_theta[" + std::to_string(i) + "]"));
  }
  if (c.model.dA.size() != c.model.dB.size())
    throw SchemaError("model.A_theta/B_theta: length mismatch");
  for (size_t i = 0; i < c.model.dA.size(); ++i) {
    if (c.model.dA[i].rows() != nx || c.model.dA[i].cols() != nx)
      throw SchemaError("model.A_theta[" + std::to_string(i) +
                        "]: wrong shape");
    if (c.model.dB[i].rows() != nx || c.model.dB[i].cols() != nu)
      throw SchemaError("model.B_theta[" + std::to_string(i) +
                        "]: wrong shape");
  }

  // constraints: raw rows, or box bounds
  if (kv.count("constraints.F") || kv.count("constraints.G")) {
    c.F = to_matrix(need("constraints.F"), "constraints.F");
    c.G = to_matrix(need("constraints.G"), "constraints.G");
  } else {
    double xb = opt_num("constraints.x_bound", 0.0);
    double ub = opt_num("constraints.u_bound", 0.0);
    if (xb <= 0 || ub <= 0)
      throw SchemaError(
          "constraints: need x_bound/u_bound > 0 or raw F and G");
    c.F = Eigen::MatrixXd::Zero(2 * nx + 2 * nu, nx);
    c.G = Eigen::MatrixXd::Zero(2 * nx + 2 * nu, nu);
    c.F.topRows(nx) = Eigen::MatrixXd::Identity(nx, nx) / xb;
    c.F.middleRows(nx, nx) = -Eigen::MatrixXd::Identity(nx, nx) / xb;
    c.G.middleRows(2 * nx, nu) = Eigen::MatrixXd::Identity(nu, nu) / ub;
    c.G.bottomRows(nu) = -Eigen::MatrixXd::Identity(nu, nu) / ub;
  }
  if (c.F.cols() != nx || c.G.cols() != nu || c.F.rows() != c.G.rows())
    throw SchemaError("constraints.F/G: inconsistent shapes");

  c.Q = to_matrix(need("cost.Q"), "cost.Q");
  c.R = to_matrix(need("cost.R"), "cost.R");
  if (c.Q.rows() != nx || c.Q.cols() != nx)
    throw SchemaError("cost.Q: wrong shape");
  if (c.R.rows() != nu || c.R.cols() != nu)
    throw SchemaError("cost.R: wrong shape");

  c.r0 = opt_num("estimator.r0", 1.0);
  c.forgetting = opt_num("estimator.forgetting", 0.5);
  c.gamma0_scale = opt_num("estimator.gamma0_scale", 0.15);
  c.eps_x = opt_num("estimator.eps_x", 1e-3);
  c.eps_r = opt_num("estimator.eps_r", 1e-3);
  c.kappa = opt_num("estimator.kappa", 0.5);
  c.pol_directions =
      static_cast<int>(opt_num("estimator.pol_directions", 8));
  if (c.forgetting <= 0.0 || c.forgetting >= 1.0)
    throw SchemaError("estimator.forgetting: must lie in (0, 1)");
  if (c.r0 <= 0) throw SchemaError("estimator.r0: must be positive");
  if (c.gamma0_scale <= 0)
    throw SchemaError("estimator.gamma0_scale: must be positive");

  c.N = static_cast<int>(opt_num("controller.N", 10));
  c.lambda_c = opt_num("controller.lambda_c", 0.95);
  if (c.N < 1) throw SchemaError("controller.N: must be >= 1");
  if (c.lambda_c <= 0.0 || c.lambda_c >= 1.0)
    throw SchemaError("controller.lambda_c: must lie in (0, 1)");

  c.t_stp = static_cast<int>(opt_num("simulation.T_stp", 20));
  if (c.t_stp < 1) throw SchemaError("simulation.T_stp: must be >= 1");
  c.seed = static_cast<unsigned>(opt_num("simulation.seed", 0.0));
  c.theta_star = to_vector(need("simulation.theta_star"),
                           "simulation.theta_star");
  c.x0 = to_vector(need("simulation.x0"), "simulation.x0");
  if (c.theta_star.size() != static_cast<int>(c.model.dA.size()))
    throw SchemaError("simulation.theta_star: wrong dimension");
  if (c.x0.size() != nx) throw SchemaError("simulation.x0: wrong dimension");
  if (auto it = kv.find("simulation.mode"); it != kv.end()) {
    if (!it->second.is_string())
      throw SchemaError("simulation.mode: expected a string");
    c.mode = parse_mode(it->second.str());
  }

  // invariants
  if (c.theta_star.norm() > c.r0 + 1e-12)
    throw SchemaError("simulation.theta_star: outside the parameter ball");
  for (int r = 0; r < c.F.rows(); ++r)
    if (c.G.row(r).norm() == 0.0 && c.F.row(r).dot(c.x0) >= 1.0)
      throw SchemaError(
          "simulation.x0: not strictly inside the state constraints");

  // feedback gain: given, or synthesized from the nominal LQ problem
  if (auto it = kv.find("constraints.K"); it != kv.end()) {
    c.K = to_matrix(it->second, "constraints.K");
    if (c.K.rows() != nu || c.K.cols() != nx)
      throw SchemaError("constraints.K: wrong shape");
  } else {
    c.K = lq_gain(c.model.A0, c.model.B0, c.Q, c.R);
    c.k_synthesized = true;
  }
  // the gain must stabilize every vertex of the parameter ball cover
  if (c.model.n_theta() > 0) {
    Ellipsoid ball(Eigen::VectorXd::Zero(c.model.n_theta()),
                   Eigen::MatrixXd::Identity(c.model.n_theta(),
                                             c.model.n_theta()),
                   c.r0 * c.r0);
    auto cover = ellipsoid_outer_polytope(
        ball, uniform_directions(c.model.n_theta(), c.pol_directions));
    for (const auto& th : vertices(cover).points) {
      Eigen::MatrixXd phi = c.model.A(th) + c.model.B(th) * c.K;
      if (spectral_radius(phi) >= 1.0)
        throw SchemaError(
            "constraints.K: does not stabilize every parameter vertex");
    }
  } else if (spectral_radius(c.model.A0 + c.model.B0 * c.K) >= 1.0) {
    throw SchemaError("constraints.K: does not stabilize the plant");
  }
  return c;
}

}  // namespace atmpc
