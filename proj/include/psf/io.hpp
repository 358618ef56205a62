#pragma once

/**
 * @file
 * @brief JSON encodings of matrices, polytopes, designs and run summaries.
 */

#include <Eigen/Dense>
#include <json.hpp>

#include <string>

#include "psf/errors.hpp"
#include "psf/filter.hpp"
#include "psf/polytope.hpp"
#include "psf/sim.hpp"

namespace psf {

using json = nlohmann::json;

inline constexpr const char * kDesignVersion = "psf-design-v1";

/// Row-major nested arrays.
inline json to_json(const Eigen::MatrixXd & M)
{
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) { row.push_back(M(i, j)); }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd & v)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) { a.push_back(v(i)); }
  return a;
}

inline Eigen::VectorXd vector_from_json(const json & j, const std::string & where)
{
  if (!j.is_array()) { throw ConfigError(where + ": expected an array of numbers"); }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) { throw ConfigError(where + "/" + std::to_string(i) + ": expected a number"); }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// `cols` is used for empty matrices, which carry no column count.
inline Eigen::MatrixXd matrix_from_json(const json & j, const std::string & where, Eigen::Index cols = -1)
{
  if (!j.is_array()) { throw ConfigError(where + ": expected an array of rows"); }
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) { return Eigen::MatrixXd(0, std::max<Eigen::Index>(cols, 0)); }
  if (!j[0].is_array()) { throw ConfigError(where + "/0: expected an array of numbers"); }
  const auto n = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd M(rows, n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::string w = where + "/" + std::to_string(i);
    const Eigen::VectorXd r = vector_from_json(j[static_cast<std::size_t>(i)], w);
    if (r.size() != n) { throw ConfigError(w + ": row has " + std::to_string(r.size()) + " entries, expected " + std::to_string(n)); }
    M.row(i) = r.transpose();
  }
  return M;
}

inline json to_json(const HalfspacePolytope & P) { return {{"A", to_json(P.A())}, {"b", vector_to_json(P.b())}}; }

inline HalfspacePolytope polytope_from_json(const json & j, const std::string & where, Eigen::Index dim = -1)
{
  if (!j.is_object() || !j.contains("A") || !j.contains("b")) { throw ConfigError(where + ": expected {\"A\": ..., \"b\": ...}"); }
  Eigen::MatrixXd A = matrix_from_json(j["A"], where + "/A", dim);
  Eigen::VectorXd b = vector_from_json(j["b"], where + "/b");
  try {
    return {std::move(A), std::move(b)};
  } catch (const std::invalid_argument & e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline json to_json(const DesignCertificates & c)
{
  return {{"rpi_slack", c.rpi_slack},
          {"terminal_input_slack", c.terminal_input_slack},
          {"terminal_state_slack", c.terminal_state_slack},
          {"lyapunov_residual", c.lyapunov_residual},
          {"lyapunov_residual_q_only", c.lyapunov_residual_q_only},
          {"riccati_residual", c.riccati_residual},
          {"closed_loop_spectral_radius", c.closed_loop_spectral_radius},
          {"nesting_slack", c.nesting_slack},
          {"rpi_iterations", c.rpi_iterations},
          {"sets_nonempty", c.sets_nonempty}};
}

inline json to_json(const FilterDesign & d)
{
  json ox = json::array(), ou = json::array();
  for (const auto & s : d.omega_x) { ox.push_back(to_json(s)); }
  for (const auto & s : d.omega_u) { ou.push_back(to_json(s)); }
  return {{"version", kDesignVersion},
          {"A", to_json(d.sys.A)},
          {"B", to_json(d.sys.B)},
          {"K", to_json(d.K)},
          {"Q", to_json(d.costs.Q)},
          {"R", to_json(d.costs.R)},
          {"P", to_json(d.costs.P)},
          {"N", d.N},
          {"rho", d.rho},
          {"W", to_json(d.W)},
          {"X", to_json(d.X)},
          {"U", to_json(d.U)},
          {"omega_x", std::move(ox)},
          {"omega_u", std::move(ou)},
          {"Xf", to_json(d.Xf)},
          {"Zf", to_json(d.Zf)},
          {"certificates", to_json(d.certificates)}};
}

/// Parses a design artifact; certificates are recomputed rather than trusted.
inline FilterDesign design_from_json(const json & j)
{
  if (!j.is_object() || !j.contains("version") || j["version"] != kDesignVersion) {
    throw ConfigError(std::string("design artifact: version must be \"") + kDesignVersion + "\"");
  }
  for (const char * key : {"A", "B", "K", "Q", "R", "P", "N", "rho", "W", "X", "U", "omega_x", "omega_u", "Xf", "Zf"}) {
    if (!j.contains(key)) { throw ConfigError(std::string("design artifact: missing field /") + key); }
  }
  FilterDesign d;
  d.sys.A         = matrix_from_json(j["A"], "/A");
  d.sys.B         = matrix_from_json(j["B"], "/B");
  d.K             = matrix_from_json(j["K"], "/K");
  d.costs.Q       = matrix_from_json(j["Q"], "/Q");
  d.costs.R       = matrix_from_json(j["R"], "/R");
  d.costs.P       = matrix_from_json(j["P"], "/P");
  if (!j["N"].is_number_integer()) { throw ConfigError("design artifact: /N must be an integer"); }
  d.N   = j["N"].get<int>();
  d.rho = j["rho"].get<double>();
  const Eigen::Index n = d.sys.A.rows(), m = d.sys.B.cols();
  d.W  = polytope_from_json(j["W"], "/W", n);
  d.X  = polytope_from_json(j["X"], "/X", n);
  d.U  = polytope_from_json(j["U"], "/U", m);
  d.Xf = polytope_from_json(j["Xf"], "/Xf", n);
  d.Zf = polytope_from_json(j["Zf"], "/Zf", n);
  for (std::size_t i = 0; i < j["omega_x"].size(); ++i) {
    d.omega_x.push_back(polytope_from_json(j["omega_x"][i], "/omega_x/" + std::to_string(i), n));
  }
  for (std::size_t i = 0; i < j["omega_u"].size(); ++i) {
    d.omega_u.push_back(polytope_from_json(j["omega_u"][i], "/omega_u/" + std::to_string(i), m));
  }
  try {
    d.sys.validate();
  } catch (const std::exception & e) {
    throw ConfigError(std::string("design artifact: ") + e.what());
  }
  if (d.N < 1 || d.omega_x.size() != static_cast<std::size_t>(d.N) || d.omega_u.size() != static_cast<std::size_t>(d.N)) {
    throw ConfigError("design artifact: omega_x and omega_u must have N entries");
  }
  if (d.K.rows() != m || d.K.cols() != n || d.costs.P.rows() != n || d.costs.Q.rows() != n || d.costs.R.rows() != m) {
    throw ConfigError("design artifact: matrix dimensions are inconsistent");
  }
  int rpi_iterations = 0;
  if (j.contains("certificates") && j["certificates"].contains("rpi_iterations")) {
    rpi_iterations = j["certificates"]["rpi_iterations"].get<int>();
  }
  d.certificates = verify_design(d, rpi_iterations);
  return d;
}

inline json to_json(const RunMetrics & m)
{
  return {{"steps", m.steps},
          {"max_abs_py", m.max_abs_py},
          {"interventions", m.interventions},
          {"initial_norm", m.initial_norm},
          {"final_norm", m.final_norm},
          {"decrease_violations", m.decrease_violations},
          {"max_decrease_excess", m.max_decrease_excess},
          {"fallbacks", m.fallbacks},
          {"recoveries", m.recoveries},
          {"w_outside_W", m.w_outside_W},
          {"w_outside_W_fraction", m.steps > 0 ? static_cast<double>(m.w_outside_W) / m.steps : 0.0},
          {"constraint_violations", m.constraint_violations},
          {"max_constraint_violation", m.max_constraint_violation},
          {"lyapunov_active", m.lyapunov_active},
          {"min_lyapunov_slack", m.min_lyapunov_slack}};
}

/// Run summary referenced by the report stage.
inline json run_summary(const TrajectoryLog & log, const FilterDesign & design)
{
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(design.nx(), 0);
  return {{"name", run_name(log.spec)},
          {"rho", log.spec.rho},
          {"plant", to_string(log.spec.plant)},
          {"seed", log.spec.seed},
          {"steps", log.spec.steps},
          {"dt", log.spec.dt},
          {"disturbance_mode", to_string(log.spec.disturbance)},
          {"x0", vector_to_json(log.spec.x0)},
          {"x_final", vector_to_json(log.x_final)},
          {"x1_bounds", {-support(design.X, -e1), support(design.X, e1)}},
          {"metrics", to_json(metrics(log))}};
}

}  // namespace psf
