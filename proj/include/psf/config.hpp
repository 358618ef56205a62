#pragma once

/**
 * @file
 * @brief Run configuration: strict JSON parsing with path-qualified errors.
 *
 * Unknown keys are rejected. Keys starting with '_' are comments and ignored.
 */

#include <Eigen/Dense>
#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "psf/errors.hpp"
#include "psf/io.hpp"
#include "psf/plant.hpp"
#include "psf/polytope.hpp"
#include "psf/sim.hpp"

namespace psf {

enum class SystemModel { Linear, Vehicle };

struct SystemConfig
{
  SystemModel model = SystemModel::Linear;
  /// used when model == Linear
  LinearSystem sys;
  double dt = 1.0;
  /// used when model == Vehicle
  BicycleParams vehicle;
  double v_op = 1.1;
  double jacobian_eps = 1e-6;
};

struct DesignConfig
{
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  int N = 10;
  std::vector<double> rho{0.0, 0.5, 1000.0};
  int rpi_max_iter = 500;
};

struct ExperimentConfig
{
  int steps = 400;
  std::vector<PlantKind> plants{PlantKind::Linear};
  std::uint64_t seed = 0;
  Eigen::VectorXd x0;
  ProposerSpec proposer;
  DisturbanceMode disturbance = DisturbanceMode::Vertex;
  unsigned threads = 0;
};

struct RunConfig
{
  SystemConfig system;
  HalfspacePolytope X, U, W;
  /// state and input bounds x̄, ū
  std::optional<Eigen::VectorXd> x_bar;
  std::optional<Eigen::VectorXd> u_bar;
  /// W should cover the linearization error over coverage_scale·[−x̄, x̄] × coverage_scale·[−ū, ū]
  double coverage_scale = 1.0;
  DesignConfig design;
  ExperimentConfig experiment;
  std::string output_directory = "out";

  Eigen::Index nx() const { return X.dim(); }
  Eigen::Index nu() const { return U.dim(); }
};

namespace detail {

/// JSON object view that tracks consumed keys.
class Section
{
public:
  Section(const json & j, std::string path) : j_(j), path_(std::move(path))
  {
    if (!j_.is_object()) { throw ConfigError(where() + ": expected an object"); }
  }

  const std::string & path() const { return path_; }
  std::string where() const { return path_.empty() ? "/" : path_; }
  std::string at(const std::string & key) const { return path_ + "/" + key; }

  bool has(const std::string & key) const { return j_.contains(key); }

  const json & required(const std::string & key)
  {
    if (!j_.contains(key)) { throw ConfigError(at(key) + ": required field is missing"); }
    used_.insert(key);
    return j_.at(key);
  }

  const json * optional(const std::string & key)
  {
    if (!j_.contains(key)) { return nullptr; }
    used_.insert(key);
    return &j_.at(key);
  }

  void finish() const
  {
    for (const auto & item : j_.items()) {
      if (!item.key().empty() && item.key()[0] == '_') { continue; }
      if (!used_.count(item.key())) { throw ConfigError(at(item.key()) + ": unknown field"); }
    }
  }

private:
  const json & j_;
  std::string path_;
  std::set<std::string> used_;
};

inline double number(const json & j, const std::string & where)
{
  if (!j.is_number()) { throw ConfigError(where + ": expected a number"); }
  const double v = j.get<double>();
  if (!std::isfinite(v)) { throw ConfigError(where + ": must be finite"); }
  return v;
}

inline double positive(const json & j, const std::string & where)
{
  const double v = number(j, where);
  if (!(v > 0.0)) { throw ConfigError(where + ": must be positive"); }
  return v;
}

inline long long integer(const json & j, const std::string & where)
{
  if (!j.is_number_integer()) { throw ConfigError(where + ": expected an integer"); }
  return j.get<long long>();
}

inline Eigen::VectorXd sized_vector(const json & j, const std::string & where, Eigen::Index n)
{
  Eigen::VectorXd v = vector_from_json(j, where);
  if (n >= 0 && v.size() != n) {
    throw ConfigError(where + ": expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  }
  if (!v.allFinite()) { throw ConfigError(where + ": entries must be finite"); }
  return v;
}

/// Scalar (multiple of I), array (diagonal) or array of rows.
inline Eigen::MatrixXd square_matrix(const json & j, const std::string & where, Eigen::Index n)
{
  if (j.is_number()) { return number(j, where) * Eigen::MatrixXd::Identity(n, n); }
  if (j.is_array() && !j.empty() && j[0].is_number()) { return sized_vector(j, where, n).asDiagonal(); }
  Eigen::MatrixXd M = matrix_from_json(j, where);
  if (M.rows() != n || M.cols() != n) {
    throw ConfigError(where + ": expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
  }
  return M;
}

/// {"box": r}, {"lower": l, "upper": u} or {"A": ..., "b": ...}.
inline HalfspacePolytope set(const json & j, const std::string & where, Eigen::Index n)
{
  Section s(j, where);
  HalfspacePolytope P;
  if (const json * r = s.optional("box")) {
    const Eigen::VectorXd half = sized_vector(*r, s.at("box"), n);
    if ((half.array() < 0.0).any()) { throw ConfigError(s.at("box") + ": half-widths must be nonnegative"); }
    P = HalfspacePolytope::box(half);
  } else if (s.has("lower") || s.has("upper")) {
    const Eigen::VectorXd lo = sized_vector(s.required("lower"), s.at("lower"), n);
    const Eigen::VectorXd hi = sized_vector(s.required("upper"), s.at("upper"), n);
    if ((lo.array() > hi.array()).any()) { throw ConfigError(where + ": lower exceeds upper"); }
    P = HalfspacePolytope::box(lo, hi);
  } else {
    s.required("A");
    s.required("b");
    P = polytope_from_json(j, where, n);
    if (P.dim() != n) { throw ConfigError(s.at("A") + ": expected " + std::to_string(n) + " columns"); }
  }
  s.finish();
  return P;
}

inline PacejkaCoefficients pacejka(const json & j, const std::string & where, PacejkaCoefficients c)
{
  Section s(j, where);
  if (const json * v = s.optional("B")) { c.B = number(*v, s.at("B")); }
  if (const json * v = s.optional("C")) { c.C = number(*v, s.at("C")); }
  if (const json * v = s.optional("D")) { c.D = number(*v, s.at("D")); }
  s.finish();
  return c;
}

inline BicycleParams bicycle(const json & j, const std::string & where)
{
  Section s(j, where);
  BicycleParams p;
  const std::pair<const char *, double *> fields[] = {
    {"mass", &p.mass}, {"inertia", &p.inertia}, {"lf", &p.lf},   {"lr", &p.lr},
    {"cm1", &p.cm1},   {"cm2", &p.cm2},         {"cr0", &p.cr0}, {"cr2", &p.cr2},
    {"friction_scale", &p.friction_scale},      {"v_min", &p.v_min}};
  for (const auto & [key, dst] : fields) {
    if (const json * v = s.optional(key)) { *dst = number(*v, s.at(key)); }
  }
  if (const json * v = s.optional("front")) { p.front = pacejka(*v, s.at("front"), p.front); }
  if (const json * v = s.optional("rear")) { p.rear = pacejka(*v, s.at("rear"), p.rear); }
  s.finish();
  try {
    p.validate();
  } catch (const ConfigError & e) {
    throw ConfigError(where + ": " + e.what());
  }
  return p;
}

inline ProposerSpec proposer_term(const json & j, const std::string & where, Eigen::Index n, Eigen::Index m)
{
  Section s(j, where);
  const json & type = s.required("type");
  ProposerSpec p;
  if (type == "constant") {
    p = ProposerSpec::constant(sized_vector(s.required("value"), s.at("value"), m));
  } else if (type == "linear") {
    Eigen::MatrixXd F = matrix_from_json(s.required("F"), s.at("F"));
    if (F.rows() != m || F.cols() != n) {
      throw ConfigError(s.at("F") + ": expected a " + std::to_string(m) + "x" + std::to_string(n) + " matrix");
    }
    p = ProposerSpec::linear(std::move(F));
  } else if (type == "sinusoid") {
    const double amplitude = number(s.required("amplitude"), s.at("amplitude"));
    const double period    = positive(s.required("period"), s.at("period"));
    long long channel      = 0;
    if (const json * c = s.optional("channel")) { channel = integer(*c, s.at("channel")); }
    if (channel < 0 || channel >= m) { throw ConfigError(s.at("channel") + ": must lie in [0, " + std::to_string(m) + ")"); }
    p = ProposerSpec::sinusoid(amplitude, period, channel);
  } else {
    throw ConfigError(s.at("type") + ": expected \"constant\", \"linear\" or \"sinusoid\"");
  }
  s.finish();
  return p;
}

inline SystemConfig system(const json & j, const json * vehicle_section)
{
  Section s(j, "/system");
  SystemConfig c;
  const json & model = s.required("model");
  if (model == "linear") {
    c.model = SystemModel::Linear;
    c.sys.A = matrix_from_json(s.required("A"), s.at("A"));
    c.sys.B = matrix_from_json(s.required("B"), s.at("B"));
    if (c.sys.A.rows() == 0 || c.sys.A.rows() != c.sys.A.cols()) { throw ConfigError(s.at("A") + ": must be square and nonempty"); }
    if (c.sys.B.rows() != c.sys.A.rows() || c.sys.B.cols() == 0) {
      throw ConfigError(s.at("B") + ": must have " + std::to_string(c.sys.A.rows()) + " rows");
    }
    if (const json * dt = s.optional("dt")) { c.dt = positive(*dt, s.at("dt")); }
    if (vehicle_section) { throw ConfigError("/vehicle: only valid with system model \"vehicle\""); }
  } else if (model == "vehicle") {
    c.model = SystemModel::Vehicle;
    c.dt    = 0.01;
    if (const json * dt = s.optional("dt")) { c.dt = positive(*dt, s.at("dt")); }
    if (const json * v = s.optional("v_op")) { c.v_op = positive(*v, s.at("v_op")); }
    if (const json * e = s.optional("jacobian_eps")) { c.jacobian_eps = positive(*e, s.at("jacobian_eps")); }
    if (vehicle_section) { c.vehicle = bicycle(*vehicle_section, "/vehicle"); }
    if (!(c.v_op > c.vehicle.v_min)) { throw ConfigError(s.at("v_op") + ": must exceed vehicle v_min"); }
  } else {
    throw ConfigError(s.at("model") + ": expected \"linear\" or \"vehicle\"");
  }
  s.finish();
  return c;
}

inline Eigen::Index state_dim(const SystemConfig & c) { return c.model == SystemModel::Linear ? c.sys.nx() : vehicle::kStates; }
inline Eigen::Index input_dim(const SystemConfig & c) { return c.model == SystemModel::Linear ? c.sys.nu() : vehicle::kInputs; }

}  // namespace detail

/// Validates a parsed document. Errors name the offending JSON path.
inline RunConfig parse_config(const json & doc)
{
  detail::Section root(doc, "");
  RunConfig cfg;
  cfg.system = detail::system(root.required("system"), root.optional("vehicle"));
  const Eigen::Index n = detail::state_dim(cfg.system), m = detail::input_dim(cfg.system);

  {
    detail::Section s(root.required("constraints"), "/constraints");
    cfg.X = detail::set(s.required("X"), s.at("X"), n);
    cfg.U = detail::set(s.required("U"), s.at("U"), m);
    cfg.W = detail::set(s.required("W"), s.at("W"), n);
    if (const json * v = s.optional("x_bar")) { cfg.x_bar = detail::sized_vector(*v, s.at("x_bar"), n); }
    if (const json * v = s.optional("u_bar")) { cfg.u_bar = detail::sized_vector(*v, s.at("u_bar"), m); }
    if (const json * v = s.optional("coverage_scale")) { cfg.coverage_scale = detail::positive(*v, s.at("coverage_scale")); }
    for (const auto * bar : {&cfg.x_bar, &cfg.u_bar}) {
      if (*bar && ((*bar)->array() < 0.0).any()) { throw ConfigError(s.at(bar == &cfg.x_bar ? "x_bar" : "u_bar") + ": entries must be nonnegative"); }
    }
    s.finish();
  }
  {
    detail::Section s(root.required("design"), "/design");
    cfg.design.Q = detail::square_matrix(s.required("Q"), s.at("Q"), n);
    cfg.design.R = detail::square_matrix(s.required("R"), s.at("R"), m);
    const long long N = detail::integer(s.required("N"), s.at("N"));
    if (N < 1 || N > 1000) { throw ConfigError(s.at("N") + ": must lie in [1, 1000]"); }
    cfg.design.N = static_cast<int>(N);
    if (const json * r = s.optional("rho")) {
      if (!r->is_array() || r->empty()) { throw ConfigError(s.at("rho") + ": expected a nonempty array"); }
      cfg.design.rho.clear();
      for (std::size_t i = 0; i < r->size(); ++i) {
        const std::string w = s.at("rho") + "/" + std::to_string(i);
        const double v      = detail::number((*r)[i], w);
        if (v < 0.0) { throw ConfigError(w + ": must be nonnegative"); }
        cfg.design.rho.push_back(v);
      }
    }
    if (const json * it = s.optional("rpi_max_iter")) {
      const long long v = detail::integer(*it, s.at("rpi_max_iter"));
      if (v < 1) { throw ConfigError(s.at("rpi_max_iter") + ": must be at least 1"); }
      cfg.design.rpi_max_iter = static_cast<int>(v);
    }
    s.finish();
  }
  {
    detail::Section s(root.required("experiment"), "/experiment");
    if (const json * v = s.optional("steps")) {
      const long long steps = detail::integer(*v, s.at("steps"));
      if (steps < 1) { throw ConfigError(s.at("steps") + ": must be at least 1"); }
      cfg.experiment.steps = static_cast<int>(steps);
    }
    if (const json * v = s.optional("plants")) {
      if (!v->is_array() || v->empty()) { throw ConfigError(s.at("plants") + ": expected a nonempty array"); }
      cfg.experiment.plants.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string w = s.at("plants") + "/" + std::to_string(i);
        if ((*v)[i] == "linear") {
          cfg.experiment.plants.push_back(PlantKind::Linear);
        } else if ((*v)[i] == "nonlinear") {
          if (cfg.system.model != SystemModel::Vehicle) { throw ConfigError(w + ": the nonlinear plant needs system model \"vehicle\""); }
          cfg.experiment.plants.push_back(PlantKind::Nonlinear);
        } else {
          throw ConfigError(w + ": expected \"linear\" or \"nonlinear\"");
        }
      }
    }
    if (const json * v = s.optional("seed")) {
      const long long seed = detail::integer(*v, s.at("seed"));
      if (seed < 0) { throw ConfigError(s.at("seed") + ": must be nonnegative"); }
      cfg.experiment.seed = static_cast<std::uint64_t>(seed);
    }
    cfg.experiment.x0 = detail::sized_vector(s.required("x0"), s.at("x0"), n);
    if (const json * v = s.optional("proposer")) {
      if (v->is_array()) {
        for (std::size_t i = 0; i < v->size(); ++i) {
          cfg.experiment.proposer = cfg.experiment.proposer + detail::proposer_term((*v)[i], s.at("proposer") + "/" + std::to_string(i), n, m);
        }
      } else {
        cfg.experiment.proposer = detail::proposer_term(*v, s.at("proposer"), n, m);
      }
    }
    if (const json * v = s.optional("disturbance_mode")) {
      if (*v == "vertex") {
        cfg.experiment.disturbance = DisturbanceMode::Vertex;
      } else if (*v == "uniform") {
        cfg.experiment.disturbance = DisturbanceMode::Uniform;
      } else if (*v == "none") {
        cfg.experiment.disturbance = DisturbanceMode::None;
      } else {
        throw ConfigError(s.at("disturbance_mode") + ": expected \"vertex\", \"uniform\" or \"none\"");
      }
    }
    if (const json * v = s.optional("threads")) {
      const long long t = detail::integer(*v, s.at("threads"));
      if (t < 0) { throw ConfigError(s.at("threads") + ": must be nonnegative"); }
      cfg.experiment.threads = static_cast<unsigned>(t);
    }
    s.finish();
  }
  if (const json * o = root.optional("output")) {
    detail::Section s(*o, "/output");
    if (const json * d = s.optional("directory")) {
      if (!d->is_string()) { throw ConfigError(s.at("directory") + ": expected a string"); }
      cfg.output_directory = d->get<std::string>();
    }
    s.finish();
  }
  root.finish();
  return cfg;
}

/// Parses JSON text; syntax errors report line and column.
inline json parse_json_text(const std::string & text, const std::string & source)
{
  try {
    return json::parse(text);
  } catch (const json::parse_error & e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
}

inline std::string read_text_file(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw ConfigError(path + ": cannot open file"); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_config(const std::string & path)
{
  const json doc = parse_json_text(read_text_file(path), path);
  try {
    return parse_config(doc);
  } catch (const ConfigError & e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const json::exception & e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Design model of the configured system: the given matrices or the vehicle linearization.
inline LinearSystem design_model(const RunConfig & cfg)
{
  if (cfg.system.model == SystemModel::Linear) { return cfg.system.sys; }
  return linearize_vehicle(cfg.system.vehicle, cfg.system.v_op, cfg.system.dt, cfg.system.jacobian_eps).sys;
}

inline FilterDesign design_from_config(const RunConfig & cfg)
{
  DesignOptions opt;
  opt.rpi.max_iter = cfg.design.rpi_max_iter;
  return design_filter(design_model(cfg), cfg.design.Q, cfg.design.R, cfg.X, cfg.U, cfg.W, cfg.design.N, cfg.design.rho.front(),
                       opt);
}

/// One run per (ρ, plant) pair, ρ-major.
inline std::vector<RunSpec> run_specs(const RunConfig & cfg)
{
  std::vector<RunSpec> specs;
  for (double rho : cfg.design.rho) {
    for (PlantKind plant : cfg.experiment.plants) {
      RunSpec s;
      s.rho         = rho;
      s.plant       = plant;
      s.seed        = cfg.experiment.seed;
      s.steps       = cfg.experiment.steps;
      s.dt          = cfg.system.dt;
      s.x0          = cfg.experiment.x0;
      s.proposer    = cfg.experiment.proposer;
      s.disturbance = cfg.experiment.disturbance;
      specs.push_back(std::move(s));
    }
  }
  return specs;
}

}  // namespace psf
