#pragma once

/**
 * @file
 * @brief Closed-loop experiments: proposer → filter → plant → warmstart update.
 */

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "psf/filter.hpp"
#include "psf/plant.hpp"
#include "psf/polytope.hpp"
#include "psf/qcqp.hpp"

namespace psf {

inline constexpr double kInterventionTol = 1e-6;
inline constexpr double kConstraintTol   = 1e-7;

enum class PlantKind { Linear, Nonlinear };
enum class DisturbanceMode { Vertex, Uniform, None };

inline std::string to_string(PlantKind k) { return k == PlantKind::Linear ? "linear" : "nonlinear"; }

inline std::string to_string(DisturbanceMode m)
{
  switch (m) {
  case DisturbanceMode::Vertex: return "vertex";
  case DisturbanceMode::Uniform: return "uniform";
  case DisturbanceMode::None: return "none";
  }
  return "none";
}

/// One additive component of a proposer policy.
struct ProposerTerm
{
  enum class Kind { Constant, Linear, Sinusoid };
  Kind kind = Kind::Constant;
  /// Constant: the input
  Eigen::VectorXd value;
  /// Linear: F x
  Eigen::MatrixXd F;
  /// Sinusoid: amplitude·sin(2πt/period) on `channel`
  double amplitude = 0.0;
  double period    = 1.0;
  Eigen::Index channel = 0;
};

/// Desired-input policy standing in for the human driver; u_L is the sum of its terms.
struct ProposerSpec
{
  std::vector<ProposerTerm> terms;

  static ProposerSpec constant(Eigen::VectorXd u)
  {
    ProposerTerm t;
    t.kind  = ProposerTerm::Kind::Constant;
    t.value = std::move(u);
    return {{t}};
  }
  static ProposerSpec linear(Eigen::MatrixXd F)
  {
    ProposerTerm t;
    t.kind = ProposerTerm::Kind::Linear;
    t.F    = std::move(F);
    return {{t}};
  }
  static ProposerSpec sinusoid(double amplitude, double period, Eigen::Index channel = 0)
  {
    if (!(period > 0.0)) { throw std::invalid_argument("sinusoid proposer period must be positive"); }
    ProposerTerm t;
    t.kind      = ProposerTerm::Kind::Sinusoid;
    t.amplitude = amplitude;
    t.period    = period;
    t.channel   = channel;
    return {{t}};
  }

  ProposerSpec operator+(const ProposerSpec & other) const
  {
    ProposerSpec out = *this;
    out.terms.insert(out.terms.end(), other.terms.begin(), other.terms.end());
    return out;
  }
};

/// u_L at state x and time t (seconds); m is the input dimension.
inline Eigen::VectorXd propose(const ProposerSpec & p, const Eigen::VectorXd & x, double t, Eigen::Index m)
{
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  for (const auto & term : p.terms) {
    switch (term.kind) {
    case ProposerTerm::Kind::Constant:
      if (term.value.size() != m) { throw std::invalid_argument("constant proposer has wrong dimension"); }
      u += term.value;
      break;
    case ProposerTerm::Kind::Linear:
      if (term.F.rows() != m || term.F.cols() != x.size()) { throw std::invalid_argument("linear proposer gain has wrong shape"); }
      u += term.F * x;
      break;
    case ProposerTerm::Kind::Sinusoid:
      if (term.channel < 0 || term.channel >= m) { throw std::invalid_argument("sinusoid proposer channel out of range"); }
      u(term.channel) += term.amplitude * std::sin(2.0 * M_PI * t / term.period);
      break;
    }
  }
  return u;
}

/// One closed-loop run.
struct RunSpec
{
  double rho = 0.0;
  PlantKind plant = PlantKind::Linear;
  std::uint64_t seed = 0;
  int steps = 400;
  /// sampling period, only used for time stamps and the sinusoid proposer
  double dt = 1.0;
  Eigen::VectorXd x0;
  ProposerSpec proposer;
  DisturbanceMode disturbance = DisturbanceMode::Vertex;
  /// remove the decrease constraint (plain safety filter)
  bool lyapunov_constraint = true;
};

struct StepRecord
{
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd u_L;
  Eigen::VectorXd u;
  double du_norm = 0.0;
  Eigen::VectorXd w;
  bool w_in_W = true;
  /// V((x_k, ũ_k)) and l(x_k, ũ_{0,k}) of the warmstart held at step k
  double V = 0.0;
  double l = 0.0;
  /// optimal, feasible, fallback or recovered
  std::string status;
  double lyapunov_slack = 0.0;
  /// max violation of x ∈ X (≤ 0 when satisfied)
  double state_violation = 0.0;
  double input_violation = 0.0;
  bool terminal_branch = false;
};

struct RunMetrics
{
  int steps = 0;
  double max_abs_py = 0.0;
  int interventions = 0;
  double initial_norm = 0.0;
  double final_norm = 0.0;
  /// steps with V_{k+1} > V_k − (1−ρ)·l_k + tolerance (ρ < 1 only)
  int decrease_violations = 0;
  double max_decrease_excess = -std::numeric_limits<double>::infinity();
  int fallbacks = 0;
  int recoveries = 0;
  int w_outside_W = 0;
  int constraint_violations = 0;
  double max_constraint_violation = -std::numeric_limits<double>::infinity();
  /// steps whose decrease constraint had slack ≤ 1e-9
  int lyapunov_active = 0;
  double min_lyapunov_slack = std::numeric_limits<double>::infinity();
};

struct TrajectoryLog
{
  RunSpec spec;
  Eigen::Index nx = 0, nu = 0;
  std::vector<StepRecord> records;
  /// state after the final step
  Eigen::VectorXd x_final;
};

inline RunMetrics metrics(const TrajectoryLog & log, double decrease_tol = 1e-6)
{
  RunMetrics m;
  m.steps = static_cast<int>(log.records.size());
  if (log.records.empty()) {
    m.max_decrease_excess      = 0.0;
    m.max_constraint_violation = 0.0;
    m.min_lyapunov_slack       = 0.0;
    return m;
  }
  m.initial_norm = log.records.front().x.norm();
  m.final_norm   = log.x_final.size() > 0 ? log.x_final.norm() : log.records.back().x.norm();
  const double rho = log.spec.rho;
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto & r = log.records[k];
    m.max_abs_py   = std::max(m.max_abs_py, std::abs(r.x(0)));
    if (r.du_norm > kInterventionTol) { ++m.interventions; }
    if (r.status == "fallback") { ++m.fallbacks; }
    if (r.status == "recovered") { ++m.recoveries; }
    if (!r.w_in_W) { ++m.w_outside_W; }
    const double viol = std::max(r.state_violation, r.input_violation);
    m.max_constraint_violation = std::max(m.max_constraint_violation, viol);
    if (viol > kConstraintTol) { ++m.constraint_violations; }
    if (r.lyapunov_slack <= 1e-9) { ++m.lyapunov_active; }
    m.min_lyapunov_slack = std::min(m.min_lyapunov_slack, r.lyapunov_slack);
    if (rho < 1.0 && k + 1 < log.records.size()) {
      const double excess = log.records[k + 1].V - (r.V - (1.0 - rho) * r.l);
      m.max_decrease_excess = std::max(m.max_decrease_excess, excess);
      if (excess > decrease_tol) { ++m.decrease_violations; }
    }
  }
  if (!std::isfinite(m.max_decrease_excess)) { m.max_decrease_excess = 0.0; }
  return m;
}

/// Euclidean projection onto W.
inline Eigen::VectorXd project_onto(const HalfspacePolytope & W, const Eigen::VectorXd & w, QcqpSolver & solver)
{
  const Eigen::Index n = w.size();
  ConvexProgram p;
  p.objective = {Eigen::MatrixXd::Identity(n, n), -w, 0.5 * w.squaredNorm()};
  p.A_in      = W.A();
  p.b_in      = W.b();
  const QcqpSolution sol = solver.solve(p);
  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::Feasible) {
    throw Error("projection onto W failed (" + std::string(to_string(sol.status)) + ")");
  }
  return sol.x;
}

/// Deviation-coordinate nonlinear step (δx, δu) ↦ δx⁺.
using NonlinearStep = std::function<Eigen::VectorXd(const Eigen::VectorXd &, const Eigen::VectorXd &)>;

/**
 * @brief Closed-loop filter run.
 *
 * Linear plant: x⁺ = Ax + Bu + w with w sampled from W. Nonlinear plant:
 * x⁺ from `nonlinear`, and w = x⁺ − (Ax + Bu) is projected onto W before the
 * warmstart update when it falls outside. Only in that case may an infeasible
 * candidate be replaced by a freshly computed warmstart (status "recovered").
 *
 * Throws InitialInfeasibleError and WarmstartInfeasibleError.
 */
inline TrajectoryLog run_experiment(const RunSpec & spec, const FilterDesign & base_design,
                                    const NonlinearStep & nonlinear = {})
{
  if (spec.steps < 1) { throw std::invalid_argument("run_experiment: steps must be at least 1"); }
  const FilterDesign design = base_design.with_rho(spec.rho);
  const Eigen::Index n = design.nx(), m = design.nu();
  if (spec.x0.size() != n) { throw std::invalid_argument("run_experiment: x0 has wrong dimension"); }
  if (spec.plant == PlantKind::Nonlinear && !nonlinear) {
    throw std::invalid_argument("run_experiment: nonlinear plant requested without a model");
  }

  const FilterProblemBuilder builder(design);
  QcqpSolver solver;
  QcqpSolver aux;
  std::mt19937_64 rng(spec.seed);

  TrajectoryLog log;
  log.spec = spec;
  log.nx   = n;
  log.nu   = m;
  log.records.reserve(spec.steps);

  Eigen::VectorXd x = spec.x0;
  InputSequence warmstart;
  try {
    warmstart = initial_warmstart(builder, solver, x);
  } catch (const InitialInfeasibleError & e) {
    throw InitialInfeasibleError(std::string("x0 is not feasible: ") + e.what());
  }
  bool recovered = false;

  for (int k = 0; k < spec.steps; ++k) {
    StepRecord rec;
    rec.t   = k * spec.dt;
    rec.x   = x;
    rec.u_L = propose(spec.proposer, x, rec.t, m);
    rec.V   = lyapunov_value(design, x, warmstart);
    rec.l   = stage_cost(design, x, warmstart.col(0));
    rec.state_violation = max_violation(design.X, x);

    FilterStepResult step;
    try {
      step = filter_step(builder, solver, x, warmstart, rec.u_L, spec.lyapunov_constraint);
    } catch (const WarmstartInfeasibleError & e) {
      throw WarmstartInfeasibleError("step " + std::to_string(k) + ": " + e.what());
    }
    rec.u              = step.u_applied;
    rec.du_norm        = (rec.u - rec.u_L).norm();
    rec.lyapunov_slack = step.lyapunov_slack;
    rec.input_violation = max_violation(design.U, rec.u);
    if (step.fallback) {
      rec.status = "fallback";
    } else if (recovered) {
      rec.status = "recovered";
    } else {
      rec.status = std::string(to_string(step.status));
    }
    recovered = false;

    const Eigen::VectorXd x_nom = design.sys.A * x + design.sys.B * rec.u;
    Eigen::VectorXd x_next;
    if (spec.plant == PlantKind::Linear) {
      rec.w = spec.disturbance == DisturbanceMode::None
                ? Eigen::VectorXd::Zero(n)
                : sample(design.W, rng, spec.disturbance == DisturbanceMode::Vertex ? SampleMode::Vertex : SampleMode::Uniform);
      x_next = x_nom + rec.w;
    } else {
      x_next = nonlinear(x, rec.u);
      rec.w  = x_next - x_nom;
    }
    rec.w_in_W = contains_point(design.W, rec.w);
    const Eigen::VectorXd w_used = rec.w_in_W ? rec.w : project_onto(design.W, rec.w, aux);

    Candidate cand = advance_warmstart(design, x_next, step.terminal, step.vseq, w_used);
    rec.terminal_branch = cand.terminal_branch;
    if (!rec.w_in_W && !(sequence_violation(design, x_next, cand.seq) <= kWarmstartTol)) {
      try {
        cand.seq = initial_warmstart(builder, solver, x_next);
      } catch (const InitialInfeasibleError & e) {
        throw WarmstartInfeasibleError("step " + std::to_string(k + 1) + ": disturbance outside W left no feasible warmstart (" +
                                       e.what() + ")");
      }
      recovered = true;
    }

    log.records.push_back(std::move(rec));
    x         = x_next;
    warmstart = std::move(cand.seq);
  }
  log.x_final = x;
  return log;
}

/// Runs independent experiments, concurrently when `threads` > 1; results keep input order.
inline std::vector<TrajectoryLog> run_experiments(const std::vector<RunSpec> & specs, const FilterDesign & design,
                                                  const NonlinearStep & nonlinear = {}, unsigned threads = 0)
{
  if (threads == 0) { threads = std::max(1u, std::thread::hardware_concurrency()); }
  std::vector<TrajectoryLog> logs(specs.size());
  std::vector<std::exception_ptr> errors(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        logs[i] = run_experiment(specs[i], design, nonlinear);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(specs.size()));
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < count; ++t) { pool.emplace_back(worker); }
    for (auto & th : pool) { th.join(); }
  }
  for (auto & e : errors) {
    if (e) { std::rethrow_exception(e); }
  }
  return logs;
}

/**
 * @brief Fraction of uniform samples (δx, δu) from the box [-bx, bx] × [-bu, bu]
 * whose linearization residual f(δx, δu) − (A δx + B δu) lies in W.
 */
inline double linearization_coverage(const VehiclePlant & plant, const LinearSystem & sys, const HalfspacePolytope & W,
                                     const Eigen::VectorXd & bx, const Eigen::VectorXd & bu, int samples, std::uint64_t seed)
{
  if (samples < 1) { throw std::invalid_argument("linearization_coverage: samples must be positive"); }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  int inside = 0;
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd dx = bx, du = bu;
    for (Eigen::Index i = 0; i < dx.size(); ++i) { dx(i) *= unit(rng); }
    for (Eigen::Index i = 0; i < du.size(); ++i) { du(i) *= unit(rng); }
    const Eigen::VectorXd w = plant.step(dx, du) - sys.A * dx - sys.B * du;
    if (contains_point(W, w)) { ++inside; }
  }
  return static_cast<double>(inside) / samples;
}

/// %.17g, which round-trips doubles.
inline std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_header(Eigen::Index n, Eigen::Index m)
{
  std::string h = "t";
  for (Eigen::Index i = 1; i <= n; ++i) { h += ",x" + std::to_string(i); }
  for (Eigen::Index i = 1; i <= m; ++i) { h += ",uL" + std::to_string(i); }
  for (Eigen::Index i = 1; i <= m; ++i) { h += ",u" + std::to_string(i); }
  h += ",du_norm";
  for (Eigen::Index i = 1; i <= n; ++i) { h += ",w" + std::to_string(i); }
  h += ",w_in_W,V,l,status";
  return h;
}

inline std::string to_csv(const TrajectoryLog & log)
{
  std::ostringstream os;
  os << csv_header(log.nx, log.nu) << '\n';
  for (const auto & r : log.records) {
    os << format_double(r.t);
    for (Eigen::Index i = 0; i < r.x.size(); ++i) { os << ',' << format_double(r.x(i)); }
    for (Eigen::Index i = 0; i < r.u_L.size(); ++i) { os << ',' << format_double(r.u_L(i)); }
    for (Eigen::Index i = 0; i < r.u.size(); ++i) { os << ',' << format_double(r.u(i)); }
    os << ',' << format_double(r.du_norm);
    for (Eigen::Index i = 0; i < r.w.size(); ++i) { os << ',' << format_double(r.w(i)); }
    os << ',' << (r.w_in_W ? 1 : 0) << ',' << format_double(r.V) << ',' << format_double(r.l) << ',' << r.status << '\n';
  }
  return os.str();
}

/// File stem run_rho{ρ}_{plant}_{seed}.
inline std::string run_name(const RunSpec & s)
{
  std::ostringstream rho;
  rho << s.rho;
  return "run_rho" + rho.str() + "_" + to_string(s.plant) + "_" + std::to_string(s.seed);
}

}  // namespace psf
