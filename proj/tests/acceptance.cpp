// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "psf/psf.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const std::string kConfigs = PSF_CONFIG_DIR;

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Shared state so later criteria reuse designs and runs.
struct Fixture
{
  psf::RunConfig vehicle_cfg = psf::load_config(kConfigs + "/vehicle.json");
  psf::RunConfig toy_cfg     = psf::load_config(kConfigs + "/toy.json");
  std::optional<psf::FilterDesign> vehicle;
  std::optional<psf::FilterDesign> toy;
  psf::VehiclePlant plant{vehicle_cfg.system.vehicle, vehicle_cfg.system.v_op, vehicle_cfg.system.dt};
  /// criterion 3 runs, indexed [rho][seed]
  std::map<double, std::vector<psf::TrajectoryLog>> robust_runs;

  psf::RunSpec vehicle_spec(double rho, psf::PlantKind plant_kind, std::uint64_t seed) const
  {
    psf::RunSpec s;
    s.rho         = rho;
    s.plant       = plant_kind;
    s.seed        = seed;
    s.steps       = vehicle_cfg.experiment.steps;
    s.dt          = vehicle_cfg.system.dt;
    s.x0          = vehicle_cfg.experiment.x0;
    s.proposer    = vehicle_cfg.experiment.proposer;
    s.disturbance = psf::DisturbanceMode::Vertex;
    return s;
  }

  psf::NonlinearStep nonlinear() const
  {
    return [this](const VectorXd & x, const VectorXd & u) { return plant.step(x, u); };
  }
};

bool certificates_pass(const psf::DesignCertificates & c, std::string & detail)
{
  const bool ok = c.rpi_slack >= -1e-8 && c.lyapunov_residual <= 1e-8 && c.nesting_slack >= -1e-8 && c.sets_nonempty &&
                  c.terminal_input_slack >= -1e-8 && c.terminal_state_slack >= -1e-8;
  detail += "rpi slack " + fmt(c.rpi_slack) + ", lyapunov residual " + fmt(c.lyapunov_residual) + ", nesting slack " +
            fmt(c.nesting_slack);
  return ok;
}

Outcome criterion1(Fixture & f)
{
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  f.vehicle     = psf::design_from_config(f.vehicle_cfg);
  const double t_vehicle = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  f.toy = psf::design_from_config(f.toy_cfg);
  std::string dv = "vehicle: ", dt = "toy: ";
  const bool v_ok = certificates_pass(f.vehicle->certificates, dv) && !psf::is_empty(f.vehicle->Zf);
  const bool t_ok = certificates_pass(f.toy->certificates, dt) && !psf::is_empty(f.toy->Zf);
  o.pass          = v_ok && t_ok && t_vehicle < 30.0;
  o.detail        = dv + "; " + dt + "; vehicle design " + fmt(t_vehicle) + " s";
  return o;
}

Outcome criterion2(Fixture & f)
{
  Outcome o;
  psf::RunSpec s = f.vehicle_spec(0.0, psf::PlantKind::Linear, f.vehicle_cfg.experiment.seed);
  s.disturbance  = psf::DisturbanceMode::None;
  const auto t0  = std::chrono::steady_clock::now();
  const auto m   = psf::metrics(psf::run_experiment(s, *f.vehicle));
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ratio = m.final_norm / m.initial_norm;
  o.pass   = m.decrease_violations == 0 && m.max_decrease_excess <= 1e-6 && ratio <= 1e-3 && t < 60.0;
  o.detail = "max decrease excess " + fmt(m.max_decrease_excess) + " (" + std::to_string(m.decrease_violations) +
             " violations), |x_400|/|x_0| = " + fmt(ratio) + " (required <= 1e-3), " + fmt(t) + " s";
  return o;
}

Outcome criterion3(Fixture & f)
{
  Outcome o;
  std::vector<psf::RunSpec> specs;
  for (double rho : {0.0, 0.5}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) { specs.push_back(f.vehicle_spec(rho, psf::PlantKind::Linear, seed)); }
  }
  const auto t0 = std::chrono::steady_clock::now();
  int warmstart_failures = 0, violations = 0;
  double max_py = 0.0, max_viol = -1.0;
  for (const auto & s : specs) {
    try {
      const auto log = psf::run_experiment(s, *f.vehicle);
      const auto m   = psf::metrics(log);
      violations += m.constraint_violations;
      max_viol = std::max(max_viol, m.max_constraint_violation);
      max_py   = std::max(max_py, m.max_abs_py);
      f.robust_runs[s.rho].push_back(log);
    } catch (const psf::WarmstartInfeasibleError &) {
      ++warmstart_failures;
    }
  }
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.pass   = warmstart_failures == 0 && violations == 0 && max_py <= 0.1 + 1e-7 && t < 600.0;
  o.detail = std::to_string(specs.size()) + " runs: " + std::to_string(warmstart_failures) + " warmstart failures, " +
             std::to_string(violations) + " constraint violations (max " + fmt(max_viol) + "), max|p_y| " + fmt(max_py) + ", " +
             fmt(t) + " s";
  return o;
}

Outcome criterion4(Fixture & f)
{
  Outcome o;
  const auto & r0  = f.robust_runs[0.0];
  const auto & r05 = f.robust_runs[0.5];
  int fewer = 0, total0 = 0, total05 = 0;
  bool per_seed = r0.size() == r05.size() && !r0.empty();
  for (std::size_t i = 0; i < std::min(r0.size(), r05.size()); ++i) {
    const int a = psf::metrics(r0[i]).interventions, b = psf::metrics(r05[i]).interventions;
    total0 += a;
    total05 += b;
    if (b <= a) { ++fewer; } else { per_seed = false; }
  }

  double max_du = 0.0, min_slack = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    psf::RunSpec with = f.vehicle_spec(1000.0, psf::PlantKind::Linear, seed);
    psf::RunSpec without          = with;
    without.lyapunov_constraint   = false;
    const auto a = psf::run_experiment(with, *f.vehicle);
    const auto b = psf::run_experiment(without, *f.vehicle);
    for (std::size_t k = 0; k < a.records.size(); ++k) {
      max_du    = std::max(max_du, (a.records[k].u - b.records[k].u).cwiseAbs().maxCoeff());
      min_slack = std::min(min_slack, a.records[k].lyapunov_slack);
    }
  }
  o.pass   = per_seed && min_slack > 0.0 && max_du <= 1e-6;
  o.detail = "rho=0.5 <= rho=0 interventions on " + std::to_string(fewer) + "/" + std::to_string(r0.size()) + " seeds (totals " +
             std::to_string(total05) + " vs " + std::to_string(total0) + "); rho=1000: min decrease slack " + fmt(min_slack) +
             ", max |u - u_safety| " + fmt(max_du);
  return o;
}

Outcome criterion5(Fixture &)
{
  Outcome o;
  const psf::LinearSystem sys{MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1)};
  const auto base = psf::design_filter(sys, MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), psf::HalfspacePolytope::box(VectorXd::Ones(1)),
                                       psf::HalfspacePolytope::box(VectorXd::Ones(1)),
                                       psf::HalfspacePolytope::box(VectorXd::Constant(1, 0.05)), 2, 0.0);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ux(-1.0, 1.0), uu(-2.0, 2.0), urho(0.0, 1.5), unit(-1.0, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  int instances = 0, matched = 0;
  double worst = 0.0;
  while (instances < 50) {
    const auto d     = base.with_rho(urho(rng));
    const VectorXd x = VectorXd::Constant(1, ux(rng));
    psf::InputSequence ws;
    try {
      ws = psf::initial_warmstart(d, x);
    } catch (const psf::InitialInfeasibleError &) {
      continue;
    }
    // a random feasible warmstart away from the minimizer
    for (int a = 0; a < 100; ++a) {
      psf::InputSequence cand = ws + 0.3 * psf::InputSequence::NullaryExpr(1, 2, [&] { return unit(rng); });
      if (psf::sequence_violation(d, x, cand) <= 0.0) {
        ws = cand;
        break;
      }
    }
    const double uL = uu(rng);
    const auto ref  = oracle::grid_argmin(d, x(0), ws(0, 0), ws(0, 1), uL, 1e-3);
    if (!ref) { continue; }
    const auto r     = psf::filter_step(d, x, ws, VectorXd::Constant(1, uL));
    const double err = std::abs(r.u_applied(0) - *ref);
    worst            = std::max(worst, err);
    if (err <= 1e-2) { ++matched; }
    ++instances;
  }
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.pass   = matched == instances && t < 60.0;
  o.detail = std::to_string(matched) + "/" + std::to_string(instances) + " instances within 1e-2, worst " + fmt(worst) + ", " +
             fmt(t) + " s";
  return o;
}

Outcome criterion6(Fixture &)
{
  Outcome o;
  const MatrixXd one = MatrixXd::Ones(1, 1);
  const auto lqr     = psf::solve_dare(one, one, one, one);
  const double e_dare = std::abs(lqr.P(0, 0) - (1.0 + std::sqrt(5.0)) / 2.0);
  const double e_lyap = std::abs(psf::solve_discrete_lyapunov(0.5 * one, one)(0, 0) - 4.0 / 3.0);
  const double h      = 0.01;
  const VectorXd x1   = psf::rk4_step([](const VectorXd & x, const VectorXd &) { VectorXd d = -x; return d; }, VectorXd::Ones(1),
                                      VectorXd::Zero(0), h);
  // exact value of one RK4 step: the degree-4 Taylor polynomial of e^{-h}
  const double rk4_exact = 1.0 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24;
  const double e_rk4     = std::abs(x1(0) - rk4_exact);
  const double e_literal = std::abs(x1(0) - 0.990049834);
  o.pass   = e_dare <= 1e-9 && e_lyap <= 1e-10 && e_rk4 <= 1e-10 && e_literal <= 5e-10;
  o.detail = "DARE error " + fmt(e_dare) + ", Lyapunov error " + fmt(e_lyap) + ", RK4 error " + fmt(e_rk4) +
             " vs 0.99004983375 (" + fmt(e_literal) + " vs the 9-digit rounding 0.990049834)";
  return o;
}

Outcome criterion7(Fixture & f)
{
  Outcome o;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int checks = 0, failures = 0;
  while (checks < 500) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(checks % 2);
    // P: random bounded polytope around the origin; S: small box
    const Eigen::Index rows = 3 * n;
    MatrixXd A = MatrixXd::NullaryExpr(rows, n, [&] { return g(rng); });
    const VectorXd b = VectorXd::NullaryExpr(rows, [&] { return 0.5 + u01(rng); });
    const auto P = psf::HalfspacePolytope(A, b).intersect(psf::HalfspacePolytope::box(VectorXd::Constant(n, 2.0)));
    const VectorXd half = VectorXd::NullaryExpr(n, [&] { return 0.05 + 0.1 * u01(rng); });
    const auto S        = psf::HalfspacePolytope::box(half);
    const auto D        = psf::tighten(P, S);
    if (psf::is_empty(D)) { continue; }
    const auto [lo, hi] = psf::bounding_box(D);
    VectorXd x(n);
    bool found = false;
    for (int a = 0; a < 1000 && !found; ++a) {
      for (Eigen::Index i = 0; i < n; ++i) { x(i) = lo(i) + (hi(i) - lo(i)) * u01(rng); }
      found = psf::contains_point(D, x, 0.0);
    }
    if (!found) { continue; }
    // every vertex of the box S
    bool ok = true;
    for (int mask = 0; mask < (1 << n); ++mask) {
      VectorXd s(n);
      for (Eigen::Index i = 0; i < n; ++i) { s(i) = (mask >> i & 1) ? half(i) : -half(i); }
      ok = ok && psf::contains_point(P, x + s, 1e-9);
    }
    if (!ok) { ++failures; }
    ++checks;
  }
  const double rpi = psf::rpi_slack(f.vehicle->A_K(), f.vehicle->Xf, f.vehicle->W);
  const auto contained = psf::contains_set(f.vehicle->X.intersect(f.vehicle->U.preimage(f.vehicle->K)), f.vehicle->Xf, 1e-8);
  o.pass   = failures == 0 && rpi >= -1e-8 && contained.contained;
  o.detail = std::to_string(checks - failures) + "/" + std::to_string(checks) + " Pontryagin memberships hold; vehicle Xf RPI slack " +
             fmt(rpi) + ", Xf within X and K^-1 U slack " + fmt(contained.worst_slack);
  return o;
}

Outcome criterion8(Fixture & f)
{
  Outcome o;
  bool ok = true;
  std::string detail;
  for (double rho : {0.0, 0.5}) {
    const auto spec = f.vehicle_spec(rho, psf::PlantKind::Nonlinear, f.vehicle_cfg.experiment.seed);
    try {
      const auto m        = psf::metrics(psf::run_experiment(spec, *f.vehicle, f.nonlinear()));
      const double ratio  = m.final_norm / m.initial_norm;
      const double w_frac = static_cast<double>(m.w_outside_W) / m.steps;
      ok = ok && m.max_abs_py <= 0.1 && ratio < 0.1 && w_frac <= 0.2;
      detail += "rho=" + fmt(rho) + ": max|p_y| " + fmt(m.max_abs_py) + ", final/initial " + fmt(ratio) + ", w outside W " +
                fmt(100.0 * w_frac) + "%, recoveries " + std::to_string(m.recoveries) + "; ";
    } catch (const psf::Error & e) {
      ok = false;
      detail += "rho=" + fmt(rho) + ": " + e.what() + "; ";
    }
  }
  o.pass   = ok;
  o.detail = detail.substr(0, detail.size() - 2);
  return o;
}

Outcome criterion9(Fixture & f)
{
  Outcome o;
  std::vector<psf::RunSpec> specs = {f.vehicle_spec(0.5, psf::PlantKind::Linear, 3),
                                     f.vehicle_spec(0.0, psf::PlantKind::Nonlinear, 3)};
  const auto a = psf::run_experiments(specs, *f.vehicle, f.nonlinear(), 1);
  const auto b = psf::run_experiments(specs, *f.vehicle, f.nonlinear(), 2);
  const auto c = psf::run_experiments(specs, *f.vehicle, f.nonlinear(), 1);
  int identical = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string s = psf::to_csv(a[i]);
    if (s == psf::to_csv(b[i]) && s == psf::to_csv(c[i])) { ++identical; }
  }
  o.pass   = identical == static_cast<int>(specs.size());
  o.detail = std::to_string(identical) + "/" + std::to_string(specs.size()) + " logs byte-identical across 3 repetitions";
  return o;
}

}  // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<Outcome(Fixture &)>>> criteria = {
    {"design certificates", criterion1},
    {"nominal Lyapunov decrease", criterion2},
    {"robust recursive feasibility", criterion3},
    {"rho interpolation", criterion4},
    {"brute-force oracle", criterion5},
    {"closed-form numerics", criterion6},
    {"set-operation properties", criterion7},
    {"nonlinear plant", criterion8},
    {"determinism", criterion9},
  };
  Fixture fixture;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second(fixture);
    } catch (const std::exception & e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) { ++failed; }
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
