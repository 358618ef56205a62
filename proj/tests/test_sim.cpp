#include <gtest/gtest.h>

#include <cmath>

#include "psf/sim.hpp"

using psf::FilterDesign;
using psf::HalfspacePolytope;
using psf::PlantKind;
using psf::ProposerSpec;
using psf::RunSpec;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

FilterDesign double_integrator()
{
  MatrixXd A(2, 2), B(2, 1);
  A << 1, 0.1, 0, 1;
  B << 0.005, 0.1;
  return psf::design_filter({A, B}, MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1),
                            HalfspacePolytope::box(VectorXd::Ones(2)), HalfspacePolytope::box(VectorXd::Ones(1)),
                            HalfspacePolytope::box(Eigen::Vector2d(0.002, 0.01)), 6, 0.0);
}

RunSpec base_spec()
{
  RunSpec s;
  s.steps    = 60;
  s.dt       = 0.1;
  s.seed     = 4;
  s.x0       = Eigen::Vector2d(0.5, 0.2);
  s.proposer = ProposerSpec::linear((MatrixXd(1, 2) << 0.5, 0.5).finished());
  return s;
}

}  // namespace

TEST(Propose, SumsTerms)
{
  const ProposerSpec p = ProposerSpec::constant(Eigen::Vector2d(0.1, 0.2)) +
                         ProposerSpec::linear((MatrixXd(2, 1) << 1.0, -1.0).finished()) + ProposerSpec::sinusoid(0.5, 4.0, 1);
  const VectorXd u = psf::propose(p, VectorXd::Constant(1, 2.0), 1.0, 2);
  EXPECT_NEAR(u(0), 0.1 + 2.0, 1e-15);
  EXPECT_NEAR(u(1), 0.2 - 2.0 + 0.5, 1e-15);
  EXPECT_TRUE(psf::propose(ProposerSpec{}, VectorXd::Ones(3), 0.0, 2).isZero(0));
  EXPECT_THROW(ProposerSpec::sinusoid(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(psf::propose(ProposerSpec::constant(VectorXd::Ones(3)), VectorXd::Ones(1), 0.0, 2), std::invalid_argument);
}

TEST(RunExperiment, OriginStaysAtRest)
{
  const FilterDesign d = double_integrator();
  RunSpec s            = base_spec();
  s.x0                 = VectorXd::Zero(2);
  s.proposer           = {};
  s.disturbance        = psf::DisturbanceMode::None;
  const auto log       = psf::run_experiment(s, d);
  ASSERT_EQ(log.records.size(), 60u);
  for (const auto & r : log.records) {
    EXPECT_LE(r.x.norm(), 1e-9);
    EXPECT_LE(r.du_norm, 1e-9);
    EXPECT_LE(r.V, 1e-12);
  }
  EXPECT_EQ(psf::metrics(log).interventions, 0);
}

TEST(RunExperiment, NominalDecreaseAndConstraints)
{
  const FilterDesign d = double_integrator();
  RunSpec s            = base_spec();
  s.disturbance        = psf::DisturbanceMode::None;
  const auto m         = psf::metrics(psf::run_experiment(s, d));
  EXPECT_EQ(m.decrease_violations, 0);
  EXPECT_LE(m.max_decrease_excess, 1e-6);
  EXPECT_EQ(m.constraint_violations, 0);
  EXPECT_GT(m.interventions, 0);
  EXPECT_LT(m.final_norm, m.initial_norm);
}

TEST(RunExperiment, VertexDisturbancesKeepConstraints)
{
  const FilterDesign d = double_integrator();
  for (double rho : {0.0, 0.5, 1000.0}) {
    RunSpec s      = base_spec();
    s.rho          = rho;
    s.steps        = 100;
    const auto log = psf::run_experiment(s, d);
    const auto m   = psf::metrics(log);
    EXPECT_EQ(m.constraint_violations, 0) << "rho=" << rho;
    EXPECT_EQ(m.w_outside_W, 0);
    EXPECT_EQ(m.recoveries, 0);
    for (const auto & r : log.records) { EXPECT_TRUE(psf::contains_point(d.W, r.w)); }
  }
}

TEST(RunExperiment, DeterministicLogs)
{
  const FilterDesign d = double_integrator();
  const RunSpec s      = base_spec();
  const std::string a  = psf::to_csv(psf::run_experiment(s, d));
  const std::string b  = psf::to_csv(psf::run_experiment(s, d));
  EXPECT_EQ(a, b);

  RunSpec other = s;
  other.seed    = 5;
  EXPECT_NE(a, psf::to_csv(psf::run_experiment(other, d)));
}

TEST(RunExperiments, ThreadedMatchesSequential)
{
  const FilterDesign d = double_integrator();
  std::vector<RunSpec> specs;
  for (double rho : {0.0, 0.5, 1000.0}) {
    RunSpec s = base_spec();
    s.rho     = rho;
    specs.push_back(s);
  }
  const auto seq = psf::run_experiments(specs, d, {}, 1);
  const auto par = psf::run_experiments(specs, d, {}, 3);
  ASSERT_EQ(seq.size(), par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq[i].spec.rho, specs[i].rho);
    EXPECT_EQ(psf::to_csv(seq[i]), psf::to_csv(par[i]));
  }
}

TEST(RunExperiment, InfeasibleInitialStateThrows)
{
  RunSpec s = base_spec();
  s.x0      = Eigen::Vector2d(1.5, 0.0);
  EXPECT_THROW(psf::run_experiment(s, double_integrator()), psf::InitialInfeasibleError);
}

TEST(RunExperiment, NonlinearPlantRequiresModel)
{
  RunSpec s = base_spec();
  s.plant   = PlantKind::Nonlinear;
  EXPECT_THROW(psf::run_experiment(s, double_integrator()), std::invalid_argument);
}

TEST(RunExperiment, ModelMismatchOutsideWIsFlaggedAndRecovered)
{
  const FilterDesign d = double_integrator();
  RunSpec s            = base_spec();
  s.plant              = PlantKind::Nonlinear;
  s.steps              = 40;
  // a plant with 30% more input gain than the model
  const psf::NonlinearStep plant = [&d](const VectorXd & x, const VectorXd & u) { return d.sys.A * x + 1.3 * d.sys.B * u; };
  const auto log = psf::run_experiment(s, d, plant);
  const auto m   = psf::metrics(log);
  EXPECT_GT(m.w_outside_W, 0);
  EXPECT_EQ(m.constraint_violations, 0);
  EXPECT_NE(log.records.front().status, "recovered");
  for (std::size_t k = 1; k < log.records.size(); ++k) {
    if (log.records[k].status == "recovered") { EXPECT_FALSE(log.records[k - 1].w_in_W); }
  }
}

TEST(ProjectOnto, ClampsToBox)
{
  psf::QcqpSolver solver;
  const HalfspacePolytope W = HalfspacePolytope::box(Eigen::Vector2d(1.0, 2.0));
  const VectorXd p          = psf::project_onto(W, Eigen::Vector2d(3.0, -0.5), solver);
  EXPECT_NEAR(p(0), 1.0, 1e-6);
  EXPECT_NEAR(p(1), -0.5, 1e-6);
}

TEST(Metrics, HandBuiltLog)
{
  psf::TrajectoryLog log;
  log.spec.rho = 0.5;
  log.nx       = 1;
  log.nu       = 1;
  const double V[] = {4.0, 3.0, 2.9};
  const double l[] = {1.0, 1.0, 1.0};
  for (int k = 0; k < 3; ++k) {
    psf::StepRecord r;
    r.x               = VectorXd::Constant(1, k == 1 ? -0.7 : 0.2);
    r.u               = VectorXd::Zero(1);
    r.u_L             = VectorXd::Zero(1);
    r.du_norm         = k == 2 ? 0.5 : 0.0;
    r.w               = VectorXd::Zero(1);
    r.w_in_W          = k != 0;
    r.V               = V[k];
    r.l               = l[k];
    r.status          = k == 1 ? "fallback" : "optimal";
    r.lyapunov_slack  = 0.1 * k;
    r.state_violation = k == 2 ? 1e-3 : -1.0;
    r.input_violation = -1.0;
    log.records.push_back(r);
  }
  log.x_final  = VectorXd::Constant(1, 0.1);
  const auto m = psf::metrics(log);
  EXPECT_EQ(m.steps, 3);
  EXPECT_DOUBLE_EQ(m.max_abs_py, 0.7);
  EXPECT_EQ(m.interventions, 1);
  EXPECT_EQ(m.fallbacks, 1);
  EXPECT_EQ(m.w_outside_W, 1);
  EXPECT_EQ(m.constraint_violations, 1);
  EXPECT_DOUBLE_EQ(m.initial_norm, 0.2);
  EXPECT_DOUBLE_EQ(m.final_norm, 0.1);
  // 3 ≤ 4 − 0.5 holds, 2.9 ≤ 3 − 0.5 does not
  EXPECT_EQ(m.decrease_violations, 1);
  EXPECT_NEAR(m.max_decrease_excess, 0.4, 1e-12);
  EXPECT_EQ(m.lyapunov_active, 1);
}

TEST(Csv, HeaderAndRoundTripFormatting)
{
  EXPECT_EQ(psf::csv_header(2, 1), "t,x1,x2,uL1,u1,du_norm,w1,w2,w_in_W,V,l,status");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) { EXPECT_EQ(std::stod(psf::format_double(v)), v); }
}

TEST(RunName, Format)
{
  RunSpec s;
  s.rho   = 0.5;
  s.plant = PlantKind::Nonlinear;
  s.seed  = 12;
  EXPECT_EQ(psf::run_name(s), "run_rho0.5_nonlinear_12");
  s.rho   = 1000;
  s.plant = PlantKind::Linear;
  EXPECT_EQ(psf::run_name(s), "run_rho1000_linear_12");
}
