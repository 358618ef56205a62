#include <gtest/gtest.h>

#include <random>

#include "psf/qcqp.hpp"

using psf::ConvexProgram;
using psf::QuadraticFunction;
using psf::SolveStatus;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

/// ½‖x − t‖²·2 = (x − t)² for scalar x
QuadraticFunction squared_distance(const VectorXd & target, double weight = 1.0)
{
  const auto n = target.size();
  return {2.0 * weight * MatrixXd::Identity(n, n), -2.0 * weight * target, weight * target.squaredNorm()};
}

ConvexProgram random_program(std::mt19937_64 & rng, Eigen::Index n)
{
  std::normal_distribution<double> g;
  ConvexProgram p;
  const MatrixXd M = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
  p.objective      = {M * M.transpose() + 0.1 * MatrixXd::Identity(n, n), VectorXd::NullaryExpr(n, [&] { return 3 * g(rng); }), 0.0};
  p.A_in           = MatrixXd::NullaryExpr(2 * n, n, [&] { return g(rng); });
  p.b_in           = VectorXd::Constant(2 * n, 1.0);
  const MatrixXd L = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
  QuadraticFunction q{L * L.transpose() + MatrixXd::Identity(n, n), VectorXd::NullaryExpr(n, [&] { return 0.1 * g(rng); }), -0.5};
  p.qconstraints.push_back(q);
  return p;
}

}  // namespace

TEST(SolveQcqp, ActiveLinearBound)
{
  ConvexProgram p;
  p.objective = squared_distance(VectorXd::Constant(1, 2.0));
  p.A_in      = MatrixXd::Ones(1, 1);
  p.b_in      = VectorXd::Ones(1);
  const auto s = psf::solve_qcqp(p);
  ASSERT_EQ(s.status, SolveStatus::Optimal);
  EXPECT_NEAR(s.x(0), 1.0, 1e-6);
  EXPECT_NEAR(s.objective_value, 1.0, 1e-6);
}

TEST(SolveQcqp, ActiveQuadraticConstraint)
{
  ConvexProgram p;
  p.objective = squared_distance(VectorXd::Constant(1, 2.0));
  p.qconstraints.push_back({MatrixXd::Constant(1, 1, 2.0), VectorXd::Zero(1), -0.25});
  const auto s = psf::solve_qcqp(p);
  ASSERT_EQ(s.status, SolveStatus::Optimal);
  EXPECT_NEAR(s.x(0), 0.5, 1e-6);
  EXPECT_LE(s.max_violation, 1e-7);
}

TEST(SolveQcqp, EqualityConstraint)
{
  ConvexProgram p;
  p.objective = squared_distance(VectorXd::Zero(2));
  p.A_eq      = MatrixXd::Ones(1, 2);
  p.b_eq      = VectorXd::Ones(1);
  const auto s = psf::solve_qcqp(p);
  ASSERT_EQ(s.status, SolveStatus::Optimal);
  EXPECT_NEAR(s.x(0), 0.5, 1e-7);
  EXPECT_NEAR(s.x(1), 0.5, 1e-7);
}

TEST(SolveQcqp, InfeasibleWithoutInit)
{
  ConvexProgram p;
  p.objective = squared_distance(VectorXd::Zero(1));
  p.A_in      = (MatrixXd(2, 1) << 1.0, -1.0).finished();
  p.b_in      = (VectorXd(2) << -1.0, -1.0).finished();
  EXPECT_EQ(psf::solve_qcqp(p).status, SolveStatus::Infeasible);
}

TEST(SolveQcqp, InvalidProgramRejected)
{
  ConvexProgram p;
  p.objective = {-MatrixXd::Identity(2, 2), VectorXd::Zero(2), 0.0};
  EXPECT_THROW(psf::solve_qcqp(p), psf::InvalidProgramError);
}

TEST(SolveQcqp, MatchesGridSearch)
{
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    ConvexProgram p = random_program(rng, 2);
    // restrict to the box so the grid covers the feasible set
    p.A_in.conservativeResize(p.A_in.rows() + 4, 2);
    p.b_in.conservativeResize(p.b_in.rows() + 4);
    p.A_in.bottomRows(4) << 1, 0, -1, 0, 0, 1, 0, -1;
    p.b_in.tail(4).setConstant(1.0);

    const auto s = psf::solve_qcqp(p);
    ASSERT_TRUE(s.status == SolveStatus::Optimal || s.status == SolveStatus::Feasible) << trial;
    double best = std::numeric_limits<double>::infinity();
    const double h = 1e-3;
    for (double a = -1.0; a <= 1.0 + 1e-12; a += h) {
      for (double b = -1.0; b <= 1.0 + 1e-12; b += h) {
        const VectorXd x = (VectorXd(2) << a, b).finished();
        if (p.max_violation(x) <= 0.0) { best = std::min(best, p.objective_value(x)); }
      }
    }
    EXPECT_LE(s.max_violation, 1e-7);
    EXPECT_NEAR(s.objective_value, best, 1e-2) << trial;
    EXPECT_LE(s.objective_value, best + 1e-7);
  }
}

TEST(SolveQcqp, NeverWorseThanFeasibleInit)
{
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 30; ++trial) {
    const ConvexProgram p = random_program(rng, 2 + trial % 6);
    const VectorXd init   = VectorXd::Zero(p.num_vars());
    ASSERT_LE(p.max_violation(init), 0.0);
    const auto s = psf::solve_qcqp(p, init);
    EXPECT_LE(s.max_violation, 1e-7);
    EXPECT_LE(s.objective_value, p.objective_value(init) + 1e-9);
    EXPECT_EQ(s.status, SolveStatus::Optimal) << trial;
  }
}

TEST(SolveQcqp, FallbackKeepsContractWhenIterationsExhausted)
{
  std::mt19937_64 rng(29);
  psf::QcqpOptions opt;
  opt.max_iter = 1;
  for (int trial = 0; trial < 10; ++trial) {
    const ConvexProgram p = random_program(rng, 4);
    const VectorXd init   = VectorXd::Zero(4);
    const auto s          = psf::solve_qcqp(p, init, opt);
    EXPECT_NE(s.status, SolveStatus::Optimal);
    EXPECT_LE(s.max_violation, 1e-7);
    EXPECT_LE(s.objective_value, p.objective_value(init) + 1e-9);
  }
}

TEST(SolveQcqp, ObjectiveScalingLeavesArgminUnchanged)
{
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const ConvexProgram p = random_program(rng, 3);
    ConvexProgram scaled  = p;
    scaled.objective.H *= 250.0;
    scaled.objective.g *= 250.0;
    const auto a = psf::solve_qcqp(p);
    const auto b = psf::solve_qcqp(scaled);
    ASSERT_EQ(a.status, SolveStatus::Optimal);
    ASSERT_EQ(b.status, SolveStatus::Optimal);
    EXPECT_LE((a.x - b.x).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}
