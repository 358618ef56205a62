#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "psf/control_math.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

MatrixXd random_spd(Eigen::Index n, std::mt19937_64 & rng)
{
  std::normal_distribution<double> g;
  const MatrixXd M = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
  return M * M.transpose() + MatrixXd::Identity(n, n);
}

}  // namespace

TEST(SolveDare, ZeroDynamics)
{
  const auto s = psf::solve_dare(scalar(0), scalar(1), scalar(1), scalar(1));
  EXPECT_NEAR(s.P(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s.K(0, 0), 0.0, 1e-12);
}

TEST(SolveDare, GoldenRatio)
{
  const auto s = psf::solve_dare(scalar(1), scalar(1), scalar(1), scalar(1));
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  EXPECT_NEAR(s.P(0, 0), phi, 1e-9);
  EXPECT_NEAR(s.K(0, 0), -(phi - 1.0), 1e-9);
}

TEST(SolveDare, RandomSystemsSatisfyResidualAndStability)
{
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 2 + trial % 4, m = 1 + trial % 2;
    const MatrixXd A = MatrixXd::NullaryExpr(n, n, [&] { return 0.6 * g(rng); });
    const MatrixXd B = MatrixXd::NullaryExpr(n, m, [&] { return g(rng); });
    const MatrixXd Q = random_spd(n, rng), R = random_spd(m, rng);
    const auto s     = psf::solve_dare(A, B, Q, R);
    EXPECT_LE(psf::riccati_residual(A, B, Q, R, s.P).lpNorm<Eigen::Infinity>(), 1e-10 * std::max(1.0, s.P.norm()));
    EXPECT_LT(psf::spectral_radius(A + B * s.K), 1.0);
    EXPECT_TRUE(psf::is_positive_definite(s.P));
  }
}

TEST(SolveDare, RejectsIndefiniteWeights)
{
  EXPECT_THROW(psf::solve_dare(scalar(1), scalar(1), scalar(-1), scalar(1)), psf::NotPositiveDefiniteError);
}

TEST(SolveDiscreteLyapunov, ScalarClosedForm)
{
  EXPECT_NEAR(psf::solve_discrete_lyapunov(scalar(0.5), scalar(1))(0, 0), 4.0 / 3.0, 1e-10);
}

TEST(SolveDiscreteLyapunov, ZeroDynamicsReturnsRhs)
{
  std::mt19937_64 rng(2);
  const MatrixXd Q = random_spd(3, rng);
  EXPECT_LE((psf::solve_discrete_lyapunov(MatrixXd::Zero(3, 3), Q) - Q).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(SolveDiscreteLyapunov, UnstableThrows)
{
  EXPECT_THROW(psf::solve_discrete_lyapunov(scalar(1.0), scalar(1)), psf::UnstableError);
}

TEST(SolveDiscreteLyapunov, AgreesWithSeriesAndDecreaseIdentity)
{
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 2 + trial % 5;
    MatrixXd A_K = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    A_K *= 0.9 / psf::spectral_radius(A_K);
    const MatrixXd Q = random_spd(n, rng);
    const MatrixXd P = psf::solve_discrete_lyapunov(A_K, Q);
    const MatrixXd S = psf::solve_discrete_lyapunov_series(A_K, Q);
    EXPECT_LE((P - S).lpNorm<Eigen::Infinity>(), 1e-8 * P.lpNorm<Eigen::Infinity>());
    EXPECT_LE((P - P.transpose()).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_TRUE(psf::is_positive_definite(P));
    for (int k = 0; k < 10; ++k) {
      const VectorXd x = VectorXd::NullaryExpr(n, [&] { return g(rng); });
      const double lhs = 0.5 * (A_K * x).dot(P * (A_K * x)) - 0.5 * x.dot(P * x);
      const double rhs = -0.5 * x.dot(Q * x);
      EXPECT_NEAR(lhs, rhs, 1e-8 * std::abs(rhs));
    }
  }
}

TEST(NumericalJacobian, AffineMapIsExact)
{
  auto f      = [](const VectorXd & x, const VectorXd & u) { return VectorXd(0.9 * x + 0.1 * u); };
  auto [A, B] = psf::numerical_jacobian(f, VectorXd::Constant(1, 0.3), VectorXd::Constant(1, -2.0));
  EXPECT_NEAR(A(0, 0), 0.9, 1e-10);
  EXPECT_NEAR(B(0, 0), 0.1, 1e-10);
}

TEST(NumericalJacobian, Square)
{
  auto f     = [](const VectorXd & x, const VectorXd &) { return VectorXd(x.cwiseProduct(x)); };
  auto [A, _] = psf::numerical_jacobian(f, VectorXd::Ones(1), VectorXd::Zero(1));
  EXPECT_NEAR(A(0, 0), 2.0, 1e-8);
}

TEST(NumericalJacobian, NonFiniteProbeThrows)
{
  auto f = [](const VectorXd & x, const VectorXd &) { return VectorXd(x.array().log().matrix()); };
  EXPECT_THROW(psf::numerical_jacobian(f, VectorXd::Constant(1, 1e-7), VectorXd::Zero(1), 1e-6), psf::NonFiniteError);
}
