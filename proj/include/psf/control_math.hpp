#pragma once

/**
 * @file
 * @brief Riccati and Lyapunov solvers, numerical linearization.
 *
 * Gains follow the convention u = K x.
 */

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <utility>

#include "psf/errors.hpp"

namespace psf {

struct LinearSystem
{
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;

  Eigen::Index nx() const { return A.rows(); }
  Eigen::Index nu() const { return B.cols(); }

  void validate() const
  {
    if (A.rows() != A.cols() || B.rows() != A.rows()) {
      throw std::invalid_argument("LinearSystem: A is " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                                  ", B is " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
    }
  }
};

struct CostMatrices
{
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd P;
};

inline double spectral_radius(const Eigen::MatrixXd & M)
{
  if (M.size() == 0) { return 0.0; }
  return Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Eigen::MatrixXd & M, double tol = 1e-12)
{
  return M.rows() == M.cols() && (M - M.transpose()).lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, M.lpNorm<Eigen::Infinity>());
}

/// Symmetric and Cholesky-factorizable.
inline bool is_positive_definite(const Eigen::MatrixXd & M)
{
  if (!is_symmetric(M, 1e-9)) { return false; }
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (M + M.transpose()));
  return llt.info() == Eigen::Success;
}

inline void require_positive_definite(const Eigen::MatrixXd & M, const std::string & name)
{
  if (!is_positive_definite(M)) { throw NotPositiveDefiniteError(name + " is not symmetric positive definite"); }
}

/// Q + AᵀPA - AᵀPB(R + BᵀPB)⁻¹BᵀPA - P
inline Eigen::MatrixXd riccati_residual(
  const Eigen::MatrixXd & A, const Eigen::MatrixXd & B, const Eigen::MatrixXd & Q, const Eigen::MatrixXd & R,
  const Eigen::MatrixXd & P)
{
  const Eigen::MatrixXd BtPA = B.transpose() * P * A;
  return Q + A.transpose() * P * A - BtPA.transpose() * (R + B.transpose() * P * B).ldlt().solve(BtPA) - P;
}

struct LqrSolution
{
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;
  int iterations = 0;
  double residual = 0.0;
};

/**
 * @brief Stabilizing solution of the discrete algebraic Riccati equation.
 *
 * Fixed-point iteration of the value recursion from P₀ = Q. Returns K with
 * u = Kx, i.e. K = -(R + BᵀPB)⁻¹BᵀPA.
 */
inline LqrSolution solve_dare(
  const Eigen::MatrixXd & A, const Eigen::MatrixXd & B, const Eigen::MatrixXd & Q, const Eigen::MatrixXd & R,
  double tol = 1e-10, int max_iter = 200000)
{
  LinearSystem{A, B}.validate();
  require_positive_definite(Q, "Q");
  require_positive_definite(R, "R");

  LqrSolution sol;
  Eigen::MatrixXd P = Q;
  for (int k = 1; k <= max_iter; ++k) {
    const Eigen::MatrixXd BtPA = B.transpose() * P * A;
    Eigen::MatrixXd next = Q + A.transpose() * P * A - BtPA.transpose() * (R + B.transpose() * P * B).ldlt().solve(BtPA);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) { throw NotConvergedError("solve_dare: iteration diverged"); }
    const double step = (next - P).lpNorm<Eigen::Infinity>();
    P = std::move(next);
    if (step <= tol) {
      const double res = riccati_residual(A, B, Q, R, P).lpNorm<Eigen::Infinity>();
      if (res <= tol) {
        sol.P          = P;
        sol.iterations = k;
        sol.residual   = res;
        sol.K          = -(R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
        if (spectral_radius(A + B * sol.K) >= 1.0) {
          throw NotConvergedError("solve_dare: fixed point is not stabilizing (is (A, B) stabilizable?)");
        }
        return sol;
      }
    }
  }
  throw NotConvergedError("solve_dare: residual above " + std::to_string(tol) + " after " + std::to_string(max_iter) +
                          " iterations");
}

/// A_KᵀPA_K - P + Q_rhs
inline Eigen::MatrixXd lyapunov_residual(const Eigen::MatrixXd & A_K, const Eigen::MatrixXd & P, const Eigen::MatrixXd & Q_rhs)
{
  return A_K.transpose() * P * A_K - P + Q_rhs;
}

/**
 * @brief Solve A_KᵀPA_K - P = -Q_rhs via the Kronecker-product linear system.
 *
 * Throws UnstableError when ρ(A_K) ≥ 1.
 */
inline Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd & A_K, const Eigen::MatrixXd & Q_rhs, double tol = 1e-9)
{
  const Eigen::Index n = A_K.rows();
  if (A_K.cols() != n || Q_rhs.rows() != n || Q_rhs.cols() != n) {
    throw std::invalid_argument("solve_discrete_lyapunov: dimension mismatch");
  }
  const double rho = spectral_radius(A_K);
  if (rho >= 1.0) { throw UnstableError("solve_discrete_lyapunov: spectral radius " + std::to_string(rho) + " >= 1"); }

  // vec(AᵀPA) = (Aᵀ ⊗ Aᵀ) vec(P), column-major vec
  const Eigen::MatrixXd At = A_K.transpose();
  Eigen::MatrixXd kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) { kron.block(i * n, j * n, n, n) = At(i, j) * At; }
  }
  const Eigen::MatrixXd lhs = kron - Eigen::MatrixXd::Identity(n * n, n * n);
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Q_rhs.data(), n * n);
  const auto lu             = lhs.fullPivLu();
  Eigen::VectorXd p         = lu.solve(rhs);
  // one step of iterative refinement
  p += lu.solve(rhs - lhs * p);

  Eigen::MatrixXd P = Eigen::Map<Eigen::MatrixXd>(p.data(), n, n);
  P                 = 0.5 * (P + P.transpose());

  const double res = lyapunov_residual(A_K, P, Q_rhs).lpNorm<Eigen::Infinity>();
  if (res > tol) {
    throw NotConvergedError("solve_discrete_lyapunov: residual " + std::to_string(res) + " exceeds " + std::to_string(tol));
  }
  return P;
}

/**
 * @brief P = Σ_k (A_Kᵀ)ᵏ Q_rhs A_Kᵏ by Smith doubling.
 *
 * Independent of the Kronecker route; used to cross-check it.
 */
inline Eigen::MatrixXd solve_discrete_lyapunov_series(const Eigen::MatrixXd & A_K, const Eigen::MatrixXd & Q_rhs, int max_doublings = 60)
{
  const double rho = spectral_radius(A_K);
  if (rho >= 1.0) { throw UnstableError("solve_discrete_lyapunov_series: spectral radius " + std::to_string(rho) + " >= 1"); }
  Eigen::MatrixXd P  = Q_rhs;
  Eigen::MatrixXd Ak = A_K;
  for (int k = 0; k < max_doublings; ++k) {
    const Eigen::MatrixXd term = Ak.transpose() * P * Ak;
    P += term;
    Ak = Ak * Ak;
    if (term.lpNorm<Eigen::Infinity>() <= 1e-17 * P.lpNorm<Eigen::Infinity>() || Ak.lpNorm<Eigen::Infinity>() == 0.0) { break; }
  }
  return 0.5 * (P + P.transpose());
}

/**
 * @brief Central-difference Jacobians of a discrete map x⁺ = f(x, u).
 *
 * Step along coordinate j is eps·max(1, |x0_j|) (likewise for u).
 */
template<typename Map>
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> numerical_jacobian(
  Map && f, const Eigen::VectorXd & x0, const Eigen::VectorXd & u0, double eps = 1e-6)
{
  const Eigen::VectorXd f0 = f(x0, u0);
  if (!f0.allFinite()) { throw NonFiniteError("numerical_jacobian: map is not finite at the operating point"); }
  const Eigen::Index nx = f0.size();
  Eigen::MatrixXd A(nx, x0.size()), B(nx, u0.size());

  auto probe = [&](const Eigen::VectorXd & x, const Eigen::VectorXd & u) {
    Eigen::VectorXd y = f(x, u);
    if (!y.allFinite()) { throw NonFiniteError("numerical_jacobian: map returned NaN/Inf at a probe point"); }
    return y;
  };

  for (Eigen::Index j = 0; j < x0.size(); ++j) {
    const double h    = eps * std::max(1.0, std::abs(x0(j)));
    Eigen::VectorXd xp = x0, xm = x0;
    xp(j) += h;
    xm(j) -= h;
    A.col(j) = (probe(xp, u0) - probe(xm, u0)) / (2.0 * h);
  }
  for (Eigen::Index j = 0; j < u0.size(); ++j) {
    const double h    = eps * std::max(1.0, std::abs(u0(j)));
    Eigen::VectorXd up = u0, um = u0;
    up(j) += h;
    um(j) -= h;
    B.col(j) = (probe(x0, up) - probe(x0, um)) / (2.0 * h);
  }
  return {A, B};
}

}  // namespace psf
