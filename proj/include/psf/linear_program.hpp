#pragma once

/**
 * @file
 * @brief Dense linear programming.
 *
 * Problems of the form
 *
 *   min  cᵀx   s.t.  A_in x ≤ b_in,  A_eq x = b_eq,   x free
 *
 * are solved through their dual in standard form
 *
 *   max  -b_inᵀy - b_eqᵀz   s.t.  A_inᵀy + A_eqᵀz = -c,  y ≥ 0
 *
 * with a two-phase revised simplex. The dual has one row per primal
 * variable, so the basis stays tiny for the polytope queries (few
 * variables, many halfspaces) that dominate the workload. The primal point
 * is read off the simplex multipliers.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "psf/solve_status.hpp"

namespace psf {

struct LinearProgram
{
  Eigen::VectorXd c;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;

  Eigen::Index num_vars() const { return c.size(); }
};

struct LpOptions
{
  /// max simplex pivots per phase
  int max_iter = 10000;
  /// reduced-cost / primal feasibility tolerance (on unit-norm rows)
  double feas_tol = 1e-10;
  /// smallest admissible pivot element
  double pivot_tol = 1e-11;
};

struct LpSolution
{
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  /// multipliers of A_in x ≤ b_in (nonnegative at optimality)
  Eigen::VectorXd dual_in;
  /// multipliers of A_eq x = b_eq
  Eigen::VectorXd dual_eq;
  /// Infeasible: y ≥ 0, z with A_inᵀy + A_eqᵀz = 0 and b_inᵀy + b_eqᵀz < 0.
  /// Unbounded: a direction d with A_in d ≤ 0, A_eq d = 0, cᵀd < 0.
  Eigen::VectorXd certificate;
  double max_violation = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

namespace detail {

/// Outcome of the standard-form simplex  min cᵀy  s.t.  M y = r, y ≥ 0.
struct StdFormResult
{
  enum class Kind { Optimal, Infeasible, Unbounded, IterationLimit } kind = Kind::IterationLimit;
  Eigen::VectorXd y;
  Eigen::VectorXd pi;   // multipliers, Mᵀπ ≤ c at optimality
  Eigen::VectorXd ray;  // unbounded direction of y when kind == Unbounded
  int iterations = 0;
};

class StdFormSimplex
{
public:
  StdFormSimplex(const Eigen::MatrixXd & M, const Eigen::VectorXd & r, const Eigen::VectorXd & c, const LpOptions & opt)
      : n_(M.rows()), k_(M.cols()), opt_(opt)
  {
    // rows flipped so that r ≥ 0, then artificial identity appended
    sign_ = Eigen::VectorXd::Ones(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (r(i) < 0) { sign_(i) = -1.0; }
    }
    M_.resize(n_, k_ + n_);
    M_.leftCols(k_)  = sign_.asDiagonal() * M;
    M_.rightCols(n_) = Eigen::MatrixXd::Identity(n_, n_);
    r_               = sign_.cwiseProduct(r);
    c_               = c;
    basis_.resize(n_);
    for (Eigen::Index i = 0; i < n_; ++i) { basis_[i] = k_ + i; }
  }

  StdFormResult solve()
  {
    StdFormResult res;

    // phase 1: minimize the sum of artificials
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(k_ + n_);
    c1.tail(n_).setOnes();
    const auto p1 = iterate(c1, true, res.iterations);
    if (p1 == Step::IterationLimit) {
      res.kind = StdFormResult::Kind::IterationLimit;
      return res;
    }
    factorize();
    const Eigen::VectorXd xb1 = lu_.solve(r_);
    double infeas = 0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (basis_[i] >= k_) { infeas += std::max(0.0, xb1(i)); }
    }
    if (infeas > 1e-9 * (1.0 + r_.lpNorm<Eigen::Infinity>())) {
      res.kind = StdFormResult::Kind::Infeasible;
      return res;
    }
    drive_out_artificials();

    // phase 2
    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(k_ + n_);
    c2.head(k_)        = c_;
    const auto p2      = iterate(c2, false, res.iterations);
    if (p2 == Step::IterationLimit) {
      res.kind = StdFormResult::Kind::IterationLimit;
      return res;
    }
    factorize();
    const Eigen::VectorXd xb = lu_.solve(r_);
    if (p2 == Step::Unbounded) {
      res.kind = StdFormResult::Kind::Unbounded;
      res.ray  = Eigen::VectorXd::Zero(k_);
      res.ray(entering_) = 1.0;
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (basis_[i] < k_) { res.ray(basis_[i]) = -direction_(i); }
      }
      return res;
    }
    res.kind = StdFormResult::Kind::Optimal;
    res.y    = Eigen::VectorXd::Zero(k_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (basis_[i] < k_) { res.y(basis_[i]) = std::max(0.0, xb(i)); }
    }
    Eigen::VectorXd cb(n_);
    for (Eigen::Index i = 0; i < n_; ++i) { cb(i) = c2(basis_[i]); }
    res.pi = sign_.cwiseProduct(solve_transposed(cb));
    return res;
  }

private:
  enum class Step { Optimal, Unbounded, IterationLimit };

  void factorize()
  {
    Eigen::MatrixXd B(n_, n_);
    for (Eigen::Index i = 0; i < n_; ++i) { B.col(i) = M_.col(basis_[i]); }
    lu_.compute(B);
  }

  bool is_artificial(Eigen::Index j) const { return j >= k_; }

  Step iterate(const Eigen::VectorXd & cost, bool phase1, int & iters)
  {
    std::vector<char> in_basis(k_ + n_, 0);
    for (auto j : basis_) { in_basis[j] = 1; }

    double last_obj = std::numeric_limits<double>::infinity();
    int stall       = 0;

    for (;;) {
      if (iters >= opt_.max_iter) { return Step::IterationLimit; }
      factorize();
      const Eigen::VectorXd xb = lu_.solve(r_);
      Eigen::VectorXd cb(n_);
      for (Eigen::Index i = 0; i < n_; ++i) { cb(i) = cost(basis_[i]); }
      const Eigen::VectorXd pi = solve_transposed(cb);

      const double obj = cb.dot(xb);
      stall            = (obj < last_obj - 1e-12 * (1.0 + std::abs(obj))) ? 0 : stall + 1;
      last_obj         = std::min(last_obj, obj);
      const bool bland = stall > 50;

      // pricing
      Eigen::Index q = -1;
      double best    = 0.0;
      const Eigen::Index ncols = phase1 ? k_ + n_ : k_;
      for (Eigen::Index j = 0; j < ncols; ++j) {
        if (in_basis[j]) { continue; }
        const double dj = cost(j) - pi.dot(M_.col(j));
        if (dj < -opt_.feas_tol) {
          if (bland) {
            q = j;
            break;
          }
          if (dj < best) {
            best = dj;
            q    = j;
          }
        }
      }
      if (q < 0) { return Step::Optimal; }

      direction_ = lu_.solve(M_.col(q));
      entering_  = q;

      // ratio test; basic artificials in phase 2 block at zero step
      Eigen::Index leave = -1;
      double ratio       = std::numeric_limits<double>::infinity();
      double piv         = 0.0;
      const double scale = std::max(1.0, direction_.lpNorm<Eigen::Infinity>());
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double ui = direction_(i);
        if (!phase1 && is_artificial(basis_[i]) && std::abs(ui) > opt_.pivot_tol * scale) {
          if (ratio > 0 || std::abs(ui) > piv) {
            ratio = 0;
            leave = i;
            piv   = std::abs(ui);
          }
          continue;
        }
        if (ui > opt_.pivot_tol * scale) {
          const double t = std::max(0.0, xb(i)) / ui;
          const bool better =
            leave < 0 || t < ratio - 1e-14 ||
            (t <= ratio + 1e-14 && (bland ? basis_[i] < basis_[leave] : ui > piv));
          if (better) {
            ratio = t;
            leave = i;
            piv   = ui;
          }
        }
      }
      if (leave < 0) { return Step::Unbounded; }

      in_basis[basis_[leave]] = 0;
      in_basis[q]             = 1;
      basis_[leave]           = q;
      ++iters;
    }
  }

  void drive_out_artificials()
  {
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (!is_artificial(basis_[i])) { continue; }
      factorize();
      std::vector<char> in_basis(k_ + n_, 0);
      for (auto j : basis_) { in_basis[j] = 1; }
      Eigen::Index best_j = -1;
      double best_piv     = 1e-9;
      // row i of B⁻¹ M
      Eigen::VectorXd ei = Eigen::VectorXd::Zero(n_);
      ei(i)              = 1.0;
      const Eigen::VectorXd row = solve_transposed(ei);
      for (Eigen::Index j = 0; j < k_; ++j) {
        if (in_basis[j]) { continue; }
        const double v = std::abs(row.dot(M_.col(j))) / std::max(1.0, M_.col(j).lpNorm<Eigen::Infinity>());
        if (v > best_piv) {
          best_piv = v;
          best_j   = j;
        }
      }
      if (best_j >= 0) { basis_[i] = best_j; }
    }
  }

  Eigen::Index n_, k_;
  LpOptions opt_;
  Eigen::MatrixXd M_;
  Eigen::VectorXd r_, c_, sign_;
  std::vector<Eigen::Index> basis_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;

  Eigen::VectorXd solve_transposed(const Eigen::VectorXd & rhs) const
  {
    Eigen::VectorXd out(rhs.size());
    lu_.template _solve_impl_transposed<false>(rhs, out);
    return out;
  }
  Eigen::VectorXd direction_;
  Eigen::Index entering_ = -1;
};

inline double lp_max_violation(const LinearProgram & lp, const Eigen::VectorXd & x)
{
  double v = 0.0;
  if (lp.A_in.rows() > 0) { v = std::max(v, (lp.A_in * x - lp.b_in).maxCoeff()); }
  if (lp.A_eq.rows() > 0) { v = std::max(v, (lp.A_eq * x - lp.b_eq).lpNorm<Eigen::Infinity>()); }
  return v;
}

}  // namespace detail

namespace detail {

/// Simplex on the dual of  min cᵀx s.t. Ain x ≤ bin, Aeq x = beq  (rows already unit norm).
inline StdFormResult solve_dual_form(
  const Eigen::MatrixXd & Ain,
  const Eigen::VectorXd & bin,
  const Eigen::MatrixXd & Aeq,
  const Eigen::VectorXd & beq,
  const Eigen::VectorXd & c,
  const LpOptions & opt)
{
  const Eigen::Index n = c.size(), mi = Ain.rows(), me = Aeq.rows();
  Eigen::MatrixXd M(n, mi + 2 * me);
  Eigen::VectorXd cost(mi + 2 * me);
  if (mi > 0) {
    M.leftCols(mi)  = Ain.transpose();
    cost.head(mi)   = bin;
  }
  if (me > 0) {
    M.middleCols(mi, me) = Aeq.transpose();
    M.rightCols(me)      = -Aeq.transpose();
    cost.segment(mi, me) = beq;
    cost.tail(me)        = -beq;
  }
  return StdFormSimplex(M, -c, cost, opt).solve();
}

}  // namespace detail

/**
 * @brief Minimize cᵀx over {A_in x ≤ b_in, A_eq x = b_eq}.
 *
 * Status Infeasible carries a Farkas certificate (y, z), Unbounded a
 * recession direction d. Dual multipliers are returned for Optimal solutions.
 */
inline LpSolution solve_lp(const LinearProgram & lp, const LpOptions & opt = {})
{
  using Kind = detail::StdFormResult::Kind;

  const Eigen::Index n  = lp.num_vars();
  const Eigen::Index mi = lp.A_in.rows();
  const Eigen::Index me = lp.A_eq.rows();

  LpSolution sol;
  sol.dual_in = Eigen::VectorXd::Zero(mi);
  sol.dual_eq = Eigen::VectorXd::Zero(me);

  // zero rows cannot enter the simplex; they only decide feasibility
  for (Eigen::Index i = 0; i < mi; ++i) {
    if (lp.A_in.row(i).isZero(0) && lp.b_in(i) < -opt.feas_tol) {
      sol.status         = SolveStatus::Infeasible;
      sol.certificate    = Eigen::VectorXd::Zero(mi + me);
      sol.certificate(i) = 1.0;
      return sol;
    }
  }
  for (Eigen::Index i = 0; i < me; ++i) {
    if (lp.A_eq.row(i).isZero(0) && std::abs(lp.b_eq(i)) > opt.feas_tol) {
      sol.status              = SolveStatus::Infeasible;
      sol.certificate         = Eigen::VectorXd::Zero(mi + me);
      sol.certificate(mi + i) = lp.b_eq(i) > 0 ? 1.0 : -1.0;
      return sol;
    }
  }
  if (n == 0) {
    sol.x               = Eigen::VectorXd::Zero(0);
    sol.status          = SolveStatus::Optimal;
    sol.objective_value = 0.0;
    sol.max_violation   = 0.0;
    return sol;
  }

  // unit-norm rows keep the tolerances meaningful
  Eigen::VectorXd sin(mi), seq(me);
  for (Eigen::Index i = 0; i < mi; ++i) {
    const double nrm = lp.A_in.row(i).norm();
    sin(i)           = nrm > 0 ? 1.0 / nrm : 1.0;
  }
  for (Eigen::Index i = 0; i < me; ++i) {
    const double nrm = lp.A_eq.row(i).norm();
    seq(i)           = nrm > 0 ? 1.0 / nrm : 1.0;
  }
  const Eigen::MatrixXd Ain = sin.asDiagonal() * lp.A_in;
  const Eigen::VectorXd bin = sin.cwiseProduct(lp.b_in);
  const Eigen::MatrixXd Aeq = seq.asDiagonal() * lp.A_eq;
  const Eigen::VectorXd beq = seq.cwiseProduct(lp.b_eq);

  const double cnorm  = lp.c.lpNorm<Eigen::Infinity>();
  const double cscale = cnorm > 0 ? 1.0 / cnorm : 1.0;

  auto unscale = [&](const Eigen::VectorXd & y, double s) {
    Eigen::VectorXd out(mi + me);
    out << sin.cwiseProduct(y.head(mi)) * s, seq.cwiseProduct(y.segment(mi, me) - y.tail(me)) * s;
    return out;
  };

  const auto res = detail::solve_dual_form(Ain, bin, Aeq, beq, cscale * lp.c, opt);
  sol.iterations = res.iterations;

  switch (res.kind) {
  case Kind::IterationLimit:
    sol.status = SolveStatus::NumericalFailure;
    return sol;
  case Kind::Optimal: {
    sol.x               = res.pi;
    sol.objective_value = lp.c.dot(sol.x);
    const Eigen::VectorXd y = unscale(res.y, 1.0 / cscale);
    sol.dual_in         = y.head(mi);
    sol.dual_eq         = y.tail(me);
    sol.max_violation   = detail::lp_max_violation(lp, sol.x);
    sol.status          = SolveStatus::Optimal;
    return sol;
  }
  case Kind::Unbounded:
    // dual unbounded: the ray is a Farkas certificate of primal infeasibility
    sol.status      = SolveStatus::Infeasible;
    sol.certificate = unscale(res.ray, 1.0);
    return sol;
  case Kind::Infeasible:
    break;
  }

  // dual infeasible: primal unbounded or infeasible, decide with c = 0
  const auto fres = detail::solve_dual_form(Ain, bin, Aeq, beq, Eigen::VectorXd::Zero(n), opt);
  sol.iterations += fres.iterations;
  if (fres.kind == Kind::Unbounded) {
    sol.status      = SolveStatus::Infeasible;
    sol.certificate = unscale(fres.ray, 1.0);
    return sol;
  }
  if (fres.kind != Kind::Optimal) {
    sol.status = SolveStatus::NumericalFailure;
    return sol;
  }
  sol.x             = fres.pi;
  sol.max_violation = detail::lp_max_violation(lp, sol.x);
  sol.status        = SolveStatus::Unbounded;

  // recession direction: min cᵀd s.t. A_in d ≤ 0, A_eq d = 0, -cᵀd ≤ 1
  Eigen::MatrixXd Ar(mi + 1, n);
  Ar << Ain, -cscale * lp.c.transpose();
  Eigen::VectorXd br = Eigen::VectorXd::Zero(mi + 1);
  br(mi)             = 1.0;
  const auto rres    = detail::solve_dual_form(Ar, br, Aeq, Eigen::VectorXd::Zero(me), cscale * lp.c, opt);
  if (rres.kind == Kind::Optimal) { sol.certificate = rres.pi; }
  return sol;
}

}  // namespace psf
