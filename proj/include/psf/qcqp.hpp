#pragma once

/**
 * @file
 * @brief Convex QCQP solver.
 *
 *   min  ½xᵀHx + gᵀx + c
 *   s.t. A_eq x = b_eq,  A_in x ≤ b_in,  ½xᵀH_q x + g_qᵀx + c_q ≤ 0
 *
 * Primal-dual interior point with Mehrotra predictor-corrector steps. When a
 * feasible initial point is supplied, the returned point is feasible and never
 * has a larger objective than that point.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "psf/errors.hpp"
#include "psf/solve_status.hpp"

namespace psf {

/// ½xᵀHx + gᵀx + c
struct QuadraticFunction
{
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double c = 0.0;

  double operator()(const Eigen::VectorXd & x) const { return 0.5 * x.dot(H * x) + g.dot(x) + c; }
  Eigen::VectorXd gradient(const Eigen::VectorXd & x) const { return H * x + g; }
};

struct ConvexProgram
{
  QuadraticFunction objective;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
  std::vector<QuadraticFunction> qconstraints;

  Eigen::Index num_vars() const { return objective.g.size(); }

  /// Checks dimensions and positive semidefiniteness; throws InvalidProgramError.
  void validate() const
  {
    const Eigen::Index n = num_vars();
    auto check_psd = [n](const QuadraticFunction & q, const std::string & what) {
      if (q.H.rows() != n || q.H.cols() != n || q.g.size() != n) {
        throw InvalidProgramError(what + ": dimension mismatch");
      }
      const double scale = std::max(1.0, q.H.lpNorm<Eigen::Infinity>());
      if ((q.H - q.H.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * scale) {
        throw InvalidProgramError(what + ": Hessian is not symmetric");
      }
      if (n > 0) {
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q.H, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
        if (lmin < -1e-9 * scale) { throw InvalidProgramError(what + ": Hessian is not positive semidefinite"); }
      }
    };
    check_psd(objective, "objective");
    for (std::size_t i = 0; i < qconstraints.size(); ++i) { check_psd(qconstraints[i], "quadratic constraint " + std::to_string(i)); }
    if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n)) {
      throw InvalidProgramError("inequality constraints: dimension mismatch");
    }
    if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n)) {
      throw InvalidProgramError("equality constraints: dimension mismatch");
    }
  }

  double objective_value(const Eigen::VectorXd & x) const { return objective(x); }

  /// Largest constraint violation, evaluated directly on the problem data.
  double max_violation(const Eigen::VectorXd & x) const
  {
    double v = 0.0;
    if (A_in.rows() > 0) { v = std::max(v, (A_in * x - b_in).maxCoeff()); }
    if (A_eq.rows() > 0) { v = std::max(v, (A_eq * x - b_eq).lpNorm<Eigen::Infinity>()); }
    for (const auto & q : qconstraints) { v = std::max(v, q(x)); }
    return v;
  }
};

struct QcqpOptions
{
  double feas_tol = 1e-7;
  /// relative stationarity / complementarity for status Optimal
  double opt_tol = 1e-6;
  int max_iter = 500;
  /// internal stopping target, much tighter than opt_tol
  double target_tol = 1e-11;
};

struct QcqpSolution
{
  Eigen::VectorXd x;
  SolveStatus status = SolveStatus::NumericalFailure;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  double max_violation = std::numeric_limits<double>::infinity();
  int iterations = 0;
  /// the interior-point result was not usable and the returned point is
  /// (a convex combination toward) the initial point
  bool fallback = false;
};

/**
 * @brief Interior-point QCQP solver with reusable workspace.
 *
 * Not thread-safe; use one instance per concurrent task.
 */
class QcqpSolver
{
public:
  explicit QcqpSolver(QcqpOptions opt = {}) : opt_(opt) {}

  QcqpSolution solve(const ConvexProgram & prog, const std::optional<Eigen::VectorXd> & init = std::nullopt)
  {
    prog.validate();
    const Eigen::Index n = prog.num_vars();

    std::optional<Eigen::VectorXd> start;
    bool init_feasible = false;
    if (init) {
      if (init->size() != n) { throw InvalidProgramError("solve_qcqp: init has wrong dimension"); }
      init_feasible = prog.max_violation(*init) <= opt_.feas_tol;
      start         = *init;
    }

    QcqpSolution out;
    if (!init_feasible) {
      // phase I: min t s.t. f_i(x) ≤ t, t ≥ -1
      auto feasible = find_feasible_point(prog, start);
      out.iterations += feasible.iterations;
      if (!feasible.x) {
        if (init) {
          // an infeasible init that we could not improve upon
          out.x               = *init;
          out.status          = SolveStatus::NumericalFailure;
          out.objective_value = prog.objective_value(*init);
          out.max_violation   = prog.max_violation(*init);
          return out;
        }
        out.status = SolveStatus::Infeasible;
        return out;
      }
      start         = *feasible.x;
      init_feasible = prog.max_violation(*start) <= opt_.feas_tol;
    }

    const Run run  = interior_point(prog, *start);
    out.iterations += run.iterations;
    const Eigen::VectorXd & anchor = *start;
    const double f_anchor          = prog.objective_value(anchor);

    const double viol = prog.max_violation(run.x);
    const double fobj = prog.objective_value(run.x);
    if (run.x.allFinite() && viol <= opt_.feas_tol && (!init_feasible || fobj <= f_anchor + 1e-9 * (1.0 + std::abs(f_anchor)))) {
      out.x               = run.x;
      out.status          = run.optimal ? SolveStatus::Optimal : SolveStatus::Feasible;
      out.objective_value = fobj;
      out.max_violation   = viol;
      if (init_feasible && fobj > f_anchor) {
        // within noise of the anchor; keep the contract exact
        out.x               = anchor;
        out.objective_value = f_anchor;
        out.max_violation   = prog.max_violation(anchor);
      }
      return out;
    }

    if (!init_feasible) {
      out.x               = run.x;
      out.status          = SolveStatus::NumericalFailure;
      out.objective_value = fobj;
      out.max_violation   = viol;
      return out;
    }

    // largest step toward the interior-point result that stays feasible and
    // no worse than the anchor; both conditions hold on an interval [0, t*]
    out.fallback = true;
    double lo = 0.0, hi = 1.0;
    if (run.x.allFinite()) {
      for (int k = 0; k < 60; ++k) {
        const double t          = 0.5 * (lo + hi);
        const Eigen::VectorXd x = anchor + t * (run.x - anchor);
        if (prog.max_violation(x) <= opt_.feas_tol && prog.objective_value(x) <= f_anchor) {
          lo = t;
        } else {
          hi = t;
        }
      }
    }
    out.x               = anchor + lo * (run.x.allFinite() ? Eigen::VectorXd(run.x - anchor) : Eigen::VectorXd::Zero(n));
    out.status          = SolveStatus::Feasible;
    out.objective_value = prog.objective_value(out.x);
    out.max_violation   = prog.max_violation(out.x);
    return out;
  }

private:
  struct Run
  {
    Eigen::VectorXd x;
    bool optimal = false;
    int iterations = 0;
  };

  struct PhaseOne
  {
    std::optional<Eigen::VectorXd> x;
    int iterations = 0;
  };

  PhaseOne find_feasible_point(const ConvexProgram & prog, const std::optional<Eigen::VectorXd> & guess)
  {
    const Eigen::Index n = prog.num_vars();
    PhaseOne res;

    Eigen::VectorXd x0 = guess ? *guess : Eigen::VectorXd::Zero(n);
    if (prog.A_eq.rows() > 0) {
      // closest point satisfying the equalities
      const Eigen::VectorXd r = prog.A_eq * x0 - prog.b_eq;
      x0 -= prog.A_eq.completeOrthogonalDecomposition().solve(r);
    }
    if (prog.max_violation(x0) <= opt_.feas_tol) {
      res.x = x0;
      return res;
    }

    ConvexProgram aug;
    aug.objective.H = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.objective.g = Eigen::VectorXd::Unit(n + 1, n);
    const Eigen::Index mi = prog.A_in.rows();
    aug.A_in              = Eigen::MatrixXd::Zero(mi + 1, n + 1);
    aug.b_in              = Eigen::VectorXd::Zero(mi + 1);
    if (mi > 0) {
      aug.A_in.topLeftCorner(mi, n) = prog.A_in;
      aug.A_in.col(n).head(mi)      = -Eigen::VectorXd::Ones(mi);
      aug.b_in.head(mi)             = prog.b_in;
    }
    aug.A_in(mi, n) = -1.0;
    aug.b_in(mi)    = 1.0;
    if (prog.A_eq.rows() > 0) {
      aug.A_eq = Eigen::MatrixXd::Zero(prog.A_eq.rows(), n + 1);
      aug.A_eq.leftCols(n) = prog.A_eq;
      aug.b_eq             = prog.b_eq;
    }
    for (const auto & q : prog.qconstraints) {
      QuadraticFunction qa;
      qa.H                      = Eigen::MatrixXd::Zero(n + 1, n + 1);
      qa.H.topLeftCorner(n, n)  = q.H;
      qa.g                      = Eigen::VectorXd::Zero(n + 1);
      qa.g.head(n)              = q.g;
      qa.g(n)                   = -1.0;
      qa.c                      = q.c;
      aug.qconstraints.push_back(std::move(qa));
    }
    Eigen::VectorXd z0(n + 1);
    z0.head(n) = x0;
    z0(n)      = std::max(0.0, prog.max_violation(x0)) + 1.0;

    const Run run  = interior_point(aug, z0);
    res.iterations = run.iterations;
    const Eigen::VectorXd x = run.x.head(n);
    if (x.allFinite() && prog.max_violation(x) <= opt_.feas_tol) { res.x = x; }
    return res;
  }

  /**
   * Infeasible-start primal-dual iteration on
   *   f_i(x) + s_i = 0, s ≥ 0, λ ≥ 0, A_eq x = b_eq.
   * Linear rows are scaled to unit norm, quadratic rows and the objective to
   * unit magnitude; the returned x is in original units.
   */
  Run interior_point(const ConvexProgram & prog, const Eigen::VectorXd & x_start)
  {
    const Eigen::Index n  = prog.num_vars();
    const Eigen::Index mi = prog.A_in.rows();
    const Eigen::Index mq = static_cast<Eigen::Index>(prog.qconstraints.size());
    const Eigen::Index me = prog.A_eq.rows();
    const Eigen::Index m  = mi + mq;

    // scaling
    Eigen::MatrixXd Ain = prog.A_in;
    Eigen::VectorXd bin = prog.b_in;
    for (Eigen::Index i = 0; i < mi; ++i) {
      const double nrm = Ain.row(i).norm();
      if (nrm > 0) {
        Ain.row(i) /= nrm;
        bin(i) /= nrm;
      }
    }
    std::vector<QuadraticFunction> qc = prog.qconstraints;
    for (auto & q : qc) {
      const double s = std::max({1.0, q.H.lpNorm<Eigen::Infinity>(), q.g.lpNorm<Eigen::Infinity>()});
      q.H /= s;
      q.g /= s;
      q.c /= s;
    }
    const double fscale = std::max({1.0, prog.objective.H.lpNorm<Eigen::Infinity>(), prog.objective.g.lpNorm<Eigen::Infinity>()});
    const Eigen::MatrixXd H = prog.objective.H / fscale;
    const Eigen::VectorXd g = prog.objective.g / fscale;
    const Eigen::MatrixXd & Aeq = prog.A_eq;
    const Eigen::VectorXd & beq = prog.b_eq;

    auto constraint_values = [&](const Eigen::VectorXd & x) {
      Eigen::VectorXd f(m);
      if (mi > 0) { f.head(mi) = Ain * x - bin; }
      for (Eigen::Index q = 0; q < mq; ++q) { f(mi + q) = qc[q](x); }
      return f;
    };
    auto constraint_jacobian = [&](const Eigen::VectorXd & x) {
      Eigen::MatrixXd J(m, n);
      if (mi > 0) { J.topRows(mi) = Ain; }
      for (Eigen::Index q = 0; q < mq; ++q) { J.row(mi + q) = qc[q].gradient(x).transpose(); }
      return J;
    };

    Run run;
    Eigen::VectorXd x  = x_start;
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(me);
    Eigen::VectorXd f  = constraint_values(x);
    Eigen::VectorXd s  = (-f).cwiseMax(1e-2);
    Eigen::VectorXd lam(m);
    for (Eigen::Index i = 0; i < m; ++i) { lam(i) = 1e-1 / s(i); }
    lam = lam.cwiseMax(1e-2).cwiseMin(1e2);

    auto residual_norms = [&](const Eigen::VectorXd & rd, const Eigen::VectorXd & rp, const Eigen::VectorXd & re,
                              double mu, const Eigen::VectorXd & xx) {
      const double dscale = 1.0 + (H * xx).lpNorm<Eigen::Infinity>() + g.lpNorm<Eigen::Infinity>();
      const double pres   = std::max(m > 0 ? rp.lpNorm<Eigen::Infinity>() : 0.0, me > 0 ? re.lpNorm<Eigen::Infinity>() : 0.0);
      const double obj    = 0.5 * xx.dot(H * xx) + g.dot(xx);
      return std::array<double, 3>{rd.lpNorm<Eigen::Infinity>() / dscale, pres, mu / (1.0 + std::abs(obj))};
    };

    Eigen::VectorXd best_x = x;
    double best_merit      = std::numeric_limits<double>::infinity();
    bool best_optimal      = false;
    int since_improvement  = 0;

    for (int it = 0; it < opt_.max_iter; ++it) {
      run.iterations = it + 1;
      f              = constraint_values(x);
      const Eigen::MatrixXd J = constraint_jacobian(x);

      Eigen::VectorXd rd = H * x + g;
      if (m > 0) { rd += J.transpose() * lam; }
      if (me > 0) { rd += Aeq.transpose() * nu; }
      const Eigen::VectorXd rp = f + s;
      const Eigen::VectorXd re = me > 0 ? Eigen::VectorXd(Aeq * x - beq) : Eigen::VectorXd(0);
      const double mu          = m > 0 ? s.dot(lam) / static_cast<double>(m) : 0.0;

      const auto res     = residual_norms(rd, rp, re, mu, x);
      const double merit = std::max({res[0], res[1], res[2]});
      const bool optimal = res[0] <= opt_.opt_tol && res[1] <= 1e-2 * opt_.feas_tol && res[2] * m <= opt_.opt_tol;
      if (merit < best_merit) {
        best_merit        = merit;
        best_x            = x;
        best_optimal      = optimal;
        since_improvement = 0;
      } else if (++since_improvement > 30) {
        break;
      }
      if (merit <= opt_.target_tol) { break; }

      // Hessian of the Lagrangian
      Eigen::MatrixXd HL = H;
      for (Eigen::Index q = 0; q < mq; ++q) { HL += lam(mi + q) * qc[q].H; }
      const Eigen::VectorXd d = lam.cwiseQuotient(s);
      Eigen::MatrixXd Hk      = HL;
      if (m > 0) { Hk.noalias() += J.transpose() * d.asDiagonal() * J; }
      Hk.diagonal().array() += 1e-13 * (1.0 + Hk.diagonal().cwiseAbs().maxCoeff());

      Eigen::MatrixXd K(n + me, n + me);
      K.topLeftCorner(n, n) = Hk;
      if (me > 0) {
        K.topRightCorner(n, me)    = Aeq.transpose();
        K.bottomLeftCorner(me, n)  = Aeq;
        K.bottomRightCorner(me, me) = -1e-13 * Eigen::MatrixXd::Identity(me, me);
      }
      const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);

      auto newton = [&](const Eigen::VectorXd & rc, Eigen::VectorXd & dx, Eigen::VectorXd & ds, Eigen::VectorXd & dl,
                        Eigen::VectorXd & dnu) {
        // rc = target for Λ ds + S dλ = -rc
        Eigen::VectorXd rhs(n + me);
        Eigen::VectorXd top = -rd;
        if (m > 0) { top -= J.transpose() * ((-rc + lam.cwiseProduct(rp)).cwiseQuotient(s)); }
        rhs.head(n) = top;
        if (me > 0) { rhs.tail(me) = -re; }
        const Eigen::VectorXd sol = lu.solve(rhs);
        dx                        = sol.head(n);
        dnu                       = sol.tail(me);
        ds                        = -rp - J * dx;
        dl                        = (-rc + lam.cwiseProduct(rp)).cwiseQuotient(s) + d.cwiseProduct(J * dx);
      };

      auto max_step = [&](const Eigen::VectorXd & v, const Eigen::VectorXd & dv) {
        double a = 1.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
          if (dv(i) < 0) { a = std::min(a, -v(i) / dv(i)); }
        }
        return a;
      };

      Eigen::VectorXd dx, ds, dl, dnu;
      // predictor
      newton(s.cwiseProduct(lam), dx, ds, dl, dnu);
      double sigma = 0.0;
      if (m > 0) {
        const double a_aff = std::min(max_step(s, ds), max_step(lam, dl));
        const double mu_aff =
          (s + a_aff * ds).dot(lam + a_aff * dl) / static_cast<double>(m);
        sigma = std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);
        // corrector
        const Eigen::VectorXd rc = s.cwiseProduct(lam) + ds.cwiseProduct(dl) - Eigen::VectorXd::Constant(m, sigma * mu);
        newton(rc, dx, ds, dl, dnu);
      }
      if (!dx.allFinite()) { break; }

      const double amax  = m > 0 ? std::min(max_step(s, ds), max_step(lam, dl)) : 1.0;
      const double alpha = std::min(1.0, 0.995 * amax);
      x += alpha * dx;
      nu += alpha * dnu;
      if (m > 0) {
        s += alpha * ds;
        lam += alpha * dl;
        s   = s.cwiseMax(1e-300);
        lam = lam.cwiseMax(1e-300);
      }
      // quadratic constraints move nonlinearly; keep slacks consistent where possible
      if (mq > 0) {
        const Eigen::VectorXd fn = constraint_values(x);
        for (Eigen::Index q = mi; q < m; ++q) {
          if (-fn(q) > 0) { s(q) = std::max(-fn(q), s(q) * 1e-3); }
        }
      }
    }

    run.x       = best_x;
    run.optimal = best_optimal;
    return run;
  }

  QcqpOptions opt_;
};

/// One-shot convenience wrapper around QcqpSolver.
inline QcqpSolution solve_qcqp(const ConvexProgram & prog, const std::optional<Eigen::VectorXd> & init = std::nullopt,
                               const QcqpOptions & opt = {})
{
  return QcqpSolver(opt).solve(prog, init);
}

}  // namespace psf
