#pragma once

/**
 * @file
 * @brief Tube-based stability filter for x⁺ = Ax + Bu + w.
 *
 * Input sequences are m×N matrices whose column i is u_i; the condensed
 * decision vector is their column-major stacking.
 */

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "psf/control_math.hpp"
#include "psf/errors.hpp"
#include "psf/polytope.hpp"
#include "psf/qcqp.hpp"

namespace psf {

using InputSequence = Eigen::MatrixXd;

/// Tolerance for re-checking warmstart feasibility by rollout.
inline constexpr double kWarmstartTol = 1e-7;

struct DesignCertificates
{
  /// min_i (b_i − h_{A_K Xf ⊕ W}(a_i)) over the rows of Xf
  double rpi_slack = -std::numeric_limits<double>::infinity();
  /// min slack of K·Xf ⊆ U
  double terminal_input_slack = -std::numeric_limits<double>::infinity();
  /// min slack of Xf ⊆ X
  double terminal_state_slack = -std::numeric_limits<double>::infinity();
  /// ‖A_KᵀPA_K − P + Q + KᵀRK‖_∞
  double lyapunov_residual = std::numeric_limits<double>::infinity();
  /// ‖A_KᵀPA_K − P + Q‖_∞, the residual with the state weight alone
  double lyapunov_residual_q_only = std::numeric_limits<double>::infinity();
  double riccati_residual = std::numeric_limits<double>::infinity();
  double closed_loop_spectral_radius = std::numeric_limits<double>::infinity();
  /// min slack over omega_x[i+1] ⊆ omega_x[i], omega_u[i+1] ⊆ omega_u[i] and Zf ⊆ omega_x[N−1]
  double nesting_slack = -std::numeric_limits<double>::infinity();
  int rpi_iterations = 0;
  bool sets_nonempty = false;

  static constexpr double kSlackTol    = 1e-8;
  static constexpr double kResidualTol = 1e-8;

  /// Names of failing certificates; empty when the design is valid.
  std::vector<std::string> failures() const
  {
    std::vector<std::string> f;
    if (!sets_nonempty) { f.emplace_back("set nonemptiness"); }
    if (!(rpi_slack >= -kSlackTol)) { f.emplace_back("terminal set robust invariance"); }
    if (!(terminal_input_slack >= -kSlackTol)) { f.emplace_back("terminal input admissibility"); }
    if (!(terminal_state_slack >= -kSlackTol)) { f.emplace_back("terminal state admissibility"); }
    if (!(lyapunov_residual <= kResidualTol)) { f.emplace_back("terminal cost Lyapunov equation"); }
    if (!(closed_loop_spectral_radius < 1.0)) { f.emplace_back("closed-loop stability"); }
    if (!(nesting_slack >= -kSlackTol)) { f.emplace_back("tightened set nesting"); }
    return f;
  }
  bool ok() const { return failures().empty(); }
};

struct FilterDesign
{
  LinearSystem sys;
  /// disturbance feedback, u = Kx
  Eigen::MatrixXd K;
  CostMatrices costs;
  int N = 0;
  double rho = 0.0;
  HalfspacePolytope W;
  HalfspacePolytope X;
  HalfspacePolytope U;
  /// X ⊖ E_i and U ⊖ K·E_i for i = 0..N−1
  std::vector<HalfspacePolytope> omega_x;
  std::vector<HalfspacePolytope> omega_u;
  HalfspacePolytope Xf;
  /// Xf ⊖ E_N
  HalfspacePolytope Zf;
  DesignCertificates certificates;

  Eigen::Index nx() const { return sys.nx(); }
  Eigen::Index nu() const { return sys.nu(); }
  Eigen::MatrixXd A_K() const { return sys.A + sys.B * K; }

  /// Same design with a different ρ; the sets do not depend on it.
  FilterDesign with_rho(double new_rho) const
  {
    if (!(new_rho >= 0.0) || !std::isfinite(new_rho)) { throw std::invalid_argument("rho must be finite and nonnegative"); }
    FilterDesign d = *this;
    d.rho          = new_rho;
    return d;
  }
};

struct DesignOptions
{
  MaxRpiOptions rpi;
  double dare_tol = 1e-10;
};

/// E_i = ⊕_{j<i} A_K^j W
inline ImplicitSumSet tube(const Eigen::MatrixXd & A_K, const HalfspacePolytope & W, int i)
{
  ImplicitSumSet E(A_K.rows());
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(A_K.rows(), A_K.rows());
  for (int j = 0; j < i; ++j) {
    E.add(M, W);
    M = A_K * M;
  }
  return E;
}

/// K·E_i
inline ImplicitSumSet input_tube(const Eigen::MatrixXd & A_K, const Eigen::MatrixXd & K, const HalfspacePolytope & W, int i)
{
  ImplicitSumSet E(K.rows());
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(A_K.rows(), A_K.rows());
  for (int j = 0; j < i; ++j) {
    E.add(K * M, W);
    M = A_K * M;
  }
  return E;
}

/// Recomputes every certificate of an assembled design.
inline DesignCertificates verify_design(const FilterDesign & d, int rpi_iterations = 0)
{
  DesignCertificates c;
  c.rpi_iterations = rpi_iterations;
  const Eigen::MatrixXd A_K = d.A_K();
  const Eigen::MatrixXd Q_rhs = d.costs.Q + d.K.transpose() * d.costs.R * d.K;
  c.closed_loop_spectral_radius = spectral_radius(A_K);
  c.lyapunov_residual           = lyapunov_residual(A_K, d.costs.P, Q_rhs).lpNorm<Eigen::Infinity>();
  c.lyapunov_residual_q_only    = lyapunov_residual(A_K, d.costs.P, d.costs.Q).lpNorm<Eigen::Infinity>();
  c.riccati_residual            = riccati_residual(d.sys.A, d.sys.B, d.costs.Q, d.costs.R, d.costs.P).lpNorm<Eigen::Infinity>();

  c.sets_nonempty = !is_empty(d.Xf) && !is_empty(d.Zf);
  for (const auto & s : d.omega_x) { c.sets_nonempty = c.sets_nonempty && !is_empty(s); }
  for (const auto & s : d.omega_u) { c.sets_nonempty = c.sets_nonempty && !is_empty(s); }
  if (!c.sets_nonempty) { return c; }

  c.rpi_slack            = rpi_slack(A_K, d.Xf, d.W);
  c.terminal_input_slack = contains_set(d.U, LinearImage{d.K, d.Xf}).worst_slack;
  c.terminal_state_slack = contains_set(d.X, d.Xf).worst_slack;
  c.nesting_slack        = contains_set(d.omega_x.back(), d.Zf).worst_slack;
  for (std::size_t i = 0; i + 1 < d.omega_x.size(); ++i) {
    c.nesting_slack = std::min(c.nesting_slack, contains_set(d.omega_x[i], d.omega_x[i + 1]).worst_slack);
    c.nesting_slack = std::min(c.nesting_slack, contains_set(d.omega_u[i], d.omega_u[i + 1]).worst_slack);
  }
  return c;
}

/**
 * @brief Offline design: LQR gain, terminal cost, tightened sets and terminal sets.
 *
 * P solves A_KᵀPA_K − P = −(Q + KᵀRK), which coincides with the Riccati
 * solution for the LQR gain. Throws DesignInfeasibleError naming the first
 * empty set or failing certificate.
 */
inline FilterDesign design_filter(
  const LinearSystem & sys, const Eigen::MatrixXd & Q, const Eigen::MatrixXd & R, const HalfspacePolytope & X,
  const HalfspacePolytope & U, const HalfspacePolytope & W, int N, double rho, const DesignOptions & opt = {})
{
  sys.validate();
  if (N < 1) { throw std::invalid_argument("design_filter: horizon N must be at least 1"); }
  if (!(rho >= 0.0) || !std::isfinite(rho)) { throw std::invalid_argument("design_filter: rho must be finite and nonnegative"); }
  const Eigen::Index n = sys.nx(), m = sys.nu();
  if (X.dim() != n || W.dim() != n || U.dim() != m) { throw std::invalid_argument("design_filter: set dimension mismatch"); }
  require_positive_definite(Q, "Q");
  require_positive_definite(R, "R");
  const Eigen::VectorXd zx = Eigen::VectorXd::Zero(n), zu = Eigen::VectorXd::Zero(m);
  if (!contains_point(X, zx) || !contains_point(U, zu) || !contains_point(W, zx)) {
    throw DesignInfeasibleError("design_filter: X, U and W must contain the origin");
  }

  FilterDesign d;
  d.sys = sys;
  d.N   = N;
  d.rho = rho;
  d.W   = W;
  d.X   = X;
  d.U   = U;

  const LqrSolution lqr = solve_dare(sys.A, sys.B, Q, R, opt.dare_tol);
  d.K                   = lqr.K;
  const Eigen::MatrixXd A_K = d.A_K();
  d.costs.Q                 = Q;
  d.costs.R                 = R;
  d.costs.P                 = solve_discrete_lyapunov(A_K, Q + d.K.transpose() * R * d.K);

  d.omega_x.reserve(N);
  d.omega_u.reserve(N);
  for (int i = 0; i < N; ++i) {
    d.omega_x.push_back(i == 0 ? X : tighten(X, tube(A_K, W, i)));
    d.omega_u.push_back(i == 0 ? U : tighten(U, input_tube(A_K, d.K, W, i)));
    if (is_empty(d.omega_x.back())) { throw DesignInfeasibleError("tightened state set omega_x[" + std::to_string(i) + "] is empty"); }
    if (is_empty(d.omega_u.back())) { throw DesignInfeasibleError("tightened input set omega_u[" + std::to_string(i) + "] is empty"); }
  }

  MaxRpiResult rpi;
  try {
    rpi = max_rpi(A_K, X.intersect(U.preimage(d.K)), W, opt.rpi);
  } catch (const EmptyInvariantSetError & e) {
    throw DesignInfeasibleError(std::string("terminal set Xf is empty: ") + e.what());
  } catch (const NotConvergedError & e) {
    throw DesignInfeasibleError(std::string("terminal set Xf did not converge: ") + e.what());
  }
  d.Xf = std::move(rpi.set);
  d.Zf = tighten(d.Xf, tube(A_K, W, N));
  if (is_empty(d.Zf)) { throw DesignInfeasibleError("tightened terminal set Zf is empty"); }
  d.Zf = remove_redundant(d.Zf);

  d.certificates = verify_design(d, rpi.iterations);
  const auto failures = d.certificates.failures();
  if (!failures.empty()) { throw DesignInfeasibleError("design certificate failed: " + failures.front()); }
  return d;
}

/// z_0 = x, z_{i+1} = A z_i + B u_i for i < k; returns n×(k+1) with column i = z_i.
inline Eigen::MatrixXd rollout(const FilterDesign & d, const Eigen::VectorXd & x, const InputSequence & useq, int k)
{
  if (useq.cols() < k) { throw std::invalid_argument("rollout: sequence shorter than k"); }
  Eigen::MatrixXd z(d.nx(), k + 1);
  z.col(0) = x;
  for (int i = 0; i < k; ++i) { z.col(i + 1) = d.sys.A * z.col(i) + d.sys.B * useq.col(i); }
  return z;
}

inline double stage_cost(const FilterDesign & d, const Eigen::VectorXd & x, const Eigen::VectorXd & u)
{
  return 0.5 * x.dot(d.costs.Q * x) + 0.5 * u.dot(d.costs.R * u);
}

inline double terminal_cost(const FilterDesign & d, const Eigen::VectorXd & x) { return 0.5 * x.dot(d.costs.P * x); }

/// V((x, u)) = Σ_{i<N} l(z_i, u_i) + m(z_N) along the nominal rollout.
inline double lyapunov_value(const FilterDesign & d, const Eigen::VectorXd & x, const InputSequence & useq)
{
  if (useq.cols() != d.N) { throw std::invalid_argument("lyapunov_value: sequence length must equal N"); }
  const Eigen::MatrixXd z = rollout(d, x, useq, d.N);
  double v = terminal_cost(d, z.col(d.N));
  for (int i = 0; i < d.N; ++i) { v += stage_cost(d, z.col(i), useq.col(i)); }
  return v;
}

/**
 * @brief Disturbance-corrected shift (v_1 + Kw, v_2 + K A_K w, …, K z_N + K A_K^{N−1} w).
 *
 * `terminal` is z_N = φ(x, v; N) of the predecessor state x.
 */
inline InputSequence xi_c(const FilterDesign & d, const Eigen::VectorXd & terminal, const InputSequence & vseq,
                          const Eigen::VectorXd & w)
{
  const int N = d.N;
  InputSequence out(d.nu(), N);
  const Eigen::MatrixXd A_K = d.A_K();
  Eigen::VectorXd e         = w;
  for (int i = 0; i + 1 < N; ++i) {
    out.col(i) = vseq.col(i + 1) + d.K * e;
    e          = A_K * e;
  }
  out.col(N - 1) = d.K * terminal + d.K * e;
  return out;
}

/// Terminal-controller sequence (K x, K A_K x, …, K A_K^{N−1} x).
inline InputSequence xi_f(const FilterDesign & d, const Eigen::VectorXd & x)
{
  InputSequence out(d.nu(), d.N);
  const Eigen::MatrixXd A_K = d.A_K();
  Eigen::VectorXd z         = x;
  for (int i = 0; i < d.N; ++i) {
    out.col(i) = d.K * z;
    z          = A_K * z;
  }
  return out;
}

struct Candidate
{
  InputSequence seq;
  /// true when the terminal-controller sequence was selected
  bool terminal_branch = false;
};

/// ξ_f(x⁺) if x⁺ ∈ Zf and it does not increase V, else the shifted candidate.
inline Candidate xi_switch(const FilterDesign & d, const Eigen::VectorXd & x_plus, const Eigen::VectorXd & terminal,
                           const InputSequence & vseq, const Eigen::VectorXd & w)
{
  Candidate c{xi_c(d, terminal, vseq, w), false};
  if (contains_point(d.Zf, x_plus)) {
    InputSequence f = xi_f(d, x_plus);
    if (lyapunov_value(d, x_plus, f) <= lyapunov_value(d, x_plus, c.seq)) { return {std::move(f), true}; }
  }
  return c;
}

/// Right-hand side of the decrease constraint: V − (1−ρ)·l(x, ũ_0) for ρ < 1, V + ρ otherwise.
inline double decrease_bound(const FilterDesign & d, const Eigen::VectorXd & x, const InputSequence & warmstart)
{
  const double V = lyapunov_value(d, x, warmstart);
  if (d.rho >= 1.0) { return V + d.rho; }
  return V - (1.0 - d.rho) * stage_cost(d, x, warmstart.col(0));
}

/// Largest violation of the linear constraints of the filter problem at (x, useq).
inline double sequence_violation(const FilterDesign & d, const Eigen::VectorXd & x, const InputSequence & useq)
{
  if (useq.cols() != d.N || useq.rows() != d.nu()) { throw std::invalid_argument("sequence_violation: wrong sequence shape"); }
  const Eigen::MatrixXd z = rollout(d, x, useq, d.N);
  double v                = max_violation(d.Zf, z.col(d.N));
  for (int i = 0; i < d.N; ++i) {
    v = std::max(v, max_violation(d.omega_x[i], z.col(i)));
    v = std::max(v, max_violation(d.omega_u[i], useq.col(i)));
  }
  return v;
}

inline Eigen::VectorXd stack(const InputSequence & seq) { return Eigen::Map<const Eigen::VectorXd>(seq.data(), seq.size()); }

inline InputSequence unstack(const Eigen::VectorXd & v, Eigen::Index m)
{
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), m, v.size() / m);
}

/**
 * @brief Condensed filter program for a fixed design.
 *
 * Precomputes z_i = Φ_i x + Γ_i v, the quadratic form of V over (x, v) and
 * the quadratic form of V((Ax + Bv_0, ξ_c(Ax + Bv_0, v, 0))).
 */
class FilterProblemBuilder
{
public:
  explicit FilterProblemBuilder(const FilterDesign & d) : d_(d)
  {
    const Eigen::Index n = d.nx(), m = d.nu();
    const int N          = d.N;
    const Eigen::Index nv = N * m;

    // S_i maps (x, v) to z_i
    std::vector<Eigen::MatrixXd> S(N + 1, Eigen::MatrixXd::Zero(n, n + nv));
    S[0].leftCols(n) = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < N; ++i) {
      S[i + 1]                    = d.sys.A * S[i];
      S[i + 1].middleCols(n + i * m, m) += d.sys.B;
    }
    phi_.resize(N + 1);
    gamma_.resize(N + 1);
    for (int i = 0; i <= N; ++i) {
      phi_[i]   = S[i].leftCols(n);
      gamma_[i] = S[i].rightCols(nv);
    }

    // V(x, v) = ½ [x; v]ᵀ M [x; v]
    Eigen::MatrixXd M = S[N].transpose() * d.costs.P * S[N];
    for (int i = 0; i < N; ++i) {
      Eigen::MatrixXd Ei = Eigen::MatrixXd::Zero(m, n + nv);
      Ei.middleCols(n + i * m, m) = Eigen::MatrixXd::Identity(m, m);
      M += S[i].transpose() * d.costs.Q * S[i] + Ei.transpose() * d.costs.R * Ei;
    }
    value_form_ = 0.5 * (M + M.transpose());

    // (x, v) ↦ (z_1, (v_1, …, v_{N−1}, K z_N))
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n + nv, n + nv);
    T.topRows(n)      = S[1];
    for (int i = 0; i + 1 < N; ++i) { T.block(n + i * m, n + (i + 1) * m, m, m) = Eigen::MatrixXd::Identity(m, m); }
    T.bottomRows(m) = d.K * S[N];
    Eigen::MatrixXd Ms = T.transpose() * value_form_ * T;
    Ms                 = 0.5 * (Ms + Ms.transpose());
    shift_vv_          = Ms.bottomRightCorner(nv, nv);
    shift_vx_          = Ms.bottomLeftCorner(nv, n);
    shift_xx_          = Ms.topLeftCorner(n, n);

    // linear constraints: rows G v ≤ h0 + F x
    std::vector<Eigen::MatrixXd> G_blocks, F_blocks;
    std::vector<Eigen::VectorXd> h_blocks;
    for (int i = 1; i < N; ++i) {
      const auto & P = d.omega_x[i];
      G_blocks.push_back(P.A() * gamma_[i]);
      F_blocks.push_back(-P.A() * phi_[i]);
      h_blocks.push_back(P.b());
    }
    for (int i = 0; i < N; ++i) {
      const auto & P     = d.omega_u[i];
      Eigen::MatrixXd Gi = Eigen::MatrixXd::Zero(P.num_rows(), nv);
      Gi.middleCols(i * m, m) = P.A();
      G_blocks.push_back(Gi);
      F_blocks.push_back(Eigen::MatrixXd::Zero(P.num_rows(), n));
      h_blocks.push_back(P.b());
    }
    G_blocks.push_back(d.Zf.A() * gamma_[N]);
    F_blocks.push_back(-d.Zf.A() * phi_[N]);
    h_blocks.push_back(d.Zf.b());

    Eigen::Index rows = 0;
    for (const auto & g : G_blocks) { rows += g.rows(); }
    G_.resize(rows, nv);
    F_.resize(rows, n);
    h0_.resize(rows);
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < G_blocks.size(); ++k) {
      const Eigen::Index nr = G_blocks[k].rows();
      G_.middleRows(r, nr)  = G_blocks[k];
      F_.middleRows(r, nr)  = F_blocks[k];
      h0_.segment(r, nr)    = h_blocks[k];
      r += nr;
    }
    // constant rows (no dependence on v) are checked through z_0 ∈ X separately
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (G_.row(i).lpNorm<Eigen::Infinity>() > 0.0) { keep.push_back(i); }
    }
    if (static_cast<Eigen::Index>(keep.size()) != rows) {
      Eigen::MatrixXd G(keep.size(), nv), F(keep.size(), n);
      Eigen::VectorXd h(keep.size());
      for (std::size_t k = 0; k < keep.size(); ++k) {
        G.row(k) = G_.row(keep[k]);
        F.row(k) = F_.row(keep[k]);
        h(k)     = h0_(keep[k]);
      }
      G_  = std::move(G);
      F_  = std::move(F);
      h0_ = std::move(h);
    }
  }

  const FilterDesign & design() const { return d_; }

  /// V(x, v) through the condensed quadratic form.
  double condensed_value(const Eigen::VectorXd & x, const Eigen::VectorXd & v) const
  {
    Eigen::VectorXd xv(x.size() + v.size());
    xv << x, v;
    return 0.5 * xv.dot(value_form_ * xv);
  }

  /// V((Ax + Bv_0, ξ_c(Ax + Bv_0, v, 0))) as ½vᵀHv + gᵀv + c at fixed x.
  QuadraticFunction shifted_value(const Eigen::VectorXd & x) const
  {
    return {shift_vv_, shift_vx_ * x, 0.5 * x.dot(shift_xx_ * x)};
  }

  /**
   * @brief The filter program at (x, ũ) with proposal u_L.
   *
   * Objective ½‖v_0 − u_L‖²; with `lyapunov` false the decrease constraint
   * is omitted, giving the plain safety filter.
   */
  ConvexProgram build(const Eigen::VectorXd & x, const InputSequence & warmstart, const Eigen::VectorXd & u_L,
                      bool lyapunov = true) const
  {
    const Eigen::Index m = d_.nu(), nv = d_.N * m;
    ConvexProgram p;
    p.objective.H                     = Eigen::MatrixXd::Zero(nv, nv);
    p.objective.H.topLeftCorner(m, m) = Eigen::MatrixXd::Identity(m, m);
    p.objective.g                     = Eigen::VectorXd::Zero(nv);
    p.objective.g.head(m)             = -u_L;
    p.objective.c                     = 0.5 * u_L.squaredNorm();
    p.A_in                            = G_;
    p.b_in                            = h0_ + F_ * x;
    if (lyapunov) {
      QuadraticFunction q = shifted_value(x);
      q.c -= decrease_bound(d_, x, warmstart);
      p.qconstraints.push_back(std::move(q));
    }
    return p;
  }

  /// Σ l + m over v at x subject to the linear constraints only.
  ConvexProgram build_initial(const Eigen::VectorXd & x) const
  {
    const Eigen::Index n = d_.nx(), nv = d_.N * d_.nu();
    ConvexProgram p;
    p.objective.H = value_form_.bottomRightCorner(nv, nv);
    p.objective.g = value_form_.bottomLeftCorner(nv, n) * x;
    p.objective.c = 0.5 * x.dot(value_form_.topLeftCorner(n, n) * x);
    p.A_in        = G_;
    p.b_in        = h0_ + F_ * x;
    return p;
  }

private:
  const FilterDesign & d_;
  std::vector<Eigen::MatrixXd> phi_;
  std::vector<Eigen::MatrixXd> gamma_;
  Eigen::MatrixXd value_form_;
  Eigen::MatrixXd shift_vv_, shift_vx_, shift_xx_;
  Eigen::MatrixXd G_, F_;
  Eigen::VectorXd h0_;
};

inline ConvexProgram build_problem(const FilterDesign & d, const Eigen::VectorXd & x, const InputSequence & warmstart,
                                   const Eigen::VectorXd & u_L)
{
  return FilterProblemBuilder(d).build(x, warmstart, u_L);
}

struct FilterStepResult
{
  Eigen::VectorXd u_applied;
  InputSequence vseq;
  SolveStatus status = SolveStatus::NumericalFailure;
  /// the solver result was unusable and the warmstart was applied
  bool fallback = false;
  /// decrease_bound − V(shifted vseq); nonnegative for admissible vseq
  double lyapunov_slack = 0.0;
  /// φ(x, vseq; N), needed by ξ_c at the next step
  Eigen::VectorXd terminal;
  int iterations = 0;
};

/**
 * @brief One filter step: project u_L onto the inputs admitted by (x, ũ).
 *
 * Throws WarmstartInfeasibleError when ũ does not satisfy the linear
 * constraints at x.
 */
inline FilterStepResult filter_step(const FilterProblemBuilder & builder, QcqpSolver & solver, const Eigen::VectorXd & x,
                                    const InputSequence & warmstart, const Eigen::VectorXd & u_L, bool lyapunov = true)
{
  const FilterDesign & d = builder.design();
  if (u_L.size() != d.nu()) { throw std::invalid_argument("filter_step: proposal has wrong dimension"); }
  const double viol = sequence_violation(d, x, warmstart);
  if (!(viol <= kWarmstartTol)) {
    throw WarmstartInfeasibleError("warmstart violates the filter constraints by " + std::to_string(viol));
  }

  const ConvexProgram prog = builder.build(x, warmstart, u_L, lyapunov);
  const Eigen::VectorXd init = stack(warmstart);
  const QcqpSolution sol     = solver.solve(prog, init);

  FilterStepResult r;
  r.iterations = sol.iterations;
  r.status     = sol.status;
  const bool usable = (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::Feasible) &&
                      sol.max_violation <= QcqpOptions{}.feas_tol;
  if (usable) {
    r.vseq     = unstack(sol.x, d.nu());
    r.fallback = sol.fallback;
  } else {
    r.vseq     = warmstart;
    r.fallback = true;
  }
  r.u_applied = r.vseq.col(0);
  r.terminal  = rollout(d, x, r.vseq, d.N).col(d.N);
  const Eigen::VectorXd x_nom = d.sys.A * x + d.sys.B * r.u_applied;
  r.lyapunov_slack = decrease_bound(d, x, warmstart) -
                     lyapunov_value(d, x_nom, xi_c(d, r.terminal, r.vseq, Eigen::VectorXd::Zero(d.nx())));
  return r;
}

inline FilterStepResult filter_step(const FilterDesign & d, const Eigen::VectorXd & x, const InputSequence & warmstart,
                                    const Eigen::VectorXd & u_L)
{
  QcqpSolver solver;
  return filter_step(FilterProblemBuilder(d), solver, x, warmstart, u_L);
}

/// Next warmstart ξ(x⁺, v, w).
inline Candidate advance_warmstart(const FilterDesign & d, const Eigen::VectorXd & x_next, const Eigen::VectorXd & terminal,
                                   const InputSequence & vseq, const Eigen::VectorXd & w)
{
  return xi_switch(d, x_next, terminal, vseq, w);
}

/// Minimizes V over the linear constraints of the filter program. Throws InitialInfeasibleError.
inline InputSequence initial_warmstart(const FilterProblemBuilder & builder, QcqpSolver & solver, const Eigen::VectorXd & x0)
{
  const FilterDesign & d = builder.design();
  if (x0.size() != d.nx()) { throw std::invalid_argument("initial_warmstart: state has wrong dimension"); }
  if (!contains_point(d.X, x0, kWarmstartTol)) { throw InitialInfeasibleError("initial state lies outside X"); }
  const QcqpSolution sol = solver.solve(builder.build_initial(x0));
  if (sol.status == SolveStatus::Infeasible || sol.status == SolveStatus::NumericalFailure) {
    throw InitialInfeasibleError("no feasible input sequence from the initial state (solver status " +
                                 std::string(to_string(sol.status)) + ")");
  }
  InputSequence seq = unstack(sol.x, d.nu());
  const double viol = sequence_violation(d, x0, seq);
  if (!(viol <= kWarmstartTol)) {
    throw InitialInfeasibleError("initial sequence violates the constraints by " + std::to_string(viol));
  }
  return seq;
}

inline InputSequence initial_warmstart(const FilterDesign & d, const Eigen::VectorXd & x0)
{
  QcqpSolver solver;
  return initial_warmstart(FilterProblemBuilder(d), solver, x0);
}

}  // namespace psf
