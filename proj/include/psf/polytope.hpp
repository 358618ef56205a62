#pragma once

/**
 * @file
 * @brief Halfspace-representation polytopes and support-function set algebra.
 *
 * Every set query reduces to a linear program. Minkowski sums are never
 * formed explicitly; ImplicitSumSet answers support queries term by term.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "psf/errors.hpp"
#include "psf/linear_program.hpp"

namespace psf {

/// Violation tolerated by point-membership checks.
inline constexpr double kMembershipTol = 1e-9;

/**
 * @brief Convex polytope {x : A x ≤ b}.
 *
 * Rows must be nonzero. The object is immutable after construction.
 */
class HalfspacePolytope
{
public:
  HalfspacePolytope() = default;

  HalfspacePolytope(Eigen::MatrixXd A, Eigen::VectorXd b) : A_(std::move(A)), b_(std::move(b))
  {
    if (A_.rows() != b_.size()) {
      throw std::invalid_argument("HalfspacePolytope: A has " + std::to_string(A_.rows()) + " rows but b has " +
                                  std::to_string(b_.size()) + " entries");
    }
    if (!A_.allFinite() || !b_.allFinite()) { throw std::invalid_argument("HalfspacePolytope: non-finite data"); }
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      if (A_.row(i).isZero(0)) {
        throw std::invalid_argument("HalfspacePolytope: row " + std::to_string(i) + " is zero");
      }
    }
  }

  /// Axis-aligned box [lower, upper].
  static HalfspacePolytope box(const Eigen::VectorXd & lower, const Eigen::VectorXd & upper)
  {
    const Eigen::Index n = lower.size();
    Eigen::MatrixXd A(2 * n, n);
    A << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(2 * n);
    b << upper, -lower;
    return {std::move(A), std::move(b)};
  }

  /// Symmetric box [-r, r].
  static HalfspacePolytope box(const Eigen::VectorXd & r) { return box(-r, r); }

  /// The singleton {0} in dimension n.
  static HalfspacePolytope origin(Eigen::Index n) { return box(Eigen::VectorXd::Zero(n)); }

  const Eigen::MatrixXd & A() const { return A_; }
  const Eigen::VectorXd & b() const { return b_; }
  Eigen::Index dim() const { return A_.cols(); }
  Eigen::Index num_rows() const { return A_.rows(); }

  /// Intersection, rows of `other` appended.
  HalfspacePolytope intersect(const HalfspacePolytope & other) const
  {
    if (other.dim() != dim()) { throw std::invalid_argument("HalfspacePolytope::intersect: dimension mismatch"); }
    Eigen::MatrixXd A(num_rows() + other.num_rows(), dim());
    A << A_, other.A_;
    Eigen::VectorXd b(num_rows() + other.num_rows());
    b << b_, other.b_;
    return {std::move(A), std::move(b)};
  }

  /**
   * @brief Preimage {x : F x ∈ this}.
   *
   * Rows that vanish under F are dropped when trivially satisfied; a
   * vanishing row with negative offset makes the result the empty set.
   */
  HalfspacePolytope preimage(const Eigen::MatrixXd & F) const
  {
    const Eigen::MatrixXd AF = A_ * F;
    std::vector<Eigen::Index> keep;
    bool infeasible = false;
    for (Eigen::Index i = 0; i < AF.rows(); ++i) {
      if (AF.row(i).lpNorm<Eigen::Infinity>() > 1e-14 * std::max(1.0, A_.row(i).lpNorm<Eigen::Infinity>())) {
        keep.push_back(i);
      } else if (b_(i) < 0) {
        infeasible = true;
      }
    }
    if (infeasible) { return empty(F.cols()); }
    Eigen::MatrixXd A(keep.size(), F.cols());
    Eigen::VectorXd b(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      A.row(k) = AF.row(keep[k]);
      b(k)     = b_(keep[k]);
    }
    return {std::move(A), std::move(b)};
  }

  /// A canonical empty set in dimension n.
  static HalfspacePolytope empty(Eigen::Index n)
  {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, n);
    A(0, 0) = 1.0;
    A(1, 0) = -1.0;
    return {std::move(A), Eigen::Vector2d(-1.0, -1.0)};
  }

  /// Copy with every row scaled to unit Euclidean norm.
  HalfspacePolytope normalized() const
  {
    Eigen::MatrixXd A = A_;
    Eigen::VectorXd b = b_;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double nrm = A.row(i).norm();
      A.row(i) /= nrm;
      b(i) /= nrm;
    }
    return {std::move(A), std::move(b)};
  }

  friend bool operator==(const HalfspacePolytope & l, const HalfspacePolytope & r)
  {
    return l.A_.rows() == r.A_.rows() && l.A_.cols() == r.A_.cols() && l.A_ == r.A_ && l.b_ == r.b_;
  }

private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

/// Linear image map·base, one term of an implicit Minkowski sum.
struct SumTerm
{
  Eigen::MatrixXd map;
  HalfspacePolytope base;
};

/**
 * @brief ⊕_j map_j · base_j, queried only through its support function.
 *
 * An empty term list represents {0}.
 */
class ImplicitSumSet
{
public:
  explicit ImplicitSumSet(Eigen::Index dim) : dim_(dim) {}

  ImplicitSumSet(Eigen::Index dim, std::vector<SumTerm> terms) : dim_(dim)
  {
    for (auto & t : terms) { add(std::move(t.map), std::move(t.base)); }
  }

  void add(Eigen::MatrixXd map, HalfspacePolytope base)
  {
    if (map.rows() != dim_ || map.cols() != base.dim()) {
      throw std::invalid_argument("ImplicitSumSet::add: map is " + std::to_string(map.rows()) + "x" +
                                  std::to_string(map.cols()) + ", expected " + std::to_string(dim_) + "x" +
                                  std::to_string(base.dim()));
    }
    terms_.push_back({std::move(map), std::move(base)});
  }

  Eigen::Index dim() const { return dim_; }
  const std::vector<SumTerm> & terms() const { return terms_; }

private:
  Eigen::Index dim_;
  std::vector<SumTerm> terms_;
};

/// max_{x∈P} dᵀx. Throws EmptySetError / UnboundedError.
inline double support(const HalfspacePolytope & P, const Eigen::VectorXd & d)
{
  if (d.size() != P.dim()) { throw std::invalid_argument("support: direction dimension mismatch"); }
  LinearProgram lp;
  lp.c    = -d;
  lp.A_in = P.A();
  lp.b_in = P.b();
  const auto sol = solve_lp(lp);
  switch (sol.status) {
  case SolveStatus::Optimal: return d.dot(sol.x);
  case SolveStatus::Infeasible: throw EmptySetError("support: polytope is empty");
  case SolveStatus::Unbounded: throw UnboundedError("support: polytope unbounded in the query direction");
  default: throw Error("support: LP failed");
  }
}

/// Σ_j h_{base_j}(map_jᵀ d).
inline double support(const ImplicitSumSet & S, const Eigen::VectorXd & d)
{
  double h = 0.0;
  for (const auto & t : S.terms()) { h += support(t.base, t.map.transpose() * d); }
  return h;
}

/// Alias matching the set-algebra vocabulary.
inline double support_sum(const ImplicitSumSet & S, const Eigen::VectorXd & d) { return support(S, d); }

inline bool is_empty(const HalfspacePolytope & P)
{
  LinearProgram lp;
  lp.c    = Eigen::VectorXd::Zero(P.dim());
  lp.A_in = P.A();
  lp.b_in = P.b();
  const auto sol = solve_lp(lp);
  if (sol.status == SolveStatus::NumericalFailure) { throw Error("is_empty: LP failed"); }
  return sol.status == SolveStatus::Infeasible;
}

inline bool contains_point(const HalfspacePolytope & P, const Eigen::VectorXd & x, double tol = kMembershipTol)
{
  if (P.num_rows() == 0) { return true; }
  return (P.A() * x - P.b()).maxCoeff() <= tol;
}

/// Largest violation max_i (a_iᵀx - b_i), negative when strictly inside.
inline double max_violation(const HalfspacePolytope & P, const Eigen::VectorXd & x)
{
  if (P.num_rows() == 0) { return -std::numeric_limits<double>::infinity(); }
  return (P.A() * x - P.b()).maxCoeff();
}

/**
 * @brief Pontryagin difference P ⊖ S = {x : x + s ∈ P ∀ s ∈ S}.
 *
 * Exact in H-representation: b_i ← b_i - h_S(a_i). The result may be empty.
 */
template<typename Set>
HalfspacePolytope tighten(const HalfspacePolytope & P, const Set & S)
{
  Eigen::VectorXd b = P.b();
  for (Eigen::Index i = 0; i < P.num_rows(); ++i) { b(i) -= support(S, P.A().row(i).transpose()); }
  return {P.A(), std::move(b)};
}

struct Containment
{
  bool contained = false;
  /// min_i (b_i - h_Q(a_i))
  double worst_slack = std::numeric_limits<double>::infinity();
};

/**
 * @brief Q ⊆ P test via h_Q(a_i) ≤ b_i on every halfspace of P.
 *
 * Q is anything with a `support(Q, d)` overload. An unbounded Q is reported
 * as not contained with slack -∞.
 */
template<typename Set>
Containment contains_set(const HalfspacePolytope & P, const Set & Q, double tol = 0.0)
{
  Containment c;
  for (Eigen::Index i = 0; i < P.num_rows(); ++i) {
    double slack;
    try {
      slack = P.b()(i) - support(Q, P.A().row(i).transpose());
    } catch (const UnboundedError &) {
      slack = -std::numeric_limits<double>::infinity();
    }
    c.worst_slack = std::min(c.worst_slack, slack);
  }
  c.contained = c.worst_slack >= -tol;
  return c;
}

/// Support of the image F·P.
struct LinearImage
{
  Eigen::MatrixXd map;
  const HalfspacePolytope & base;
};

inline double support(const LinearImage & S, const Eigen::VectorXd & d) { return support(S.base, S.map.transpose() * d); }

/**
 * @brief Irredundant H-representation of the same set.
 *
 * Rows are normalized, exact duplicates dropped, then each row is tested by
 * maximizing it over the remaining rows. Empty input is returned unchanged.
 */
inline HalfspacePolytope remove_redundant(const HalfspacePolytope & P, double tol = 1e-10)
{
  if (P.num_rows() == 0 || is_empty(P)) { return P; }
  const HalfspacePolytope N = P.normalized();

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < N.num_rows(); ++i) {
    bool dup = false;
    for (auto j : active) {
      if ((N.A().row(i) - N.A().row(j)).lpNorm<Eigen::Infinity>() < 1e-12) {
        dup = true;
        if (N.b()(i) < N.b()(j)) { active.erase(std::find(active.begin(), active.end(), j)); dup = false; }
        break;
      }
    }
    if (!dup) { active.push_back(i); }
  }

  std::vector<char> alive(N.num_rows(), 0);
  for (auto i : active) { alive[i] = 1; }

  for (auto i : active) {
    std::vector<Eigen::Index> others;
    for (Eigen::Index j = 0; j < N.num_rows(); ++j) {
      if (j != i && alive[j]) { others.push_back(j); }
    }
    LinearProgram lp;
    lp.c = -N.A().row(i).transpose();
    lp.A_in.resize(static_cast<Eigen::Index>(others.size()) + 1, N.dim());
    lp.b_in.resize(static_cast<Eigen::Index>(others.size()) + 1);
    for (std::size_t k = 0; k < others.size(); ++k) {
      lp.A_in.row(k) = N.A().row(others[k]);
      lp.b_in(k)     = N.b()(others[k]);
    }
    // relaxed copy of row i bounds the LP without changing the verdict
    lp.A_in.row(others.size()) = N.A().row(i);
    lp.b_in(others.size())     = N.b()(i) + 1.0;
    const auto sol             = solve_lp(lp);
    if (sol.status == SolveStatus::Optimal && -sol.objective_value <= N.b()(i) + tol) { alive[i] = 0; }
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < N.num_rows(); ++i) {
    if (alive[i]) { keep.push_back(i); }
  }
  Eigen::MatrixXd A(keep.size(), N.dim());
  Eigen::VectorXd b(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    A.row(k) = N.A().row(keep[k]);
    b(k)     = N.b()(keep[k]);
  }
  return {std::move(A), std::move(b)};
}

struct MaxRpiOptions
{
  int max_iter = 200;
  /// mutual-containment slack for termination
  double tol = 1e-9;
  /// called with every iterate Ω_k, starting at Ω_0
  std::function<void(const HalfspacePolytope &)> on_iterate;
};

struct MaxRpiResult
{
  HalfspacePolytope set;
  int iterations = 0;
};

/**
 * @brief Maximal robust positive invariant subset of X0 for x⁺ = A_K x + w, w ∈ W.
 *
 * Iterates Ω_{k+1} = Ω_k ∩ {x : a_iᵀA_K x ≤ b_i - h_W(a_i)} until every new
 * halfspace is implied by Ω_k within `tol`.
 */
inline MaxRpiResult max_rpi(
  const Eigen::MatrixXd & A_K, const HalfspacePolytope & X0, const HalfspacePolytope & W, const MaxRpiOptions & opt = {})
{
  if (A_K.rows() != A_K.cols() || A_K.rows() != X0.dim() || W.dim() != X0.dim()) {
    throw std::invalid_argument("max_rpi: dimension mismatch");
  }
  if (is_empty(X0)) { throw EmptyInvariantSetError("max_rpi: X0 is empty"); }

  HalfspacePolytope omega = remove_redundant(X0);
  for (int k = 0; k < opt.max_iter; ++k) {
    if (opt.on_iterate) { opt.on_iterate(omega); }

    std::vector<Eigen::VectorXd> rows;
    std::vector<double> offsets;
    for (Eigen::Index i = 0; i < omega.num_rows(); ++i) {
      const Eigen::VectorXd a = omega.A().row(i).transpose();
      Eigen::VectorXd a_new   = A_K.transpose() * a;
      double b_new            = omega.b()(i) - support(W, a);
      const double nrm        = a_new.norm();
      if (nrm < 1e-12) {
        if (b_new < -opt.tol) {
          throw EmptyInvariantSetError("max_rpi: iterate " + std::to_string(k + 1) + " is empty");
        }
        continue;
      }
      a_new /= nrm;
      b_new /= nrm;
      double h;
      try {
        h = support(omega, a_new);
      } catch (const UnboundedError &) {
        h = std::numeric_limits<double>::infinity();
      }
      if (h > b_new + opt.tol) {
        rows.push_back(std::move(a_new));
        offsets.push_back(b_new);
      }
    }
    if (rows.empty()) { return {std::move(omega), k}; }

    Eigen::MatrixXd A(omega.num_rows() + static_cast<Eigen::Index>(rows.size()), omega.dim());
    Eigen::VectorXd b(A.rows());
    A.topRows(omega.num_rows()) = omega.A();
    b.head(omega.num_rows())    = omega.b();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      A.row(omega.num_rows() + r) = rows[r].transpose();
      b(omega.num_rows() + r)     = offsets[r];
    }
    HalfspacePolytope next(std::move(A), std::move(b));
    if (is_empty(next)) {
      throw EmptyInvariantSetError("max_rpi: iterate " + std::to_string(k + 1) +
                                   " is empty (disturbance set too large for the constraint set)");
    }
    omega = remove_redundant(next);
  }
  throw NotConvergedError("max_rpi: no fixed point after " + std::to_string(opt.max_iter) + " iterations");
}

/// Certificate min_i (b_i - h_Ω(A_Kᵀa_i) - h_W(a_i)); ≥ 0 means Ω is RPI.
inline double rpi_slack(const Eigen::MatrixXd & A_K, const HalfspacePolytope & omega, const HalfspacePolytope & W)
{
  ImplicitSumSet successor(omega.dim());
  successor.add(A_K, omega);
  successor.add(Eigen::MatrixXd::Identity(W.dim(), W.dim()), W);
  return contains_set(omega, successor).worst_slack;
}

/// Per-coordinate [lower, upper] of a bounded polytope.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> bounding_box(const HalfspacePolytope & P)
{
  const Eigen::Index n = P.dim();
  Eigen::VectorXd lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(n, i);
    hi(i)                   = support(P, e);
    lo(i)                   = -support(P, -e);
  }
  return {lo, hi};
}

enum class SampleMode { Vertex, Uniform };

/**
 * @brief Draw a point of W.
 *
 * Vertex mode picks a random orthant sign pattern σ and returns the vertex
 * maximizing σᵀx over W; for boxes this is the matching corner. Uniform mode
 * rejection-samples inside the bounding box.
 */
template<typename Rng>
Eigen::VectorXd sample(const HalfspacePolytope & W, Rng & rng, SampleMode mode)
{
  const Eigen::Index n = W.dim();
  if (mode == SampleMode::Vertex) {
    std::bernoulli_distribution coin(0.5);
    Eigen::VectorXd sigma(n);
    for (Eigen::Index i = 0; i < n; ++i) { sigma(i) = coin(rng) ? 1.0 : -1.0; }
    LinearProgram lp;
    lp.c    = -sigma;
    lp.A_in = W.A();
    lp.b_in = W.b();
    const auto sol = solve_lp(lp);
    if (sol.status == SolveStatus::Infeasible) { throw EmptySetError("sample: disturbance set is empty"); }
    if (sol.status != SolveStatus::Optimal) { throw UnboundedError("sample: disturbance set is unbounded"); }
    if (!contains_point(W, sol.x)) { throw SamplingFailedError("sample: vertex outside W"); }
    return sol.x;
  }

  const auto [lo, hi] = bounding_box(W);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) { x(i) = lo(i) + (hi(i) - lo(i)) * unit(rng); }
    if (contains_point(W, x)) { return x; }
  }
  throw SamplingFailedError("sample: rejection sampling exceeded 100000 attempts");
}

inline Eigen::VectorXd sample(const HalfspacePolytope & W, std::uint64_t seed, SampleMode mode = SampleMode::Vertex)
{
  std::mt19937_64 rng(seed);
  return sample(W, rng, mode);
}

}  // namespace psf
