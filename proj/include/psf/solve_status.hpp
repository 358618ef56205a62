#pragma once

#include <string_view>

namespace psf {

enum class SolveStatus { Optimal, Feasible, Infeasible, Unbounded, NumericalFailure };

constexpr std::string_view to_string(SolveStatus s)
{
  switch (s) {
  case SolveStatus::Optimal: return "optimal";
  case SolveStatus::Feasible: return "feasible";
  case SolveStatus::Infeasible: return "infeasible";
  case SolveStatus::Unbounded: return "unbounded";
  case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

}  // namespace psf
