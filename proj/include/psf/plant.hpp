#pragma once

/**
 * @file
 * @brief Simulation plants: linear design model and the dynamic bicycle model.
 *
 * Vehicle state x = [p_y, Ψ, v_x, v_y, r], input u = [δ, τ].
 */

#include <Eigen/Dense>

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <string>

#include "psf/control_math.hpp"
#include "psf/errors.hpp"

namespace psf {

struct PacejkaCoefficients
{
  double B = 1.0;
  double C = 1.0;
  double D = 1.0;
};

struct BicycleParams
{
  double mass    = 0.041;
  double inertia = 27.8e-6;
  double lf      = 0.029;
  double lr      = 0.033;
  PacejkaCoefficients front{2.579, 1.2, 0.192};
  PacejkaCoefficients rear{3.3852, 1.2691, 0.1737};
  /// motor gain Cm1 and its speed-dependent loss Cm2
  double cm1 = 0.287;
  double cm2 = 0.0545;
  /// rolling resistance and aerodynamic drag
  double cr0 = 0.0518;
  double cr2 = 0.00035;
  /// multiplies the Pacejka D coefficients
  double friction_scale = 0.3;
  /// slip angles are undefined below this longitudinal speed
  double v_min = 0.05;

  void validate() const
  {
    auto positive = [](double v, const char * name) {
      if (!(v > 0.0) || !std::isfinite(v)) { throw ConfigError(std::string("vehicle.") + name + " must be positive"); }
    };
    positive(mass, "mass");
    positive(inertia, "inertia");
    positive(lf, "lf");
    positive(lr, "lr");
    positive(front.D, "front.D");
    positive(rear.D, "rear.D");
    positive(v_min, "v_min");
    if (!(friction_scale > 0.0 && friction_scale <= 1.0)) {
      throw ConfigError("vehicle.friction_scale must lie in (0, 1]");
    }
  }
};

namespace vehicle {
inline constexpr Eigen::Index kPy = 0, kPsi = 1, kVx = 2, kVy = 3, kR = 4;
inline constexpr Eigen::Index kSteer = 0, kDrive = 1;
inline constexpr Eigen::Index kStates = 5, kInputs = 2;
}  // namespace vehicle

/// Magic formula F = D·sin(C·atan(B·α)).
inline double pacejka_force(double alpha, double B, double C, double D) { return D * std::sin(C * std::atan(B * alpha)); }

/// Longitudinal drivetrain force (Cm1 − Cm2·v_x)·τ − Cr0 − Cr2·v_x².
inline double drive_force(const BicycleParams & p, double vx, double tau)
{
  return (p.cm1 - p.cm2 * vx) * tau - p.cr0 - p.cr2 * vx * vx;
}

inline Eigen::VectorXd bicycle_dynamics(const Eigen::VectorXd & x, const Eigen::VectorXd & u, const BicycleParams & p)
{
  using namespace vehicle;
  const double psi = x(kPsi), vx = x(kVx), vy = x(kVy), r = x(kR);
  const double delta = u(kSteer), tau = u(kDrive);
  if (!(vx > p.v_min)) {
    throw DegenerateSpeedError("bicycle_dynamics: v_x = " + std::to_string(vx) + " is at or below v_min");
  }

  const double alpha_f = delta - std::atan((vy + p.lf * r) / vx);
  const double alpha_r = std::atan((p.lr * r - vy) / vx);
  const double F_fy    = pacejka_force(alpha_f, p.front.B, p.front.C, p.friction_scale * p.front.D);
  const double F_ry    = pacejka_force(alpha_r, p.rear.B, p.rear.C, p.friction_scale * p.rear.D);
  const double F_rx    = drive_force(p, vx, tau);

  Eigen::VectorXd dx(kStates);
  dx(kPy)  = vx * std::sin(psi) + vy * std::cos(psi);
  dx(kPsi) = r;
  dx(kVx)  = (F_rx - F_fy * std::sin(delta) + p.mass * vy * r) / p.mass;
  dx(kVy)  = (F_ry + F_fy * std::cos(delta) - p.mass * vx * r) / p.mass;
  dx(kR)   = (F_fy * p.lf * std::cos(delta) - F_ry * p.lr) / p.inertia;
  return dx;
}

/// Classical RK4 with zero-order input hold.
template<typename Dynamics>
Eigen::VectorXd rk4_step(Dynamics && f, const Eigen::VectorXd & x, const Eigen::VectorXd & u, double dt)
{
  if (!(dt > 0.0)) { throw std::invalid_argument("rk4_step: dt must be positive"); }
  const Eigen::VectorXd k1 = f(x, u);
  const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1, u);
  const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2, u);
  const Eigen::VectorXd k4 = f(x + dt * k3, u);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Drive command holding v_x = v_op on a straight line.
inline double steady_state_drive(const BicycleParams & p, double v_op)
{
  const auto residual = [&](double tau) { return drive_force(p, v_op, tau); };
  double lo = -10.0, hi = 10.0;
  if (!(residual(lo) * residual(hi) < 0.0)) {
    throw NoSteadyStateError("no drive command balances resistance at v_x = " + std::to_string(v_op));
  }
  std::uintmax_t max_iter = 200;
  const auto [a, b]       = boost::math::tools::toms748_solve(
    residual, lo, hi, [](double l, double h) { return std::abs(h - l) <= 1e-14; }, max_iter);
  const double tau = 0.5 * (a + b);
  if (!(std::abs(residual(tau)) <= 1e-10)) {
    throw NoSteadyStateError("steady-state drive search did not converge at v_x = " + std::to_string(v_op));
  }
  return tau;
}

/// Discrete bicycle model in deviation coordinates around a straight-line operating point.
class VehiclePlant
{
public:
  VehiclePlant(BicycleParams params, double v_op, double dt) : p_(params), dt_(dt), v_op_(v_op)
  {
    p_.validate();
    if (!(dt > 0.0)) { throw ConfigError("vehicle dt must be positive"); }
    x_op_              = Eigen::VectorXd::Zero(vehicle::kStates);
    x_op_(vehicle::kVx) = v_op;
    u_op_              = Eigen::VectorXd::Zero(vehicle::kInputs);
    u_op_(vehicle::kDrive) = steady_state_drive(p_, v_op);
  }

  const BicycleParams & params() const { return p_; }
  double dt() const { return dt_; }
  double v_op() const { return v_op_; }
  const Eigen::VectorXd & x_op() const { return x_op_; }
  const Eigen::VectorXd & u_op() const { return u_op_; }

  /// Absolute-coordinate RK4 step.
  Eigen::VectorXd step_absolute(const Eigen::VectorXd & x, const Eigen::VectorXd & u) const
  {
    return rk4_step([this](const Eigen::VectorXd & xx, const Eigen::VectorXd & uu) { return bicycle_dynamics(xx, uu, p_); },
                    x, u, dt_);
  }

  /// Deviation-coordinate step δx⁺ = f(x_op + δx, u_op + δu) − x_op.
  Eigen::VectorXd step(const Eigen::VectorXd & dx, const Eigen::VectorXd & du) const
  {
    return step_absolute(x_op_ + dx, u_op_ + du) - x_op_;
  }

private:
  BicycleParams p_;
  double dt_;
  double v_op_;
  Eigen::VectorXd x_op_;
  Eigen::VectorXd u_op_;
};

struct VehicleLinearization
{
  LinearSystem sys;
  Eigen::VectorXd x_op;
  Eigen::VectorXd u_op;
};

/// Jacobians of the discrete RK4 map at (x_op, u_op) = ((0, 0, v_op, 0, 0), (0, τ_ss)).
inline VehicleLinearization linearize_vehicle(const BicycleParams & p, double v_op, double dt, double eps = 1e-6)
{
  const VehiclePlant plant(p, v_op, dt);
  auto map    = [&plant](const Eigen::VectorXd & x, const Eigen::VectorXd & u) { return plant.step_absolute(x, u); };
  auto [A, B] = numerical_jacobian(map, plant.x_op(), plant.u_op(), eps);
  return {{A, B}, plant.x_op(), plant.u_op()};
}

/// x⁺ = Ax + Bu + w
inline Eigen::VectorXd linear_step(const LinearSystem & sys, const Eigen::VectorXd & x, const Eigen::VectorXd & u,
                                   const Eigen::VectorXd & w)
{
  return sys.A * x + sys.B * u + w;
}

}  // namespace psf
