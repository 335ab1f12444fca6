#pragma once

// Planar-yaw drone process model. State x = [rho(3), nu(3), a(3), theta, r]
// in ENU coordinates; the transition is linear and the measured
// acceleration and yaw rate re-enter through the input vector each step.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "fieldkf/core_filter.hpp"

namespace fieldkf::drone {

inline constexpr Index kStateDim = 11;
inline constexpr Index kPos = 0;
inline constexpr Index kVel = 3;
inline constexpr Index kAcc = 6;
inline constexpr Index kYaw = 9;
inline constexpr Index kYawRate = 10;

inline constexpr double kGravity = 9.80665;
inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

template <typename Scalar>
struct DroneState {
  Eigen::Matrix<Scalar, 3, 1> position = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Eigen::Matrix<Scalar, 3, 1> velocity = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Eigen::Matrix<Scalar, 3, 1> acceleration = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Scalar yaw = 0;
  Scalar yaw_rate = 0;

  VectorX<Scalar> to_vector() const {
    VectorX<Scalar> x(kStateDim);
    x << position, velocity, acceleration, yaw, yaw_rate;
    return x;
  }

  static DroneState from_vector(const VectorX<Scalar>& x) {
    if (x.size() != kStateDim) throw InvalidArgument("drone state vector must have 11 entries");
    DroneState s;
    s.position = x.template segment<3>(kPos);
    s.velocity = x.template segment<3>(kVel);
    s.acceleration = x.template segment<3>(kAcc);
    s.yaw = x(kYaw);
    s.yaw_rate = x(kYawRate);
    return s;
  }
};

/// Constant 11 x 11 transition matrix; also the process Jacobian F.
template <typename Scalar = double>
MatrixX<Scalar> transition_matrix(Scalar dt) {
  if (!(dt >= 0)) throw InvalidArgument("time step must be >= 0");
  MatrixX<Scalar> F = MatrixX<Scalar>::Zero(kStateDim, kStateDim);
  F.template block<3, 3>(kPos, kPos).setIdentity();
  F.template block<3, 3>(kPos, kVel).diagonal().setConstant(dt);
  F.template block<3, 3>(kVel, kVel).setIdentity();
  F.template block<3, 3>(kVel, kAcc).diagonal().setConstant(dt);
  F(kYaw, kYaw) = 1;
  F(kYaw, kYawRate) = dt;
  return F;
}

/// Planar rotation R(theta) = [[c, -s], [s, c]] and its derivative in theta.
template <typename Scalar = double>
struct Rotation {
  Eigen::Matrix<Scalar, 2, 2> R;
  Eigen::Matrix<Scalar, 2, 2> dR;
};

template <typename Scalar = double>
Rotation<Scalar> rotation_and_derivative(Scalar theta) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(theta), s = sin(theta);
  Rotation<Scalar> out;
  out.R << c, -s, s, c;
  out.dR << -s, -c, c, -s;
  return out;
}

struct ImuSample {
  double t = 0;
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();  // specific force, IMU frame
  double gyro_z = 0;
  std::optional<Eigen::Quaterniond> orientation;
};

struct NoiseDensities {
  double sigma_a = 1.6e-2;   // m/s^2/sqrt(Hz)
  double g_a = 1.94e-3;      // rad/s/sqrt(Hz)
  double sigma_b = 1.31e-4;  // m/s^3/sqrt(Hz)
  double g_b = 3.96e-5;      // rad/s^2/sqrt(Hz)

  void validate() const;
};

struct ImuInput {
  VectorX<double> u = VectorX<double>::Zero(kStateDim);
  Index samples = 0;
  bool stale = false;
};

/// Samples with t_prev < t <= t_curr (1e-9 s tolerance on both ends).
std::span<const ImuSample> imu_window(const std::vector<ImuSample>& stream, double t_prev, double t_curr);

/// Time-weighted (trapezoidal) mean of the window, accel rotated to ENU by
/// yaw and gravity-compensated, placed at the acceleration and yaw-rate
/// entries of an 11-vector. An empty window gives u = 0 and stale = true.
ImuInput build_input(std::span<const ImuSample> window, double yaw);

/// Yaw extracted from an IMU orientation quaternion (rotation about z).
double yaw_of(const Eigen::Quaterniond& q);

/// diag(0,0,0, sa^2 dt x3, 0,0,0, 0, ga^2 dt) with the positive-definite floor.
MatrixX<double> build_Q(const NoiseDensities& dens, double dt);

/// Linear drone process with yaw wrapping.
ProcessModel<double> drone_process_model(const NoiseDensities& dens, double dt);

}  // namespace fieldkf::drone
