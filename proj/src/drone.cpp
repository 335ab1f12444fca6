#include "fieldkf/drone.hpp"

#include <algorithm>
#include <string>

namespace fieldkf::drone {

void NoiseDensities::validate() const {
  if (!(sigma_a >= 0) || !(g_a >= 0) || !(sigma_b >= 0) || !(g_b >= 0))
    throw InvalidArgument("noise densities must be finite and >= 0");
}

std::span<const ImuSample> imu_window(const std::vector<ImuSample>& stream, double t_prev, double t_curr) {
  constexpr double tol = 1e-9;
  auto first = std::upper_bound(stream.begin(), stream.end(), t_prev + tol,
                                [](double t, const ImuSample& s) { return t < s.t; });
  auto last = std::upper_bound(first, stream.end(), t_curr + tol,
                               [](double t, const ImuSample& s) { return t < s.t; });
  return {first, last};
}

ImuInput build_input(std::span<const ImuSample> window, double yaw) {
  ImuInput out;
  out.samples = static_cast<Index>(window.size());
  if (window.empty()) {
    out.stale = true;
    return out;
  }
  for (std::size_t i = 1; i < window.size(); ++i)
    if (!(window[i].t > window[i - 1].t))
      throw InvalidArgument("IMU timestamps must be strictly increasing (t=" + std::to_string(window[i].t) + ")");

  Eigen::Vector3d accel = window.front().accel;
  double gyro = window.front().gyro_z;
  const double span = window.back().t - window.front().t;
  if (window.size() > 1 && span > 0) {
    accel.setZero();
    gyro = 0;
    for (std::size_t i = 1; i < window.size(); ++i) {
      const double w = 0.5 * (window[i].t - window[i - 1].t);
      accel += w * (window[i].accel + window[i - 1].accel);
      gyro += w * (window[i].gyro_z + window[i - 1].gyro_z);
    }
    accel /= span;
    gyro /= span;
  }

  const Eigen::Matrix2d R = rotation_and_derivative(yaw).R;
  out.u.segment<2>(kAcc) = R * accel.head<2>();
  out.u(kAcc + 2) = accel.z() - kGravity;
  out.u(kYawRate) = gyro;
  return out;
}

double yaw_of(const Eigen::Quaterniond& q) {
  return std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()), 1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
}

MatrixX<double> build_Q(const NoiseDensities& dens, double dt) {
  if (!(dt > 0)) throw InvalidArgument("time step must be > 0");
  dens.validate();
  MatrixX<double> Q = MatrixX<double>::Zero(kStateDim, kStateDim);
  Q.diagonal().segment<3>(kVel).setConstant(dens.sigma_a * dens.sigma_a * dt);
  Q(kYawRate, kYawRate) = dens.g_a * dens.g_a * dt;
  return floor_process_noise(Q, dt);
}

ProcessModel<double> drone_process_model(const NoiseDensities& dens, double dt) {
  ProcessModel<double> model = ProcessModel<double>::linear(transition_matrix(dt), build_Q(dens, dt));
  model.normalize = [](VectorX<double>& x) { x(kYaw) = wrap_angle(x(kYaw)); };
  return model;
}

}  // namespace fieldkf::drone
