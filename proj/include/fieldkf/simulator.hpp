#pragma once

// Synthetic ground truth: Gaussian-bump maps, constant-speed planar paths,
// truth states that satisfy the drone recursion exactly, noisy IMU streams
// and rendered noisy frames.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fieldkf/camera.hpp"
#include "fieldkf/config.hpp"
#include "fieldkf/dataset.hpp"
#include "fieldkf/drone.hpp"
#include "fieldkf/spectral.hpp"

namespace fieldkf::sim {

/// Seed for a named sub-stream of a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Sum of K Gaussian bumps over [origin, origin + extent], normalized so
/// the raster spans [0, 1]. K = 0 gives the constant map 0.5.
MapModel generate_map(std::int64_t bumps, Eigen::Vector2d origin, Eigen::Vector2d extent, double pitch,
                      std::uint64_t seed, double width_min = 2.0, double width_max = 6.0);

struct TrajectorySpec {
  TrajectoryPattern pattern = TrajectoryPattern::Lawnmower;
  double altitude = 40.0;
  double speed = 2.0;
  double duration = 120.0;
  double dt = 1.0 / 15.0;
  double leg_length = 60.0;
  double leg_spacing = 20.0;
  double circuit_radius = 25.0;
  std::vector<Eigen::Vector2d> waypoints;
  double turn_radius = 5.0;
  std::uint64_t seed = 0;

  static TrajectorySpec from(const SimConfig& cfg);
  void validate() const;
};

/// Arc-length parametrized planar path made of lines and circular arcs.
class PlanarPath {
 public:
  void add_line(Eigen::Vector2d from, Eigen::Vector2d to);
  /// Arc about center from angle a0 sweeping by sweep radians (sign = direction).
  void add_arc(Eigen::Vector2d center, double radius, double a0, double sweep);
  void set_closed(bool closed) { closed_ = closed; }

  double length() const { return total_; }
  Eigen::Vector2d point(double s) const;
  Eigen::Vector2d tangent(double s) const;

 private:
  struct Segment {
    bool arc = false;
    Eigen::Vector2d a = Eigen::Vector2d::Zero();  // line start or arc center
    Eigen::Vector2d d = Eigen::Vector2d::Zero();  // line unit direction
    double radius = 0, a0 = 0, sweep = 0;
    double length = 0, s0 = 0;
  };
  const Segment& locate(double& s) const;

  std::vector<Segment> segments_;
  double total_ = 0;
  bool closed_ = false;
};

PlanarPath build_path(const TrajectorySpec& spec);

struct Trajectory {
  std::vector<double> times;
  std::vector<VectorX<double>> states;   // 11-vectors, recursion-consistent
  std::vector<VectorX<double>> inputs;   // u_k with states[k+1] = F states[k] + u_k (yaw wrapped)
};

/// States at t_k = k dt, k < floor(duration / dt). Throws when bounds are
/// given and the camera footprint leaves them.
Trajectory generate_trajectory(const TrajectorySpec& spec);

/// Half-diagonal of the ground footprint at a given height.
double footprint_half_diagonal(const CameraIntrinsics& intr, double height);

/// Checks that every footprint stays inside the map; throws InvalidArgument otherwise.
void check_map_margin(const Trajectory& traj, const CameraIntrinsics& intr, const MapModel& map);

/// IMU samples at j / imu_rate, j >= 1, covering the last frame. Samples in
/// (t_{k-1}, t_k] carry the truth acceleration and yaw rate of state k in the
/// body frame of yaw theta_k, gravity added to z, plus white noise with
/// standard deviation density * sqrt(imu_rate).
std::vector<ImuSample> synthesize_imu(const Trajectory& truth, const drone::NoiseDensities& dens, double imu_rate,
                                      std::uint64_t seed);

/// Rendered frame at the true state plus a noise field.
ImageField<double> render_measurement(const VectorX<double>& truth_state, const MapModel& map,
                                      const CameraIntrinsics& intr, const NoiseModel<double>& noise,
                                      std::uint64_t seed);

/// Builds the whole in-memory dataset; frames render lazily and
/// deterministically from the configuration's seed.
Dataset simulate(const SimConfig& cfg);

/// Writes the dataset layout into dir (created if needed). Returns warnings.
std::vector<std::string> write_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// FNV-1a 64-bit hash over the dataset files in a fixed order.
std::uint64_t dataset_hash(const std::filesystem::path& dir);

/// Noise model described by a simulation configuration.
NoiseModel<double> noise_model_of(const SimConfig& cfg);

}  // namespace fieldkf::sim
