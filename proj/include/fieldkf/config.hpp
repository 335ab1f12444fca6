#pragma once

// Plain-text key=value configuration. Lines are `key = value`; '#' starts a
// comment. Every key is bound to a typed field with a default; unknown keys
// and malformed values raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fieldkf/drone.hpp"
#include "fieldkf/preprocess.hpp"

namespace fieldkf {

/// Ordered key/value pairs from a file, text, or `--key=value` arguments.
struct KeyValues {
  std::map<std::string, std::string> values;

  static KeyValues parse(const std::string& text, const std::string& source = "<config>");
  static KeyValues load(const std::filesystem::path& path);
  /// Accepts `--key=value` tokens; anything else raises ConfigError.
  static KeyValues from_arguments(const std::vector<std::string>& args);

  void merge(const KeyValues& other);
  std::string to_text() const;
};

/// Typed binding between a key and a config field.
struct ConfigBinding {
  std::string key;
  std::string help;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

/// Applies values to bindings; throws ConfigError on unknown keys or bad values.
void apply_bindings(const std::vector<ConfigBinding>& bindings, const KeyValues& kv, const std::string& what);
std::string bindings_to_text(const std::vector<ConfigBinding>& bindings);

enum class NoiseKind { White, Gaussian, File };

/// Filter-side run parameters. Defaults follow the reference flight setup:
/// Sigma = 1e-2, P0 = Q, dt = 1/15 s, 100 Hz IMU, blur sigma 0.5 px.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path output = "fieldkf_out";

  double sigma = 1e-2;          // white measurement noise magnitude
  std::string p0 = "Q";         // "Q" or a positive number (P0 = value * I)
  double dt = 1.0 / 15.0;
  double imu_rate = 100.0;
  double camera_rate = 15.0;
  drone::NoiseDensities densities;
  PreprocessConfig preprocess;

  NoiseKind noise = NoiseKind::White;
  double kernel_length = 1.0;   // Gaussian kernel length scale, pixels
  std::int64_t kernel_half = 3; // Gaussian kernel half-width, pixels
  std::filesystem::path kernel_file;

  bool deterministic = true;
  std::uint64_t seed = 0;
  std::string map_mode = "sampled";  // sampled | analytic
  std::string orientation = "estimate";  // estimate | imu
  bool dead_reckoning = false;
  double init_offset_x = 0, init_offset_y = 0, init_offset_z = 0, init_offset_yaw = 0;
  double warmup = 0.0;             // seconds excluded from the metrics
  double divergence_factor = 10.0; // x map extent
  double time_budget_ms = 1000.0 / 15.0;

  double sweep_start = 1e-3;
  double sweep_factor = 2.0;
  std::int64_t sweep_count = 14;
  double sweep_cap = 100.0;

  std::vector<ConfigBinding> bindings();
  void apply(const KeyValues& kv) { apply_bindings(bindings(), kv, "run configuration"); }
  std::string to_text() { return bindings_to_text(bindings()); }
  void validate() const;
};

enum class TrajectoryPattern { Lawnmower, Circuit, Waypoints };

/// Simulator parameters, also stored as the dataset's `config` file.
struct SimConfig {
  std::filesystem::path output = "fieldkf_dataset";

  TrajectoryPattern pattern = TrajectoryPattern::Lawnmower;
  double altitude = 40.0;
  double speed = 2.0;
  double duration = 120.0;
  double dt = 1.0 / 15.0;
  double imu_rate = 100.0;
  double leg_length = 60.0;
  double leg_spacing = 20.0;
  double circuit_radius = 25.0;
  std::string waypoints;  // "x1 y1; x2 y2; ..." for the waypoint pattern
  double turn_radius = 5.0;

  std::int64_t rows = 128;
  std::int64_t cols = 128;
  double focal_length = 0.006;
  double sensor_width = 0.0061;

  std::int64_t map_bumps = 400;
  double map_pitch = 0.25;
  double map_margin = 5.0;
  double bump_width_min = 2.0;
  double bump_width_max = 6.0;
  std::string map_mode = "sampled";

  double sigma = 1e-2;
  NoiseKind noise = NoiseKind::White;
  double kernel_length = 1.0;
  std::int64_t kernel_half = 3;
  drone::NoiseDensities densities;

  double image_lo = -0.5;  // 16-bit image encoding range
  double image_hi = 1.5;

  std::uint64_t seed = 1;

  std::vector<ConfigBinding> bindings();
  void apply(const KeyValues& kv) { apply_bindings(bindings(), kv, "simulation configuration"); }
  std::string to_text() { return bindings_to_text(bindings()); }
  void validate() const;
};

std::string to_string(NoiseKind k);
std::string to_string(TrajectoryPattern p);

}  // namespace fieldkf
