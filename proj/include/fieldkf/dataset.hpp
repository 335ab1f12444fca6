#pragma once

// On-disk dataset layout:
//   map.pgm, map.meta      intensity raster + geometry, optional bump list and elevation
//   images/%06d.pgm        16-bit frames, intensity encoded over [image_lo, image_hi]
//   imu.csv                t,ax,ay,az,gz[,qw,qx,qy,qz]
//   truth.csv              t,x,y,z,yaw  (one row per frame)
//   config                 key = value simulation/camera parameters
// A Dataset is the validated in-memory handle; frames load lazily.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fieldkf/camera.hpp"
#include "fieldkf/config.hpp"
#include "fieldkf/drone.hpp"
#include "fieldkf/io.hpp"

namespace fieldkf {

using drone::ImuSample;

struct TruthRow {
  double t = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0;
};

/// IMU samples [begin, end) inside (t_{k-1}, t_k] for frame k.
struct ImuSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool stale = false;
};

struct Dataset {
  std::filesystem::path root;  // empty for in-memory datasets
  SimConfig config;
  std::shared_ptr<const MapModel> map;
  CameraIntrinsics intrinsics;
  double dt = 1.0 / 15.0;

  std::vector<TruthRow> truth;  // one per frame
  std::vector<ImuSample> imu;
  std::vector<ImuSpan> alignment;
  std::vector<std::string> warnings;

  /// Full 11-entry truth states when known (simulated data only).
  std::vector<VectorX<double>> truth_states;

  std::function<ImageField<double>(std::size_t)> frame_loader;

  std::size_t frame_count() const { return truth.size(); }
  double frame_time(std::size_t k) const { return truth[k].t; }
  ImageField<double> frame(std::size_t k) const;
  std::span<const ImuSample> imu_for(std::size_t k) const;

  /// Fills alignment and staleness warnings from truth times and IMU stream.
  void build_alignment();
};

/// Validates and opens a dataset directory. Schema problems are collected
/// and reported together in one DatasetError.
Dataset ingest(const std::filesystem::path& root);

/// Initial 11-state from truth rows 0-2: velocity, acceleration and yaw rate
/// by forward differences, matching the simulator's recursion.
VectorX<double> truth_initial_state(const Dataset& ds);

/// Encodes an intensity image into 16-bit samples over [lo, hi], and back.
io::PgmImage encode_frame(const ImageField<double>& img, double lo, double hi);
ImageField<double> decode_frame(const io::PgmImage& pgm, double lo, double hi);

/// Map sidecar text. Elevation, when present, is written as elevation.pgm.
std::string map_meta_text(const MapModel& map, double elevation_lo = 0, double elevation_hi = 0);

/// Writes map.pgm, map.meta (and elevation.pgm) into dir.
void write_map(const std::filesystem::path& dir, const MapModel& map);
/// Reads a map written by write_map. Bump lists are re-rasterized so that
/// sampled queries match the generator exactly.
MapModel read_map(const std::filesystem::path& dir);

}  // namespace fieldkf
