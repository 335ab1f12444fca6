#pragma once

// Downward-looking pinhole camera over a planar intensity map.
//
// A pixel at metric sensor offset i sees the world point
//   p = rho_xy + R(theta) i (rho_z - e) / L_f,
// and the predicted intensity is C(p). The per-pixel measurement Jacobian is
// grad C(p)^T J_p with J_p the 2 x 11 derivative of p in the drone state.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "fieldkf/core_filter.hpp"
#include "fieldkf/drone.hpp"
#include "fieldkf/field.hpp"

namespace fieldkf {

struct GaussianBump {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double width = 1.0;      // standard deviation, meters
  double amplitude = 1.0;
};

/// C(p) = scale * (sum_k a_k exp(-|p - c_k|^2 / (2 w_k^2)) - offset).
/// Bumps are bucketed on a coarse grid; each is truncated at 8 widths,
/// where its relative contribution is below 1e-13.
class AnalyticSurface {
 public:
  AnalyticSurface() = default;
  AnalyticSurface(std::vector<GaussianBump> bumps, double offset = 0.0, double scale = 1.0);

  double value(const Eigen::Vector2d& p) const;
  Eigen::Vector2d gradient(const Eigen::Vector2d& p) const;
  /// Value and gradient in one pass.
  std::pair<double, Eigen::Vector2d> evaluate(const Eigen::Vector2d& p) const;

  const std::vector<GaussianBump>& bumps() const { return bumps_; }
  double offset() const { return offset_; }
  double scale() const { return scale_; }
  void set_normalization(double offset, double scale);

 private:
  void build_buckets();
  template <typename Visit>
  void for_each_near(const Eigen::Vector2d& p, Visit&& visit) const;

  std::vector<GaussianBump> bumps_;
  double offset_ = 0.0;
  double scale_ = 1.0;
  double cell_ = 1.0;
  Eigen::Vector2d lo_ = Eigen::Vector2d::Zero();
  Index cells_x_ = 0, cells_y_ = 0;
  std::vector<std::vector<std::uint32_t>> buckets_;
};

/// Raster on a world-aligned lattice: sample (r, c) sits at
/// (origin.x + c * pitch, origin.y + r * pitch). Row index follows y.
struct Raster {
  RowMatrixX<double> values;
  double pitch = 1.0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  Eigen::Vector2d extent() const {
    return {static_cast<double>(cols() - 1) * pitch, static_cast<double>(rows() - 1) * pitch};
  }
  bool contains(const Eigen::Vector2d& p) const;
  /// Bilinear interpolation; caller checks contains().
  double bilinear(const Eigen::Vector2d& p) const;
};

struct MapQuery {
  double intensity = 0.0;
  Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
  bool out_of_map = true;
};

enum class MapQueryMode { Sampled, Analytic };

/// Planar grayscale map C with gradient access and optional elevation e.
/// Immutable after construction; queries are pure and thread-safe.
class MapModel {
 public:
  MapModel() = default;

  /// Sampled map; intensities must lie in [0, 1].
  static MapModel from_raster(Raster intensity);
  /// Rasterizes the surface on [origin, origin + extent] at the given pitch.
  /// Queries default to the exact analytic form.
  static MapModel from_analytic(AnalyticSurface surface, Eigen::Vector2d origin, Eigen::Vector2d extent, double pitch);
  /// Attaches a surface to an existing raster (e.g. one read back from disk).
  static MapModel from_raster_and_surface(Raster intensity, AnalyticSurface surface);

  void set_elevation(Raster elevation);
  void set_query_mode(MapQueryMode mode);
  MapQueryMode query_mode() const { return mode_; }

  MapQuery query(const Eigen::Vector2d& p) const;
  MapQuery query_sampled(const Eigen::Vector2d& p) const;
  MapQuery query_analytic(const Eigen::Vector2d& p) const;
  /// Terrain height and its gradient at p; zeros where no elevation is set.
  MapQuery elevation(const Eigen::Vector2d& p) const;

  bool contains(const Eigen::Vector2d& p) const { return intensity_.contains(p); }
  const Raster& intensity() const { return intensity_; }
  const std::optional<AnalyticSurface>& surface() const { return surface_; }
  const std::optional<Raster>& elevation_raster() const { return elevation_; }
  Eigen::Vector2d origin() const { return intensity_.origin; }
  Eigen::Vector2d extent() const { return intensity_.extent(); }
  double pitch() const { return intensity_.pitch; }

 private:
  static std::pair<Raster, Raster> gradient_grids(const Raster& r);

  Raster intensity_;
  Raster grad_x_, grad_y_;
  std::optional<AnalyticSurface> surface_;
  std::optional<Raster> elevation_;
  Raster elev_grad_x_, elev_grad_y_;
  MapQueryMode mode_ = MapQueryMode::Sampled;
};

struct CameraIntrinsics {
  double focal_length = 0.006;  // meters
  double sensor_pitch = 0.0061 / 612.0;  // meters per pixel
  Index rows = 512;
  Index cols = 612;
  double cx = 305.5;  // principal point, pixels (column)
  double cy = 255.5;  // principal point, pixels (row)

  /// Defaults for a rows x cols sensor 6.1 mm wide behind a 6 mm lens, with
  /// the principal point at the image center.
  static CameraIntrinsics centered(Index rows, Index cols, double focal_length = 0.006, double sensor_width = 0.0061);

  void validate() const;
  /// Metric sensor offset of pixel (r, c): ((c - cx) s, (r - cy) s).
  Eigen::Vector2d metric(Index r, Index c) const {
    return {(static_cast<double>(c) - cx) * sensor_pitch, (static_cast<double>(r) - cy) * sensor_pitch};
  }
  /// Field grid in pixel units (pitch 1, cell area 1).
  FieldGrid grid() const { return FieldGrid::square_pixels(rows, cols, 1.0); }
};

struct WorldPoint {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  bool out_of_map = false;
};

/// Height of the camera above the terrain under it; throws when <= 0.
double camera_height(const VectorX<double>& x, const MapModel& map);

WorldPoint world_from_image(const VectorX<double>& x, const Eigen::Vector2d& i_metric, const CameraIntrinsics& intr,
                            const MapModel& map);

/// 2 x 11 derivative of world_from_image in the state.
Eigen::Matrix<double, 2, drone::kStateDim> coord_jacobian(const VectorX<double>& x, const Eigen::Vector2d& i_metric,
                                                         const CameraIntrinsics& intr, const MapModel& map);

MapQuery map_query(const MapModel& map, const Eigen::Vector2d& p);

/// g(x, .): predicted intensity per pixel; out-of-map pixels are 0 and invalid.
ImageField<double> render_expected(const VectorX<double>& x, const FieldGrid& grid, const CameraIntrinsics& intr,
                                   const MapModel& map);

/// G(x, .) = grad C(p)^T J_p per pixel; zero rows where the pixel is off the map.
JacobianField<double> measurement_jacobian(const VectorX<double>& x, const FieldGrid& grid,
                                           const CameraIntrinsics& intr, const MapModel& map);

/// States the camera Jacobian depends on: position and yaw.
inline std::vector<Index> camera_state_support() {
  return {drone::kPos, drone::kPos + 1, drone::kPos + 2, drone::kYaw};
}

/// Both of the above in one pass (shares the world-point and map lookups).
/// With compact = true, G holds only the camera_state_support() columns.
std::pair<ImageField<double>, JacobianField<double>> render_with_jacobian(const VectorX<double>& x,
                                                                         const FieldGrid& grid,
                                                                         const CameraIntrinsics& intr,
                                                                         const MapModel& map, bool compact = false);

class CameraMeasurementModel : public MeasurementModel<double> {
 public:
  CameraMeasurementModel(const MapModel& map, CameraIntrinsics intr) : map_(&map), intr_(intr) { intr_.validate(); }

  ImageField<double> predict(const VectorX<double>& x, const FieldGrid& grid) const override;
  JacobianField<double> jacobian(const VectorX<double>& x, const FieldGrid& grid) const override;
  std::vector<Index> state_support() const override { return camera_state_support(); }
  std::pair<ImageField<double>, JacobianField<double>> evaluate(const VectorX<double>& x,
                                                                const FieldGrid& grid) const override {
    return render_with_jacobian(x, grid, intr_, *map_, true);
  }

  const CameraIntrinsics& intrinsics() const { return intr_; }
  const MapModel& map() const { return *map_; }

 private:
  const MapModel* map_;
  CameraIntrinsics intr_;
};

}  // namespace fieldkf
