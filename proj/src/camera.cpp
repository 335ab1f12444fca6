#include "fieldkf/camera.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fieldkf {

namespace {

constexpr double kBumpCutoff = 8.0;  // widths

}  // namespace

// ---------------------------------------------------------------------------
// AnalyticSurface

AnalyticSurface::AnalyticSurface(std::vector<GaussianBump> bumps, double offset, double scale)
    : bumps_(std::move(bumps)), offset_(offset), scale_(scale) {
  for (const auto& b : bumps_)
    if (!(b.width > 0) || !std::isfinite(b.amplitude) || !b.center.allFinite())
      throw InvalidArgument("Gaussian bumps need finite centers/amplitudes and width > 0");
  build_buckets();
}

void AnalyticSurface::set_normalization(double offset, double scale) {
  if (!std::isfinite(offset) || !std::isfinite(scale)) throw InvalidArgument("normalization must be finite");
  offset_ = offset;
  scale_ = scale;
}

void AnalyticSurface::build_buckets() {
  buckets_.clear();
  if (bumps_.empty()) return;
  double max_w = 0;
  Eigen::Vector2d lo = bumps_.front().center, hi = lo;
  for (const auto& b : bumps_) {
    max_w = std::max(max_w, b.width);
    lo = lo.cwiseMin(b.center);
    hi = hi.cwiseMax(b.center);
  }
  cell_ = kBumpCutoff * max_w;
  lo_ = lo;
  cells_x_ = static_cast<Index>(std::floor((hi.x() - lo.x()) / cell_)) + 1;
  cells_y_ = static_cast<Index>(std::floor((hi.y() - lo.y()) / cell_)) + 1;
  buckets_.assign(static_cast<std::size_t>(cells_x_ * cells_y_), {});
  for (std::size_t k = 0; k < bumps_.size(); ++k) {
    const Index cx = static_cast<Index>(std::floor((bumps_[k].center.x() - lo_.x()) / cell_));
    const Index cy = static_cast<Index>(std::floor((bumps_[k].center.y() - lo_.y()) / cell_));
    buckets_[static_cast<std::size_t>(cy * cells_x_ + cx)].push_back(static_cast<std::uint32_t>(k));
  }
}

template <typename Visit>
void AnalyticSurface::for_each_near(const Eigen::Vector2d& p, Visit&& visit) const {
  if (buckets_.empty()) return;
  const Index cx = static_cast<Index>(std::floor((p.x() - lo_.x()) / cell_));
  const Index cy = static_cast<Index>(std::floor((p.y() - lo_.y()) / cell_));
  for (Index y = std::max<Index>(0, cy - 1); y <= std::min<Index>(cells_y_ - 1, cy + 1); ++y)
    for (Index x = std::max<Index>(0, cx - 1); x <= std::min<Index>(cells_x_ - 1, cx + 1); ++x)
      for (std::uint32_t k : buckets_[static_cast<std::size_t>(y * cells_x_ + x)]) {
        const GaussianBump& b = bumps_[k];
        const Eigen::Vector2d d = p - b.center;
        const double r2 = d.squaredNorm();
        if (r2 < kBumpCutoff * kBumpCutoff * b.width * b.width) visit(b, d, r2);
      }
}

std::pair<double, Eigen::Vector2d> AnalyticSurface::evaluate(const Eigen::Vector2d& p) const {
  double v = 0;
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for_each_near(p, [&](const GaussianBump& b, const Eigen::Vector2d& d, double r2) {
    const double inv_w2 = 1.0 / (b.width * b.width);
    const double e = b.amplitude * std::exp(-0.5 * r2 * inv_w2);
    v += e;
    g -= e * inv_w2 * d;
  });
  return {scale_ * (v - offset_), scale_ * g};
}

double AnalyticSurface::value(const Eigen::Vector2d& p) const { return evaluate(p).first; }

Eigen::Vector2d AnalyticSurface::gradient(const Eigen::Vector2d& p) const { return evaluate(p).second; }

// ---------------------------------------------------------------------------
// Raster

bool Raster::contains(const Eigen::Vector2d& p) const {
  if (rows() < 2 || cols() < 2) return false;
  const Eigen::Vector2d f = (p - origin) / pitch;
  return f.x() >= 0 && f.y() >= 0 && f.x() <= static_cast<double>(cols() - 1) &&
         f.y() <= static_cast<double>(rows() - 1);
}

double Raster::bilinear(const Eigen::Vector2d& p) const {
  const double fx = (p.x() - origin.x()) / pitch, fy = (p.y() - origin.y()) / pitch;
  const Index c0 = std::clamp<Index>(static_cast<Index>(std::floor(fx)), 0, cols() - 2);
  const Index r0 = std::clamp<Index>(static_cast<Index>(std::floor(fy)), 0, rows() - 2);
  const double tx = fx - static_cast<double>(c0), ty = fy - static_cast<double>(r0);
  const double* row0 = values.data() + r0 * cols() + c0;
  const double* row1 = row0 + cols();
  return (1 - ty) * ((1 - tx) * row0[0] + tx * row0[1]) + ty * ((1 - tx) * row1[0] + tx * row1[1]);
}

// ---------------------------------------------------------------------------
// MapModel

std::pair<Raster, Raster> MapModel::gradient_grids(const Raster& r) {
  Raster gx = r, gy = r;
  const Index R = r.rows(), C = r.cols();
  const double h = r.pitch;
  for (Index i = 0; i < R; ++i)
    for (Index j = 0; j < C; ++j) {
      if (C < 2) {
        gx.values(i, j) = 0;
      } else if (j == 0) {
        gx.values(i, j) = (r.values(i, 1) - r.values(i, 0)) / h;
      } else if (j == C - 1) {
        gx.values(i, j) = (r.values(i, C - 1) - r.values(i, C - 2)) / h;
      } else {
        gx.values(i, j) = (r.values(i, j + 1) - r.values(i, j - 1)) / (2 * h);
      }
      if (R < 2) {
        gy.values(i, j) = 0;
      } else if (i == 0) {
        gy.values(i, j) = (r.values(1, j) - r.values(0, j)) / h;
      } else if (i == R - 1) {
        gy.values(i, j) = (r.values(R - 1, j) - r.values(R - 2, j)) / h;
      } else {
        gy.values(i, j) = (r.values(i + 1, j) - r.values(i - 1, j)) / (2 * h);
      }
    }
  return {std::move(gx), std::move(gy)};
}

MapModel MapModel::from_raster(Raster intensity) {
  if (intensity.rows() < 2 || intensity.cols() < 2) throw InvalidArgument("map raster must be at least 2 x 2");
  if (!(intensity.pitch > 0)) throw InvalidArgument("map pitch must be > 0");
  if (!intensity.values.allFinite()) throw InvalidArgument("map raster has non-finite samples");
  const double lo = intensity.values.minCoeff(), hi = intensity.values.maxCoeff();
  if (lo < -1e-9 || hi > 1 + 1e-9)
    throw InvalidArgument("map intensities must lie in [0, 1] (found [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "])");
  MapModel m;
  m.intensity_ = std::move(intensity);
  std::tie(m.grad_x_, m.grad_y_) = gradient_grids(m.intensity_);
  return m;
}

MapModel MapModel::from_analytic(AnalyticSurface surface, Eigen::Vector2d origin, Eigen::Vector2d extent,
                                 double pitch) {
  if (!(pitch > 0) || !(extent.x() > 0) || !(extent.y() > 0))
    throw InvalidArgument("analytic map needs positive extent and pitch");
  Raster r;
  r.pitch = pitch;
  r.origin = origin;
  const Index cols = static_cast<Index>(std::floor(extent.x() / pitch + 1e-9)) + 1;
  const Index rows = static_cast<Index>(std::floor(extent.y() / pitch + 1e-9)) + 1;
  r.values.resize(rows, cols);
  detail::parallel_for(rows, [&](Index b, Index e) {
    for (Index i = b; i < e; ++i)
      for (Index j = 0; j < cols; ++j)
        r.values(i, j) = surface.value(origin + Eigen::Vector2d(static_cast<double>(j), static_cast<double>(i)) * pitch);
  }, 8);
  return from_raster_and_surface(std::move(r), std::move(surface));
}

MapModel MapModel::from_raster_and_surface(Raster intensity, AnalyticSurface surface) {
  if (!intensity.values.allFinite()) throw InvalidArgument("map raster has non-finite samples");
  // The surface may overshoot [0, 1] slightly between raster samples, so the
  // range check is relaxed here and enforced on the stored raster only.
  intensity.values = intensity.values.cwiseMax(0.0).cwiseMin(1.0);
  MapModel m = from_raster(std::move(intensity));
  m.surface_ = std::move(surface);
  m.mode_ = MapQueryMode::Analytic;
  return m;
}

void MapModel::set_elevation(Raster elevation) {
  if (elevation.rows() < 2 || elevation.cols() < 2 || !(elevation.pitch > 0))
    throw InvalidArgument("elevation raster must be at least 2 x 2 with pitch > 0");
  if (!elevation.values.allFinite()) throw InvalidArgument("elevation raster has non-finite samples");
  std::tie(elev_grad_x_, elev_grad_y_) = gradient_grids(elevation);
  elevation_ = std::move(elevation);
}

void MapModel::set_query_mode(MapQueryMode mode) {
  if (mode == MapQueryMode::Analytic && !surface_) throw InvalidArgument("map has no analytic form");
  mode_ = mode;
}

MapQuery MapModel::query_sampled(const Eigen::Vector2d& p) const {
  MapQuery q;
  if (!intensity_.contains(p)) return q;
  q.out_of_map = false;
  q.intensity = intensity_.bilinear(p);
  q.gradient = {grad_x_.bilinear(p), grad_y_.bilinear(p)};
  return q;
}

MapQuery MapModel::query_analytic(const Eigen::Vector2d& p) const {
  if (!surface_) throw InvalidArgument("map has no analytic form");
  MapQuery q;
  if (!intensity_.contains(p)) return q;
  q.out_of_map = false;
  std::tie(q.intensity, q.gradient) = surface_->evaluate(p);
  return q;
}

MapQuery MapModel::query(const Eigen::Vector2d& p) const {
  return mode_ == MapQueryMode::Analytic ? query_analytic(p) : query_sampled(p);
}

MapQuery MapModel::elevation(const Eigen::Vector2d& p) const {
  MapQuery q;
  q.out_of_map = false;
  if (!elevation_ || !elevation_->contains(p)) return q;
  q.intensity = elevation_->bilinear(p);
  q.gradient = {elev_grad_x_.bilinear(p), elev_grad_y_.bilinear(p)};
  return q;
}

// ---------------------------------------------------------------------------
// Camera

CameraIntrinsics CameraIntrinsics::centered(Index rows, Index cols, double focal_length, double sensor_width) {
  CameraIntrinsics c;
  c.rows = rows;
  c.cols = cols;
  c.focal_length = focal_length;
  c.sensor_pitch = sensor_width / static_cast<double>(cols);
  c.cx = 0.5 * static_cast<double>(cols - 1);
  c.cy = 0.5 * static_cast<double>(rows - 1);
  c.validate();
  return c;
}

void CameraIntrinsics::validate() const {
  if (!(focal_length > 0)) throw InvalidArgument("focal length must be > 0");
  if (!(sensor_pitch > 0)) throw InvalidArgument("sensor pixel pitch must be > 0");
  if (rows <= 0 || cols <= 0) throw InvalidArgument("image dimensions must be positive");
  if (!(cx >= 0 && cx <= static_cast<double>(cols - 1) && cy >= 0 && cy <= static_cast<double>(rows - 1)))
    throw InvalidArgument("principal point must lie inside the image");
}

namespace {

void check_state(const VectorX<double>& x) {
  if (x.size() != drone::kStateDim) throw InvalidArgument("camera model expects the 11-entry drone state");
}

void check_grid(const FieldGrid& grid, const CameraIntrinsics& intr) {
  if (grid.rows != intr.rows || grid.cols != intr.cols)
    throw GridMismatchError("measurement grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                            " does not match the camera " + std::to_string(intr.rows) + "x" +
                            std::to_string(intr.cols));
}

/// Per-frame quantities shared by every pixel.
struct Pose {
  Eigen::Vector2d rho;
  Eigen::Matrix2d R, dR;
  double height;     // rho_z - e
  Eigen::Vector2d de;  // terrain gradient under the camera
};

Pose pose_of(const VectorX<double>& x, const MapModel& map) {
  check_state(x);
  Pose s;
  s.rho = x.segment<2>(drone::kPos);
  const auto rot = drone::rotation_and_derivative(x(drone::kYaw));
  s.R = rot.R;
  s.dR = rot.dR;
  const MapQuery e = map.elevation(s.rho);
  s.height = x(drone::kPos + 2) - e.intensity;
  s.de = e.gradient;
  if (!(s.height > 0))
    throw CameraBelowTerrainError("camera is at or below the terrain (height above ground " +
                                  std::to_string(s.height) + " m)");
  return s;
}

}  // namespace

double camera_height(const VectorX<double>& x, const MapModel& map) { return pose_of(x, map).height; }

WorldPoint world_from_image(const VectorX<double>& x, const Eigen::Vector2d& i_metric, const CameraIntrinsics& intr,
                            const MapModel& map) {
  const Pose s = pose_of(x, map);
  WorldPoint w;
  w.p = s.rho + s.R * i_metric * (s.height / intr.focal_length);
  w.out_of_map = !map.contains(w.p);
  return w;
}

Eigen::Matrix<double, 2, drone::kStateDim> coord_jacobian(const VectorX<double>& x, const Eigen::Vector2d& i_metric,
                                                         const CameraIntrinsics& intr, const MapModel& map) {
  const Pose s = pose_of(x, map);
  const Eigen::Vector2d Ri = s.R * i_metric / intr.focal_length;
  Eigen::Matrix<double, 2, drone::kStateDim> J = Eigen::Matrix<double, 2, drone::kStateDim>::Zero();
  J.block<2, 2>(0, drone::kPos) = Eigen::Matrix2d::Identity() - Ri * s.de.transpose();
  J.col(drone::kPos + 2) = Ri;
  J.col(drone::kYaw) = s.dR * i_metric * (s.height / intr.focal_length);
  return J;
}

MapQuery map_query(const MapModel& map, const Eigen::Vector2d& p) { return map.query(p); }

std::pair<ImageField<double>, JacobianField<double>> render_with_jacobian(const VectorX<double>& x,
                                                                         const FieldGrid& grid,
                                                                         const CameraIntrinsics& intr,
                                                                         const MapModel& map, bool compact) {
  check_grid(grid, intr);
  const Pose s = pose_of(x, map);
  ImageField<double> img(grid, 1);
  JacobianField<double> G;
  G.grid = grid;
  G.channels = 1;
  if (compact) {
    G.stacked.resize(grid.size(), 4);
  } else {
    G.stacked.setZero(grid.size(), drone::kStateDim);
  }
  const Index cx = drone::kPos, cy = drone::kPos + 1, cz = drone::kPos + 2, ct = compact ? 3 : drone::kYaw;
  const double k = s.height / intr.focal_length;
  const Eigen::Matrix2d A = s.R * (intr.sensor_pitch * k);      // pixel offset -> world offset
  const Eigen::Matrix2d Az = s.R * (intr.sensor_pitch / intr.focal_length);
  const Eigen::Matrix2d At = s.dR * (intr.sensor_pitch * k);
  const bool sloped = !s.de.isZero(0.0);

  detail::parallel_for(grid.rows, [&](Index rb, Index re) {
    for (Index r = rb; r < re; ++r) {
      const double v = static_cast<double>(r) - intr.cy;
      for (Index c = 0; c < grid.cols; ++c) {
        const Index p = r * grid.cols + c;
        const Eigen::Vector2d off(static_cast<double>(c) - intr.cx, v);
        const Eigen::Vector2d w = s.rho + A * off;
        const MapQuery q = map.query(w);
        double* row = G.stacked.row(p).data();
        if (q.out_of_map) {
          img.valid[static_cast<std::size_t>(p)] = 0;
          row[cx] = row[cy] = row[cz] = row[ct] = 0.0;
          continue;
        }
        img.values(p, 0) = q.intensity;
        const Eigen::Vector2d& g = q.gradient;
        if (sloped) {
          const Eigen::Vector2d Ri = Az * off;
          const Eigen::Vector2d gxy = g - s.de * g.dot(Ri);
          row[cx] = gxy.x();
          row[cy] = gxy.y();
        } else {
          row[cx] = g.x();
          row[cy] = g.y();
        }
        row[cz] = g.dot(Az * off);
        row[ct] = g.dot(At * off);
      }
    }
  }, 16);
  return {std::move(img), std::move(G)};
}

ImageField<double> render_expected(const VectorX<double>& x, const FieldGrid& grid, const CameraIntrinsics& intr,
                                   const MapModel& map) {
  check_grid(grid, intr);
  const Pose s = pose_of(x, map);
  ImageField<double> img(grid, 1);
  const Eigen::Matrix2d A = s.R * (intr.sensor_pitch * s.height / intr.focal_length);
  detail::parallel_for(grid.rows, [&](Index rb, Index re) {
    for (Index r = rb; r < re; ++r)
      for (Index c = 0; c < grid.cols; ++c) {
        const Index p = r * grid.cols + c;
        const Eigen::Vector2d w =
            s.rho + A * Eigen::Vector2d(static_cast<double>(c) - intr.cx, static_cast<double>(r) - intr.cy);
        const MapQuery q = map.query(w);
        if (q.out_of_map) {
          img.valid[static_cast<std::size_t>(p)] = 0;
        } else {
          img.values(p, 0) = q.intensity;
        }
      }
  }, 16);
  return img;
}

JacobianField<double> measurement_jacobian(const VectorX<double>& x, const FieldGrid& grid,
                                           const CameraIntrinsics& intr, const MapModel& map) {
  return render_with_jacobian(x, grid, intr, map).second;
}

ImageField<double> CameraMeasurementModel::predict(const VectorX<double>& x, const FieldGrid& grid) const {
  return render_expected(x, grid, intr_, *map_);
}

JacobianField<double> CameraMeasurementModel::jacobian(const VectorX<double>& x, const FieldGrid& grid) const {
  return measurement_jacobian(x, grid, intr_, *map_);
}

}  // namespace fieldkf
