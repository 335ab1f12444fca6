#include "fieldkf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "fieldkf/io.hpp"

namespace fieldkf::sim {

namespace fs = std::filesystem;
using drone::kPi;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MapModel generate_map(std::int64_t bumps, Eigen::Vector2d origin, Eigen::Vector2d extent, double pitch,
                      std::uint64_t seed, double width_min, double width_max) {
  if (bumps < 0) throw InvalidArgument("bump count must be >= 0");
  if (!(width_min > 0) || width_max < width_min) throw InvalidArgument("invalid bump width range");
  if (bumps == 0) return MapModel::from_analytic(AnalyticSurface({}, -0.5, 1.0), origin, extent, pitch);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(origin.x() - 2 * width_max, origin.x() + extent.x() + 2 * width_max);
  std::uniform_real_distribution<double> uy(origin.y() - 2 * width_max, origin.y() + extent.y() + 2 * width_max);
  std::uniform_real_distribution<double> uw(width_min, width_max);
  std::uniform_real_distribution<double> ua(0.5, 1.0);
  std::vector<GaussianBump> list(static_cast<std::size_t>(bumps));
  for (auto& b : list) {
    b.center = {ux(rng), uy(rng)};
    b.width = uw(rng);
    b.amplitude = ua(rng);
  }

  // Raw raster, then the affine normalization applied with the same
  // arithmetic the surface uses, so raster and analytic values agree bitwise.
  AnalyticSurface raw(list, 0.0, 1.0);
  Raster r;
  r.pitch = pitch;
  r.origin = origin;
  const Index cols = static_cast<Index>(std::floor(extent.x() / pitch + 1e-9)) + 1;
  const Index rows = static_cast<Index>(std::floor(extent.y() / pitch + 1e-9)) + 1;
  r.values.resize(rows, cols);
  detail::parallel_for(rows, [&](Index b, Index e) {
    for (Index i = b; i < e; ++i)
      for (Index j = 0; j < cols; ++j)
        r.values(i, j) = raw.value(origin + Eigen::Vector2d(static_cast<double>(j), static_cast<double>(i)) * pitch);
  }, 8);
  const double lo = r.values.minCoeff(), hi = r.values.maxCoeff();
  const double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
  AnalyticSurface surface(std::move(list), lo, scale);
  r.values = r.values.unaryExpr([&](double v) { return scale * (v - lo); });
  return MapModel::from_raster_and_surface(std::move(r), std::move(surface));
}

// ---------------------------------------------------------------------------
// Paths

void PlanarPath::add_line(Eigen::Vector2d from, Eigen::Vector2d to) {
  Segment s;
  s.a = from;
  s.length = (to - from).norm();
  if (s.length <= 0) return;
  s.d = (to - from) / s.length;
  s.s0 = total_;
  total_ += s.length;
  segments_.push_back(s);
}

void PlanarPath::add_arc(Eigen::Vector2d center, double radius, double a0, double sweep) {
  Segment s;
  s.arc = true;
  s.a = center;
  s.radius = radius;
  s.a0 = a0;
  s.sweep = sweep;
  s.length = radius * std::abs(sweep);
  if (s.length <= 0) return;
  s.s0 = total_;
  total_ += s.length;
  segments_.push_back(s);
}

const PlanarPath::Segment& PlanarPath::locate(double& s) const {
  if (segments_.empty()) throw InvalidArgument("empty path");
  if (closed_) {
    s = std::fmod(s, total_);
    if (s < 0) s += total_;
  }
  auto it = std::upper_bound(segments_.begin(), segments_.end(), s,
                             [](double v, const Segment& seg) { return v < seg.s0; });
  const Segment& seg = it == segments_.begin() ? segments_.front() : *std::prev(it);
  s -= seg.s0;
  return seg;
}

Eigen::Vector2d PlanarPath::point(double s) const {
  const Segment& seg = locate(s);
  if (!seg.arc) return seg.a + seg.d * s;
  if (s > seg.length) {
    // Past the end of a terminal arc: continue straight along the tangent.
    double end = seg.length;
    const Eigen::Vector2d p = seg.a + seg.radius * Eigen::Vector2d(std::cos(seg.a0 + seg.sweep), std::sin(seg.a0 + seg.sweep));
    return p + tangent(seg.s0 + end) * (s - end);
  }
  const double a = seg.a0 + seg.sweep * (s / seg.length);
  return seg.a + seg.radius * Eigen::Vector2d(std::cos(a), std::sin(a));
}

Eigen::Vector2d PlanarPath::tangent(double s) const {
  const Segment& seg = locate(s);
  if (!seg.arc) return seg.d;
  const double a = seg.a0 + seg.sweep * (std::min(s, seg.length) / seg.length);
  const double dir = seg.sweep > 0 ? 1.0 : -1.0;
  return dir * Eigen::Vector2d(-std::sin(a), std::cos(a));
}

TrajectorySpec TrajectorySpec::from(const SimConfig& cfg) {
  TrajectorySpec s;
  s.pattern = cfg.pattern;
  s.altitude = cfg.altitude;
  s.speed = cfg.speed;
  s.duration = cfg.duration;
  s.dt = cfg.dt;
  s.leg_length = cfg.leg_length;
  s.leg_spacing = cfg.leg_spacing;
  s.circuit_radius = cfg.circuit_radius;
  s.turn_radius = cfg.turn_radius;
  s.seed = cfg.seed;
  std::istringstream in(cfg.waypoints);
  std::string item;
  while (std::getline(in, item, ';')) {
    std::istringstream pt(item);
    double x, y;
    if (pt >> x >> y) s.waypoints.emplace_back(x, y);
    else if (item.find_first_not_of(" \t") != std::string::npos)
      throw ConfigError("waypoints: cannot parse '" + item + "' (expected 'x y')");
  }
  return s;
}

void TrajectorySpec::validate() const {
  if (!(altitude > 0)) throw InvalidArgument("trajectory altitude must be > 0");
  if (!(speed >= 0)) throw InvalidArgument("trajectory speed must be >= 0");
  if (!(duration > 0) || !(dt > 0)) throw InvalidArgument("trajectory duration and dt must be > 0");
  if (pattern == TrajectoryPattern::Waypoints && waypoints.size() < 3)
    throw InvalidArgument("waypoint pattern needs at least 3 waypoints");
}

PlanarPath build_path(const TrajectorySpec& spec) {
  PlanarPath path;
  const double needed = spec.speed * (spec.duration + 2 * spec.dt) + 1.0;
  switch (spec.pattern) {
    case TrajectoryPattern::Lawnmower: {
      const double L = spec.leg_length, D = spec.leg_spacing, r = 0.5 * D;
      for (int i = 0; path.length() < needed; ++i) {
        const double y = i * D;
        if (i % 2 == 0) {
          path.add_line({0, y}, {L, y});
          path.add_arc({L, y + r}, r, -0.5 * kPi, kPi);
        } else {
          path.add_line({L, y}, {0, y});
          path.add_arc({0, y + r}, r, -0.5 * kPi, -kPi);
        }
      }
      break;
    }
    case TrajectoryPattern::Circuit:
      path.add_arc({0, 0}, spec.circuit_radius, -0.5 * kPi, 2 * kPi);
      path.set_closed(true);
      break;
    case TrajectoryPattern::Waypoints: {
      const auto& P = spec.waypoints;
      const std::size_t n = P.size();
      std::vector<Eigen::Vector2d> starts(n), ends(n);
      struct Fillet {
        Eigen::Vector2d center;
        double a0 = 0, sweep = 0;
      };
      std::vector<Fillet> fillets(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d& prev = P[(i + n - 1) % n];
        const Eigen::Vector2d& next = P[(i + 1) % n];
        const Eigen::Vector2d d1 = (P[i] - prev).normalized(), d2 = (next - P[i]).normalized();
        const double phi = std::atan2(d1.x() * d2.y() - d1.y() * d2.x(), d1.dot(d2));
        const double t = spec.turn_radius * std::tan(0.5 * std::abs(phi));
        if (t > 0.5 * (P[i] - prev).norm() || t > 0.5 * (next - P[i]).norm())
          throw InvalidArgument("turn radius too large for the waypoint spacing");
        starts[i] = P[i] - d1 * t;
        ends[i] = P[i] + d2 * t;
        const Eigen::Vector2d normal = phi > 0 ? Eigen::Vector2d(-d1.y(), d1.x()) : Eigen::Vector2d(d1.y(), -d1.x());
        fillets[i].center = starts[i] + spec.turn_radius * normal;
        const Eigen::Vector2d rel = starts[i] - fillets[i].center;
        fillets[i].a0 = std::atan2(rel.y(), rel.x());
        fillets[i].sweep = phi;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        path.add_line(ends[i], starts[j]);
        path.add_arc(fillets[j].center, spec.turn_radius, fillets[j].a0, fillets[j].sweep);
      }
      path.set_closed(true);
      break;
    }
  }
  return path;
}

Trajectory generate_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  const std::size_t K = static_cast<std::size_t>(std::floor(spec.duration / spec.dt + 1e-9));
  if (K < 3) throw InvalidArgument("trajectory needs at least 3 frames");
  const bool hover = spec.speed == 0;
  const PlanarPath path = hover ? PlanarPath{} : build_path(spec);

  auto position = [&](double t) -> Eigen::Vector2d { return hover ? Eigen::Vector2d::Zero() : path.point(spec.speed * t); };
  auto velocity = [&](double t) -> Eigen::Vector2d {
    return hover ? Eigen::Vector2d::Zero() : Eigen::Vector2d(spec.speed * path.tangent(spec.speed * t));
  };
  auto heading = [&](double t) {
    if (hover) return 0.0;
    const Eigen::Vector2d d = path.tangent(spec.speed * t);
    return std::atan2(d.y(), d.x());
  };

  // Forward-difference acceleration and yaw rate for k = 0..K.
  std::vector<Eigen::Vector2d> acc(K + 1);
  std::vector<double> rate(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    const double t0 = k * spec.dt, t1 = (k + 1) * spec.dt;
    acc[k] = (velocity(t1) - velocity(t0)) / spec.dt;
    rate[k] = drone::wrap_angle(heading(t1) - heading(t0)) / spec.dt;
  }

  Trajectory traj;
  const MatrixX<double> F = drone::transition_matrix(spec.dt);
  VectorX<double> x = VectorX<double>::Zero(drone::kStateDim);
  x.segment<2>(drone::kPos) = position(0);
  x(drone::kPos + 2) = spec.altitude;
  x.segment<2>(drone::kVel) = velocity(0);
  x.segment<2>(drone::kAcc) = acc[0];
  x(drone::kYaw) = drone::wrap_angle(heading(0));
  x(drone::kYawRate) = rate[0];
  for (std::size_t k = 0; k < K; ++k) {
    traj.times.push_back(static_cast<double>(k) * spec.dt);
    traj.states.push_back(x);
    VectorX<double> u = VectorX<double>::Zero(drone::kStateDim);
    u.segment<2>(drone::kAcc) = acc[k + 1];
    u(drone::kYawRate) = rate[k + 1];
    traj.inputs.push_back(u);
    x = F * x + u;
    x(drone::kYaw) = drone::wrap_angle(x(drone::kYaw));
  }
  return traj;
}

double footprint_half_diagonal(const CameraIntrinsics& intr, double height) {
  const double w = static_cast<double>(intr.cols) * intr.sensor_pitch, h = static_cast<double>(intr.rows) * intr.sensor_pitch;
  return 0.5 * std::hypot(w, h) * height / intr.focal_length;
}

void check_map_margin(const Trajectory& traj, const CameraIntrinsics& intr, const MapModel& map) {
  const Eigen::Vector2d corners[] = {intr.metric(0, 0), intr.metric(0, intr.cols - 1), intr.metric(intr.rows - 1, 0),
                                     intr.metric(intr.rows - 1, intr.cols - 1)};
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    for (const auto& c : corners)
      if (world_from_image(traj.states[k], c, intr, map).out_of_map)
        throw InvalidArgument("trajectory leaves the map margin at frame " + std::to_string(k) + " (t = " +
                              std::to_string(traj.times[k]) + " s)");
}

std::vector<ImuSample> synthesize_imu(const Trajectory& truth, const drone::NoiseDensities& dens, double imu_rate,
                                      std::uint64_t seed) {
  dens.validate();
  if (truth.states.size() < 2) throw InvalidArgument("IMU synthesis needs at least two states");
  const double dt = truth.times[1] - truth.times[0];
  if (!(imu_rate * dt >= 1.0 - 1e-9)) throw InvalidArgument("IMU rate must be at least the frame rate");
  const std::size_t K = truth.states.size();
  const double t_last = truth.times.back();
  const std::int64_t J = static_cast<std::int64_t>(std::ceil(t_last * imu_rate - 1e-9)) + 1;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sa = dens.sigma_a * std::sqrt(imu_rate), sg = dens.g_a * std::sqrt(imu_rate);
  std::vector<ImuSample> out;
  out.reserve(static_cast<std::size_t>(J));
  for (std::int64_t j = 1; j <= J; ++j) {
    const double t = static_cast<double>(j) / imu_rate;
    std::size_t k = static_cast<std::size_t>(std::max(1.0, std::ceil(t / dt - 1e-9)));
    k = std::min(k, K - 1);
    const VectorX<double>& x = truth.states[k];
    const Eigen::Matrix2d R = drone::rotation_and_derivative(x(drone::kYaw)).R;
    ImuSample s;
    s.t = t;
    s.accel.head<2>() = R.transpose() * x.segment<2>(drone::kAcc);
    s.accel.z() = x(drone::kAcc + 2) + drone::kGravity;
    s.gyro_z = x(drone::kYawRate);
    for (int a = 0; a < 3; ++a) s.accel(a) += sa * normal(rng);
    s.gyro_z += sg * normal(rng);
    s.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(x(drone::kYaw), Eigen::Vector3d::UnitZ()));
    out.push_back(s);
  }
  return out;
}

ImageField<double> render_measurement(const VectorX<double>& truth_state, const MapModel& map,
                                      const CameraIntrinsics& intr, const NoiseModel<double>& noise,
                                      std::uint64_t seed) {
  ImageField<double> img = render_expected(truth_state, intr.grid(), intr, map);
  const bool silent = noise.is_white() && noise.sigma().isZero(0.0);
  if (!silent) img.values += sample_noise_field(noise, intr.grid(), seed).values;
  std::fill(img.valid.begin(), img.valid.end(), std::uint8_t{1});
  return img;
}

NoiseModel<double> noise_model_of(const SimConfig& cfg) {
  if (cfg.noise == NoiseKind::Gaussian)
    return NoiseModel<double>::gaussian(cfg.sigma, cfg.kernel_length, cfg.kernel_half, cfg.kernel_half);
  return NoiseModel<double>::white(cfg.sigma);
}

Dataset simulate(const SimConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.dt = cfg.dt;
  ds.intrinsics = CameraIntrinsics::centered(cfg.rows, cfg.cols, cfg.focal_length, cfg.sensor_width);

  const TrajectorySpec spec = TrajectorySpec::from(cfg);
  Trajectory traj = generate_trajectory(spec);

  // Map covering every footprint plus a margin.
  Eigen::Vector2d lo = traj.states.front().segment<2>(drone::kPos), hi = lo;
  double top = 0;
  for (const auto& x : traj.states) {
    lo = lo.cwiseMin(x.segment<2>(drone::kPos));
    hi = hi.cwiseMax(x.segment<2>(drone::kPos));
    top = std::max(top, x(drone::kPos + 2));
  }
  const double pad = footprint_half_diagonal(ds.intrinsics, top) + cfg.map_margin;
  const Eigen::Vector2d origin = lo - Eigen::Vector2d::Constant(pad);
  const Eigen::Vector2d extent = (hi - lo) + Eigen::Vector2d::Constant(2 * pad);
  MapModel map = generate_map(cfg.map_bumps, origin, extent, cfg.map_pitch, derive_seed(cfg.seed, 1),
                              cfg.bump_width_min, cfg.bump_width_max);
  map.set_query_mode(cfg.map_mode == "analytic" ? MapQueryMode::Analytic : MapQueryMode::Sampled);
  check_map_margin(traj, ds.intrinsics, map);
  auto shared = std::make_shared<const MapModel>(std::move(map));
  ds.map = shared;

  ds.imu = synthesize_imu(traj, cfg.densities, cfg.imu_rate, derive_seed(cfg.seed, 2));
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const auto& x = traj.states[k];
    ds.truth.push_back({traj.times[k], x.segment<3>(drone::kPos), x(drone::kYaw)});
  }
  ds.truth_states = traj.states;

  const NoiseModel<double> noise = noise_model_of(cfg);
  const CameraIntrinsics intr = ds.intrinsics;
  const std::uint64_t seed = cfg.seed;
  const auto states = std::make_shared<const std::vector<VectorX<double>>>(traj.states);
  ds.frame_loader = [shared, intr, noise, seed, states](std::size_t k) {
    return render_measurement((*states)[k], *shared, intr, noise, derive_seed(seed, 1000 + k));
  };
  ds.build_alignment();
  return ds;
}

std::vector<std::string> write_dataset(const Dataset& ds, const fs::path& dir) {
  std::vector<std::string> warnings;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());

  SimConfig cfg = ds.config;
  cfg.output = ".";
  io::write_text(dir / "config", cfg.to_text());
  write_map(dir, *ds.map);

  std::vector<std::vector<double>> imu_rows;
  imu_rows.reserve(ds.imu.size());
  for (const auto& s : ds.imu) {
    const Eigen::Quaterniond q = s.orientation.value_or(Eigen::Quaterniond::Identity());
    imu_rows.push_back({s.t, s.accel.x(), s.accel.y(), s.accel.z(), s.gyro_z, q.w(), q.x(), q.y(), q.z()});
  }
  io::write_csv(dir / "imu.csv", {"t", "ax", "ay", "az", "gz", "qw", "qx", "qy", "qz"}, imu_rows);

  std::vector<std::vector<double>> truth_rows;
  for (const auto& r : ds.truth) truth_rows.push_back({r.t, r.position.x(), r.position.y(), r.position.z(), r.yaw});
  io::write_csv(dir / "truth.csv", {"t", "x", "y", "z", "yaw"}, truth_rows);

  // 16-bit quantization error must stay well below the noise level.
  const double step = (cfg.image_hi - cfg.image_lo) / 65535.0;
  const double noise_sd = std::sqrt(cfg.sigma / ds.intrinsics.grid().cell_area());
  if (!(0.5 * step * 10.0 <= noise_sd))
    warnings.push_back("16-bit quantization error " + io::format_double(0.5 * step) +
                       " is not 10x below the noise standard deviation " + io::format_double(noise_sd));

  std::size_t clipped = 0;
  for (std::size_t k = 0; k < ds.frame_count(); ++k) {
    const ImageField<double> img = ds.frame(k);
    clipped += static_cast<std::size_t>(
        ((img.values.array() < cfg.image_lo) || (img.values.array() > cfg.image_hi)).count());
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.pgm", k);
    io::write_pgm(dir / "images" / name, encode_frame(img, cfg.image_lo, cfg.image_hi));
  }
  if (clipped > 0)
    warnings.push_back(std::to_string(clipped) + " pixel(s) fell outside [image_lo, image_hi] and were clipped");
  return warnings;
}

std::uint64_t dataset_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const char* name : {"config", "map.pgm", "map.meta", "elevation.pgm", "imu.csv", "truth.csv"})
    if (fs::exists(dir / name)) files.push_back(dir / name);
  std::vector<fs::path> images;
  if (fs::is_directory(dir / "images"))
    for (const auto& e : fs::directory_iterator(dir / "images")) images.push_back(e.path());
  std::sort(images.begin(), images.end());
  files.insert(files.end(), images.begin(), images.end());

  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& f : files) {
    const std::string name = fs::relative(f, dir).generic_string();
    feed(name.data(), name.size() + 1);
    const std::string body = io::read_text(f);
    feed(body.data(), body.size());
  }
  return h;
}

}  // namespace fieldkf::sim
