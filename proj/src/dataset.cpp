#include "fieldkf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fieldkf {

namespace fs = std::filesystem;

ImageField<double> Dataset::frame(std::size_t k) const {
  if (k >= frame_count()) throw InvalidArgument("frame index " + std::to_string(k) + " out of range");
  if (!frame_loader) throw InvalidArgument("dataset has no frame source");
  return frame_loader(k);
}

std::span<const ImuSample> Dataset::imu_for(std::size_t k) const {
  if (k >= alignment.size()) return {};
  const ImuSpan& s = alignment[k];
  return std::span<const ImuSample>(imu.data() + s.begin, s.end - s.begin);
}

void Dataset::build_alignment() {
  alignment.assign(truth.size(), ImuSpan{});
  std::vector<std::size_t> stale;
  for (std::size_t k = 1; k < truth.size(); ++k) {
    const auto w = drone::imu_window(imu, truth[k - 1].t, truth[k].t);
    ImuSpan& s = alignment[k];
    s.begin = static_cast<std::size_t>(w.data() - imu.data());
    s.end = s.begin + w.size();
    // Latest sample at or before this frame.
    const auto it = std::upper_bound(imu.begin(), imu.end(), truth[k].t + 1e-9,
                                     [](double t, const ImuSample& x) { return t < x.t; });
    const double last = it == imu.begin() ? -1e300 : std::prev(it)->t;
    s.stale = w.empty() || truth[k].t - last > 2.0 * dt;
    if (s.stale) stale.push_back(k);
  }
  if (!stale.empty()) {
    std::string msg = "IMU gap longer than two frame periods before frame(s):";
    for (std::size_t i = 0; i < stale.size() && i < 20; ++i) msg += " " + std::to_string(stale[i]);
    if (stale.size() > 20) msg += " ... (" + std::to_string(stale.size()) + " total)";
    warnings.push_back(msg);
  }
}

io::PgmImage encode_frame(const ImageField<double>& img, double lo, double hi) {
  if (img.channels() != 1) throw InvalidArgument("only single-channel frames can be stored as PGM");
  RowMatrixX<double> unit(img.grid.rows, img.grid.cols);
  for (Index p = 0; p < img.size(); ++p) unit.data()[p] = (img.values(p, 0) - lo) / (hi - lo);
  return io::unit_to_pgm(unit, 65535);
}

ImageField<double> decode_frame(const io::PgmImage& pgm, double lo, double hi) {
  ImageField<double> img(FieldGrid::square_pixels(pgm.rows, pgm.cols, 1.0), 1);
  const RowMatrixX<double> unit = io::pgm_to_unit(pgm);
  for (Index p = 0; p < img.size(); ++p) img.values(p, 0) = lo + (hi - lo) * unit.data()[p];
  return img;
}

std::string map_meta_text(const MapModel& map, double elevation_lo, double elevation_hi) {
  std::string out = "# fieldkf map\n";
  out += "pitch " + io::format_double(map.pitch()) + "\n";
  out += "origin " + io::format_double(map.origin().x()) + " " + io::format_double(map.origin().y()) + "\n";
  if (map.surface()) {
    const AnalyticSurface& s = *map.surface();
    out += "normalization " + io::format_double(s.offset()) + " " + io::format_double(s.scale()) + "\n";
    for (const auto& b : s.bumps())
      out += "bump " + io::format_double(b.center.x()) + " " + io::format_double(b.center.y()) + " " +
             io::format_double(b.width) + " " + io::format_double(b.amplitude) + "\n";
  }
  if (const auto& e = map.elevation_raster()) {
    out += "elevation elevation.pgm " + io::format_double(elevation_lo) + " " + io::format_double(elevation_hi) + " " +
           io::format_double(e->pitch) + " " + io::format_double(e->origin.x()) + " " +
           io::format_double(e->origin.y()) + "\n";
  }
  return out;
}

void write_map(const fs::path& dir, const MapModel& map) {
  io::write_pgm(dir / "map.pgm", io::unit_to_pgm(map.intensity().values, 65535));
  double lo = 0, hi = 0;
  if (const auto& e = map.elevation_raster()) {
    lo = e->values.minCoeff();
    hi = e->values.maxCoeff();
    if (!(hi > lo)) hi = lo + 1.0;
    io::write_pgm(dir / "elevation.pgm", io::unit_to_pgm((e->values.array() - lo) / (hi - lo), 65535));
  }
  io::write_text(dir / "map.meta", map_meta_text(map, lo, hi));
}

MapModel read_map(const fs::path& dir) {
  const io::PgmImage pgm = io::read_pgm(dir / "map.pgm");
  const std::string meta = io::read_text(dir / "map.meta");
  double pitch = 0, ox = 0, oy = 0, offset = 0, scale = 1;
  bool has_norm = false, has_pitch = false, has_origin = false;
  std::vector<GaussianBump> bumps;
  struct {
    std::string file;
    double lo = 0, hi = 0, pitch = 0, ox = 0, oy = 0;
  } elev;
  std::istringstream in(meta);
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& what) {
    throw IoError((dir / "map.meta").string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    auto num = [&](std::size_t i) {
      try {
        return io::parse_double(tok.at(i));
      } catch (const std::exception&) {
        bad("malformed '" + key + "' entry");
      }
      return 0.0;
    };
    if (key == "pitch" && tok.size() == 1) {
      pitch = num(0);
      has_pitch = true;
    } else if (key == "origin" && tok.size() == 2) {
      ox = num(0);
      oy = num(1);
      has_origin = true;
    } else if (key == "normalization" && tok.size() == 2) {
      offset = num(0);
      scale = num(1);
      has_norm = true;
    } else if (key == "bump" && tok.size() == 4) {
      GaussianBump b;
      b.center = {num(0), num(1)};
      b.width = num(2);
      b.amplitude = num(3);
      bumps.push_back(b);
    } else if (key == "elevation" && tok.size() == 6) {
      elev.file = tok[0];
      elev.lo = num(1);
      elev.hi = num(2);
      elev.pitch = num(3);
      elev.ox = num(4);
      elev.oy = num(5);
    } else {
      bad("unrecognized entry '" + key + "'");
    }
  }
  if (!has_pitch || !has_origin) throw IoError((dir / "map.meta").string() + ": pitch and origin are required");

  Raster raster;
  raster.values = io::pgm_to_unit(pgm);
  raster.pitch = pitch;
  raster.origin = {ox, oy};
  MapModel map;
  if (has_norm) {
    AnalyticSurface surface(std::move(bumps), offset, scale);
    map = MapModel::from_analytic(std::move(surface), raster.origin, raster.extent(), pitch);
    if (map.intensity().rows() != raster.rows() || map.intensity().cols() != raster.cols())
      throw IoError((dir / "map.pgm").string() + ": raster size disagrees with the bump geometry in map.meta");
    const double tol = 1.0 / pgm.maxval;
    if ((map.intensity().values - raster.values).cwiseAbs().maxCoeff() > tol)
      throw IoError((dir / "map.pgm").string() + ": raster disagrees with the bump list in map.meta");
    map.set_query_mode(MapQueryMode::Sampled);
  } else {
    map = MapModel::from_raster(std::move(raster));
  }
  if (!elev.file.empty()) {
    const io::PgmImage e = io::read_pgm(dir / elev.file);
    Raster er;
    er.values = elev.lo + (elev.hi - elev.lo) * io::pgm_to_unit(e).array();
    er.pitch = elev.pitch;
    er.origin = {elev.ox, elev.oy};
    map.set_elevation(std::move(er));
  }
  return map;
}

namespace {

constexpr const char* kImuHeader[] = {"t", "ax", "ay", "az", "gz"};
constexpr const char* kQuatHeader[] = {"qw", "qx", "qy", "qz"};
constexpr const char* kTruthHeader[] = {"t", "x", "y", "z", "yaw"};

}  // namespace

Dataset ingest(const fs::path& root) {
  std::vector<std::string> issues;
  Dataset ds;
  ds.root = root;
  if (!fs::is_directory(root)) throw DatasetError({root.string() + ": not a directory"});

  for (const char* name : {"map.pgm", "map.meta", "imu.csv", "truth.csv", "config"})
    if (!fs::exists(root / name)) issues.push_back((root / name).string() + ": missing");
  if (!fs::is_directory(root / "images")) issues.push_back((root / "images").string() + ": missing directory");
  if (!issues.empty()) throw DatasetError(issues);

  try {
    ds.config.apply(KeyValues::load(root / "config"));
    ds.config.validate();
  } catch (const ConfigError& e) {
    issues.push_back((root / "config").string() + ": " + e.what());
  }
  ds.dt = ds.config.dt;
  try {
    ds.intrinsics = CameraIntrinsics::centered(ds.config.rows, ds.config.cols, ds.config.focal_length,
                                               ds.config.sensor_width);
  } catch (const Error& e) {
    issues.push_back((root / "config").string() + ": " + e.what());
  }

  try {
    auto map = std::make_shared<MapModel>(read_map(root));
    ds.map = std::move(map);
  } catch (const Error& e) {
    issues.push_back(e.what());
  }

  // IMU stream.
  const io::CsvTable imu = io::read_csv(root / "imu.csv", &issues);
  bool imu_ok = imu.header.size() == 5 || imu.header.size() == 9;
  for (std::size_t i = 0; imu_ok && i < 5; ++i) imu_ok = imu.header[i] == kImuHeader[i];
  for (std::size_t i = 0; imu_ok && imu.header.size() == 9 && i < 4; ++i) imu_ok = imu.header[5 + i] == kQuatHeader[i];
  if (!imu.header.empty() && !imu_ok)
    issues.push_back((root / "imu.csv").string() + ": header must be t,ax,ay,az,gz[,qw,qx,qy,qz]");
  if (imu_ok) {
    ds.imu.reserve(imu.rows.size());
    for (std::size_t i = 0; i < imu.rows.size(); ++i) {
      const auto& r = imu.rows[i];
      ImuSample s;
      s.t = r[0];
      s.accel = {r[1], r[2], r[3]};
      s.gyro_z = r[4];
      if (r.size() == 9) s.orientation = Eigen::Quaterniond(r[5], r[6], r[7], r[8]).normalized();
      if (!ds.imu.empty() && !(s.t > ds.imu.back().t))
        issues.push_back((root / "imu.csv").string() + ": row " + std::to_string(i + 1) +
                         ": timestamps must be strictly increasing");
      ds.imu.push_back(s);
    }
    if (ds.imu.empty()) issues.push_back((root / "imu.csv").string() + ": no samples");
  }

  // Ground truth, one row per frame.
  const io::CsvTable truth = io::read_csv(root / "truth.csv", &issues);
  bool truth_ok = truth.header.size() == 5;
  for (std::size_t i = 0; truth_ok && i < 5; ++i) truth_ok = truth.header[i] == kTruthHeader[i];
  if (!truth.header.empty() && !truth_ok) issues.push_back((root / "truth.csv").string() + ": header must be t,x,y,z,yaw");
  if (truth_ok) {
    for (std::size_t i = 0; i < truth.rows.size(); ++i) {
      const auto& r = truth.rows[i];
      TruthRow row{r[0], {r[1], r[2], r[3]}, r[4]};
      if (!ds.truth.empty() && !(row.t > ds.truth.back().t))
        issues.push_back((root / "truth.csv").string() + ": row " + std::to_string(i + 1) +
                         ": timestamps must be strictly increasing");
      ds.truth.push_back(row);
    }
    if (ds.truth.size() < 3) issues.push_back((root / "truth.csv").string() + ": need at least 3 rows");
    for (std::size_t k = 1; k < ds.truth.size(); ++k) {
      const double gap = ds.truth[k].t - ds.truth[k - 1].t;
      if (std::abs(gap - ds.dt) > 1e-6 * std::max(1.0, ds.dt) + 1e-9) {
        issues.push_back((root / "truth.csv").string() + ": row " + std::to_string(k + 1) + ": frame spacing " +
                         io::format_double(gap) + " s differs from dt = " + io::format_double(ds.dt));
        break;
      }
    }
  }

  // Frames: one image per truth row.
  for (std::size_t k = 0; k < ds.truth.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.pgm", k);
    if (!fs::exists(root / "images" / name)) {
      issues.push_back((root / "images" / name).string() + ": missing frame");
      if (issues.size() > 50) break;
    }
  }
  if (!ds.truth.empty() && fs::exists(root / "images" / "000000.pgm")) {
    try {
      const io::PgmImage first = io::read_pgm(root / "images" / "000000.pgm");
      if (first.rows != ds.config.rows || first.cols != ds.config.cols)
        issues.push_back((root / "images" / "000000.pgm").string() + ": size " + std::to_string(first.rows) + "x" +
                         std::to_string(first.cols) + " does not match config rows/cols");
    } catch (const IoError& e) {
      issues.push_back(e.what());
    }
  }

  if (!issues.empty()) throw DatasetError(issues);

  const double lo = ds.config.image_lo, hi = ds.config.image_hi;
  const Index rows = ds.config.rows, cols = ds.config.cols;
  ds.frame_loader = [root, lo, hi, rows, cols](std::size_t k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.pgm", k);
    const io::PgmImage pgm = io::read_pgm(root / "images" / name);
    if (pgm.rows != rows || pgm.cols != cols)
      throw DatasetError({(root / "images" / name).string() + ": frame size does not match config"});
    return decode_frame(pgm, lo, hi);
  };
  ds.build_alignment();
  return ds;
}

VectorX<double> truth_initial_state(const Dataset& ds) {
  if (!ds.truth_states.empty()) return ds.truth_states.front();
  if (ds.truth.size() < 3) throw InvalidArgument("truth initialization needs at least 3 truth rows");
  const double dt = ds.dt;
  const TruthRow& r0 = ds.truth[0];
  const TruthRow& r1 = ds.truth[1];
  const TruthRow& r2 = ds.truth[2];
  const Eigen::Vector3d v0 = (r1.position - r0.position) / dt;
  const Eigen::Vector3d v1 = (r2.position - r1.position) / dt;
  drone::DroneState<double> s;
  s.position = r0.position;
  s.velocity = v0;
  s.acceleration = (v1 - v0) / dt;
  s.yaw = drone::wrap_angle(r0.yaw);
  s.yaw_rate = drone::wrap_angle(r1.yaw - r0.yaw) / dt;
  return s.to_vector();
}

}  // namespace fieldkf
