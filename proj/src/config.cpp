#include "fieldkf/config.hpp"

#include <charconv>
#include <sstream>

#include "fieldkf/io.hpp"

namespace fieldkf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v);
  } catch (const IoError&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

ConfigBinding bind_key(const std::string& key, double& field, const std::string& help) {
  return {key, help, [&field, key](const std::string& v) { field = to_double(key, v); },
          [&field] { return io::format_double(field); }};
}

ConfigBinding bind_key(const std::string& key, std::int64_t& field, const std::string& help) {
  return {key, help, [&field, key](const std::string& v) { field = to_int(key, v); },
          [&field] { return std::to_string(field); }};
}

ConfigBinding bind_key(const std::string& key, std::uint64_t& field, const std::string& help) {
  return {key, help, [&field, key](const std::string& v) { field = to_uint(key, v); },
          [&field] { return std::to_string(field); }};
}

ConfigBinding bind_key(const std::string& key, bool& field, const std::string& help) {
  return {key, help, [&field, key](const std::string& v) { field = to_bool(key, v); },
          [&field] { return std::string(field ? "true" : "false"); }};
}

ConfigBinding bind_key(const std::string& key, std::string& field, const std::string& help) {
  return {key, help, [&field](const std::string& v) { field = v; }, [&field] { return field; }};
}

ConfigBinding bind_key(const std::string& key, std::filesystem::path& field, const std::string& help) {
  return {key, help, [&field](const std::string& v) { field = v; }, [&field] { return field.string(); }};
}

ConfigBinding bind_key(const std::string& key, NoiseKind& field, const std::string& help) {
  return {key, help,
          [&field, key](const std::string& v) {
            if (v == "white") field = NoiseKind::White;
            else if (v == "gaussian") field = NoiseKind::Gaussian;
            else if (v == "file") field = NoiseKind::File;
            else throw ConfigError("key '" + key + "': expected white|gaussian|file, got '" + v + "'");
          },
          [&field] { return to_string(field); }};
}

ConfigBinding bind_key(const std::string& key, TrajectoryPattern& field, const std::string& help) {
  return {key, help,
          [&field, key](const std::string& v) {
            if (v == "lawnmower") field = TrajectoryPattern::Lawnmower;
            else if (v == "circuit") field = TrajectoryPattern::Circuit;
            else if (v == "waypoints") field = TrajectoryPattern::Waypoints;
            else throw ConfigError("key '" + key + "': expected lawnmower|circuit|waypoints, got '" + v + "'");
          },
          [&field] { return to_string(field); }};
}

void add_densities(std::vector<ConfigBinding>& b, drone::NoiseDensities& d) {
  b.push_back(bind_key("sigma_a", d.sigma_a, "accelerometer noise density, m/s^2/sqrt(Hz)"));
  b.push_back(bind_key("g_a", d.g_a, "gyroscope noise density, rad/s/sqrt(Hz)"));
  b.push_back(bind_key("sigma_b", d.sigma_b, "accelerometer random walk, m/s^3/sqrt(Hz)"));
  b.push_back(bind_key("g_b", d.g_b, "gyroscope random walk, rad/s^2/sqrt(Hz)"));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "white";
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::File: return "file";
  }
  return "white";
}

std::string to_string(TrajectoryPattern p) {
  switch (p) {
    case TrajectoryPattern::Lawnmower: return "lawnmower";
    case TrajectoryPattern::Circuit: return "circuit";
    case TrajectoryPattern::Waypoints: return "waypoints";
  }
  return "lawnmower";
}

KeyValues KeyValues::parse(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    kv.values[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse(text, path.string());
}

KeyValues KeyValues::from_arguments(const std::vector<std::string>& args) {
  KeyValues kv;
  for (const auto& a : args) {
    if (a.rfind("--", 0) != 0 || a.find('=') == std::string::npos)
      throw ConfigError("unrecognized argument '" + a + "' (overrides take the form --key=value)");
    const auto eq = a.find('=');
    kv.values[a.substr(2, eq - 2)] = a.substr(eq + 1);
  }
  return kv;
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.values) values[k] = v;
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

void apply_bindings(const std::vector<ConfigBinding>& bindings, const KeyValues& kv, const std::string& what) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : kv.values) {
    const ConfigBinding* hit = nullptr;
    for (const auto& b : bindings)
      if (b.key == key) hit = &b;
    if (!hit) {
      unknown.push_back(key);
      continue;
    }
    hit->set(value);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown key(s) in " + what + ":";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw ConfigError(msg);
  }
}

std::string bindings_to_text(const std::vector<ConfigBinding>& bindings) {
  std::string out;
  for (const auto& b : bindings) out += b.key + " = " + b.get() + "\n";
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ConfigBinding> RunConfig::bindings() {
  std::vector<ConfigBinding> b;
  b.push_back(bind_key("dataset", dataset, "dataset directory"));
  b.push_back(bind_key("output", output, "output directory"));
  b.push_back(bind_key("sigma", sigma, "white measurement noise magnitude Sigma"));
  b.push_back(bind_key("p0", p0, "initial covariance: Q or a positive scalar times identity"));
  b.push_back(bind_key("dt", dt, "filter time step, s"));
  b.push_back(bind_key("imu_rate", imu_rate, "IMU rate, Hz"));
  b.push_back(bind_key("camera_rate", camera_rate, "camera rate, Hz"));
  add_densities(b, densities);
  b.push_back(bind_key("blur", preprocess.blur, "Gaussian blur stage"));
  b.push_back(bind_key("blur_sigma", preprocess.blur_sigma, "blur standard deviation, pixels"));
  b.push_back(bind_key("normalize", preprocess.normalize, "min-max normalization stage"));
  b.push_back(bind_key("equalize", preprocess.equalize, "histogram equalization stage"));
  b.push_back(bind_key("match", preprocess.match, "histogram matching stage"));
  b.push_back(bind_key("noise", noise, "measurement noise model: white|gaussian|file"));
  b.push_back(bind_key("kernel_length", kernel_length, "Gaussian kernel length scale, pixels"));
  b.push_back(bind_key("kernel_half", kernel_half, "Gaussian kernel half-width, pixels"));
  b.push_back(bind_key("kernel_file", kernel_file, "kernel file for noise=file"));
  b.push_back(bind_key("deterministic", deterministic, "fixed-order pixel reductions"));
  b.push_back(bind_key("seed", seed, "random seed"));
  b.push_back(bind_key("map_mode", map_mode, "map queries: sampled|analytic"));
  b.push_back(bind_key("orientation", orientation, "yaw used to rotate IMU input: estimate|imu"));
  b.push_back(bind_key("dead_reckoning", dead_reckoning, "prediction only (no measurement updates)"));
  b.push_back(bind_key("init_offset_x", init_offset_x, "initial east offset, m"));
  b.push_back(bind_key("init_offset_y", init_offset_y, "initial north offset, m"));
  b.push_back(bind_key("init_offset_z", init_offset_z, "initial up offset, m"));
  b.push_back(bind_key("init_offset_yaw", init_offset_yaw, "initial yaw offset, rad"));
  b.push_back(bind_key("warmup", warmup, "seconds excluded from the metrics"));
  b.push_back(bind_key("divergence_factor", divergence_factor, "divergence threshold, multiples of the map extent"));
  b.push_back(bind_key("time_budget_ms", time_budget_ms, "real-time budget per step, ms"));
  b.push_back(bind_key("sweep_start", sweep_start, "first sigma_a of the sweep ladder"));
  b.push_back(bind_key("sweep_factor", sweep_factor, "ladder ratio"));
  b.push_back(bind_key("sweep_count", sweep_count, "ladder length"));
  b.push_back(bind_key("sweep_cap", sweep_cap, "E_rho values above this are flagged, m^2"));
  return b;
}

void RunConfig::validate() const {
  require(sigma > 0, "sigma must be > 0");
  require(dt > 0, "dt must be > 0");
  require(imu_rate > 0 && camera_rate > 0, "rates must be > 0");
  try {
    densities.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  require(!preprocess.blur || preprocess.blur_sigma >= 0, "blur_sigma must be >= 0");
  require(kernel_length > 0 && kernel_half >= 0, "kernel_length must be > 0 and kernel_half >= 0");
  require(noise != NoiseKind::File || !kernel_file.empty(), "noise=file needs kernel_file");
  require(map_mode == "sampled" || map_mode == "analytic", "map_mode must be sampled or analytic");
  require(orientation == "estimate" || orientation == "imu", "orientation must be estimate or imu");
  if (p0 != "Q") {
    double v = 0;
    try {
      v = io::parse_double(p0);
    } catch (const IoError&) {
      throw ConfigError("p0 must be Q or a positive number");
    }
    require(v > 0, "p0 must be Q or a positive number");
  }
  require(warmup >= 0, "warmup must be >= 0");
  require(divergence_factor > 0, "divergence_factor must be > 0");
  require(sweep_start > 0 && sweep_factor > 0 && sweep_count >= 1, "invalid sweep ladder");
  require(sweep_cap > 0, "sweep_cap must be > 0");
}

std::vector<ConfigBinding> SimConfig::bindings() {
  std::vector<ConfigBinding> b;
  b.push_back(bind_key("output", output, "dataset directory to write"));
  b.push_back(bind_key("pattern", pattern, "trajectory: lawnmower|circuit|waypoints"));
  b.push_back(bind_key("altitude", altitude, "flight altitude, m"));
  b.push_back(bind_key("speed", speed, "ground speed, m/s"));
  b.push_back(bind_key("duration", duration, "flight duration, s"));
  b.push_back(bind_key("dt", dt, "camera frame period, s"));
  b.push_back(bind_key("imu_rate", imu_rate, "IMU rate, Hz"));
  b.push_back(bind_key("leg_length", leg_length, "lawnmower leg length, m"));
  b.push_back(bind_key("leg_spacing", leg_spacing, "lawnmower leg spacing, m"));
  b.push_back(bind_key("circuit_radius", circuit_radius, "circuit radius, m"));
  b.push_back(bind_key("waypoints", waypoints, "waypoint list 'x y; x y; ...'"));
  b.push_back(bind_key("turn_radius", turn_radius, "waypoint fillet radius, m"));
  b.push_back(bind_key("rows", rows, "image rows"));
  b.push_back(bind_key("cols", cols, "image columns"));
  b.push_back(bind_key("focal_length", focal_length, "focal length, m"));
  b.push_back(bind_key("sensor_width", sensor_width, "sensor width across columns, m"));
  b.push_back(bind_key("map_bumps", map_bumps, "number of Gaussian bumps"));
  b.push_back(bind_key("map_pitch", map_pitch, "map raster pitch, m"));
  b.push_back(bind_key("map_margin", map_margin, "extra map border beyond the footprint, m"));
  b.push_back(bind_key("bump_width_min", bump_width_min, "smallest bump width, m"));
  b.push_back(bind_key("bump_width_max", bump_width_max, "largest bump width, m"));
  b.push_back(bind_key("map_mode", map_mode, "rendering queries: sampled|analytic"));
  b.push_back(bind_key("sigma", sigma, "measurement noise magnitude Sigma"));
  b.push_back(bind_key("noise", noise, "measurement noise model: white|gaussian"));
  b.push_back(bind_key("kernel_length", kernel_length, "Gaussian kernel length scale, pixels"));
  b.push_back(bind_key("kernel_half", kernel_half, "Gaussian kernel half-width, pixels"));
  add_densities(b, densities);
  b.push_back(bind_key("image_lo", image_lo, "intensity encoded as PGM 0"));
  b.push_back(bind_key("image_hi", image_hi, "intensity encoded as PGM 65535"));
  b.push_back(bind_key("seed", seed, "base random seed"));
  return b;
}

void SimConfig::validate() const {
  require(altitude > 0, "altitude must be > 0");
  require(speed >= 0, "speed must be >= 0");
  require(duration > 0 && dt > 0, "duration and dt must be > 0");
  require(imu_rate >= 1.0 / dt, "imu_rate must be at least the frame rate");
  require(leg_length > 0 && leg_spacing > 0 && circuit_radius > 0 && turn_radius > 0, "geometry must be positive");
  require(rows > 0 && cols > 0, "image dimensions must be positive");
  require(focal_length > 0 && sensor_width > 0, "optics must be positive");
  require(map_bumps >= 0 && map_pitch > 0 && map_margin >= 0, "invalid map parameters");
  require(bump_width_min > 0 && bump_width_max >= bump_width_min, "invalid bump widths");
  require(map_mode == "sampled" || map_mode == "analytic", "map_mode must be sampled or analytic");
  require(sigma >= 0, "sigma must be >= 0");
  require(noise != NoiseKind::File, "the simulator supports white or gaussian noise");
  require(kernel_length > 0 && kernel_half >= 0, "invalid kernel parameters");
  require(image_hi > image_lo, "image_hi must exceed image_lo");
  try {
    densities.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace fieldkf
