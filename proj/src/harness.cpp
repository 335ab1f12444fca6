#include "fieldkf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "fieldkf/errors.hpp"
#include "fieldkf/io.hpp"

namespace fieldkf::harness {

namespace fs = std::filesystem;

double mse_position(std::span<const Eigen::Vector3d> est, std::span<const Eigen::Vector3d> truth) {
  if (est.size() != truth.size()) throw InvalidArgument("mse_position: estimate and truth lengths differ");
  if (est.empty()) throw InvalidArgument("mse_position: no samples");
  double sum = 0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (est[i] - truth[i]).squaredNorm();
  return sum / static_cast<double>(est.size());
}

double mse_yaw(std::span<const double> est, std::span<const double> truth) {
  if (est.size() != truth.size()) throw InvalidArgument("mse_yaw: estimate and truth lengths differ");
  if (est.empty()) throw InvalidArgument("mse_yaw: no samples");
  double sum = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double e = drone::wrap_angle(est[i] - truth[i]);
    sum += e * e;
  }
  return sum / static_cast<double>(est.size());
}

std::vector<double> sigma_ladder(double start, double factor, std::int64_t count) {
  if (!(start > 0) || !(factor > 0) || count < 1) throw InvalidArgument("sigma ladder needs start > 0, factor > 0, count >= 1");
  std::vector<double> out;
  double v = start;
  for (std::int64_t i = 0; i < count; ++i, v *= factor) out.push_back(v);
  return out;
}

NoiseModel<double> noise_model_of(const RunConfig& cfg) {
  switch (cfg.noise) {
    case NoiseKind::White: return NoiseModel<double>::white(cfg.sigma);
    case NoiseKind::Gaussian:
      return NoiseModel<double>::gaussian(cfg.sigma, cfg.kernel_length, cfg.kernel_half, cfg.kernel_half);
    case NoiseKind::File: return io::read_kernel(cfg.kernel_file);
  }
  throw ConfigError("unknown noise kind");
}

namespace {

TimingStats timing_of(std::vector<double> ms, double budget) {
  TimingStats t;
  if (ms.empty()) return t;
  for (double v : ms) {
    t.mean_ms += v;
    if (v > budget) ++t.over_budget;
  }
  t.mean_ms /= static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  t.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  t.p95_ms = ms[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1)];
  t.max_ms = ms.back();
  return t;
}

MatrixX<double> initial_covariance(const RunConfig& cfg, const ProcessModel<double>& process) {
  if (cfg.p0 == "Q") return process.Q;
  const double v = io::parse_double(cfg.p0);
  return MatrixX<double>::Identity(drone::kStateDim, drone::kStateDim) * v;
}

VectorX<double> initial_state(const Dataset& ds, const RunConfig& cfg) {
  VectorX<double> x0 = truth_initial_state(ds);
  x0(drone::kPos + 0) += cfg.init_offset_x;
  x0(drone::kPos + 1) += cfg.init_offset_y;
  x0(drone::kPos + 2) += cfg.init_offset_z;
  x0(drone::kYaw) = drone::wrap_angle(x0(drone::kYaw) + cfg.init_offset_yaw);
  return x0;
}

MapModel run_map(const Dataset& ds, const RunConfig& cfg) {
  if (!ds.map) throw DatasetError({"dataset has no map"});
  MapModel map = *ds.map;
  if (cfg.map_mode == "analytic") {
    if (!map.surface()) throw ConfigError("map_mode = analytic needs a map with an analytic surface");
    map.set_query_mode(MapQueryMode::Analytic);
  } else {
    map.set_query_mode(MapQueryMode::Sampled);
  }
  return map;
}

void check_period(const Dataset& ds, const RunConfig& cfg) {
  if (std::abs(ds.dt - cfg.dt) > 1e-9 * std::max(1.0, cfg.dt)) {
    std::ostringstream os;
    os << "dataset frame period " << ds.dt << " s differs from configured dt " << cfg.dt << " s";
    throw DatasetError({os.str()});
  }
  if (ds.frame_count() < 1) throw DatasetError({"dataset has no frames"});
}

Estimate estimate_of(double t, const FilterState<double>& s) { return {t, s.x, s.P.trace()}; }

}  // namespace

MetricsReport evaluate(const std::vector<Estimate>& estimates, const std::vector<TruthRow>& truth, double dt,
                       double warmup) {
  MetricsReport report;
  report.estimates = estimates;
  if (truth.empty()) throw DatasetError({"no truth rows to evaluate against"});
  const double t0 = truth.front().t;
  std::vector<Eigen::Vector3d> est_p, true_p;
  std::vector<double> est_y, true_y;
  for (const Estimate& e : estimates) {
    auto it = std::lower_bound(truth.begin(), truth.end(), e.t, [](const TruthRow& r, double t) { return r.t < t; });
    const TruthRow* best = nullptr;
    if (it != truth.end()) best = &*it;
    if (it != truth.begin() && (!best || std::abs(std::prev(it)->t - e.t) <= std::abs(best->t - e.t)))
      best = &*std::prev(it);
    const bool matched = best && std::abs(best->t - e.t) <= 0.5 * dt + 1e-9;
    const Eigen::Vector3d p = e.x.segment<3>(drone::kPos);
    const double pe = matched ? (p - best->position).squaredNorm() : std::numeric_limits<double>::quiet_NaN();
    const double ye = matched ? std::pow(drone::wrap_angle(e.x(drone::kYaw) - best->yaw), 2)
                              : std::numeric_limits<double>::quiet_NaN();
    report.position_error2.push_back(pe);
    report.yaw_error2.push_back(ye);
    if (!matched || e.t - t0 < warmup - 1e-9) continue;
    est_p.push_back(p);
    true_p.push_back(best->position);
    est_y.push_back(e.x(drone::kYaw));
    true_y.push_back(best->yaw);
  }
  report.scored = est_p.size();
  if (est_p.empty()) {
    report.e_rho = report.e_theta = std::numeric_limits<double>::quiet_NaN();
  } else {
    report.e_rho = mse_position(est_p, true_p);
    report.e_theta = mse_yaw(est_y, true_y);
  }
  return report;
}

MetricsReport run(const Dataset& ds, const RunConfig& cfg) {
  cfg.validate();
  check_period(ds, cfg);
  const MapModel map = run_map(ds, cfg);
  const CameraMeasurementModel model(map, ds.intrinsics);
  const NoiseModel<double> noise = noise_model_of(cfg);
  const ProcessModel<double> process = drone::drone_process_model(cfg.densities, cfg.dt);

  StepOptions<double> options;
  options.reduction = cfg.deterministic ? Reduction::Deterministic : Reduction::Parallel;
  options.prediction_only = cfg.dead_reckoning;
  if (cfg.preprocess.any()) {
    const PreprocessConfig pre = cfg.preprocess;
    options.preprocess = [pre](ImageField<double>& measured, ImageField<double>& predicted) {
      preprocess_pair(measured, predicted, pre);
    };
  }

  FilterState<double> state = FilterState<double>::initial(initial_state(ds, cfg), initial_covariance(cfg, process));
  std::vector<Estimate> estimates{estimate_of(ds.frame_time(0), state)};
  std::vector<double> step_ms;
  std::size_t stale = 0, ill = 0;
  std::optional<std::int64_t> diverged;
  std::string reason;
  const double limit = cfg.divergence_factor * map.extent().maxCoeff();

  for (std::size_t k = 1; k < ds.frame_count(); ++k) {
    const ImageField<double> frame = ds.frame(k);
    const std::span<const ImuSample> window = ds.imu_for(k);
    const auto start = std::chrono::steady_clock::now();
    try {
      double yaw = drone::wrap_angle(state.x(drone::kYaw) + cfg.dt * state.x(drone::kYawRate));
      if (cfg.orientation == "imu" && !window.empty() && window.back().orientation)
        yaw = drone::yaw_of(*window.back().orientation);
      const drone::ImuInput input = drone::build_input(window, yaw);
      if (input.stale || ds.alignment[k].stale) ++stale;
      state = step(state, process, model, noise, frame, input.u, options);
    } catch (const DivergenceError& e) {
      diverged = static_cast<std::int64_t>(k);
      reason = e.what();
    } catch (const StepError& e) {
      diverged = static_cast<std::int64_t>(k);
      reason = e.what();
    }
    const auto stop = std::chrono::steady_clock::now();
    if (diverged) break;
    step_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    if (state.ill_conditioned) ++ill;
    estimates.push_back(estimate_of(ds.frame_time(k), state));
    const double err = (state.x.segment<3>(drone::kPos) - ds.truth[k].position).norm();
    if (!(err <= limit)) {
      diverged = static_cast<std::int64_t>(k);
      std::ostringstream os;
      os << "position error " << err << " m exceeds " << limit << " m";
      reason = os.str();
      break;
    }
  }

  MetricsReport report = evaluate(estimates, ds.truth, cfg.dt, cfg.warmup);
  report.divergence_step = diverged;
  report.divergence_reason = reason;
  report.timing = timing_of(step_ms, cfg.time_budget_ms);
  report.step_ms = std::move(step_ms);
  report.stale_inputs = stale;
  report.ill_conditioned = ill;
  return report;
}

std::vector<SweepRow> sweep(const Dataset& ds, const RunConfig& cfg, const std::vector<double>& ladder) {
  std::vector<SweepRow> rows;
  for (double s : ladder) {
    RunConfig c = cfg;
    c.densities.sigma_a = s;
    SweepRow row;
    row.sigma_a = s;
    row.report = run(ds, c);
    row.above_cap = row.report.diverged() || !(row.report.e_rho <= cfg.sweep_cap);
    rows.push_back(std::move(row));
  }
  return rows;
}

AssumptionReport validate_dataset(const Dataset& ds, const RunConfig& cfg, std::size_t frame) {
  if (frame >= ds.frame_count()) throw InvalidArgument("frame index out of range");
  const MapModel map = run_map(ds, cfg);
  const CameraMeasurementModel model(map, ds.intrinsics);
  const ProcessModel<double> process = drone::drone_process_model(cfg.densities, cfg.dt);
  VectorX<double> x = initial_state(ds, cfg);
  if (frame > 0 && frame < ds.truth_states.size()) x = ds.truth_states[frame];
  const FieldGrid grid = ds.intrinsics.grid();
  const JacobianField<double> G = model.jacobian(x, grid);
  return validate_assumptions(G, noise_model_of(cfg), initial_covariance(cfg, process));
}

// ---------------------------------------------------------------------------
// Output files

void write_estimates(const fs::path& path, const MetricsReport& report) {
  std::vector<std::vector<double>> rows;
  rows.reserve(report.estimates.size());
  for (const Estimate& e : report.estimates) {
    std::vector<double> r{e.t};
    for (Index i = 0; i < e.x.size(); ++i) r.push_back(e.x(i));
    r.push_back(e.trace_P);
    rows.push_back(std::move(r));
  }
  io::write_csv(path, {"t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "yaw", "r", "trP"}, rows);
}

std::vector<Estimate> read_estimates(const fs::path& path) {
  const io::CsvTable table = io::read_csv(path);
  const Index tc = table.column("t"), pc = table.column("trP");
  const char* names[] = {"x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "yaw", "r"};
  std::vector<Index> cols;
  std::vector<std::string> missing;
  for (const char* n : names) {
    cols.push_back(table.column(n));
    if (cols.back() < 0) missing.emplace_back(path.string() + ": missing column " + n);
  }
  if (tc < 0) missing.push_back(path.string() + ": missing column t");
  if (!missing.empty()) throw DatasetError(missing);
  std::vector<Estimate> out;
  for (const auto& row : table.rows) {
    Estimate e;
    e.t = row[tc];
    e.x.resize(drone::kStateDim);
    for (Index i = 0; i < drone::kStateDim; ++i) e.x(i) = row[cols[i]];
    e.trace_P = pc >= 0 ? row[pc] : 0.0;
    out.push_back(std::move(e));
  }
  return out;
}

void write_metrics(const fs::path& path, const MetricsReport& r, const RunConfig& cfg) {
  std::ostringstream os;
  auto line = [&](const std::string& k, const std::string& v) { os << k << ',' << v << '\n'; };
  auto num = [&](const std::string& k, double v) { line(k, io::format_double(v)); };
  line("metric", "value");
  num("e_rho_m2", r.e_rho);
  num("e_theta_rad2", r.e_theta);
  num("estimates", static_cast<double>(r.estimates.size()));
  num("scored", static_cast<double>(r.scored));
  line("diverged", r.diverged() ? "1" : "0");
  line("divergence_step", r.diverged() ? std::to_string(*r.divergence_step) : "");
  line("divergence_reason", r.divergence_reason);
  num("step_ms_median", r.timing.median_ms);
  num("step_ms_mean", r.timing.mean_ms);
  num("step_ms_p95", r.timing.p95_ms);
  num("step_ms_max", r.timing.max_ms);
  num("step_budget_ms", cfg.time_budget_ms);
  num("steps_over_budget", static_cast<double>(r.timing.over_budget));
  num("stale_inputs", static_cast<double>(r.stale_inputs));
  num("ill_conditioned_steps", static_cast<double>(r.ill_conditioned));
  num("sigma_a", cfg.densities.sigma_a);
  num("sigma", cfg.sigma);
  io::write_text(path, os.str());
}

void write_sweep(const fs::path& path, const std::vector<SweepRow>& rows, double cap) {
  std::ostringstream os;
  os << "sigma_a,e_rho,e_theta,diverged,divergence_step,above_cap\n";
  for (const SweepRow& r : rows) {
    os << io::format_double(r.sigma_a) << ',' << io::format_double(r.report.e_rho) << ','
       << io::format_double(r.report.e_theta) << ',' << (r.report.diverged() ? 1 : 0) << ','
       << (r.report.diverged() ? std::to_string(*r.report.divergence_step) : std::string("-1")) << ','
       << ((r.above_cap || !(r.report.e_rho <= cap)) ? 1 : 0) << '\n';
  }
  io::write_text(path, os.str());
}

void write_run_outputs(const fs::path& dir, const Dataset& ds, const RunConfig& cfg, const MetricsReport& report) {
  fs::create_directories(dir);
  write_estimates(dir / "estimates.csv", report);
  write_metrics(dir / "metrics.csv", report, cfg);
  io::write_text(dir / "report.svg", report_svg(ds.truth, report.estimates));
  io::write_text(dir / "report.dat", report_dat(ds.truth, report.estimates));
  std::string text;
  try {
    text = validate_dataset(ds, cfg).to_text();
  } catch (const Error& e) {
    text = std::string("assumption checks not evaluated: ") + e.what() + "\n";
  }
  io::write_text(dir / "assumptions.txt", text);
}

}  // namespace fieldkf::harness
