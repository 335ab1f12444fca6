#pragma once

// Evaluation pipeline: run the filter over a dataset, score it against
// ground truth, sweep the accelerometer noise density, and write reports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fieldkf/assumptions.hpp"
#include "fieldkf/config.hpp"
#include "fieldkf/dataset.hpp"

namespace fieldkf::harness {

/// Mean squared position error (1/N) sum |rho_hat - rho|^2.
double mse_position(std::span<const Eigen::Vector3d> est, std::span<const Eigen::Vector3d> truth);
/// Mean squared wrapped yaw error, each term in [0, pi^2].
double mse_yaw(std::span<const double> est, std::span<const double> truth);

/// start, start * factor, ... (count values).
std::vector<double> sigma_ladder(double start = 1e-3, double factor = 2.0, std::int64_t count = 14);

struct Estimate {
  double t = 0;
  VectorX<double> x;
  double trace_P = 0;
};

struct TimingStats {
  double median_ms = 0, mean_ms = 0, p95_ms = 0, max_ms = 0;
  std::size_t over_budget = 0;
};

struct MetricsReport {
  double e_rho = 0;    // m^2
  double e_theta = 0;  // rad^2
  std::vector<double> position_error2;  // per estimate
  std::vector<double> yaw_error2;
  std::vector<Estimate> estimates;
  std::optional<std::int64_t> divergence_step;
  std::string divergence_reason;
  std::vector<double> step_ms;
  TimingStats timing;
  std::size_t stale_inputs = 0;
  std::size_t ill_conditioned = 0;
  std::size_t scored = 0;  // estimates entering the metrics

  bool diverged() const { return divergence_step.has_value(); }
};

/// Noise model selected by a run configuration.
NoiseModel<double> noise_model_of(const RunConfig& cfg);

/// Executes the filter over every frame. Divergence stops the run and is
/// recorded, not thrown. Throws DatasetError when the dataset's frame
/// period disagrees with cfg.dt.
MetricsReport run(const Dataset& ds, const RunConfig& cfg);

/// Scores estimates against truth rows by nearest timestamp within dt / 2.
MetricsReport evaluate(const std::vector<Estimate>& estimates, const std::vector<TruthRow>& truth, double dt,
                       double warmup = 0.0);

struct SweepRow {
  double sigma_a = 0;
  MetricsReport report;
  bool above_cap = false;
};

/// One run per density, each with its own Q; runs are independent.
std::vector<SweepRow> sweep(const Dataset& ds, const RunConfig& cfg, const std::vector<double>& ladder);

/// Assumption-check report for frame k evaluated at the truth-initialized state.
AssumptionReport validate_dataset(const Dataset& ds, const RunConfig& cfg, std::size_t frame = 0);

// Output files.
void write_estimates(const std::filesystem::path& path, const MetricsReport& report);
std::vector<Estimate> read_estimates(const std::filesystem::path& path);
void write_metrics(const std::filesystem::path& path, const MetricsReport& report, const RunConfig& cfg);
// divergence_step is -1 for runs that did not diverge.
void write_sweep(const std::filesystem::path& path, const std::vector<SweepRow>& rows, double cap);

/// estimates.csv, metrics.csv, report.svg (+ .dat), assumptions.txt.
void write_run_outputs(const std::filesystem::path& dir, const Dataset& ds, const RunConfig& cfg,
                       const MetricsReport& report);

// Plots (deterministic SVG text plus whitespace-separated data companions).
std::string report_svg(const std::vector<TruthRow>& truth, const std::vector<Estimate>& estimates);
std::string report_dat(const std::vector<TruthRow>& truth, const std::vector<Estimate>& estimates);
std::string sweep_svg(const std::vector<SweepRow>& rows, double cap);
std::string sweep_dat(const std::vector<SweepRow>& rows, double cap);

}  // namespace fieldkf::harness
