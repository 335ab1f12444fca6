// fieldkf: simulate datasets, run the field filter, sweep noise densities,
// score and plot results, and check the filter's modeling assumptions.
//
// Parameters come from an optional key = value file (--config) overridden by
// --key=value flags. Exit codes: 0 success, 2 divergence, 3 configuration
// error, 4 dataset error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "fieldkf/errors.hpp"
#include "fieldkf/harness.hpp"
#include "fieldkf/io.hpp"
#include "fieldkf/simulator.hpp"

namespace fs = std::filesystem;
using namespace fieldkf;

namespace {

constexpr int kExitDivergence = 2;
constexpr int kExitConfig = 3;
constexpr int kExitDataset = 4;

KeyValues gather(const std::string& config_file, const std::vector<std::string>& extras) {
  KeyValues kv;
  if (!config_file.empty()) kv = KeyValues::load(config_file);
  kv.merge(KeyValues::from_arguments(extras));
  return kv;
}

RunConfig run_config(const std::string& config_file, const std::vector<std::string>& extras) {
  RunConfig cfg;
  cfg.apply(gather(config_file, extras));
  cfg.validate();
  if (cfg.dataset.empty()) throw ConfigError("--dataset=DIR is required");
  return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void print_metrics(const harness::MetricsReport& r) {
  std::cout << "E_rho = " << io::format_double(r.e_rho) << " m^2\n";
  std::cout << "E_theta = " << io::format_double(r.e_theta) << " rad^2\n";
  if (!r.step_ms.empty())
    std::cout << "step time median " << io::format_double(r.timing.median_ms) << " ms, max "
              << io::format_double(r.timing.max_ms) << " ms\n";
  if (r.diverged()) std::cout << "diverged at step " << *r.divergence_step << ": " << r.divergence_reason << '\n';
}

int cmd_simulate(const std::string& config_file, const std::vector<std::string>& extras) {
  SimConfig cfg;
  cfg.apply(gather(config_file, extras));
  cfg.validate();
  const Dataset ds = sim::simulate(cfg);
  print_warnings(ds.warnings);
  print_warnings(sim::write_dataset(ds, cfg.output));
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(sim::dataset_hash(cfg.output)));
  std::cout << "wrote " << ds.frame_count() << " frames to " << cfg.output.string() << " (hash " << hash << ")\n";
  return 0;
}

int cmd_run(const std::string& config_file, const std::vector<std::string>& extras) {
  const RunConfig cfg = run_config(config_file, extras);
  const Dataset ds = ingest(cfg.dataset);
  print_warnings(ds.warnings);
  const harness::MetricsReport report = harness::run(ds, cfg);
  harness::write_run_outputs(cfg.output, ds, cfg, report);
  print_metrics(report);
  return report.diverged() ? kExitDivergence : 0;
}

int cmd_sweep(const std::string& config_file, const std::vector<std::string>& extras) {
  const RunConfig cfg = run_config(config_file, extras);
  const Dataset ds = ingest(cfg.dataset);
  print_warnings(ds.warnings);
  const auto ladder = harness::sigma_ladder(cfg.sweep_start, cfg.sweep_factor, cfg.sweep_count);
  const auto rows = harness::sweep(ds, cfg, ladder);
  fs::create_directories(cfg.output);
  harness::write_sweep(cfg.output / "sweep.csv", rows, cfg.sweep_cap);
  io::write_text(cfg.output / "sweep.svg", harness::sweep_svg(rows, cfg.sweep_cap));
  io::write_text(cfg.output / "sweep.dat", harness::sweep_dat(rows, cfg.sweep_cap));
  for (const auto& r : rows)
    std::cout << "sigma_a = " << io::format_double(r.sigma_a) << "  E_rho = " << io::format_double(r.report.e_rho)
              << (r.report.diverged() ? "  (diverged)" : r.above_cap ? "  (above cap)" : "") << '\n';
  return 0;
}

int cmd_eval(const std::string& config_file, const std::vector<std::string>& extras, const std::string& estimates) {
  const RunConfig cfg = run_config(config_file, extras);
  const Dataset ds = ingest(cfg.dataset);
  const fs::path est_path = estimates.empty() ? cfg.output / "estimates.csv" : fs::path(estimates);
  const harness::MetricsReport report = harness::evaluate(harness::read_estimates(est_path), ds.truth, cfg.dt, cfg.warmup);
  print_metrics(report);
  return 0;
}

int cmd_plot(const std::string& config_file, const std::vector<std::string>& extras, const std::string& sweep_csv) {
  RunConfig cfg;
  cfg.apply(gather(config_file, extras));
  if (!sweep_csv.empty()) {
    const io::CsvTable table = io::read_csv(sweep_csv);
    const Index sc = table.column("sigma_a"), ec = table.column("e_rho"), tc = table.column("e_theta"),
                dc = table.column("diverged"), cc = table.column("above_cap");
    if (sc < 0 || ec < 0) throw DatasetError({sweep_csv + ": needs sigma_a and e_rho columns"});
    std::vector<harness::SweepRow> rows;
    for (const auto& r : table.rows) {
      harness::SweepRow row;
      row.sigma_a = r[sc];
      row.report.e_rho = r[ec];
      row.report.e_theta = tc >= 0 ? r[tc] : 0.0;
      if (dc >= 0 && r[dc] != 0) row.report.divergence_step = 0;
      row.above_cap = cc >= 0 && r[cc] != 0;
      rows.push_back(std::move(row));
    }
    const fs::path dir = fs::path(sweep_csv).parent_path();
    io::write_text(dir / "sweep.svg", harness::sweep_svg(rows, cfg.sweep_cap));
    io::write_text(dir / "sweep.dat", harness::sweep_dat(rows, cfg.sweep_cap));
    return 0;
  }
  if (cfg.dataset.empty()) throw ConfigError("plot needs --dataset=DIR (or --sweep FILE)");
  const Dataset ds = ingest(cfg.dataset);
  const auto estimates = harness::read_estimates(cfg.output / "estimates.csv");
  io::write_text(cfg.output / "report.svg", harness::report_svg(ds.truth, estimates));
  io::write_text(cfg.output / "report.dat", harness::report_dat(ds.truth, estimates));
  return 0;
}

int cmd_validate(const std::string& config_file, const std::vector<std::string>& extras, std::size_t frame) {
  const RunConfig cfg = run_config(config_file, extras);
  const Dataset ds = ingest(cfg.dataset);
  const AssumptionReport report = harness::validate_dataset(ds, cfg, frame);
  fs::create_directories(cfg.output);
  io::write_text(cfg.output / "assumptions.txt", report.to_text());
  std::cout << report.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Field-measurement EKF: simulation, estimation and evaluation"};
  app.require_subcommand(1);

  std::string config_file, estimates, sweep_csv;
  std::size_t frame = 0;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_file, "key = value configuration file");
    sub->allow_extras();
    return sub;
  };
  CLI::App* simulate = add("simulate", "write a synthetic dataset (--output=DIR)");
  CLI::App* run = add("run", "run the filter over --dataset=DIR into --output=DIR");
  CLI::App* sweep = add("sweep", "run the sigma_a ladder and write sweep.csv / sweep.svg");
  CLI::App* eval = add("eval", "score an estimates.csv against the dataset truth");
  eval->add_option("--estimates", estimates, "estimates file (default: OUTPUT/estimates.csv)");
  CLI::App* plot = add("plot", "regenerate report.svg from OUTPUT/estimates.csv, or sweep.svg");
  plot->add_option("--sweep", sweep_csv, "sweep.csv to plot");
  CLI::App* validate = add("validate", "write the assumption report for a dataset");
  validate->add_option("--frame", frame, "frame index to evaluate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) {
      const std::vector<std::string> extras = sub->remaining();
      if (sub == simulate) return cmd_simulate(config_file, extras);
      if (sub == run) return cmd_run(config_file, extras);
      if (sub == sweep) return cmd_sweep(config_file, extras);
      if (sub == eval) return cmd_eval(config_file, extras, estimates);
      if (sub == plot) return cmd_plot(config_file, extras, sweep_csv);
      if (sub == validate) return cmd_validate(config_file, extras, frame);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error:\n";
    for (const auto& issue : e.issues()) std::cerr << "  " << issue << '\n';
    return kExitDataset;
  } catch (const IoError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kExitDataset;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
