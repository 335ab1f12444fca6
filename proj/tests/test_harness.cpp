#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fieldkf/harness.hpp"
#include "fieldkf/io.hpp"
#include "fieldkf/simulator.hpp"
#include "oracles.hpp"

using namespace fieldkf;
using namespace fieldkf::harness;
using oracle::Vec;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

SimConfig small_config() {
  SimConfig cfg;
  cfg.rows = 32;
  cfg.cols = 40;
  cfg.altitude = 20;
  cfg.duration = 3.0;
  cfg.leg_length = 10;
  cfg.leg_spacing = 6;
  cfg.map_bumps = 40;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fieldkf_test_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("mse_position examples") {
  std::vector<Eigen::Vector3d> truth = {{0, 0, 0}, {1, 2, 3}, {-1, 0.5, 2}};
  CHECK(mse_position(truth, truth) == 0.0);
  auto shifted = truth;
  for (auto& p : shifted) p.x() += 1;
  CHECK(mse_position(shifted, truth) == doctest::Approx(1.0));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::vector<Eigen::Vector3d> a(50), b(50);
  double acc = 0;
  for (int i = 0; i < 50; ++i) {
    a[i] = {n(rng), n(rng), n(rng)};
    b[i] = {n(rng), n(rng), n(rng)};
    for (int c = 0; c < 3; ++c) acc += (a[i](c) - b[i](c)) * (a[i](c) - b[i](c));
  }
  CHECK(std::abs(mse_position(a, b) - acc / 50) <= 1e-12 * acc / 50);
  CHECK_THROWS_AS(mse_position(std::span(a).first(3), b), InvalidArgument);
}

TEST_CASE("mse_yaw wraps the difference") {
  const std::vector<double> th = {0.1, -1.0, 2.5};
  std::vector<double> plus(th), half(th);
  for (auto& v : plus) v += 2 * kPi;
  for (auto& v : half) v += kPi;
  CHECK(mse_yaw(plus, th) < 1e-28);
  CHECK(mse_yaw(half, th) == doctest::Approx(kPi * kPi));
  const double eps = 1e-3;
  CHECK(mse_yaw(std::vector<double>{kPi - eps}, std::vector<double>{-kPi + eps}) ==
        doctest::Approx(4 * eps * eps).epsilon(1e-9));
  CHECK_THROWS_AS(mse_yaw(std::vector<double>{1.0}, std::vector<double>{}), InvalidArgument);
}

TEST_CASE("sigma ladder and the Q scaling it implies") {
  const auto ladder = sigma_ladder();
  REQUIRE(ladder.size() == 14);
  CHECK(ladder.front() == 1e-3);
  CHECK(ladder.back() == doctest::Approx(8.192));
  drone::NoiseDensities lo, hi;
  lo.sigma_a = ladder.front();
  hi.sigma_a = ladder.back();
  const double qlo = drone::build_Q(lo, 1.0 / 15.0)(drone::kVel, drone::kVel);
  const double qhi = drone::build_Q(hi, 1.0 / 15.0)(drone::kVel, drone::kVel);
  CHECK(qhi / qlo == doctest::Approx(std::pow(2.0, 26)).epsilon(1e-6));
}

TEST_CASE("evaluate scores by nearest timestamp and honours the warm-up") {
  std::vector<TruthRow> truth;
  std::vector<Estimate> est;
  for (int k = 0; k < 10; ++k) {
    truth.push_back({k * 0.1, Eigen::Vector3d(k, 0, 0), 0.0});
    Estimate e;
    e.t = k * 0.1 + 0.01;
    e.x = Vec::Zero(drone::kStateDim);
    e.x(0) = k + (k < 5 ? 3.0 : 1.0);
    est.push_back(e);
  }
  CHECK(evaluate(est, truth, 0.1).e_rho == doctest::Approx(5.0));
  const auto late = evaluate(est, truth, 0.1, 0.45);
  CHECK(late.scored == 5);
  CHECK(late.e_rho == doctest::Approx(1.0));
  for (double v : evaluate(est, truth, 0.1).yaw_error2) CHECK(v <= kPi * kPi);
}

TEST_CASE("noise-free simulation from the truth state scores at the fixed point") {
  SimConfig sim_cfg = small_config();
  sim_cfg.sigma = 0;
  sim_cfg.densities = {0, 0, 0, 0};
  const Dataset ds = sim::simulate(sim_cfg);
  RunConfig cfg;
  cfg.densities = sim_cfg.densities;
  const auto report = run(ds, cfg);
  CHECK_FALSE(report.diverged());
  CHECK(report.e_rho < 1e-10);
  CHECK(report.estimates.size() == ds.frame_count());
}

TEST_CASE("a constant map gives exactly the dead-reckoning output") {
  SimConfig sim_cfg = small_config();
  sim_cfg.map_bumps = 0;
  const Dataset ds = sim::simulate(sim_cfg);
  RunConfig cfg;
  const auto filtered = run(ds, cfg);
  cfg.dead_reckoning = true;
  const auto dr = run(ds, cfg);
  REQUIRE(filtered.estimates.size() == dr.estimates.size());
  for (std::size_t k = 0; k < dr.estimates.size(); ++k) CHECK(filtered.estimates[k].x == dr.estimates[k].x);

  // independent prediction-only recursion
  const auto F = drone::transition_matrix(ds.dt);
  Vec x = dr.estimates.front().x;
  for (std::size_t k = 1; k < ds.frame_count(); ++k) {
    const auto in = drone::build_input(ds.imu_for(k), (F * x)(drone::kYaw));
    x = F * x + in.u;
    x(drone::kYaw) = drone::wrap_angle(x(drone::kYaw));
  }
  CHECK((x - dr.estimates.back().x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a sweep over one density equals the single run and runs are isolated") {
  const Dataset ds = sim::simulate(small_config());
  RunConfig cfg;
  cfg.densities.sigma_a = 4e-3;
  const auto single = run(ds, cfg);
  const auto one = sweep(ds, cfg, {4e-3});
  REQUIRE(one.size() == 1);
  CHECK(one[0].report.e_rho == single.e_rho);
  const auto two = sweep(ds, cfg, {1.0, 4e-3});
  CHECK(two[1].report.e_rho == single.e_rho);
  CHECK(two[0].sigma_a == 1.0);
}

TEST_CASE("run rejects a frame period that disagrees with the dataset") {
  const Dataset ds = sim::simulate(small_config());
  RunConfig cfg;
  cfg.dt = 0.1;
  CHECK_THROWS_AS(run(ds, cfg), DatasetError);
}

TEST_CASE("plots: two trajectory polylines, log2 sweep axis, deterministic bytes") {
  const Dataset ds = sim::simulate(small_config());
  const auto report = run(ds, RunConfig{});
  const std::string svg = report_svg(ds.truth, report.estimates);
  CHECK(count(svg, "class=\"trajectory\"") == 2);
  CHECK(svg == report_svg(ds.truth, report.estimates));
  CHECK(report_dat(ds.truth, report.estimates).find("truth") != std::string::npos);

  std::vector<SweepRow> rows;
  for (double s : sigma_ladder()) rows.push_back({s, report, false});
  rows.back().above_cap = true;
  const std::string sweep_plot = sweep_svg(rows, 100.0);
  CHECK(count(sweep_plot, "class=\"point\"") == 13);
  CHECK(count(sweep_plot, "class=\"above-cap\"") == 1);
  CHECK(sweep_plot == sweep_svg(rows, 100.0));
  CHECK_NOTHROW(report_svg({}, {}));
}

TEST_CASE("sweep.csv reads back with every field numeric") {
  const Dataset ds = sim::simulate(small_config());
  const auto rows = sweep(ds, RunConfig{}, {1e-3, 4e-3});
  const fs::path dir = scratch("sweep");
  fs::create_directories(dir);
  write_sweep(dir / "sweep.csv", rows, 100.0);
  const auto table = io::read_csv(dir / "sweep.csv");
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[1][table.column("sigma_a")] == 4e-3);
  CHECK(table.rows[0][table.column("divergence_step")] == -1.0);
  fs::remove_all(dir);
}

TEST_CASE("estimates file round trips and is deterministic") {
  const Dataset ds = sim::simulate(small_config());
  const auto a = run(ds, RunConfig{});
  const auto b = run(ds, RunConfig{});
  const fs::path dir = scratch("est");
  fs::create_directories(dir);
  write_estimates(dir / "a.csv", a);
  write_estimates(dir / "b.csv", b);
  CHECK(io::read_text(dir / "a.csv") == io::read_text(dir / "b.csv"));
  const auto back = read_estimates(dir / "a.csv");
  REQUIRE(back.size() == a.estimates.size());
  CHECK(back[4].x == a.estimates[4].x);
  CHECK(evaluate(back, ds.truth, ds.dt).e_rho == a.e_rho);
  fs::remove_all(dir);
}

TEST_CASE("ingest: missing imu.csv is a single clear error") {
  const fs::path dir = scratch("missing");
  sim::write_dataset(sim::simulate(small_config()), dir);
  fs::remove(dir / "imu.csv");
  try {
    ingest(dir);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    REQUIRE(e.issues().size() == 1);
    CHECK(e.issues()[0].find("imu.csv") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("ingest: several schema problems are reported together") {
  const fs::path dir = scratch("schema");
  sim::write_dataset(sim::simulate(small_config()), dir);
  io::write_text(dir / "truth.csv", "t,x,y\n0,0,0\n");
  io::write_text(dir / "imu.csv", "time\n");
  try {
    ingest(dir);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(e.issues().size() >= 2);
  }
  fs::remove_all(dir);
}

TEST_CASE("ingest: an IMU gap longer than two frame periods warns and lists frames") {
  const fs::path dir = scratch("gap");
  sim::write_dataset(sim::simulate(small_config()), dir);
  const auto table = io::read_csv(dir / "imu.csv");
  std::vector<std::vector<double>> kept;
  for (const auto& row : table.rows)
    if (row[0] < 1.0 || row[0] > 1.5) kept.push_back(row);
  io::write_csv(dir / "imu.csv", table.header, kept);
  const Dataset ds = ingest(dir);
  REQUIRE_FALSE(ds.warnings.empty());
  bool found = false;
  for (const auto& w : ds.warnings)
    if (w.find("IMU gap") != std::string::npos && w.find(" 18") != std::string::npos) found = true;
  CHECK(found);
  const auto report = run(ds, RunConfig{});
  CHECK(report.stale_inputs > 0);
  fs::remove_all(dir);
}

TEST_CASE("validate_dataset reports all checks for a simulated frame") {
  const Dataset ds = sim::simulate(small_config());
  const auto report = validate_dataset(ds, RunConfig{}, 2);
  CHECK(report.checks.size() == 5);
  CHECK(report.all_pass());
}
