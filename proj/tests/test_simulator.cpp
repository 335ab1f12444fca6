#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fieldkf/dataset.hpp"
#include "fieldkf/harness.hpp"
#include "fieldkf/simulator.hpp"
#include "oracles.hpp"

using namespace fieldkf;
using oracle::Mat;
using oracle::Vec;
namespace fs = std::filesystem;

namespace {

SimConfig small_config() {
  SimConfig cfg;
  cfg.rows = 32;
  cfg.cols = 40;
  cfg.altitude = 20;
  cfg.duration = 4.0;
  cfg.leg_length = 10;
  cfg.leg_spacing = 6;
  cfg.map_bumps = 40;
  cfg.map_pitch = 0.25;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fieldkf_test_sim_" + name);
  fs::remove_all(dir);
  return dir;
}

sim::TrajectorySpec hover_spec(double duration) {
  sim::TrajectorySpec spec;
  spec.speed = 0;
  spec.duration = duration;
  return spec;
}

}  // namespace

TEST_CASE("derive_seed separates streams deterministically") {
  CHECK(sim::derive_seed(1, 2) == sim::derive_seed(1, 2));
  CHECK(sim::derive_seed(1, 2) != sim::derive_seed(1, 3));
  CHECK(sim::derive_seed(1, 2) != sim::derive_seed(2, 2));
}

TEST_CASE("generate_map: no bumps gives a constant map") {
  const MapModel map = sim::generate_map(0, {0, 0}, {20, 20}, 0.5, 1);
  const MapQuery q = map.query({7.3, 2.1});
  CHECK(q.intensity == doctest::Approx(0.5));
  CHECK(q.gradient.isZero(0.0));
  CHECK(map.intensity().values.minCoeff() == map.intensity().values.maxCoeff());
}

TEST_CASE("generate_map: one bump has zero gradient at its centre") {
  MapModel map = sim::generate_map(1, {-20, -20}, {40, 40}, 0.25, 3);
  REQUIRE(map.surface().has_value());
  const Eigen::Vector2d c = map.surface()->bumps().front().center;
  map.set_query_mode(MapQueryMode::Analytic);
  if (map.contains(c)) CHECK(map.query(c).gradient.norm() < 1e-12);
  CHECK(map.surface()->gradient(c).norm() < 1e-12);
}

TEST_CASE("generate_map: raster agrees with the analytic surface") {
  MapModel map = sim::generate_map(80, {0, 0}, {60, 50}, 0.25, 11);
  CHECK(map.intensity().values.minCoeff() == doctest::Approx(0.0));
  CHECK(map.intensity().values.maxCoeff() == doctest::Approx(1.0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(0, 60), uy(0, 50);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Vector2d p(ux(rng), uy(rng));
    worst = std::max(worst, std::abs(map.query_sampled(p).intensity - map.query_analytic(p).intensity));
  }
  CHECK(worst <= 1e-3);
  // grid nodes agree exactly
  CHECK(map.query_sampled({10.0, 20.0}).intensity == map.query_analytic({10.0, 20.0}).intensity);
}

TEST_CASE("generate_trajectory: zero speed hovers") {
  const auto traj = sim::generate_trajectory(hover_spec(2.0));
  REQUIRE(traj.states.size() == 30);
  for (const auto& x : traj.states) CHECK(x == traj.states.front());
  CHECK(traj.states.front()(drone::kPos + 2) == 40.0);
}

TEST_CASE("generate_trajectory: states satisfy the drone recursion") {
  for (auto pattern : {TrajectoryPattern::Lawnmower, TrajectoryPattern::Circuit, TrajectoryPattern::Waypoints}) {
    sim::TrajectorySpec spec;
    spec.pattern = pattern;
    spec.duration = 40;
    spec.waypoints = {{0, 0}, {30, 0}, {30, 25}, {5, 30}};
    const auto traj = sim::generate_trajectory(spec);
    const Mat F = drone::transition_matrix(spec.dt);
    double worst = 0;
    for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
      Vec next = F * traj.states[k] + traj.inputs[k];
      next(drone::kYaw) = drone::wrap_angle(next(drone::kYaw));
      Vec diff = traj.states[k + 1] - next;
      diff(drone::kYaw) = drone::wrap_angle(diff(drone::kYaw));
      worst = std::max(worst, diff.norm());
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("generate_trajectory: lawnmower covers speed times duration") {
  sim::TrajectorySpec spec;
  spec.duration = 60;
  const auto traj = sim::generate_trajectory(spec);
  double length = 0;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k)
    length += (traj.states[k + 1].head<2>() - traj.states[k].head<2>()).norm();
  // one frame short of the full minute
  CHECK(length == doctest::Approx(120.0 - 2.0 * spec.dt).epsilon(0.01));
  for (const auto& x : traj.states) CHECK(x.segment<2>(drone::kVel).norm() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("trajectory settings validation") {
  sim::TrajectorySpec spec;
  spec.pattern = TrajectoryPattern::Waypoints;
  spec.waypoints = {{0, 0}, {10, 0}};
  CHECK_THROWS_AS(sim::generate_trajectory(spec), InvalidArgument);
  spec.pattern = TrajectoryPattern::Lawnmower;
  spec.altitude = 0;
  CHECK_THROWS_AS(sim::generate_trajectory(spec), InvalidArgument);
}

TEST_CASE("synthesize_imu: zero densities reproduce truth derivatives") {
  sim::TrajectorySpec spec;
  spec.duration = 10;
  const auto traj = sim::generate_trajectory(spec);
  const auto imu = sim::synthesize_imu(traj, {0, 0, 0, 0}, 100.0, 1);
  CHECK(imu.size() == static_cast<std::size_t>(std::ceil(traj.times.back() * 100 - 1e-9)) + 1);
  for (std::size_t j = 0; j < imu.size(); j += 37) {
    const auto& s = imu[j];
    std::size_t k = static_cast<std::size_t>(std::max(1.0, std::ceil(s.t / spec.dt - 1e-9)));
    k = std::min(k, traj.states.size() - 1);
    const auto& x = traj.states[k];
    const double th = x(drone::kYaw);
    const Eigen::Vector2d a = x.segment<2>(drone::kAcc);
    CHECK(s.accel.x() == doctest::Approx(std::cos(th) * a.x() + std::sin(th) * a.y()));
    CHECK(s.accel.y() == doctest::Approx(-std::sin(th) * a.x() + std::cos(th) * a.y()));
    CHECK(s.accel.z() == doctest::Approx(drone::kGravity));
    CHECK(s.gyro_z == x(drone::kYawRate));
  }
}

TEST_CASE("synthesize_imu: per-sample noise follows the density and the rate") {
  const auto traj = sim::generate_trajectory(hover_spec(1000.0));
  drone::NoiseDensities d{1e-3, 0, 0, 0};
  auto variance = [&](double rate) {
    const auto noisy = sim::synthesize_imu(traj, d, rate, 7);
    double acc = 0;
    for (const auto& s : noisy) acc += s.accel.x() * s.accel.x();
    return std::pair{acc / noisy.size(), noisy.size()};
  };
  const auto [v100, n100] = variance(100.0);
  CHECK(n100 >= 99900);
  CHECK(std::sqrt(v100) == doctest::Approx(0.01).epsilon(0.02));
  const auto [v200, n200] = variance(200.0);
  CHECK(v200 / v100 == doctest::Approx(2.0).epsilon(0.04));
}

TEST_CASE("render_measurement: exact without noise, residual variance Sigma / A with white noise") {
  const CameraIntrinsics intr = CameraIntrinsics::centered(128, 160);
  const MapModel map = sim::generate_map(200, {-60, -60}, {120, 120}, 0.25, 5);
  Vec x = Vec::Zero(drone::kStateDim);
  x(drone::kPos + 2) = 40;
  x(drone::kYaw) = 0.3;
  const auto clean = render_expected(x, intr.grid(), intr, map);
  CHECK(sim::render_measurement(x, map, intr, NoiseModel<double>::white(0.0), 1).values == clean.values);
  const auto noisy = sim::render_measurement(x, map, intr, NoiseModel<double>::white(1e-2), 2);
  const Eigen::ArrayXd r = (noisy.values - clean.values).array();
  const double var = (r - r.mean()).square().mean();
  CHECK(var == doctest::Approx(1e-2).epsilon(0.03));
}

TEST_CASE("simulate: frames align with about 20/3 IMU samples each") {
  SimConfig cfg = small_config();
  cfg.duration = 12;
  const Dataset ds = sim::simulate(cfg);
  CHECK(ds.frame_count() == 180);
  double total = 0;
  for (std::size_t k = 1; k < ds.frame_count(); ++k) {
    total += static_cast<double>(ds.imu_for(k).size());
    CHECK_FALSE(ds.alignment[k].stale);
  }
  CHECK(total / (ds.frame_count() - 1) == doctest::Approx(20.0 / 3.0).epsilon(0.01));
  CHECK(ds.frame(3).values == ds.frame(3).values);
}

TEST_CASE("write_dataset: read-back equality and deterministic hash") {
  const SimConfig cfg = small_config();
  const Dataset ds = sim::simulate(cfg);
  const fs::path a = scratch("a"), b = scratch("b"), c = scratch("c");
  sim::write_dataset(ds, a);
  sim::write_dataset(sim::simulate(cfg), b);
  SimConfig other = cfg;
  other.seed = cfg.seed + 1;
  sim::write_dataset(sim::simulate(other), c);
  CHECK(sim::dataset_hash(a) == sim::dataset_hash(b));
  CHECK(sim::dataset_hash(a) != sim::dataset_hash(c));

  const Dataset back = ingest(a);
  REQUIRE(back.frame_count() == ds.frame_count());
  for (std::size_t k = 0; k < ds.frame_count(); ++k) {
    CHECK(back.truth[k].t == ds.truth[k].t);
    CHECK(back.truth[k].position == ds.truth[k].position);
    CHECK(back.truth[k].yaw == ds.truth[k].yaw);
  }
  REQUIRE(back.imu.size() == ds.imu.size());
  for (std::size_t j = 0; j < ds.imu.size(); ++j) {
    CHECK(back.imu[j].t == ds.imu[j].t);
    CHECK(back.imu[j].accel == ds.imu[j].accel);
    CHECK(back.imu[j].gyro_z == ds.imu[j].gyro_z);
  }
  const auto quantized = decode_frame(encode_frame(ds.frame(5), cfg.image_lo, cfg.image_hi), cfg.image_lo, cfg.image_hi);
  CHECK(back.frame(5).values == quantized.values);
  CHECK((back.frame(5).values - ds.frame(5).values).cwiseAbs().maxCoeff() <= 0.5 * 2.0 / 65535 + 1e-15);
  CHECK(back.map->intensity().values == ds.map->intensity().values);
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("filter fed noise-free renders from the truth state does not drift") {
  SimConfig cfg = small_config();
  cfg.sigma = 0;
  cfg.densities = {0, 0, 0, 0};
  cfg.duration = 100.0 / 15.0 + 0.01;
  const Dataset ds = sim::simulate(cfg);
  REQUIRE(ds.frame_count() >= 100);
  RunConfig run;
  run.densities = cfg.densities;
  const auto report = harness::run(ds, run);
  REQUIRE_FALSE(report.diverged());
  double worst = 0;
  for (double e : report.position_error2) worst = std::max(worst, std::sqrt(e));
  CHECK(worst < 1e-6);
}
