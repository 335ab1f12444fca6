#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "fieldkf/config.hpp"
#include "fieldkf/io.hpp"
#include "oracles.hpp"

using namespace fieldkf;
using oracle::Mat;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fieldkf_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("PGM round trips at 8 and 16 bits, binary and ASCII") {
  for (int maxval : {255, 65535})
    for (bool binary : {true, false}) {
      io::PgmImage img;
      img.rows = 3;
      img.cols = 4;
      img.maxval = maxval;
      for (int i = 0; i < 12; ++i) img.data.push_back(static_cast<std::uint16_t>((i * 977) % (maxval + 1)));
      const fs::path p = scratch("rt.pgm");
      io::write_pgm(p, img, binary);
      const auto back = io::read_pgm(p);
      CHECK(back.rows == 3);
      CHECK(back.cols == 4);
      CHECK(back.maxval == maxval);
      CHECK(back.data == img.data);
    }
}

TEST_CASE("16-bit PGM samples are big-endian") {
  io::PgmImage img;
  img.rows = 1;
  img.cols = 1;
  img.data = {0x0102};
  const fs::path p = scratch("be.pgm");
  io::write_pgm(p, img, true);
  const std::string text = io::read_text(p);
  REQUIRE(text.size() >= 2);
  CHECK(static_cast<unsigned char>(text[text.size() - 2]) == 0x01);
  CHECK(static_cast<unsigned char>(text[text.size() - 1]) == 0x02);
}

TEST_CASE("unit quantization clamps and rounds") {
  RowMatrixX<double> v(1, 4);
  v << -0.1, 0.0, 0.5, 1.2;
  const auto pgm = io::unit_to_pgm(v, 255);
  CHECK(pgm.data == std::vector<std::uint16_t>{0, 0, 128, 255});
  CHECK(io::pgm_to_unit(pgm)(0, 3) == 1.0);
}

TEST_CASE("malformed PGM files raise IoError") {
  const fs::path p = scratch("bad.pgm");
  io::write_text(p, "P6\n1 1\n255\nx");
  CHECK_THROWS_AS(io::read_pgm(p), IoError);
  io::write_text(p, "P5\n4 4\n255\nab");
  CHECK_THROWS_AS(io::read_pgm(p), IoError);
  CHECK_THROWS_AS(io::read_pgm(scratch("does_not_exist.pgm")), IoError);
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1e-2}) CHECK(io::parse_double(io::format_double(v)) == v);
  CHECK_THROWS_AS(io::parse_double("1.5x"), IoError);
  CHECK_THROWS_AS(io::parse_double(""), IoError);
}

TEST_CASE("CSV round trip is bit-exact and problems name file and line") {
  const fs::path p = scratch("t.csv");
  io::write_csv(p, {"t", "x"}, {{0.1, 1.0 / 7.0}, {0.2, -3e-17}});
  const auto table = io::read_csv(p);
  CHECK(table.header == std::vector<std::string>{"t", "x"});
  CHECK(table.column("x") == 1);
  CHECK(table.column("y") == -1);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0][1] == 1.0 / 7.0);
  CHECK(table.rows[1][1] == -3e-17);

  io::write_text(p, "t,x\n0.1,2\n0.2,oops\n0.3\n");
  try {
    io::read_csv(p);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::vector<std::string> issues;
  const auto partial = io::read_csv(p, &issues);
  CHECK(partial.rows.size() == 1);
  CHECK(issues.size() == 2);
}

TEST_CASE("kernel files round trip") {
  const auto k = StationaryKernel<double>::gaussian(0.3, 0.7, 1, 2, 0.5, 0.5);
  const fs::path p = scratch("k.bin");
  io::write_kernel(p, k);
  const auto back = io::read_kernel(p);
  CHECK(back.half_rows() == 1);
  CHECK(back.half_cols() == 2);
  CHECK(back.pitch_row() == 0.5);
  REQUIRE(back.lags().size() == k.lags().size());
  for (std::size_t i = 0; i < k.lags().size(); ++i) CHECK(back.lags()[i] == k.lags()[i]);
  io::write_text(p, "garbage");
  CHECK_THROWS_AS(io::read_kernel(p), IoError);
}

TEST_CASE("key-value parsing, comments and overrides") {
  const auto kv = KeyValues::parse("# comment\nsigma = 0.02\n\n  dt=0.1  # trailing\n");
  CHECK(kv.values.at("sigma") == "0.02");
  CHECK(kv.values.at("dt") == "0.1");
  CHECK_THROWS_AS(KeyValues::parse("just words\n"), ConfigError);

  auto merged = kv;
  merged.merge(KeyValues::from_arguments({"--sigma=0.5"}));
  CHECK(merged.values.at("sigma") == "0.5");
  CHECK_THROWS_AS(KeyValues::from_arguments({"sigma=0.5"}), ConfigError);
}

TEST_CASE("run configuration defaults, binding and rejection of unknown keys") {
  RunConfig cfg;
  CHECK(cfg.sigma == 1e-2);
  CHECK(cfg.dt == doctest::Approx(1.0 / 15.0));
  CHECK(cfg.imu_rate == 100.0);
  CHECK(cfg.densities.sigma_a == 1.6e-2);
  CHECK(cfg.densities.g_a == 1.94e-3);
  CHECK(cfg.preprocess.blur);
  CHECK(cfg.preprocess.blur_sigma == 0.5);
  CHECK(cfg.p0 == "Q");

  cfg.apply(KeyValues::parse("sigma = 0.05\nsigma_a = 0.004\nblur = false\n"));
  CHECK(cfg.sigma == 0.05);
  CHECK(cfg.densities.sigma_a == 0.004);
  CHECK_FALSE(cfg.preprocess.blur);
  CHECK_THROWS_AS(cfg.apply(KeyValues::parse("sigmaa = 1\n")), ConfigError);
  CHECK_THROWS_AS(cfg.apply(KeyValues::parse("sigma = abc\n")), ConfigError);

  // emitted text parses back to the same configuration
  RunConfig copy;
  copy.apply(KeyValues::parse(cfg.to_text()));
  CHECK(copy.to_text() == cfg.to_text());
}

TEST_CASE("simulation configuration validation") {
  SimConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.apply(KeyValues::parse("pattern = circuit\nrows = 64\n"));
  CHECK(cfg.pattern == TrajectoryPattern::Circuit);
  CHECK(cfg.rows == 64);
  CHECK_THROWS_AS(cfg.apply(KeyValues::parse("pattern = spiral\n")), ConfigError);
  cfg.altitude = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
