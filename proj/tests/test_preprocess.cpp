#include <doctest.h>

#include <cmath>
#include <random>

#include "fieldkf/preprocess.hpp"

using namespace fieldkf;

namespace {

ImageField<double> random_image(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageField<double> img(FieldGrid::square_pixels(rows, cols), 1);
  for (Index p = 0; p < img.size(); ++p) img.values(p, 0) = u(rng);
  return img;
}

}  // namespace

TEST_CASE("gaussian_kernel_1d is normalized with radius ceil(3 sigma)") {
  const auto k = gaussian_kernel_1d(0.5);
  REQUIRE(k.size() == 5);
  double norm = 0;
  for (int i = -2; i <= 2; ++i) norm += std::exp(-2.0 * i * i);
  for (int i = -2; i <= 2; ++i) CHECK(k[static_cast<std::size_t>(i + 2)] == doctest::Approx(std::exp(-2.0 * i * i) / norm));
  CHECK(gaussian_kernel_1d(1.1).size() == 9);
}

TEST_CASE("blur of a unit impulse is the separable discrete Gaussian") {
  ImageField<double> img(FieldGrid::square_pixels(11, 13), 1);
  img(5, 6) = 1.0;
  const auto out = gaussian_blur(img, 0.5);
  double norm = 0;
  for (int i = -2; i <= 2; ++i) norm += std::exp(-2.0 * i * i);
  double total = 0;
  for (Index r = 0; r < 11; ++r)
    for (Index c = 0; c < 13; ++c) {
      const Index dr = r - 5, dc = c - 6;
      const double expected =
          (std::abs(dr) <= 2 && std::abs(dc) <= 2) ? std::exp(-2.0 * (dr * dr + dc * dc)) / (norm * norm) : 0.0;
      CHECK(out(r, c) == doctest::Approx(expected).epsilon(1e-14));
      total += out(r, c);
    }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("blur keeps constants, replicates borders and is identity for sigma 0") {
  ImageField<double> flat(FieldGrid::square_pixels(7, 9), 1, 0.3);
  const auto b = gaussian_blur(flat, 1.3);
  CHECK((b.values.array() - 0.3).abs().maxCoeff() < 1e-15);
  const auto img = random_image(8, 10, 1);
  CHECK(gaussian_blur(img, 0.0).values == img.values);

  // a ramp in columns stays a ramp away from the border and flattens at it
  ImageField<double> ramp(FieldGrid::square_pixels(6, 12), 1);
  for (Index r = 0; r < 6; ++r)
    for (Index c = 0; c < 12; ++c) ramp(r, c) = 0.05 * c;
  const auto br = gaussian_blur(ramp, 0.5);
  CHECK(br(3, 6) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(br(3, 0) > 0.0);
}

TEST_CASE("normalize_minmax maps the valid range to [0, 1] and leaves constants alone") {
  ImageField<double> img(FieldGrid::square_pixels(2, 2), 1);
  img.values << 0.2, 0.4, 0.6, 0.9;
  img.valid[3] = 0;
  const auto out = normalize_minmax(img);
  CHECK(out.values(0, 0) == doctest::Approx(0.0));
  CHECK(out.values(1, 0) == doctest::Approx(0.5));
  CHECK(out.values(2, 0) == doctest::Approx(1.0));
  ImageField<double> flat(FieldGrid::square_pixels(3, 3), 1, 0.7);
  CHECK(normalize_minmax(flat).values == flat.values);
}

TEST_CASE("equalizing a uniform histogram is the identity within one bin") {
  ImageField<double> img(FieldGrid::square_pixels(16, 64), 1);
  for (Index p = 0; p < img.size(); ++p) img.values(p, 0) = ((p % kHistogramBins) + 0.5) / kHistogramBins;
  const auto out = equalize_histogram(img);
  CHECK((out.values - img.values).cwiseAbs().maxCoeff() <= 1.0 / kHistogramBins);
  const auto cdf = cumulative_histogram(img);
  CHECK(cdf.back() == doctest::Approx(1.0));
  CHECK(cdf.front() == doctest::Approx(1.0 / kHistogramBins));
}

TEST_CASE("matching an image to itself is the identity within one bin") {
  const auto img = random_image(32, 40, 4);
  const auto out = match_histogram(img, img);
  CHECK((out.values - img.values).cwiseAbs().maxCoeff() <= 1.0 / kHistogramBins);
}

TEST_CASE("matching reshapes the histogram onto the reference") {
  auto img = random_image(32, 32, 5);
  auto ref = img;
  ref.values = ref.values.array().square();
  const auto out = match_histogram(img, ref);
  const auto a = cumulative_histogram(out), b = cumulative_histogram(ref);
  double worst = 0;
  for (int k = 0; k < kHistogramBins; ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  CHECK(worst < 0.02);
}

TEST_CASE("preprocess runs the enabled stages in order") {
  const auto img = random_image(12, 14, 6);
  PreprocessConfig none;
  none.blur = false;
  CHECK_FALSE(none.any());
  CHECK(preprocess(img, none).values == img.values);

  PreprocessConfig cfg;
  cfg.blur = true;
  cfg.normalize = true;
  const auto chained = normalize_minmax(gaussian_blur(img, cfg.blur_sigma));
  CHECK(preprocess(img, cfg).values == chained.values);

  auto measured = img, predicted = random_image(12, 14, 7);
  PreprocessConfig match;
  match.blur = false;
  match.match = true;
  const auto expected = match_histogram(measured, predicted);
  const auto predicted_before = predicted;
  preprocess_pair(measured, predicted, match);
  CHECK(measured.values == expected.values);
  CHECK(predicted.values == predicted_before.values);
}
