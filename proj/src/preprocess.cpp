#include "fieldkf/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fieldkf {

namespace {

int bin_of(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return std::min(kHistogramBins - 1, static_cast<int>(c * kHistogramBins));
}

double bin_center(int b) { return (b + 0.5) / kHistogramBins; }

}  // namespace

std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

namespace {

using StridedRow = Eigen::Map<VectorX<double>, 0, Eigen::InnerStride<>>;
using ConstStridedRow = Eigen::Map<const VectorX<double>, 0, Eigen::InnerStride<>>;

/// Separable convolution of one R x C plane (element stride `stride`) with
/// replicate borders. Horizontally blurred rows live in a ring of
/// 2 * radius + 1 rows, so the plane is read once and written once.
void blur_plane(const double* in, double* out, Index R, Index C, Index stride, const std::vector<double>& taps) {
  const Index K = static_cast<Index>(taps.size()), radius = K / 2;
  RowMatrixX<double> ring(K, C);
  VectorX<double> padded(C + 2 * radius);
  auto horizontal = [&](Index r) {
    const ConstStridedRow row(in + r * C * stride, C, Eigen::InnerStride<>(stride));
    padded.segment(radius, C) = row;
    padded.head(radius).setConstant(row(0));
    padded.tail(radius).setConstant(row(C - 1));
    auto dst = ring.row(r % K);
    dst = taps[0] * padded.segment(0, C).transpose();
    for (Index k = 1; k < K; ++k) dst += taps[static_cast<std::size_t>(k)] * padded.segment(k, C).transpose();
  };
  for (Index r = 0; r <= std::min(radius, R - 1); ++r) horizontal(r);
  VectorX<double> acc(C);
  for (Index r = 0; r < R; ++r) {
    if (r + radius < R && r + radius > radius) horizontal(r + radius);
    acc.setZero();
    for (Index k = 0; k < K; ++k) {
      const Index src = std::clamp<Index>(r + k - radius, 0, R - 1);
      acc += taps[static_cast<std::size_t>(k)] * ring.row(src % K).transpose();
    }
    StridedRow(out + r * C * stride, C, Eigen::InnerStride<>(stride)) = acc;
  }
}

}  // namespace

ImageField<double> gaussian_blur(const ImageField<double>& img, double sigma) {
  if (!(sigma > 0)) return img;
  const std::vector<double> taps = gaussian_kernel_1d(sigma);
  const Index R = img.grid.rows, C = img.grid.cols, m = img.channels();
  ImageField<double> out;
  out.grid = img.grid;
  out.valid = img.valid;
  out.values.resize(img.values.rows(), m);
  for (Index ch = 0; ch < m; ++ch) blur_plane(img.values.data() + ch, out.values.data() + ch, R, C, m, taps);
  return out;
}

ImageField<double> normalize_minmax(const ImageField<double>& img) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index p = 0; p < img.size(); ++p)
    if (img.valid[static_cast<std::size_t>(p)]) {
      lo = std::min(lo, img.values.row(p).minCoeff());
      hi = std::max(hi, img.values.row(p).maxCoeff());
    }
  if (!(hi > lo)) return img;
  ImageField<double> out = img;
  for (Index p = 0; p < img.size(); ++p)
    if (img.valid[static_cast<std::size_t>(p)]) out.values.row(p) = (img.values.row(p).array() - lo) / (hi - lo);
  return out;
}

std::array<double, kHistogramBins> cumulative_histogram(const ImageField<double>& img) {
  std::array<double, kHistogramBins> cdf{};
  double total = 0;
  for (Index p = 0; p < img.size(); ++p) {
    if (!img.valid[static_cast<std::size_t>(p)]) continue;
    for (Index ch = 0; ch < img.channels(); ++ch) {
      cdf[static_cast<std::size_t>(bin_of(img.values(p, ch)))] += 1;
      total += 1;
    }
  }
  for (int b = 1; b < kHistogramBins; ++b) cdf[b] += cdf[b - 1];
  if (total > 0)
    for (double& v : cdf) v /= total;
  return cdf;
}

ImageField<double> equalize_histogram(const ImageField<double>& img) {
  const auto cdf = cumulative_histogram(img);
  double cdf_min = 0;
  for (double v : cdf)
    if (v > 0) {
      cdf_min = v;
      break;
    }
  if (!(cdf_min < 1)) return img;
  ImageField<double> out = img;
  for (Index p = 0; p < img.size(); ++p) {
    if (!img.valid[static_cast<std::size_t>(p)]) continue;
    for (Index ch = 0; ch < img.channels(); ++ch)
      out.values(p, ch) = (cdf[static_cast<std::size_t>(bin_of(img.values(p, ch)))] - cdf_min) / (1 - cdf_min);
  }
  return out;
}

ImageField<double> match_histogram(const ImageField<double>& img, const ImageField<double>& reference) {
  const auto src = cumulative_histogram(img);
  const auto ref = cumulative_histogram(reference);
  std::array<double, kHistogramBins> lut{};
  int j = 0;
  for (int b = 0; b < kHistogramBins; ++b) {
    while (j < kHistogramBins - 1 && ref[static_cast<std::size_t>(j)] < src[static_cast<std::size_t>(b)] - 1e-12) ++j;
    lut[static_cast<std::size_t>(b)] = bin_center(j);
  }
  ImageField<double> out = img;
  for (Index p = 0; p < img.size(); ++p) {
    if (!img.valid[static_cast<std::size_t>(p)]) continue;
    for (Index ch = 0; ch < img.channels(); ++ch)
      out.values(p, ch) = lut[static_cast<std::size_t>(bin_of(img.values(p, ch)))];
  }
  return out;
}

ImageField<double> preprocess(const ImageField<double>& img, const PreprocessConfig& cfg,
                              const ImageField<double>* reference) {
  ImageField<double> out = cfg.blur && cfg.blur_sigma > 0 ? gaussian_blur(img, cfg.blur_sigma) : img;
  if (cfg.normalize) out = normalize_minmax(out);
  if (cfg.equalize) out = equalize_histogram(out);
  if (cfg.match && reference) out = match_histogram(out, *reference);
  return out;
}

void preprocess_pair(ImageField<double>& measured, ImageField<double>& predicted, const PreprocessConfig& cfg) {
  if (!cfg.any()) return;
  PreprocessConfig pred_cfg = cfg;
  pred_cfg.match = false;
  predicted = preprocess(predicted, pred_cfg);
  measured = preprocess(measured, cfg, &predicted);
}

}  // namespace fieldkf
