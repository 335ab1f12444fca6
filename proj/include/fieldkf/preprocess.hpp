#pragma once

// Image preprocessing applied to measured and predicted frames before the
// innovation is formed: Gaussian blur, min-max normalization, histogram
// equalization and histogram matching. Histograms use 256 uniform bins on
// [0, 1]; statistics are taken over valid pixels only.

#include <array>
#include <vector>

#include "fieldkf/field.hpp"

namespace fieldkf {

inline constexpr int kHistogramBins = 256;

struct PreprocessConfig {
  bool blur = true;
  double blur_sigma = 0.5;  // pixels
  bool normalize = false;
  bool equalize = false;
  bool match = false;  // measured image only, matched to the predicted one

  bool any() const { return (blur && blur_sigma > 0) || normalize || equalize || match; }
};

/// Normalized 1-D Gaussian taps of radius ceil(3 sigma), centered.
std::vector<double> gaussian_kernel_1d(double sigma);

/// Separable blur with replicated borders. sigma <= 0 is the identity.
ImageField<double> gaussian_blur(const ImageField<double>& img, double sigma);

/// Affine map of the valid-pixel range onto [0, 1]; a constant image is returned unchanged.
ImageField<double> normalize_minmax(const ImageField<double>& img);

std::array<double, kHistogramBins> cumulative_histogram(const ImageField<double>& img);

/// out = (cdf(bin) - cdf_min) / (1 - cdf_min).
ImageField<double> equalize_histogram(const ImageField<double>& img);

/// Each source bin maps to the center of the first reference bin whose
/// cumulative count reaches the source's.
ImageField<double> match_histogram(const ImageField<double>& img, const ImageField<double>& reference);

/// Runs the enabled stages in order on one image. reference is used only by
/// the matching stage.
ImageField<double> preprocess(const ImageField<double>& img, const PreprocessConfig& cfg,
                              const ImageField<double>* reference = nullptr);

/// Applies the chain to a (measured, predicted) pair; matching targets the
/// processed predicted image.
void preprocess_pair(ImageField<double>& measured, ImageField<double>& predicted, const PreprocessConfig& cfg);

}  // namespace fieldkf
