#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <future>
#include <thread>
#include <string>
#include <vector>

#include "fieldkf/errors.hpp"

namespace fieldkf {

using Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Regular 2-D sampling of the measurement domain. Sample (r, c) sits at
/// origin + (r * pitch_row, c * pitch_col); pixel index p = r * cols + c.
struct FieldGrid {
  Index rows = 0;
  Index cols = 0;
  double pitch_row = 1.0;
  double pitch_col = 1.0;
  double origin_row = 0.0;
  double origin_col = 0.0;

  static FieldGrid square_pixels(Index rows, Index cols, double pitch = 1.0) {
    return FieldGrid{rows, cols, pitch, pitch, 0.0, 0.0};
  }

  Index size() const { return rows * cols; }
  double cell_area() const { return pitch_row * pitch_col; }

  void validate() const {
    if (rows <= 0 || cols <= 0) throw InvalidArgument("field grid must have positive dimensions");
    if (!(pitch_row > 0.0) || !(pitch_col > 0.0)) throw InvalidArgument("field grid pitches must be > 0");
  }

  friend bool operator==(const FieldGrid&, const FieldGrid&) = default;
};

inline void require_same_grid(const FieldGrid& a, const FieldGrid& b, const char* context) {
  if (!(a == b)) {
    throw GridMismatchError(std::string(context) + ": fields are sampled on different grids (" +
                            std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                            std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
  }
}

namespace detail {

/// Runs body(begin, end) over contiguous slices of [0, n) on worker threads.
/// Each index is visited exactly once, so per-index work stays bit-identical.
template <typename Body>
void parallel_for(Index n, Body&& body, Index min_chunk = 4096) {
  const Index workers = std::max<Index>(1, std::thread::hardware_concurrency());
  const Index chunks = std::min<Index>(workers, std::max<Index>(1, n / min_chunk));
  if (chunks <= 1) {
    body(Index(0), n);
    return;
  }
  std::vector<std::future<void>> parts;
  parts.reserve(static_cast<std::size_t>(chunks));
  for (Index c = 0; c < chunks; ++c) {
    const Index b = n * c / chunks, e = n * (c + 1) / chunks;
    parts.push_back(std::async(std::launch::async, [&body, b, e] { body(b, e); }));
  }
  for (auto& f : parts) f.get();
}

}  // namespace detail

/// An m-channel field sampled on a FieldGrid. values is (pixels x channels),
/// row-major, so each pixel's channels are contiguous. valid[p] == 0 marks a
/// pixel whose sample is undefined (e.g. its world point fell off the map).
template <typename Scalar>
struct ImageField {
  FieldGrid grid;
  RowMatrixX<Scalar> values;
  std::vector<std::uint8_t> valid;

  ImageField() = default;
  ImageField(const FieldGrid& g, Index channels, Scalar fill = Scalar(0))
      : grid(g), values(RowMatrixX<Scalar>::Constant(g.size(), channels, fill)), valid(g.size(), 1) {}

  Index channels() const { return values.cols(); }
  Index size() const { return values.rows(); }

  Scalar& operator()(Index r, Index c, Index ch = 0) { return values(r * grid.cols + c, ch); }
  Scalar operator()(Index r, Index c, Index ch = 0) const { return values(r * grid.cols + c, ch); }

  Index invalid_count() const {
    Index n = 0;
    for (auto v : valid) n += (v == 0);
    return n;
  }

  /// Contiguous (pixels * channels) view, pixel-major.
  Eigen::Map<const VectorX<Scalar>> stacked() const {
    return Eigen::Map<const VectorX<Scalar>>(values.data(), values.size());
  }
};

/// Per-pixel m x n Jacobians G(i), stacked: rows [p*m, p*m + m) hold G(p).
template <typename Scalar>
struct JacobianField {
  FieldGrid grid;
  Index channels = 1;
  RowMatrixX<Scalar> stacked;

  JacobianField() = default;
  JacobianField(const FieldGrid& g, Index m, Index n)
      : grid(g), channels(m), stacked(RowMatrixX<Scalar>::Zero(g.size() * m, n)) {}

  Index state_dim() const { return stacked.cols(); }
  auto pixel(Index p) { return stacked.middleRows(p * channels, channels); }
  auto pixel(Index p) const { return stacked.middleRows(p * channels, channels); }
};

/// Per-pixel n x m matrices (the gain basis phi or the gain kappa). Stored
/// transposed in the JacobianField layout: rows [p*m, p*m + m) hold the
/// m x n matrix phi(p)^T, so integrals against Jacobians become one GEMM.
template <typename Scalar>
struct GainField {
  FieldGrid grid;
  Index channels = 1;
  RowMatrixX<Scalar> stacked_transpose;

  GainField() = default;
  GainField(const FieldGrid& g, Index m, Index n)
      : grid(g), channels(m), stacked_transpose(RowMatrixX<Scalar>::Zero(g.size() * m, n)) {}

  Index state_dim() const { return stacked_transpose.cols(); }
  /// The n x m matrix at pixel p.
  MatrixX<Scalar> at(Index p) const {
    return stacked_transpose.middleRows(p * channels, channels).transpose();
  }
};

}  // namespace fieldkf
