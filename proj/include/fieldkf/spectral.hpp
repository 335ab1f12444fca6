#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fieldkf/errors.hpp"
#include "fieldkf/field.hpp"

namespace fieldkf {

template <typename Scalar>
using ComplexGrid =
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ComplexMatrixX = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

/// Unscaled in-place 2-D DFT (row pass then column pass). Forward uses
/// exp(-2 pi j k n / N); the inverse uses the conjugate kernel and does not
/// divide by N. Callers apply the physical scaling.
template <typename Scalar>
void dft2(ComplexGrid<Scalar>& a, bool inverse) {
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::Unscaled);
  std::vector<std::complex<Scalar>> in, out;

  in.resize(static_cast<std::size_t>(a.cols()));
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index c = 0; c < a.cols(); ++c) in[c] = a(r, c);
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index c = 0; c < a.cols(); ++c) a(r, c) = out[c];
  }
  in.resize(static_cast<std::size_t>(a.rows()));
  for (Index c = 0; c < a.cols(); ++c) {
    for (Index r = 0; r < a.rows(); ++r) in[r] = a(r, c);
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index r = 0; r < a.rows(); ++r) a(r, c) = out[r];
  }
}

/// Frequency index of -omega on a rows x cols DFT grid.
inline Index mirror_index(Index p, Index rows, Index cols) {
  const Index u = p / cols, v = p % cols;
  return ((rows - u) % rows) * cols + (cols - v) % cols;
}

inline bool close_rel(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

/// Covariance function R(tau) of a wide-sense-stationary noise field.
///
/// Either ideal white noise Sigma * delta(tau), or explicit samples of R on a
/// centered lattice of lags tau = (dr * pitch_row, dc * pitch_col) with
/// |dr| <= half_rows, |dc| <= half_cols. Sampled kernels are discrete-level
/// covariances: the white kernel discretizes to a sampled kernel whose only
/// nonzero lag is R(0) = Sigma / A.
template <typename Scalar>
class StationaryKernel {
 public:
  using Matrix = MatrixX<Scalar>;

  static StationaryKernel white(Matrix sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
      throw InvalidArgument("white-noise covariance must be a non-empty square matrix");
    if (!sigma.allFinite()) throw InvalidArgument("white-noise covariance has non-finite entries");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * std::max<Scalar>(1, sigma.cwiseAbs().maxCoeff()))
      throw InvalidArgument("white-noise covariance must be symmetric");
    StationaryKernel k;
    k.white_ = true;
    k.channels_ = sigma.rows();
    k.sigma_ = std::move(sigma);
    return k;
  }

  static StationaryKernel white(Scalar sigma) { return white(Matrix::Constant(1, 1, sigma)); }

  static StationaryKernel sampled(Index half_rows, Index half_cols, double pitch_row, double pitch_col,
                                  std::vector<Matrix> lags) {
    if (half_rows < 0 || half_cols < 0) throw InvalidArgument("kernel half-widths must be >= 0");
    if (!(pitch_row > 0) || !(pitch_col > 0)) throw InvalidArgument("kernel pitch must be > 0");
    const auto expected = static_cast<std::size_t>((2 * half_rows + 1) * (2 * half_cols + 1));
    if (lags.size() != expected)
      throw InvalidArgument("kernel expects " + std::to_string(expected) + " lag samples, got " +
                            std::to_string(lags.size()));
    const Index m = lags.front().rows();
    Scalar scale = 0;
    for (const auto& l : lags) {
      if (l.rows() != m || l.cols() != m) throw InvalidArgument("kernel lag samples must all be m x m");
      if (!l.allFinite()) throw InvalidArgument("kernel has non-finite samples");
      scale = std::max(scale, l.cwiseAbs().maxCoeff());
    }
    StationaryKernel k;
    k.white_ = false;
    k.channels_ = m;
    k.half_rows_ = half_rows;
    k.half_cols_ = half_cols;
    k.pitch_row_ = pitch_row;
    k.pitch_col_ = pitch_col;
    k.lags_ = std::move(lags);

    const Scalar tol = Scalar(1e-12) * std::max<Scalar>(1, scale);
    for (Index dr = -half_rows; dr <= half_rows; ++dr)
      for (Index dc = -half_cols; dc <= half_cols; ++dc)
        if ((k.lag(dr, dc) - k.lag(-dr, -dc).transpose()).cwiseAbs().maxCoeff() > tol)
          throw InvalidArgument("kernel violates R(tau) = R(-tau)^T at lag (" + std::to_string(dr) + ", " +
                                std::to_string(dc) + ")");
    Eigen::SelfAdjointEigenSolver<Matrix> es(k.lag(0, 0), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) throw InvalidArgument("kernel R(0) is not positive semidefinite");
    return k;
  }

  /// Scalar squared-exponential kernel variance * exp(-|tau|^2 / (2 s^2)).
  static StationaryKernel gaussian(Scalar variance, double length_scale, Index half_rows, Index half_cols,
                                   double pitch_row = 1.0, double pitch_col = 1.0) {
    std::vector<Matrix> lags;
    lags.reserve(static_cast<std::size_t>((2 * half_rows + 1) * (2 * half_cols + 1)));
    for (Index dr = -half_rows; dr <= half_rows; ++dr)
      for (Index dc = -half_cols; dc <= half_cols; ++dc) {
        const double tr = dr * pitch_row, tc = dc * pitch_col;
        const double v = std::exp(-(tr * tr + tc * tc) / (2.0 * length_scale * length_scale));
        lags.push_back(Matrix::Constant(1, 1, variance * static_cast<Scalar>(v)));
      }
    return sampled(half_rows, half_cols, pitch_row, pitch_col, std::move(lags));
  }

  bool is_white() const { return white_; }
  Index channels() const { return channels_; }
  const Matrix& sigma() const { return sigma_; }
  Index half_rows() const { return half_rows_; }
  Index half_cols() const { return half_cols_; }
  double pitch_row() const { return pitch_row_; }
  double pitch_col() const { return pitch_col_; }
  const std::vector<Matrix>& lags() const { return lags_; }

  const Matrix& lag(Index dr, Index dc) const {
    return lags_[static_cast<std::size_t>((dr + half_rows_) * (2 * half_cols_ + 1) + (dc + half_cols_))];
  }

 private:
  StationaryKernel() = default;

  bool white_ = true;
  Index channels_ = 1;
  Matrix sigma_;
  Index half_rows_ = 0;
  Index half_cols_ = 0;
  double pitch_row_ = 1.0;
  double pitch_col_ = 1.0;
  std::vector<Matrix> lags_;
};

/// Sampled spectrum R(omega) on the DFT frequency grid of a FieldGrid.
/// Row p of values holds the row-major m x m matrix at frequency index
/// p = u * cols + v.
template <typename Scalar>
struct Spectrum {
  using Complex = std::complex<Scalar>;
  using ComplexMatrix = ComplexMatrixX<Scalar>;

  FieldGrid grid;
  Index channels = 1;
  ComplexGrid<Scalar> values;

  Scalar max_norm = 0;
  Scalar min_eigenvalue = 0;   // smallest Hermitian eigenvalue over all frequencies
  Index worst_frequency = -1;  // where min_eigenvalue occurs
  Scalar floor = 0;            // regularization floor, set by invert_spectrum
  double regularized_fraction = 0.0;
  std::vector<std::string> warnings;

  Index size() const { return values.rows(); }

  ComplexMatrix at(Index p) const {
    return Eigen::Map<const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.row(p).data(), channels, channels);
  }

  void set(Index p, const ComplexMatrix& m) {
    Eigen::Map<Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.row(p).data(), channels, channels) = m;
  }

  /// Physical frequency (cycles per unit length) at index p.
  Eigen::Vector2d frequency(Index p) const {
    Index u = p / grid.cols, v = p % grid.cols;
    if (u > grid.rows / 2) u -= grid.rows;
    if (v > grid.cols / 2) v -= grid.cols;
    return {u / (grid.rows * grid.pitch_row), v / (grid.cols * grid.pitch_col)};
  }
};

namespace detail {

template <typename Scalar>
void update_spectrum_stats(Spectrum<Scalar>& s) {
  using ComplexMatrix = ComplexMatrixX<Scalar>;
  s.max_norm = 0;
  s.min_eigenvalue = std::numeric_limits<Scalar>::infinity();
  s.worst_frequency = -1;
  for (Index p = 0; p < s.size(); ++p) {
    Scalar lo, hi;
    if (s.channels == 1) {
      lo = hi = s.values(p, 0).real();
    } else {
      Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(s.at(p), Eigen::EigenvaluesOnly);
      lo = es.eigenvalues().minCoeff();
      hi = es.eigenvalues().maxCoeff();
    }
    s.max_norm = std::max({s.max_norm, std::abs(lo), std::abs(hi)});
    if (lo < s.min_eigenvalue) {
      s.min_eigenvalue = lo;
      s.worst_frequency = p;
    }
  }
}

}  // namespace detail

/// Scaled DFT of the kernel: R(omega) = A * sum_tau R(tau) exp(-2 pi j omega.tau),
/// which approximates the continuous transform. White noise gives the
/// constant spectrum Sigma. The DFT is circular, so the kernel support must
/// fit in half the grid extent along each axis.
template <typename Scalar>
Spectrum<Scalar> spectrum_of(const StationaryKernel<Scalar>& kernel, const FieldGrid& grid) {
  using Complex = std::complex<Scalar>;
  grid.validate();
  Spectrum<Scalar> s;
  s.grid = grid;
  s.channels = kernel.channels();
  const Index m = kernel.channels();
  s.values.setZero(grid.size(), m * m);

  if (kernel.is_white()) {
    for (Index p = 0; p < grid.size(); ++p) s.set(p, kernel.sigma().template cast<Complex>());
    detail::update_spectrum_stats(s);
    return s;
  }

  if (!detail::close_rel(kernel.pitch_row(), grid.pitch_row) || !detail::close_rel(kernel.pitch_col(), grid.pitch_col))
    throw InvalidArgument("kernel pitch does not match the field grid pitch");
  if (2 * (2 * kernel.half_rows() + 1) > grid.rows || 2 * (2 * kernel.half_cols() + 1) > grid.cols)
    throw InvalidArgument("kernel support exceeds half the grid extent (circular wraparound)");

  const Scalar area = static_cast<Scalar>(grid.cell_area());
  ComplexGrid<Scalar> buf(grid.rows, grid.cols);
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) {
      buf.setZero();
      for (Index dr = -kernel.half_rows(); dr <= kernel.half_rows(); ++dr)
        for (Index dc = -kernel.half_cols(); dc <= kernel.half_cols(); ++dc)
          buf((dr + grid.rows) % grid.rows, (dc + grid.cols) % grid.cols) = kernel.lag(dr, dc)(a, b);
      detail::dft2(buf, false);
      for (Index p = 0; p < grid.size(); ++p) s.values(p, a * m + b) = area * buf(p / grid.cols, p % grid.cols);
    }
  }
  for (Index p = 0; p < grid.size(); ++p) {
    const ComplexMatrixX<Scalar> r = s.at(p);
    s.set(p, (r + r.adjoint()) * Scalar(0.5));
  }
  detail::update_spectrum_stats(s);
  return s;
}

/// Inverse transform of a spectrum back to kernel lag samples (real part).
/// Uses the frequency-cell volume 1 / (N A) so that it inverts spectrum_of.
template <typename Scalar>
std::vector<MatrixX<Scalar>> kernel_samples_of(const Spectrum<Scalar>& s, Index half_rows, Index half_cols) {
  const auto& grid = s.grid;
  const Index m = s.channels;
  const Scalar dw = Scalar(1) / static_cast<Scalar>(grid.size() * grid.cell_area());
  std::vector<MatrixX<Scalar>> lags(static_cast<std::size_t>((2 * half_rows + 1) * (2 * half_cols + 1)),
                                    MatrixX<Scalar>::Zero(m, m));
  ComplexGrid<Scalar> buf(grid.rows, grid.cols);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) {
      for (Index p = 0; p < grid.size(); ++p) buf(p / grid.cols, p % grid.cols) = s.values(p, a * m + b);
      detail::dft2(buf, true);
      std::size_t i = 0;
      for (Index dr = -half_rows; dr <= half_rows; ++dr)
        for (Index dc = -half_cols; dc <= half_cols; ++dc, ++i)
          lags[i](a, b) = dw * buf((dr + grid.rows) % grid.rows, (dc + grid.cols) % grid.cols).real();
    }
  return lags;
}

/// Per-frequency inverse of the Hermitian spectrum. Eigenvalues below the
/// floor 1e-8 * max_omega |R(omega)| are clamped to the floor; the fraction
/// of frequencies where that happened is recorded, with a warning above 10%.
template <typename Scalar>
Spectrum<Scalar> invert_spectrum(const Spectrum<Scalar>& spec) {
  using ComplexMatrix = ComplexMatrixX<Scalar>;
  Spectrum<Scalar> inv = spec;
  inv.floor = Scalar(1e-8) * spec.max_norm;
  if (!(spec.max_norm > 0)) {
    // nothing to regularize against; every frequency is singular
    inv.floor = std::numeric_limits<Scalar>::min();
  }
  Index active = 0;
  for (Index p = 0; p < spec.size(); ++p) {
    if (spec.channels == 1) {
      Scalar lambda = spec.values(p, 0).real();
      if (lambda < inv.floor) {
        lambda = inv.floor;
        ++active;
      }
      inv.values(p, 0) = Scalar(1) / lambda;
      continue;
    }
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(spec.at(p));
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lambda = es.eigenvalues();
    bool clamped = false;
    for (Index i = 0; i < lambda.size(); ++i)
      if (lambda(i) < inv.floor) {
        lambda(i) = inv.floor;
        clamped = true;
      }
    active += clamped;
    const ComplexMatrix v = es.eigenvectors();
    inv.set(p, v * lambda.cwiseInverse().template cast<std::complex<Scalar>>().asDiagonal() * v.adjoint());
  }
  inv.regularized_fraction = spec.size() > 0 ? static_cast<double>(active) / static_cast<double>(spec.size()) : 0.0;
  inv.max_norm = spec.max_norm;
  inv.min_eigenvalue = spec.min_eigenvalue;
  inv.worst_frequency = spec.worst_frequency;
  if (inv.regularized_fraction > 0.10)
    inv.warnings.push_back("spectrum regularization active at " + std::to_string(100.0 * inv.regularized_fraction) +
                           "% of frequencies; the spectrum is close to singular");
  return inv;
}

namespace detail {

/// Principal square root of a Hermitian PSD matrix; small negative
/// eigenvalues (>= -tol) are clamped to zero.
template <typename Scalar>
ComplexMatrixX<Scalar> psd_sqrt(const ComplexMatrixX<Scalar>& m, Scalar tol, Index where) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrixX<Scalar>> es(m);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lambda = es.eigenvalues();
  if (lambda.minCoeff() < -tol)
    throw SingularMatrixError("noise spectrum has a negative eigenvalue " + std::to_string(double(lambda.minCoeff())) +
                                  " (kernel is not a valid covariance)",
                              where);
  lambda = lambda.cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * lambda.template cast<std::complex<Scalar>>().asDiagonal() * es.eigenvectors().adjoint();
}

template <typename Scalar>
MatrixX<Scalar> psd_sqrt_real(const MatrixX<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(m);
  const Scalar scale = std::max<Scalar>(es.eigenvalues().cwiseAbs().maxCoeff(), std::numeric_limits<Scalar>::min());
  if (es.eigenvalues().minCoeff() < -Scalar(1e-10) * scale)
    throw InvalidArgument("noise covariance has a negative eigenvalue");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

/// Zero-mean Gaussian field with the kernel's stationary covariance,
/// deterministic for a given seed. White noise yields i.i.d. pixels with
/// covariance Sigma / A. Correlated kernels are synthesized by filtering a
/// white field with the pointwise square root of the spectrum, symmetrized
/// so that H(-omega) = conj(H(omega)) and the output is real.
template <typename Scalar>
ImageField<Scalar> sample_noise_field(const StationaryKernel<Scalar>& kernel, const FieldGrid& grid,
                                      std::uint64_t seed) {
  using Complex = std::complex<Scalar>;
  grid.validate();
  const Index m = kernel.channels();
  const Index n = grid.size();
  ImageField<Scalar> out(grid, m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  if (kernel.is_white()) {
    const MatrixX<Scalar> root =
        detail::psd_sqrt_real<Scalar>(kernel.sigma() / static_cast<Scalar>(grid.cell_area()));
    VectorX<Scalar> w(m);
    for (Index p = 0; p < n; ++p) {
      for (Index c = 0; c < m; ++c) w(c) = static_cast<Scalar>(normal(rng));
      out.values.row(p) = (root * w).transpose();
    }
    return out;
  }

  const Spectrum<Scalar> spec = spectrum_of(kernel, grid);
  const Scalar area = static_cast<Scalar>(grid.cell_area());
  const Scalar tol = Scalar(1e-10) * std::max<Scalar>(spec.max_norm / area, std::numeric_limits<Scalar>::min());
  std::vector<ComplexMatrixX<Scalar>> filter(static_cast<std::size_t>(n));
  for (Index p = 0; p < n; ++p) filter[p] = detail::psd_sqrt<Scalar>(spec.at(p) / area, tol, p);
  std::vector<ComplexMatrixX<Scalar>> sym(filter.size());
  for (Index p = 0; p < n; ++p)
    sym[p] = (filter[p] + filter[detail::mirror_index(p, grid.rows, grid.cols)].conjugate()) * Scalar(0.5);

  std::vector<ComplexGrid<Scalar>> white(static_cast<std::size_t>(m), ComplexGrid<Scalar>(grid.rows, grid.cols));
  for (Index p = 0; p < n; ++p)
    for (Index c = 0; c < m; ++c) white[c](p / grid.cols, p % grid.cols) = Complex(static_cast<Scalar>(normal(rng)), 0);
  for (auto& w : white) detail::dft2(w, false);

  std::vector<ComplexGrid<Scalar>> shaped(static_cast<std::size_t>(m), ComplexGrid<Scalar>(grid.rows, grid.cols));
  Eigen::Matrix<Complex, Eigen::Dynamic, 1> w(m);
  for (Index p = 0; p < n; ++p) {
    const Index r = p / grid.cols, c = p % grid.cols;
    for (Index a = 0; a < m; ++a) w(a) = white[a](r, c);
    const Eigen::Matrix<Complex, Eigen::Dynamic, 1> y = sym[p] * w;
    for (Index a = 0; a < m; ++a) shaped[a](r, c) = y(a);
  }
  Scalar max_real = 0, max_imag = 0;
  for (Index a = 0; a < m; ++a) {
    detail::dft2(shaped[a], true);
    shaped[a] /= static_cast<Scalar>(n);
    max_real = std::max(max_real, shaped[a].real().cwiseAbs().maxCoeff());
    max_imag = std::max(max_imag, shaped[a].imag().cwiseAbs().maxCoeff());
    for (Index p = 0; p < n; ++p) out.values(p, a) = shaped[a](p / grid.cols, p % grid.cols).real();
  }
  if (max_imag > Scalar(1e-8) * std::max<Scalar>(max_real, 1))
    throw Error("noise synthesis produced a non-real field (imaginary residue " + std::to_string(double(max_imag)) + ")");
  return out;
}

}  // namespace fieldkf
