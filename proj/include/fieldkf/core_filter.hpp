#pragma once

// Extended Kalman filter for a finite-dimensional state observed through a
// sampled measurement field. Integrals over the measurement domain are
// midpoint Riemann sums over the grid (weight = cell area A); a white noise
// covariance Sigma * delta(i - i') becomes per-pixel variance Sigma / A.
// With those two conventions one step is algebraically identical to a
// classical Kalman filter on the stacked pixel vector.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fieldkf/errors.hpp"
#include "fieldkf/field.hpp"
#include "fieldkf/spectral.hpp"

namespace fieldkf {

/// Pixel-sum reduction strategy. Deterministic sums in a fixed order on the
/// calling thread (bit-reproducible); Parallel splits pixels into contiguous
/// chunks on worker threads and adds the partial sums in chunk order.
enum class Reduction { Deterministic, Parallel };

template <typename Scalar>
using NoiseModel = StationaryKernel<Scalar>;

/// Error raised inside a filter step, tagged with the step's time index.
class StepError : public Error {
 public:
  StepError(std::int64_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

template <typename Scalar>
struct FilterState {
  VectorX<Scalar> x;
  MatrixX<Scalar> P;
  std::int64_t k = 0;

  // Diagnostics from the step that produced this state.
  VectorX<Scalar> x_prior;
  MatrixX<Scalar> P_prior;
  MatrixX<Scalar> S;
  Scalar rcond = Scalar(1);
  bool ill_conditioned = false;
  Index invalid_pixels = 0;

  static FilterState initial(VectorX<Scalar> x0, MatrixX<Scalar> P0) {
    if (P0.rows() != x0.size() || P0.cols() != x0.size())
      throw InvalidArgument("initial covariance must be n x n for an n-vector state");
    FilterState s;
    s.x = std::move(x0);
    s.P = std::move(P0);
    return s;
  }
};

template <typename Scalar>
struct ProcessModel {
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  /// x_{k|k-1} = transition(x_{k-1}, input).
  std::function<Vector(const Vector&, const Vector&)> transition;
  /// F_k evaluated at x_{k-1}.
  std::function<Matrix(const Vector&)> jacobian;
  Matrix Q;
  /// Optional canonicalization applied after predict and update (angle wrap).
  std::function<void(Vector&)> normalize;

  /// x' = F x + input (input may be empty).
  static ProcessModel linear(Matrix F, Matrix Q) {
    ProcessModel m;
    m.transition = [F](const Vector& x, const Vector& u) -> Vector {
      Vector out = F * x;
      if (u.size() > 0) out += u;
      return out;
    };
    m.jacobian = [F](const Vector&) { return F; };
    m.Q = std::move(Q);
    return m;
  }
};

/// Adds eps = 1e-12 * max(max diag Q, dt) to the diagonal when Q has
/// structural zeros on it, so that Q is strictly positive definite.
template <typename Derived>
typename Derived::PlainObject floor_process_noise(const Eigen::MatrixBase<Derived>& Q, double dt) {
  using Scalar = typename Derived::Scalar;
  typename Derived::PlainObject out = Q;
  if ((out.diagonal().array() == Scalar(0)).any()) {
    const Scalar eps = Scalar(1e-12) * std::max<Scalar>(out.diagonal().maxCoeff(), static_cast<Scalar>(dt));
    out.diagonal().array() += eps;
  }
  return out;
}

/// Measurement map g(x, .) and its per-pixel Jacobian G(x, .) on a grid.
/// Implementations zero the Jacobian rows of pixels they flag invalid.
template <typename Scalar>
class MeasurementModel {
 public:
  virtual ~MeasurementModel() = default;
  virtual ImageField<Scalar> predict(const VectorX<Scalar>& x, const FieldGrid& grid) const = 0;
  virtual JacobianField<Scalar> jacobian(const VectorX<Scalar>& x, const FieldGrid& grid) const = 0;
  /// State indices where G can be nonzero; empty means every state.
  virtual std::vector<Index> state_support() const { return {}; }
  /// g and G together, G restricted to the state_support() columns in that
  /// order. Override when the two share work.
  virtual std::pair<ImageField<Scalar>, JacobianField<Scalar>> evaluate(const VectorX<Scalar>& x,
                                                                        const FieldGrid& grid) const {
    JacobianField<Scalar> G = jacobian(x, grid);
    const std::vector<Index> support = state_support();
    if (!support.empty()) G.stacked = RowMatrixX<Scalar>(G.stacked(Eigen::all, support));
    return {predict(x, grid), std::move(G)};
  }
};

namespace detail {

inline unsigned worker_count() { return std::max(2u, std::thread::hardware_concurrency()); }

/// Sums partial(begin, end) over pixel ranges.
template <typename Result, typename Partial>
Result reduce_pixels(Index pixels, Reduction mode, Partial&& partial) {
  if (mode == Reduction::Deterministic || pixels < 2) return partial(Index(0), pixels);
  const Index chunks = std::min<Index>(worker_count(), pixels);
  std::vector<std::future<Result>> parts;
  parts.reserve(static_cast<std::size_t>(chunks));
  for (Index c = 0; c < chunks; ++c) {
    const Index b = pixels * c / chunks, e = pixels * (c + 1) / chunks;
    parts.push_back(std::async(std::launch::async, [&partial, b, e] { return Result(partial(b, e)); }));
  }
  Result total = parts.front().get();
  for (std::size_t c = 1; c < parts.size(); ++c) total += parts[c].get();
  return total;
}

template <typename Derived>
Index first_non_finite(const Eigen::DenseBase<Derived>& v) {
  for (Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(static_cast<double>(v.derived().data()[i]))) return i;
  return -1;
}

template <typename Scalar>
MatrixX<Scalar> symmetrized(const MatrixX<Scalar>& m) {
  return (m + m.transpose()) * Scalar(0.5);
}

}  // namespace detail

/// State prediction x_{k|k-1} = f(x_{k-1}, u).
template <typename Scalar>
VectorX<Scalar> predict_state(const FilterState<Scalar>& state, const ProcessModel<Scalar>& model,
                              const VectorX<Scalar>& input) {
  VectorX<Scalar> x = model.transition(state.x, input);
  if (model.normalize) model.normalize(x);
  if (const Index bad = detail::first_non_finite(x); bad >= 0)
    throw DivergenceError("non-finite predicted state", state.k + 1, bad);
  return x;
}

/// Covariance prediction F P F^T + Q, symmetrized.
template <typename Scalar>
MatrixX<Scalar> predict_covariance(const FilterState<Scalar>& state, const ProcessModel<Scalar>& model) {
  const MatrixX<Scalar> F = model.jacobian(state.x);
  return detail::symmetrized<Scalar>(F * state.P * F.transpose() + model.Q);
}

/// White-noise information matrix A * sum_i G(i)^T Sigma^{-1} G(i).
template <typename Scalar>
MatrixX<Scalar> gram_matrix_white(const JacobianField<Scalar>& G, const MatrixX<Scalar>& sigma,
                                  Reduction mode = Reduction::Deterministic) {
  const Index m = G.channels, n = G.state_dim();
  if (sigma.rows() != m || sigma.cols() != m) throw InvalidArgument("noise covariance must be m x m");
  Eigen::LLT<MatrixX<Scalar>> llt(sigma);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("white-noise covariance is not positive definite");
  const Scalar area = static_cast<Scalar>(G.grid.cell_area());

  auto accumulate = [&](Index b, Index e) -> MatrixX<Scalar> {
    MatrixX<Scalar> s = MatrixX<Scalar>::Zero(n, n);
    if (m == 1) {
      s.template selfadjointView<Eigen::Lower>().rankUpdate(G.stacked.middleRows(b, e - b).transpose());
    } else {
      RowMatrixX<Scalar> w(m * (e - b), n);
      for (Index p = b; p < e; ++p) w.middleRows((p - b) * m, m) = llt.matrixL().solve(MatrixX<Scalar>(G.pixel(p)));
      s.template selfadjointView<Eigen::Lower>().rankUpdate(w.transpose());
    }
    return s;
  };
  MatrixX<Scalar> lower = detail::reduce_pixels<MatrixX<Scalar>>(G.grid.size(), mode, accumulate);
  MatrixX<Scalar> S = lower.template selfadjointView<Eigen::Lower>();
  if (m == 1) S /= sigma(0, 0);
  return S * area;
}

/// Gain basis under ideal white noise: phi(i) = G(i)^T Sigma^{-1}, no transform.
template <typename Scalar>
GainField<Scalar> gain_basis_white(const JacobianField<Scalar>& G, const MatrixX<Scalar>& sigma) {
  const Index m = G.channels;
  if (sigma.rows() != m || sigma.cols() != m) throw InvalidArgument("noise covariance must be m x m");
  GainField<Scalar> phi;
  phi.grid = G.grid;
  phi.channels = m;
  if (m == 1) {
    if (!(sigma(0, 0) > 0)) throw SingularMatrixError("white-noise variance must be > 0");
    phi.stacked_transpose = G.stacked / sigma(0, 0);
    return phi;
  }
  Eigen::LLT<MatrixX<Scalar>> llt(sigma);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("white-noise covariance is not positive definite");
  phi.stacked_transpose.resize(G.stacked.rows(), G.stacked.cols());
  for (Index p = 0; p < G.grid.size(); ++p)
    phi.stacked_transpose.middleRows(p * m, m) = llt.solve(MatrixX<Scalar>(G.pixel(p)));
  return phi;
}

/// Gain basis phi = F^{-1}{ Gbar^T Rbar^{-1} }, computed with scaled DFTs
/// (forward x A, inverse x 1/(N A)). Per frequency the m x n block
/// Rbar(omega)^{-1} Gbar(omega) is formed, i.e. phi^T, which equals
/// A^{-1} C^{-1} G for the circulant pixel covariance C. A white kernel
/// gives a flat spectrum and reproduces G^T Sigma^{-1} pointwise.
template <typename Scalar>
GainField<Scalar> gain_basis_spectral(const JacobianField<Scalar>& G, const StationaryKernel<Scalar>& kernel) {
  using Complex = std::complex<Scalar>;
  const Index m = G.channels, n = G.state_dim();
  const FieldGrid& grid = G.grid;
  if (kernel.channels() != m) throw InvalidArgument("kernel channel count does not match the Jacobian field");

  const Spectrum<Scalar> spec = spectrum_of(kernel, grid);
  const Spectrum<Scalar> inv = invert_spectrum(spec);
  if (!(spec.max_norm > 0))
    throw SingularMatrixError("noise spectrum is identically zero", 0);
  if (spec.min_eigenvalue < -inv.floor)
    throw SingularMatrixError("noise spectrum is indefinite beyond the regularization floor (eigenvalue " +
                                  std::to_string(double(spec.min_eigenvalue)) + ")",
                              spec.worst_frequency);

  const Scalar area = static_cast<Scalar>(grid.cell_area());
  const Index pixels = grid.size();

  // Gbar: one transformed grid per (channel, state column).
  std::vector<ComplexGrid<Scalar>> gbar(static_cast<std::size_t>(m * n), ComplexGrid<Scalar>(grid.rows, grid.cols));
  for (Index a = 0; a < m; ++a)
    for (Index j = 0; j < n; ++j) {
      auto& buf = gbar[a * n + j];
      for (Index p = 0; p < pixels; ++p) buf(p / grid.cols, p % grid.cols) = Complex(G.stacked(p * m + a, j), 0);
      detail::dft2(buf, false);
      buf *= area;
    }

  Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic> gw(m, n);
  for (Index p = 0; p < pixels; ++p) {
    const Index r = p / grid.cols, c = p % grid.cols;
    for (Index a = 0; a < m; ++a)
      for (Index j = 0; j < n; ++j) gw(a, j) = gbar[a * n + j](r, c);
    const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic> prod = inv.at(p) * gw;
    for (Index a = 0; a < m; ++a)
      for (Index j = 0; j < n; ++j) gbar[a * n + j](r, c) = prod(a, j);
  }

  const Scalar dw = Scalar(1) / (static_cast<Scalar>(pixels) * area);
  GainField<Scalar> phi(grid, m, n);
  Scalar max_real = 0, max_imag = 0;
  for (Index a = 0; a < m; ++a)
    for (Index j = 0; j < n; ++j) {
      auto& buf = gbar[a * n + j];
      detail::dft2(buf, true);
      for (Index p = 0; p < pixels; ++p) {
        const Complex v = buf(p / grid.cols, p % grid.cols) * dw;
        phi.stacked_transpose(p * m + a, j) = v.real();
        max_real = std::max(max_real, std::abs(v.real()));
        max_imag = std::max(max_imag, std::abs(v.imag()));
      }
    }
  if (max_imag > Scalar(1e-8) * std::max<Scalar>(max_real, std::numeric_limits<Scalar>::min()))
    throw Error("gain basis inverse transform is not real (imaginary residue " + std::to_string(double(max_imag)) + ")");
  return phi;
}

/// Information matrix S = A * sum_i phi(i) G(i). Not symmetrized here.
template <typename Scalar>
MatrixX<Scalar> gram_matrix(const GainField<Scalar>& phi, const JacobianField<Scalar>& G,
                            Reduction mode = Reduction::Deterministic) {
  require_same_grid(phi.grid, G.grid, "gram_matrix");
  if (phi.channels != G.channels || phi.state_dim() != G.state_dim())
    throw GridMismatchError("gram_matrix: gain basis and Jacobian field shapes differ");
  const Index m = G.channels, n = G.state_dim();
  auto accumulate = [&](Index b, Index e) -> MatrixX<Scalar> {
    return phi.stacked_transpose.middleRows(b * m, (e - b) * m).transpose() * G.stacked.middleRows(b * m, (e - b) * m);
  };
  MatrixX<Scalar> S = detail::reduce_pixels<MatrixX<Scalar>>(G.grid.size(), mode, accumulate);
  if (S.size() == 0) S = MatrixX<Scalar>::Zero(n, n);
  return S * static_cast<Scalar>(G.grid.cell_area());
}

template <typename Scalar>
struct PosteriorCovariance {
  MatrixX<Scalar> P;
  Scalar rcond = Scalar(1);
  bool ill_conditioned = false;
};

/// Posterior P = P_prior (I + S P_prior)^{-1}, evaluated as the solution X of
/// (I + P_prior S) X = P_prior (push-through identity) and symmetrized.
/// Never forms an explicit inverse. Flags reciprocal condition < 1e-12.
template <typename Scalar>
PosteriorCovariance<Scalar> posterior_covariance(const MatrixX<Scalar>& P_prior, const MatrixX<Scalar>& S) {
  const Index n = P_prior.rows();
  if (S.rows() != n || S.cols() != n) throw InvalidArgument("posterior_covariance: S must be n x n");
  const MatrixX<Scalar> M = MatrixX<Scalar>::Identity(n, n) + P_prior * S;
  Eigen::PartialPivLU<MatrixX<Scalar>> lu(M);
  PosteriorCovariance<Scalar> out;
  out.rcond = lu.rcond();
  out.ill_conditioned = !(out.rcond >= Scalar(1e-12));
  out.P = detail::symmetrized<Scalar>(lu.solve(P_prior));
  return out;
}

/// Gain field kappa(i) = P phi(i).
template <typename Scalar>
GainField<Scalar> gain_field(const MatrixX<Scalar>& P, const GainField<Scalar>& phi) {
  GainField<Scalar> kappa;
  kappa.grid = phi.grid;
  kappa.channels = phi.channels;
  kappa.stacked_transpose.noalias() = phi.stacked_transpose * P.transpose();
  return kappa;
}

template <typename Scalar>
struct Innovation {
  ImageField<Scalar> field;
  Index invalid_pixels = 0;
};

/// Innovation measured - predicted. Pixels invalid in either field are zeroed
/// and excluded (flagged invalid in the result).
template <typename Scalar>
Innovation<Scalar> innovation(const ImageField<Scalar>& measured, const ImageField<Scalar>& predicted) {
  require_same_grid(measured.grid, predicted.grid, "innovation");
  if (measured.channels() != predicted.channels())
    throw GridMismatchError("innovation: channel counts differ");
  Innovation<Scalar> out;
  out.field.grid = measured.grid;
  out.field.values = measured.values - predicted.values;
  out.field.valid.assign(static_cast<std::size_t>(measured.size()), 1);
  for (Index p = 0; p < measured.size(); ++p) {
    const bool ok = measured.valid[p] && predicted.valid[p];
    if (!ok) {
      out.field.values.row(p).setZero();
      out.field.valid[p] = 0;
      ++out.invalid_pixels;
    }
  }
  return out;
}

/// State update x = x_prior + A * sum_i kappa(i) z(i).
template <typename Scalar>
VectorX<Scalar> update_state(const VectorX<Scalar>& x_prior, const GainField<Scalar>& gain,
                             const ImageField<Scalar>& innov, Reduction mode = Reduction::Deterministic,
                             std::int64_t step = -1) {
  require_same_grid(gain.grid, innov.grid, "update_state");
  if (gain.channels != innov.channels()) throw GridMismatchError("update_state: channel counts differ");
  if (gain.state_dim() != x_prior.size()) throw InvalidArgument("update_state: gain rows do not match the state");
  const Index m = gain.channels;
  const auto z = innov.stacked();
  auto accumulate = [&](Index b, Index e) -> VectorX<Scalar> {
    return gain.stacked_transpose.middleRows(b * m, (e - b) * m).transpose() * z.segment(b * m, (e - b) * m);
  };
  VectorX<Scalar> dx = detail::reduce_pixels<VectorX<Scalar>>(gain.grid.size(), mode, accumulate);
  VectorX<Scalar> x = x_prior + dx * static_cast<Scalar>(gain.grid.cell_area());
  if (const Index bad = detail::first_non_finite(x); bad >= 0)
    throw DivergenceError("non-finite updated state", step, bad);
  return x;
}

/// Information vector b = A * sum_i phi(i) z(i); the update is then
/// x = x_prior + P b, equal to the gain-field sum since kappa(i) = P phi(i).
template <typename Scalar>
VectorX<Scalar> information_vector(const GainField<Scalar>& phi, const ImageField<Scalar>& innov,
                                   Reduction mode = Reduction::Deterministic) {
  require_same_grid(phi.grid, innov.grid, "information_vector");
  if (phi.channels != innov.channels()) throw GridMismatchError("information_vector: channel counts differ");
  const Index m = phi.channels;
  const auto z = innov.stacked();
  auto accumulate = [&](Index b, Index e) -> VectorX<Scalar> {
    return phi.stacked_transpose.middleRows(b * m, (e - b) * m).transpose() * z.segment(b * m, (e - b) * m);
  };
  return detail::reduce_pixels<VectorX<Scalar>>(phi.grid.size(), mode, accumulate) *
         static_cast<Scalar>(phi.grid.cell_area());
}

/// Information vector under white noise, b = A * sum_i G(i)^T Sigma^{-1} z(i),
/// without forming the gain basis.
template <typename Scalar>
VectorX<Scalar> information_vector_white(const JacobianField<Scalar>& G, const MatrixX<Scalar>& sigma,
                                         const ImageField<Scalar>& innov, Reduction mode = Reduction::Deterministic) {
  require_same_grid(G.grid, innov.grid, "information_vector_white");
  const Index m = G.channels;
  if (m != innov.channels()) throw GridMismatchError("information_vector_white: channel counts differ");
  if (sigma.rows() != m || sigma.cols() != m) throw InvalidArgument("noise covariance must be m x m");
  VectorX<Scalar> w = innov.stacked();
  if (m == 1) {
    if (!(sigma(0, 0) > 0)) throw SingularMatrixError("white-noise variance must be > 0");
    w /= sigma(0, 0);
  } else {
    Eigen::LLT<MatrixX<Scalar>> llt(sigma);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("white-noise covariance is not positive definite");
    for (Index p = 0; p < G.grid.size(); ++p) w.segment(p * m, m) = llt.solve(w.segment(p * m, m));
  }
  auto accumulate = [&](Index b, Index e) -> VectorX<Scalar> {
    return G.stacked.middleRows(b * m, (e - b) * m).transpose() * w.segment(b * m, (e - b) * m);
  };
  return detail::reduce_pixels<VectorX<Scalar>>(G.grid.size(), mode, accumulate) *
         static_cast<Scalar>(G.grid.cell_area());
}

template <typename Scalar>
struct WhiteInformation {
  MatrixX<Scalar> S;  // A * sum_i G(i)^T Sigma^{-1} G(i)
  VectorX<Scalar> b;  // A * sum_i G(i)^T Sigma^{-1} z(i)

  WhiteInformation& operator+=(const WhiteInformation& o) {
    S += o.S;
    b += o.b;
    return *this;
  }
};

/// Information matrix and vector under white noise in one pass over G.
/// Pixels are visited in cache-sized blocks so G is streamed from memory once.
template <typename Scalar>
WhiteInformation<Scalar> white_information(const JacobianField<Scalar>& G, const MatrixX<Scalar>& sigma,
                                           const ImageField<Scalar>& innov, Reduction mode = Reduction::Deterministic) {
  require_same_grid(G.grid, innov.grid, "white_information");
  const Index m = G.channels, n = G.state_dim();
  if (m != innov.channels()) throw GridMismatchError("white_information: channel counts differ");
  if (sigma.rows() != m || sigma.cols() != m) throw InvalidArgument("noise covariance must be m x m");
  Eigen::LLT<MatrixX<Scalar>> llt(sigma);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("white-noise covariance is not positive definite");
  const auto z = innov.stacked();
  constexpr Index kBlock = 1024;

  auto accumulate = [&](Index begin, Index end) -> WhiteInformation<Scalar> {
    WhiteInformation<Scalar> acc{MatrixX<Scalar>::Zero(n, n), VectorX<Scalar>::Zero(n)};
    RowMatrixX<Scalar> w;
    VectorX<Scalar> wz;
    for (Index b = begin; b < end; b += kBlock) {
      const Index e = std::min(end, b + kBlock), rows = (e - b) * m;
      if (m == 1) {
        const auto g = G.stacked.middleRows(b, rows);
        acc.S.template selfadjointView<Eigen::Lower>().rankUpdate(g.transpose());
        acc.b.noalias() += g.transpose() * z.segment(b, rows);
      } else {
        w.resize(rows, n);
        wz.resize(rows);
        for (Index p = b; p < e; ++p) {
          w.middleRows((p - b) * m, m) = llt.matrixL().solve(MatrixX<Scalar>(G.pixel(p)));
          wz.segment((p - b) * m, m) = llt.matrixL().solve(VectorX<Scalar>(z.segment(p * m, m)));
        }
        acc.S.template selfadjointView<Eigen::Lower>().rankUpdate(w.transpose());
        acc.b.noalias() += w.transpose() * wz;
      }
    }
    return acc;
  };
  WhiteInformation<Scalar> out = detail::reduce_pixels<WhiteInformation<Scalar>>(G.grid.size(), mode, accumulate);
  const Scalar scale = static_cast<Scalar>(G.grid.cell_area()) / (m == 1 ? sigma(0, 0) : Scalar(1));
  out.S = MatrixX<Scalar>(out.S.template selfadjointView<Eigen::Lower>()) * scale;
  out.b *= scale;
  return out;
}

template <typename Scalar>
struct StepOptions {
  Reduction reduction = Reduction::Deterministic;
  /// Applied to (measured, predicted) before the innovation is formed.
  std::function<void(ImageField<Scalar>&, ImageField<Scalar>&)> preprocess;
  /// Forces G = 0 (prediction only); used for dead-reckoning baselines.
  bool prediction_only = false;
};

/// One full predict/update cycle. White noise takes the transform-free path.
/// The state update is x_prior + P b with b the information vector.
template <typename Scalar>
FilterState<Scalar> step(const FilterState<Scalar>& state, const ProcessModel<Scalar>& process,
                         const MeasurementModel<Scalar>& meas_model, const NoiseModel<Scalar>& noise,
                         const ImageField<Scalar>& measurement, const VectorX<Scalar>& input,
                         const StepOptions<Scalar>& options = {}) {
  const std::int64_t k = state.k + 1;
  try {
    FilterState<Scalar> next;
    next.k = k;
    next.x_prior = predict_state(state, process, input);

    const FieldGrid& grid = measurement.grid;
    auto [predicted, G] = meas_model.evaluate(next.x_prior, grid);
    if (predicted.size() != grid.size() || G.grid.size() != grid.size())
      throw GridMismatchError("measurement model output does not match the measurement grid");
    const Index n = next.x_prior.size();
    const std::vector<Index> support = meas_model.state_support();
    if (G.state_dim() != (support.empty() ? n : static_cast<Index>(support.size())))
      throw GridMismatchError("measurement Jacobian columns do not match the model's state support");
    const Index m = G.channels;
    if (options.prediction_only) G.stacked.setZero();
    for (Index p = 0; p < grid.size(); ++p)
      if (!predicted.valid[p]) G.stacked.middleRows(p * m, m).setZero();

    ImageField<Scalar> measured = measurement;
    if (options.preprocess) options.preprocess(measured, predicted);
    const Innovation<Scalar> innov = innovation(measured, predicted);
    next.invalid_pixels = innov.invalid_pixels;

    VectorX<Scalar> b;
    if (noise.is_white()) {
      WhiteInformation<Scalar> info = white_information(G, noise.sigma(), innov.field, options.reduction);
      next.S = std::move(info.S);
      b = std::move(info.b);
    } else {
      const GainField<Scalar> phi = gain_basis_spectral(G, noise);
      next.S = detail::symmetrized<Scalar>(gram_matrix(phi, G, options.reduction));
      b = information_vector(phi, innov.field, options.reduction);
    }

    if (!support.empty()) {
      MatrixX<Scalar> S_full = MatrixX<Scalar>::Zero(n, n);
      VectorX<Scalar> b_full = VectorX<Scalar>::Zero(n);
      S_full(support, support) = next.S;
      b_full(support) = b;
      next.S = std::move(S_full);
      b = std::move(b_full);
    }

    next.P_prior = predict_covariance(state, process);
    const PosteriorCovariance<Scalar> post = posterior_covariance(next.P_prior, next.S);
    next.P = post.P;
    next.rcond = post.rcond;
    next.ill_conditioned = post.ill_conditioned;
    if (detail::first_non_finite(next.P) >= 0) throw DivergenceError("non-finite covariance", k, -1);

    next.x = next.x_prior + next.P * b;
    if (const Index bad = detail::first_non_finite(next.x); bad >= 0)
      throw DivergenceError("non-finite updated state", k, bad);
    if (process.normalize) process.normalize(next.x);
    return next;
  } catch (const DivergenceError& e) {
    if (e.step() == k) throw;
    throw DivergenceError("filter diverged", k, e.entry());
  } catch (const StepError&) {
    throw;
  } catch (const Error& e) {
    throw StepError(k, e.what());
  }
}

// ---------------------------------------------------------------------------
// Invariant diagnostics

template <typename Scalar>
Scalar symmetry_error(const MatrixX<Scalar>& P) {
  return (P - P.transpose()).cwiseAbs().maxCoeff();
}

template <typename Scalar>
Scalar min_eigenvalue(const MatrixX<Scalar>& P) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(detail::symmetrized<Scalar>(P), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Smallest eigenvalue of P_prior - P_post (>= 0 when information only shrinks P).
template <typename Scalar>
Scalar loewner_gap(const MatrixX<Scalar>& P_prior, const MatrixX<Scalar>& P_post) {
  return min_eigenvalue<Scalar>(P_prior - P_post);
}

template <typename Scalar>
struct InformationResidual {
  Scalar residual = 0;           // relative Frobenius residual
  Scalar balanced_condition = 0; // condition number of the balanced prior
};

/// || P^{-1} - P_prior^{-1} - S ||_F / || S ||_F evaluated after the
/// congruence D (.) D with D = diag(P_prior)^{-1/2}, which leaves the identity
/// invariant but removes the scale spread between state components.
template <typename Scalar>
InformationResidual<Scalar> information_identity_residual(const MatrixX<Scalar>& P_prior, const MatrixX<Scalar>& P_post,
                                                          const MatrixX<Scalar>& S) {
  const VectorX<Scalar> d = P_prior.diagonal().cwiseSqrt().cwiseInverse();
  const MatrixX<Scalar> prior = d.asDiagonal() * P_prior * d.asDiagonal();
  const MatrixX<Scalar> post = d.asDiagonal() * P_post * d.asDiagonal();
  const MatrixX<Scalar> info = d.cwiseInverse().asDiagonal() * S * d.cwiseInverse().asDiagonal();
  const Index n = P_prior.rows();
  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
  const MatrixX<Scalar> prior_inv = prior.ldlt().solve(I);
  const MatrixX<Scalar> post_inv = post.ldlt().solve(I);
  InformationResidual<Scalar> out;
  const Scalar denom = info.norm() > 0 ? info.norm() : prior_inv.norm();
  out.residual = (post_inv - prior_inv - info).norm() / denom;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(prior, Eigen::EigenvaluesOnly);
  out.balanced_condition = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  return out;
}

}  // namespace fieldkf
