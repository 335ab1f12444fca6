#pragma once

// Independent reference implementations used by the tests. None of these
// share code paths with the library beyond the plain data containers.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fieldkf/core_filter.hpp"

namespace oracle {

using fieldkf::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Textbook finite-dimensional Kalman filter on a stacked measurement
/// z = H x + v, v ~ N(0, R), in innovation-covariance form with the
/// Joseph covariance update.
struct TextbookKf {
  Vec x;
  Mat P;

  void step(const Mat& F, const Mat& Q, const Vec& u, const Mat& H, const Mat& R, const Vec& z) {
    const Vec xp = F * x + u;
    const Mat Pp = F * P * F.transpose() + Q;
    const Mat Sy = H * Pp * H.transpose() + R;
    const Mat K = Sy.ldlt().solve(H * Pp).transpose();
    x = xp + K * (z - H * xp);
    const Mat I = Mat::Identity(x.size(), x.size());
    const Mat IKH = I - K * H;
    P = IKH * Pp * IKH.transpose() + K * R * K.transpose();
    P = 0.5 * (P + P.transpose());
  }
};

/// Linear field model g(x, i) = H_i x with a fixed stacked matrix H
/// (N*m x n). Used to reduce the field filter to a plain Kalman filter.
class LinearFieldModel : public fieldkf::MeasurementModel<double> {
 public:
  LinearFieldModel(fieldkf::FieldGrid grid, Index channels, Mat H) : grid_(grid), m_(channels), H_(std::move(H)) {}

  fieldkf::ImageField<double> predict(const Vec& x, const fieldkf::FieldGrid& grid) const override {
    fieldkf::ImageField<double> out(grid, m_);
    const Vec y = H_ * x;
    for (Index p = 0; p < grid.size(); ++p)
      for (Index a = 0; a < m_; ++a) out.values(p, a) = y(p * m_ + a);
    return out;
  }
  fieldkf::JacobianField<double> jacobian(const Vec&, const fieldkf::FieldGrid& grid) const override {
    fieldkf::JacobianField<double> G(grid, m_, H_.cols());
    G.stacked = H_;
    return G;
  }

 private:
  fieldkf::FieldGrid grid_;
  Index m_;
  Mat H_;
};

inline fieldkf::ImageField<double> field_from_stacked(const fieldkf::FieldGrid& grid, Index m, const Vec& v) {
  fieldkf::ImageField<double> f(grid, m);
  for (Index p = 0; p < grid.size(); ++p)
    for (Index a = 0; a < m; ++a) f.values(p, a) = v(p * m + a);
  return f;
}

inline Mat random_spd(Index n, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> normal;
  Mat A(n, n);
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = normal(rng);
  return A * A.transpose() / static_cast<double>(n) + ridge * Mat::Identity(n, n);
}

inline Mat random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Mat A(r, c);
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = normal(rng);
  return A;
}

/// Dense N x N pixel covariance of a scalar stationary kernel on a periodic
/// grid: C(p, q) = R(lag(p, q)) with wrapped lags, zero outside the support.
inline Mat circulant_covariance(const fieldkf::StationaryKernel<double>& k, const fieldkf::FieldGrid& grid) {
  const Index N = grid.size();
  Mat C = Mat::Zero(N, N);
  auto wrap = [](Index d, Index n) {
    d = ((d % n) + n) % n;
    return d > n / 2 ? d - n : d;
  };
  for (Index p = 0; p < N; ++p)
    for (Index q = 0; q < N; ++q) {
      const Index dr = wrap((p / grid.cols) - (q / grid.cols), grid.rows);
      const Index dc = wrap((p % grid.cols) - (q % grid.cols), grid.cols);
      if (std::abs(dr) <= k.half_rows() && std::abs(dc) <= k.half_cols()) C(p, q) = k.lag(dr, dc)(0, 0);
    }
  return C;
}

/// Central difference of f at x along direction d with step h.
inline Vec central_difference(const std::function<Vec(const Vec&)>& f, const Vec& x, const Vec& d, double h) {
  return (f(x + h * d) - f(x - h * d)) / (2 * h);
}

/// Richardson-extrapolated central difference (error O(h^4)).
inline Vec richardson_difference(const std::function<Vec(const Vec&)>& f, const Vec& x, const Vec& d, double h) {
  const Vec d1 = central_difference(f, x, d, h);
  const Vec d2 = central_difference(f, x, d, h / 2);
  return (4 * d2 - d1) / 3;
}

inline double rel_diff(const Mat& a, const Mat& b) {
  const double denom = std::max(a.norm(), b.norm());
  return denom > 0 ? (a - b).norm() / denom : 0.0;
}

}  // namespace oracle
