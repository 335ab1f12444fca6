#pragma once

// Discrete checks of the integrability and invertibility conditions the
// field filter relies on: bounded Jacobian field, bounded kernel, bounded
// gain and gain-basis fields, and an invertible noise spectrum.

#include <cmath>
#include <string>
#include <vector>

#include "fieldkf/core_filter.hpp"

namespace fieldkf {

enum class CheckStatus { Pass, Warn, Fail };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "PASS";
    case CheckStatus::Warn: return "WARN";
    case CheckStatus::Fail: return "FAIL";
  }
  return "FAIL";
}

struct AssumptionCheck {
  int index = 0;
  std::string name;
  CheckStatus status = CheckStatus::Pass;
  std::vector<std::pair<std::string, double>> values;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (c.status != CheckStatus::Pass) return false;
    return true;
  }
  const AssumptionCheck& check(int index) const { return checks.at(static_cast<std::size_t>(index - 1)); }
  std::string to_text() const;
};

namespace detail {

struct FieldNorms {
  double l1 = 0, l2 = 0, linf = 0;
  Index first_bad = -1;  // pixel index of the first non-finite entry
};

template <typename Scalar>
FieldNorms field_norms(const RowMatrixX<Scalar>& stacked, Index channels, double area) {
  FieldNorms n;
  double sq = 0;
  for (Index i = 0; i < stacked.rows(); ++i)
    for (Index j = 0; j < stacked.cols(); ++j) {
      const double v = static_cast<double>(stacked(i, j));
      if (!std::isfinite(v)) {
        if (n.first_bad < 0) n.first_bad = i / channels;
        continue;
      }
      n.l1 += std::abs(v) * area;
      sq += v * v * area;
      n.linf = std::max(n.linf, std::abs(v));
    }
  n.l2 = std::sqrt(sq);
  return n;
}

inline AssumptionCheck norm_check(int index, const std::string& name, const FieldNorms& n, bool with_l2) {
  AssumptionCheck c;
  c.index = index;
  c.name = name;
  c.values = {{"L1", n.l1}, {with_l2 ? "L2" : "Linf", with_l2 ? n.l2 : n.linf}};
  if (n.first_bad >= 0) {
    c.status = CheckStatus::Fail;
    c.detail = "non-finite value at pixel " + std::to_string(n.first_bad);
  } else if (!std::isfinite(n.l1) || !std::isfinite(with_l2 ? n.l2 : n.linf)) {
    c.status = CheckStatus::Fail;
    c.detail = "norm overflow";
  }
  return c;
}

}  // namespace detail

/// Evaluates the five checks for a Jacobian field G under a noise kernel.
/// The gain field uses covariance P (identity when P is empty).
template <typename Scalar>
AssumptionReport validate_assumptions(const JacobianField<Scalar>& G, const StationaryKernel<Scalar>& kernel,
                                      const MatrixX<Scalar>& P = MatrixX<Scalar>()) {
  AssumptionReport report;
  const double area = G.grid.cell_area();
  const Index n = G.state_dim();

  const detail::FieldNorms g = detail::field_norms(G.stacked, G.channels, area);
  report.checks.push_back(detail::norm_check(1, "Jacobian field bounded (L1, Linf)", g, false));

  // Kernel norms over its lag support (a white kernel is Sigma times a delta).
  detail::FieldNorms kn;
  if (kernel.is_white()) {
    kn.l1 = kernel.sigma().cwiseAbs().sum();
    kn.linf = kernel.sigma().cwiseAbs().maxCoeff();
    if (!kernel.sigma().allFinite()) kn.first_bad = 0;
  } else {
    const double lag_area = kernel.pitch_row() * kernel.pitch_col();
    for (std::size_t i = 0; i < kernel.lags().size(); ++i) {
      const auto& l = kernel.lags()[i];
      if (!l.allFinite() && kn.first_bad < 0) kn.first_bad = static_cast<Index>(i);
      kn.l1 += static_cast<double>(l.cwiseAbs().sum()) * lag_area;
      kn.linf = std::max(kn.linf, static_cast<double>(l.cwiseAbs().maxCoeff()));
    }
  }
  report.checks.push_back(detail::norm_check(2, "noise kernel bounded (L1, Linf)", kn, false));

  // Spectrum invertibility, then the gain basis and gain fields.
  AssumptionCheck spec_check;
  spec_check.index = 4;
  spec_check.name = "noise spectrum invertible";
  GainField<Scalar> phi;
  bool have_phi = false;
  if (g.first_bad < 0) {
    try {
      const Spectrum<Scalar> s = spectrum_of(kernel, G.grid);
      const Spectrum<Scalar> inv = invert_spectrum(s);
      spec_check.values = {{"min_eigenvalue", static_cast<double>(s.min_eigenvalue)},
                           {"floor", static_cast<double>(inv.floor)},
                           {"regularized_fraction", static_cast<double>(inv.regularized_fraction)}};
      if (!(s.max_norm > 0)) {
        spec_check.status = CheckStatus::Fail;
        spec_check.detail = "spectrum is identically zero";
      } else if (s.min_eigenvalue < -inv.floor) {
        spec_check.status = CheckStatus::Fail;
        spec_check.detail = "spectrum indefinite at frequency " + std::to_string(s.worst_frequency);
      } else if (inv.regularized_fraction > 0) {
        spec_check.status = CheckStatus::Warn;
        spec_check.detail = "regularization floor active at frequency " + std::to_string(s.worst_frequency);
      }
      phi = kernel.is_white() ? gain_basis_white(G, kernel.sigma()) : gain_basis_spectral(G, kernel);
      have_phi = true;
    } catch (const Error& e) {
      spec_check.status = CheckStatus::Fail;
      spec_check.detail = e.what();
    }
  } else {
    spec_check.status = CheckStatus::Fail;
    spec_check.detail = "not evaluated: Jacobian field is not finite";
  }

  AssumptionCheck gain_check, basis_check;
  if (have_phi) {
    const MatrixX<Scalar> cov = P.size() ? P : MatrixX<Scalar>(MatrixX<Scalar>::Identity(n, n));
    const GainField<Scalar> kappa = gain_field(cov, phi);
    gain_check = detail::norm_check(3, "gain field bounded (L1, L2)", detail::field_norms(kappa.stacked_transpose, kappa.channels, area), true);
    basis_check = detail::norm_check(5, "gain basis bounded (L1, L2)", detail::field_norms(phi.stacked_transpose, phi.channels, area), true);
  } else {
    gain_check = {3, "gain field bounded (L1, L2)", CheckStatus::Fail, {}, "not evaluated"};
    basis_check = {5, "gain basis bounded (L1, L2)", CheckStatus::Fail, {}, "not evaluated"};
  }
  report.checks.push_back(gain_check);
  report.checks.push_back(spec_check);
  report.checks.push_back(basis_check);
  return report;
}

}  // namespace fieldkf
