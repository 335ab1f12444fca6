#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fieldkf/harness.hpp"
#include "fieldkf/io.hpp"

namespace fieldkf::harness {

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Data-to-pixel mapping for one rectangular panel.
struct Panel {
  double x0, y0, w, h;          // pixel rectangle
  double xmin, xmax, ymin, ymax;  // data bounds

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void pad_bounds(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0;
    hi = 1;
  }
  const double span = hi - lo;
  const double pad = span > 0 ? 0.05 * span : std::max(1.0, std::abs(lo)) * 0.05;
  lo -= pad;
  hi += pad;
}

/// Expands the shorter axis so one data unit has the same length on both.
void equal_aspect(Panel& p) {
  const double sx = (p.xmax - p.xmin) / p.w, sy = (p.ymax - p.ymin) / p.h;
  if (sx > sy) {
    const double c = 0.5 * (p.ymin + p.ymax), half = 0.5 * sx * p.h;
    p.ymin = c - half;
    p.ymax = c + half;
  } else {
    const double c = 0.5 * (p.xmin + p.xmax), half = 0.5 * sy * p.w;
    p.xmin = c - half;
    p.xmax = c + half;
  }
}

void frame(std::ostringstream& os, const Panel& p, const std::string& title, const std::string& xlabel,
           const std::string& ylabel) {
  os << "<rect x=\"" << fixed(p.x0) << "\" y=\"" << fixed(p.y0) << "\" width=\"" << fixed(p.w) << "\" height=\""
     << fixed(p.h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << fixed(p.x0 + p.w / 2) << "\" y=\"" << fixed(p.y0 - 8)
     << "\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
  os << "<text x=\"" << fixed(p.x0 + p.w / 2) << "\" y=\"" << fixed(p.y0 + p.h + 32)
     << "\" text-anchor=\"middle\" font-size=\"11\">" << xlabel << "</text>\n";
  os << "<text x=\"" << fixed(p.x0 - 42) << "\" y=\"" << fixed(p.y0 + p.h / 2) << "\" text-anchor=\"middle\" "
     << "font-size=\"11\" transform=\"rotate(-90 " << fixed(p.x0 - 42) << ' ' << fixed(p.y0 + p.h / 2) << ")\">"
     << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = p.xmin + (p.xmax - p.xmin) * i / 4.0, yv = p.ymin + (p.ymax - p.ymin) * i / 4.0;
    os << "<text x=\"" << fixed(p.px(xv)) << "\" y=\"" << fixed(p.y0 + p.h + 14)
       << "\" text-anchor=\"middle\" font-size=\"9\">" << fixed(xv, 1) << "</text>\n";
    os << "<text x=\"" << fixed(p.x0 - 4) << "\" y=\"" << fixed(p.py(yv) + 3)
       << "\" text-anchor=\"end\" font-size=\"9\">" << fixed(yv, 1) << "</text>\n";
  }
}

template <typename XY>
void polyline(std::ostringstream& os, const Panel& p, std::size_t n, XY xy, const std::string& cls,
              const std::string& id, const std::string& color) {
  os << "<polyline class=\"" << cls << "\" id=\"" << id << "\" fill=\"none\" stroke=\"" << color
     << "\" stroke-width=\"1.2\" points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = xy(i);
    if (i) os << ' ';
    os << fixed(p.px(x)) << ',' << fixed(p.py(y));
  }
  os << "\"/>\n";
}

template <typename F>
void bounds_of(std::size_t n, F f, double& lo, double& hi) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = f(i);
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::string report_svg(const std::vector<TruthRow>& truth, const std::vector<Estimate>& est) {
  const std::size_t nt = truth.size(), ne = est.size();
  auto tx = [&](std::size_t i) { return truth[i].position.x(); };
  auto ty = [&](std::size_t i) { return truth[i].position.y(); };
  auto ex = [&](std::size_t i) { return est[i].x(drone::kPos); };
  auto ey = [&](std::size_t i) { return est[i].x(drone::kPos + 1); };

  Panel plan{70, 40, 300, 300, kInf, -kInf, kInf, -kInf};
  bounds_of(nt, tx, plan.xmin, plan.xmax);
  bounds_of(ne, ex, plan.xmin, plan.xmax);
  bounds_of(nt, ty, plan.ymin, plan.ymax);
  bounds_of(ne, ey, plan.ymin, plan.ymax);
  pad_bounds(plan.xmin, plan.xmax);
  pad_bounds(plan.ymin, plan.ymax);
  equal_aspect(plan);

  Panel alt{460, 40, 300, 300, kInf, -kInf, kInf, -kInf};
  Panel yaw{850, 40, 300, 300, kInf, -kInf, -3.3, 3.3};
  bounds_of(nt, [&](std::size_t i) { return truth[i].t; }, alt.xmin, alt.xmax);
  bounds_of(ne, [&](std::size_t i) { return est[i].t; }, alt.xmin, alt.xmax);
  bounds_of(nt, [&](std::size_t i) { return truth[i].position.z(); }, alt.ymin, alt.ymax);
  bounds_of(ne, [&](std::size_t i) { return est[i].x(drone::kPos + 2); }, alt.ymin, alt.ymax);
  pad_bounds(alt.xmin, alt.xmax);
  pad_bounds(alt.ymin, alt.ymax);
  yaw.xmin = alt.xmin;
  yaw.xmax = alt.xmax;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1200\" height=\"400\" viewBox=\"0 0 1200 400\">\n";
  os << "<rect width=\"1200\" height=\"400\" fill=\"white\"/>\n";
  frame(os, plan, "planar trajectory", "east [m]", "north [m]");
  frame(os, alt, "altitude", "t [s]", "z [m]");
  frame(os, yaw, "yaw", "t [s]", "yaw [rad]");
  polyline(os, plan, nt, [&](std::size_t i) { return std::pair{tx(i), ty(i)}; }, "trajectory", "truth", "#1f77b4");
  polyline(os, plan, ne, [&](std::size_t i) { return std::pair{ex(i), ey(i)}; }, "trajectory", "estimate",
           "#d62728");
  polyline(os, alt, nt, [&](std::size_t i) { return std::pair{truth[i].t, truth[i].position.z()}; }, "series",
           "altitude-truth", "#1f77b4");
  polyline(os, alt, ne, [&](std::size_t i) { return std::pair{est[i].t, est[i].x(drone::kPos + 2)}; }, "series",
           "altitude-estimate", "#d62728");
  polyline(os, yaw, nt, [&](std::size_t i) { return std::pair{truth[i].t, truth[i].yaw}; }, "series", "yaw-truth",
           "#1f77b4");
  polyline(os, yaw, ne, [&](std::size_t i) { return std::pair{est[i].t, est[i].x(drone::kYaw)}; }, "series",
           "yaw-estimate", "#d62728");
  os << "<text x=\"80\" y=\"380\" font-size=\"11\" fill=\"#1f77b4\">truth</text>\n";
  os << "<text x=\"130\" y=\"380\" font-size=\"11\" fill=\"#d62728\">estimate</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string report_dat(const std::vector<TruthRow>& truth, const std::vector<Estimate>& est) {
  std::ostringstream os;
  os << "# truth: t x y z yaw\n";
  for (const TruthRow& r : truth)
    os << io::format_double(r.t) << ' ' << io::format_double(r.position.x()) << ' '
       << io::format_double(r.position.y()) << ' ' << io::format_double(r.position.z()) << ' '
       << io::format_double(r.yaw) << '\n';
  os << "\n\n# estimate: t x y z yaw trP\n";
  for (const Estimate& e : est)
    os << io::format_double(e.t) << ' ' << io::format_double(e.x(drone::kPos)) << ' '
       << io::format_double(e.x(drone::kPos + 1)) << ' ' << io::format_double(e.x(drone::kPos + 2)) << ' '
       << io::format_double(e.x(drone::kYaw)) << ' ' << io::format_double(e.trace_P) << '\n';
  return os.str();
}

std::string sweep_svg(const std::vector<SweepRow>& rows, double cap) {
  Panel p{80, 40, 560, 320, kInf, -kInf, kInf, -kInf};
  const double log_cap = std::log10(cap);
  auto ylog = [&](const SweepRow& r) {
    const double e = r.report.e_rho;
    return (r.above_cap || !(e <= cap) || !(e > 0)) ? log_cap : std::log10(e);
  };
  for (const SweepRow& r : rows) {
    p.xmin = std::min(p.xmin, std::log2(r.sigma_a));
    p.xmax = std::max(p.xmax, std::log2(r.sigma_a));
    p.ymin = std::min(p.ymin, ylog(r));
    p.ymax = std::max(p.ymax, ylog(r));
  }
  p.ymax = std::max(p.ymax, log_cap);
  pad_bounds(p.xmin, p.xmax);
  pad_bounds(p.ymin, p.ymax);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"700\" height=\"420\" viewBox=\"0 0 700 420\">\n";
  os << "<rect width=\"700\" height=\"420\" fill=\"white\"/>\n";
  frame(os, p, "position error vs accelerometer noise density", "log2 sigma_a", "log10 E_rho [m^2]");
  os << "<line class=\"cap\" x1=\"" << fixed(p.x0) << "\" y1=\"" << fixed(p.py(log_cap)) << "\" x2=\""
     << fixed(p.x0 + p.w) << "\" y2=\"" << fixed(p.py(log_cap)) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  std::vector<std::pair<double, double>> below;
  for (const SweepRow& r : rows)
    if (!r.above_cap && r.report.e_rho <= cap) below.emplace_back(std::log2(r.sigma_a), ylog(r));
  polyline(os, p, below.size(), [&](std::size_t i) { return below[i]; }, "sweep", "e-rho", "#1f77b4");
  for (const SweepRow& r : rows) {
    const bool over = r.above_cap || !(r.report.e_rho <= cap);
    os << "<circle class=\"" << (over ? "above-cap" : "point") << "\" cx=\"" << fixed(p.px(std::log2(r.sigma_a)))
       << "\" cy=\"" << fixed(p.py(ylog(r))) << "\" r=\"3.5\" fill=\"" << (over ? "none" : "#1f77b4")
       << "\" stroke=\"" << (over ? "#d62728" : "#1f77b4") << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string sweep_dat(const std::vector<SweepRow>& rows, double cap) {
  std::ostringstream os;
  os << "# sigma_a log2_sigma_a e_rho e_theta above_cap\n";
  for (const SweepRow& r : rows)
    os << io::format_double(r.sigma_a) << ' ' << io::format_double(std::log2(r.sigma_a)) << ' '
       << io::format_double(r.report.e_rho) << ' ' << io::format_double(r.report.e_theta) << ' '
       << ((r.above_cap || !(r.report.e_rho <= cap)) ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace fieldkf::harness
