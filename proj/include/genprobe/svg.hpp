#pragma once

// Minimal self-contained SVG charts: axes, points, polylines.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace genprobe::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline constexpr double kWidth = 480, kHeight = 360;
inline constexpr double kLeft = 60, kRight = 130, kTop = 30, kBottom = 50;
inline constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                        "#9467bd", "#8c564b", "#e377c2", "#17becf"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

inline Frame fit(const std::vector<Series>& series, std::pair<double, double> fixed_y) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (fixed_y.first < fixed_y.second) y0 = fixed_y.first, y1 = fixed_y.second;
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 <= 0) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 <= 0) y0 -= 0.5, y1 += 0.5;
  const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
  return {x0 - padx, x1 + padx, y0 - pady, y1 + pady};
}

inline std::string frame_markup(const Frame& f, const std::string& title, const std::string& xlabel,
                                const std::string& ylabel) {
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" + escape(title) +
       "</text>\n";
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(right) + "\" y2=\"" + num(bottom) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(bottom) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(bottom + 14) + "\" text-anchor=\"middle\">" + tick(xv) +
         "</text>\n";
    s += "<text x=\"" + num(left - 4) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + tick(yv) +
         "</text>\n";
  }
  s += "<text x=\"" + num((left + right) / 2) + "\" y=\"" + num(kHeight - 12) + "\" text-anchor=\"middle\">" +
       escape(xlabel) + "</text>\n";
  s += "<text x=\"14\" y=\"" + num((top + bottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       num((top + bottom) / 2) + ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

}  // namespace detail

inline std::string scatter(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                           const std::vector<std::pair<double, double>>& points) {
  const std::vector<Series> one = {{"", points}};
  const auto f = detail::fit(one, {0, 0});
  std::string s = detail::frame_markup(f, title, xlabel, ylabel);
  for (auto [x, y] : points) {
    s += "<circle cx=\"" + detail::num(f.px(x)) + "\" cy=\"" + detail::num(f.py(y)) +
         "\" r=\"2.5\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

// One polyline per series with a legend; y range fixed when fixed_y is a
// proper interval (e.g. [-1, 1] for correlations).
inline std::string lines(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                         const std::vector<Series>& series, std::pair<double, double> fixed_y = {0, 0}) {
  const auto f = detail::fit(series, fixed_y);
  std::string s = detail::frame_markup(f, title, xlabel, ylabel);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = detail::kPalette[i % detail::kPalette.size()];
    std::string pts;
    for (auto [x, y] : series[i].points) {
      if (!pts.empty()) pts += ' ';
      pts += detail::num(f.px(x)) + "," + detail::num(f.py(y));
    }
    s += "<polyline class=\"series\" data-label=\"" + detail::escape(series[i].label) + "\" points=\"" + pts +
         "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    const double ly = detail::kTop + 14.0 * static_cast<double>(i);
    const double lx = detail::kWidth - detail::kRight + 10;
    s += "<line x1=\"" + detail::num(lx) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" + detail::num(lx + 18) +
         "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + detail::num(lx + 22) + "\" y=\"" + detail::num(ly + 4) + "\">" +
         detail::escape(series[i].label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace genprobe::svg
