#pragma once

// Minimal self-contained SVG line plots with optional shaded bands.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "skf/matalg.hpp"

namespace skf {

struct PlotSeries {
  std::string label;
  Vector x;
  Vector y;
  Vector lower;  // empty: no band
  Vector upper;
  std::string colour = "#1f77b4";
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string provenance;  // written as an XML comment
  std::vector<PlotSeries> series;
  int width = 720;
  int height = 420;
};

inline const std::vector<std::string>& plot_palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return p;
}

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// "--" is not allowed inside an XML comment
inline std::string comment_safe(std::string s) {
  for (std::size_t i = s.find("--"); i != std::string::npos; i = s.find("--", i)) s.replace(i, 2, "- ");
  return s;
}

}  // namespace detail

inline std::string render_svg(const PlotSpec& spec) {
  using detail::fixed;
  constexpr double inf = std::numeric_limits<double>::infinity();
  double x0 = inf, x1 = -inf, y0 = inf, y1 = -inf;
  auto widen = [](double v, double& lo, double& hi) {
    if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  };
  for (const auto& s : spec.series) {
    for (Index i = 0; i < s.x.size(); ++i) widen(s.x(i), x0, x1);
    for (const Vector* v : {&s.y, &s.lower, &s.upper})
      for (Index i = 0; i < v->size(); ++i) widen((*v)(i), y0, y1);
  }
  if (!(x0 <= x1)) x0 = 0.0, x1 = 1.0;
  if (!(y0 <= y1)) y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 70, right = 150, top = 40, bottom = 50;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<!-- " + detail::comment_safe(spec.provenance) + " -->\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::xml_escape(spec.title) + "</text>\n";
  out += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) + "\" height=\"" + fixed(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    out += "<text x=\"" + fixed(px(xv)) + "\" y=\"" + fixed(top + ph + 16) + "\" text-anchor=\"middle\">" +
           detail::tick_label(xv) + "</text>\n";
    out += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(py(yv) + 4) + "\" text-anchor=\"end\">" +
           detail::tick_label(yv) + "</text>\n";
    out += "<line x1=\"" + fixed(left) + "\" x2=\"" + fixed(left + pw) + "\" y1=\"" + fixed(py(yv)) + "\" y2=\"" +
           fixed(py(yv)) + "\" stroke=\"#dddddd\"/>\n";
  }
  out += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(spec.height - 10.0) + "\" text-anchor=\"middle\">" +
         detail::xml_escape(spec.x_label) + "</text>\n";
  out += "<text transform=\"translate(18," + fixed(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::xml_escape(spec.y_label) + "</text>\n";

  int row = 0;
  for (const auto& s : spec.series) {
    if (s.lower.size() == s.x.size() && s.upper.size() == s.x.size() && s.x.size() > 0) {
      std::string pts;
      for (Index i = 0; i < s.x.size(); ++i) pts += fixed(px(s.x(i))) + "," + fixed(py(s.upper(i))) + " ";
      for (Index i = s.x.size(); i-- > 0;) pts += fixed(px(s.x(i))) + "," + fixed(py(s.lower(i))) + " ";
      out += "<polygon points=\"" + pts + "\" fill=\"" + s.colour + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (Index i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (std::isfinite(s.y(i))) pts += fixed(px(s.x(i))) + "," + fixed(py(s.y(i))) + " ";
    out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + s.colour + "\" stroke-width=\"1.5\"/>\n";
    const double ly = top + 14 + 18 * row++;
    out += "<line x1=\"" + fixed(left + pw + 10) + "\" x2=\"" + fixed(left + pw + 30) + "\" y1=\"" + fixed(ly - 4) +
           "\" y2=\"" + fixed(ly - 4) + "\" stroke=\"" + s.colour + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fixed(left + pw + 34) + "\" y=\"" + fixed(ly) + "\">" + detail::xml_escape(s.label) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace skf
