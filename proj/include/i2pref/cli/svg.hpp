// SPDX-License-Identifier: Apache-2.0
// Minimal standalone SVG charts for evaluation reports.
#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace i2pref::cli {

namespace detail {

inline std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

constexpr double kW = 480, kH = 300, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

inline std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"300\" font-family=\"sans-serif\" "
         "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"240\" y=\"22\" "
         "text-anchor=\"middle\" font-size=\"14\">" +
         escape(title) + "</text>\n";
}

inline std::string axes(double ymax) {
  std::string s = "<line x1=\"" + fmt("%.1f", kLeft) + "\" y1=\"" + fmt("%.1f", kH - kBottom) + "\" x2=\"" +
                  fmt("%.1f", kW - kRight) + "\" y2=\"" + fmt("%.1f", kH - kBottom) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt("%.1f", kLeft) + "\" y1=\"" + fmt("%.1f", kTop) + "\" x2=\"" + fmt("%.1f", kLeft) +
       "\" y2=\"" + fmt("%.1f", kH - kBottom) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + fmt("%.1f", kLeft - 6) + "\" y=\"" + fmt("%.1f", kTop + 4) + "\" text-anchor=\"end\">" +
       fmt("%.3g", ymax) + "</text>\n";
  s += "<text x=\"" + fmt("%.1f", kLeft - 6) + "\" y=\"" + fmt("%.1f", kH - kBottom + 4) +
       "\" text-anchor=\"end\">0</text>\n";
  return s;
}

}  // namespace detail

inline std::string bar_chart_svg(const std::string& title, const std::vector<std::pair<std::string, double>>& bars) {
  using namespace detail;
  double ymax = 0;
  for (const auto& b : bars) ymax = std::max(ymax, b.second);
  if (ymax <= 0) ymax = 1;
  std::string s = header(title) + axes(ymax);
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  const double slot = bars.empty() ? plot_w : plot_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = plot_h * std::max(0.0, bars[i].second) / ymax;
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    s += "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", kH - kBottom - h) + "\" width=\"" +
         fmt("%.1f", slot * 0.7) + "\" height=\"" + fmt("%.1f", h) + "\" fill=\"steelblue\"/>\n";
    s += "<text x=\"" + fmt("%.1f", x + slot * 0.35) + "\" y=\"" + fmt("%.1f", kH - kBottom + 16) +
         "\" text-anchor=\"middle\">" + escape(bars[i].first) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", x + slot * 0.35) + "\" y=\"" + fmt("%.1f", kH - kBottom - h - 4) +
         "\" text-anchor=\"middle\">" + fmt("%.3g", bars[i].second) + "</text>\n";
  }
  return s + "</svg>\n";
}

inline std::string line_chart_svg(const std::string& title, const std::vector<double>& ys) {
  using namespace detail;
  double ymax = 0;
  for (double y : ys) ymax = std::max(ymax, y);
  if (ymax <= 0) ymax = 1;
  std::string s = header(title) + axes(ymax);
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  const double dx = ys.size() > 1 ? plot_w / static_cast<double>(ys.size() - 1) : 0;
  std::string pts;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double x = kLeft + dx * static_cast<double>(i), y = kH - kBottom - plot_h * std::max(0.0, ys[i]) / ymax;
    pts += fmt("%.1f", x) + "," + fmt("%.1f", y) + " ";
    s += "<circle cx=\"" + fmt("%.1f", x) + "\" cy=\"" + fmt("%.1f", y) + "\" r=\"3\" fill=\"firebrick\"/>\n";
    s += "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", kH - kBottom + 16) + "\" text-anchor=\"middle\">P" +
         std::to_string(i) + "</text>\n";
  }
  s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"firebrick\"/>\n";
  return s + "</svg>\n";
}

}  // namespace i2pref::cli
