// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "i2pref/geometry/point_cloud.hpp"

namespace i2pref::io {

/// Parses ASCII xyz text: one point per line, three numbers, `#` starts a
/// comment line. Empty lines are skipped; any other line must hold exactly
/// three finite numbers.
template <typename T = double>
BasicPointCloud<T> parse_xyz(std::string_view text, const std::string& source = "<memory>") {
  BasicPointCloud<T> cloud;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      fields.push_back(line.substr(i, j - i));
      i = j;
    }
    if (fields.size() != 3)
      throw IoError(source + ":" + std::to_string(line_no) + ": expected 3 fields, found " +
                    std::to_string(fields.size()));
    Vec3<T> p{};
    for (int a = 0; a < 3; ++a) {
      double v = 0;
      const auto f = fields[static_cast<std::size_t>(a)];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v))
        throw IoError(source + ":" + std::to_string(line_no) + ": invalid number '" + std::string(f) + "'");
      p[static_cast<std::size_t>(a)] = static_cast<T>(v);
    }
    cloud.push_back(p);
    if (end == text.size()) break;
  }
  return cloud;
}

template <typename T = double>
BasicPointCloud<T> read_xyz(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open point file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto cloud = parse_xyz<T>(ss.str(), path);
  if (cloud.empty()) throw IoError(path + ": no points");
  return cloud;
}

/// Nine significant digits: enough to round-trip single precision exactly.
template <typename T>
std::string format_xyz(PointSpan<T> cloud) {
  std::string out;
  out.reserve(cloud.size() * 40);
  char buf[96];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud[i];
    const int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", static_cast<double>(p[0]),
                                static_cast<double>(p[1]), static_cast<double>(p[2]));
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

template <typename T>
void write_xyz(const std::string& path, PointSpan<T> cloud) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write point file: " + path);
  const auto text = format_xyz(cloud);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace i2pref::io
