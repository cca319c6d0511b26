// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// PLY point-cloud I/O (ascii and binary_little_endian, xyz float32 + rgb
// uchar) and P6 PPM images. Colors quantize to 8 bits on write; the color
// (0,0,0) is reserved as the uncolored sentinel, so reading maps it to an
// unset color mask.

#pragma once

#include "gsalign/core.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsalign {

enum class PlyFormat { Ascii, BinaryLittleEndian };

struct PpmImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

  Vec3 pixel(int x, int y) const {
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
    return Vec3(rgb[i] / 255.0, rgb[i + 1] / 255.0, rgb[i + 2] / 255.0);
  }
  void set_pixel(int x, int y, const Vec3& c) {
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
    for (int k = 0; k < 3; ++k) {
      rgb[i + k] = static_cast<std::uint8_t>(
          std::lround(std::clamp(c[k], 0.0, 1.0) * 255.0));
    }
  }
};

/// Raised for unreadable or malformed input files; a subtype so callers can
/// map every input problem to one exit path.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& what, std::size_t offset) {
  throw ParseError(what + " (byte offset " + std::to_string(offset) + ")");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Returns the line [start, eol) and advances start past the newline.
inline std::string next_line(const std::string& data, std::size_t& start) {
  if (start >= data.size()) parse_fail("malformed header: unexpected end of file", start);
  const std::size_t eol = data.find('\n', start);
  std::string line = data.substr(start, eol == std::string::npos
                                            ? std::string::npos
                                            : eol - start);
  start = eol == std::string::npos ? data.size() : eol + 1;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline ColoredPointCloud read_ply(const std::string& path) {
  const std::string data = detail::read_file(path);
  std::size_t pos = 0;
  std::size_t line_start = pos;
  if (detail::next_line(data, pos) != "ply") {
    detail::parse_fail("malformed header: missing 'ply' magic", line_start);
  }

  PlyFormat format = PlyFormat::Ascii;
  bool format_seen = false;
  std::size_t vertex_count = 0;
  bool element_seen = false;
  std::vector<std::pair<std::string, std::string>> properties;  // (type, name)

  while (true) {
    line_start = pos;
    const std::string line = detail::next_line(data, pos);
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "comment" || word.empty()) continue;
    if (word == "format") {
      std::string kind, version;
      ls >> kind >> version;
      if (kind == "ascii") {
        format = PlyFormat::Ascii;
      } else if (kind == "binary_little_endian") {
        format = PlyFormat::BinaryLittleEndian;
      } else {
        detail::parse_fail("malformed header: unsupported format '" + kind + "'",
                           line_start);
      }
      if (version != "1.0") {
        detail::parse_fail("malformed header: unsupported version", line_start);
      }
      format_seen = true;
    } else if (word == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex" || ls.fail()) {
        detail::parse_fail("malformed header: only 'element vertex N' supported",
                           line_start);
      }
      element_seen = true;
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      properties.emplace_back(type, name);
    } else {
      detail::parse_fail("malformed header: unknown keyword '" + word + "'",
                         line_start);
    }
  }
  if (!format_seen || !element_seen) {
    detail::parse_fail("malformed header: missing format or element", line_start);
  }
  const std::vector<std::pair<std::string, std::string>> expected{
      {"float", "x"}, {"float", "y"}, {"float", "z"},
      {"uchar", "red"}, {"uchar", "green"}, {"uchar", "blue"}};
  if (properties.size() != expected.size()) {
    detail::parse_fail("unsupported properties: expected x y z red green blue",
                       line_start);
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const bool type_ok = properties[i].first == expected[i].first ||
                         (expected[i].first == "float" &&
                          properties[i].first == "float32") ||
                         (expected[i].first == "uchar" &&
                          properties[i].first == "uint8");
    if (!type_ok || properties[i].second != expected[i].second) {
      detail::parse_fail("unsupported property '" + properties[i].first + " " +
                             properties[i].second + "'",
                         line_start);
    }
  }

  ColoredPointCloud cloud;
  cloud.positions.reserve(vertex_count);
  if (format == PlyFormat::Ascii) {
    for (std::size_t i = 0; i < vertex_count; ++i) {
      line_start = pos;
      if (pos >= data.size()) detail::parse_fail("truncated body", pos);
      std::istringstream ls(detail::next_line(data, pos));
      double x, y, z;
      int r, g, b;
      ls >> x >> y >> z >> r >> g >> b;
      if (ls.fail()) detail::parse_fail("truncated body: bad vertex line", line_start);
      const Vec3 color(r / 255.0, g / 255.0, b / 255.0);
      cloud.push_back(Vec3(x, y, z), color, color != Vec3::Zero());
      if (!cloud.color_mask.back()) cloud.colors.back() = Vec3::Zero();
    }
  } else {
    constexpr std::size_t kStride = 3 * sizeof(float) + 3;
    if (data.size() < pos + kStride * vertex_count) {
      detail::parse_fail("truncated body", data.size());
    }
    for (std::size_t i = 0; i < vertex_count; ++i) {
      float xyz[3];
      std::memcpy(xyz, data.data() + pos, sizeof(xyz));
      pos += sizeof(xyz);
      const std::uint8_t r = static_cast<std::uint8_t>(data[pos]);
      const std::uint8_t g = static_cast<std::uint8_t>(data[pos + 1]);
      const std::uint8_t b = static_cast<std::uint8_t>(data[pos + 2]);
      pos += 3;
      const Vec3 color(r / 255.0, g / 255.0, b / 255.0);
      cloud.push_back(Vec3(xyz[0], xyz[1], xyz[2]), color,
                      color != Vec3::Zero());
      if (!cloud.color_mask.back()) cloud.colors.back() = Vec3::Zero();
    }
  }
  return cloud;
}

inline void write_ply(const ColoredPointCloud& cloud, const std::string& path,
                      PlyFormat format = PlyFormat::BinaryLittleEndian) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "ply\n";
  out << "format "
      << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian")
      << " 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  out.precision(9);  // float32 values survive the text round trip
  auto quantize = [](double c) {
    return static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Vec3 c = cloud.color_mask[i] ? cloud.colors[i] : Vec3::Zero();
    if (format == PlyFormat::Ascii) {
      out << static_cast<float>(p.x()) << " " << static_cast<float>(p.y())
          << " " << static_cast<float>(p.z()) << " " << quantize(c.x()) << " "
          << quantize(c.y()) << " " << quantize(c.z()) << "\n";
    } else {
      const float xyz[3] = {static_cast<float>(p.x()),
                            static_cast<float>(p.y()),
                            static_cast<float>(p.z())};
      out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      const std::uint8_t rgb[3] = {static_cast<std::uint8_t>(quantize(c.x())),
                                   static_cast<std::uint8_t>(quantize(c.y())),
                                   static_cast<std::uint8_t>(quantize(c.z()))};
      out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline PpmImage read_ppm(const std::string& path) {
  const std::string data = detail::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos < data.size() && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (token() != "P6") detail::parse_fail("not a P6 PPM", 0);
  PpmImage img;
  img.width = std::stoi(token());
  img.height = std::stoi(token());
  if (token() != "255") detail::parse_fail("unsupported PPM depth", pos);
  ++pos;  // single whitespace after maxval
  const std::size_t need = 3 * static_cast<std::size_t>(img.width) * img.height;
  if (data.size() < pos + need) detail::parse_fail("truncated PPM body", data.size());
  img.rgb.assign(data.begin() + pos, data.begin() + pos + need);
  return img;
}

inline void write_ppm(const PpmImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
}

}  // namespace gsalign
