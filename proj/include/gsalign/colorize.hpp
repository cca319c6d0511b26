// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Image-to-scan colorization: project LiDAR points into a calibrated camera,
// resolve occlusion with a per-pixel z-buffer, and color only the points
// visible from the image perspective.

#pragma once

#include "gsalign/core.hpp"
#include "gsalign/ply.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gsalign {

struct CameraCalibration {
  Mat3 intrinsics = Mat3::Identity();
  RigidTransform extrinsics;  // LiDAR -> camera
  int width = 0, height = 0;

  void validate() const {
    if (intrinsics(0, 0) <= 0 || intrinsics(1, 1) <= 0) {
      throw std::invalid_argument("intrinsics need positive focal entries");
    }
    if (intrinsics(1, 0) != 0 || intrinsics(2, 0) != 0 || intrinsics(2, 1) != 0) {
      throw std::invalid_argument("intrinsics must be upper triangular");
    }
    if (width < 1 || height < 1) {
      throw std::invalid_argument("calibration needs a positive resolution");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json k = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) k.push_back(intrinsics(r, c));
    nlohmann::json t = nlohmann::json::array();
    const Mat4 m = extrinsics.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) t.push_back(m(r, c));
    return {{"K", k}, {"T", t}, {"width", width}, {"height", height}};
  }

  static CameraCalibration from_json(const nlohmann::json& j) {
    CameraCalibration cal;
    const auto& k = j.at("K");
    if (k.size() != 9) throw std::invalid_argument("K must hold 9 numbers");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) cal.intrinsics(r, c) = k.at(3 * r + c);
    const auto& t = j.at("T");
    if (t.size() != 16) throw std::invalid_argument("T must hold 16 numbers");
    Mat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = t.at(4 * r + c);
    cal.extrinsics = RigidTransform::from_matrix(m);
    cal.width = j.at("width").get<int>();
    cal.height = j.at("height").get<int>();
    cal.validate();
    return cal;
  }
};

/// Depth slack for the z-buffer: points within this distance of the nearest
/// surface along a pixel still count as visible.
inline constexpr double kColorizeDepthSlack = 0.1;

/// Colors the points visible in the image: behind-camera and out-of-frustum
/// points stay uncolored, and only points within the depth slack of the
/// nearest projection per pixel receive that pixel's color.
inline ColoredPointCloud colorize_scan(const std::vector<Vec3>& positions,
                                       const PpmImage& image,
                                       const CameraCalibration& calib) {
  calib.validate();
  if (image.width != calib.width || image.height != calib.height) {
    throw std::invalid_argument("image resolution disagrees with calibration");
  }
  const double fx = calib.intrinsics(0, 0), fy = calib.intrinsics(1, 1);
  const double sk = calib.intrinsics(0, 1);
  const double cx = calib.intrinsics(0, 2), cy = calib.intrinsics(1, 2);

  struct Projected {
    int px = -1, py = -1;
    double z = 0.0;
    bool in_frame = false;
  };
  std::vector<Projected> proj(positions.size());
  std::vector<double> zbuf(static_cast<std::size_t>(calib.width) * calib.height,
                           std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3 pc = calib.extrinsics.apply(positions[i]);
    if (pc.z() <= 0.0) continue;
    const double u = (fx * pc.x() + sk * pc.y()) / pc.z() + cx;
    const double v = fy * pc.y() / pc.z() + cy;
    const int px = static_cast<int>(std::floor(u));
    const int py = static_cast<int>(std::floor(v));
    if (px < 0 || px >= calib.width || py < 0 || py >= calib.height) continue;
    proj[i] = {px, py, pc.z(), true};
    auto& nearest = zbuf[static_cast<std::size_t>(py) * calib.width + px];
    nearest = std::min(nearest, pc.z());
  }

  ColoredPointCloud out;
  out.positions = positions;
  out.colors.assign(positions.size(), Vec3::Zero());
  out.color_mask.assign(positions.size(), 0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Projected& p = proj[i];
    if (!p.in_frame) continue;
    const double nearest =
        zbuf[static_cast<std::size_t>(p.py) * calib.width + p.px];
    if (p.z <= nearest + kColorizeDepthSlack) {
      out.colors[i] = image.pixel(p.px, p.py);
      out.color_mask[i] = 1;
      if (out.colors[i] == Vec3::Zero()) out.color_mask[i] = 0;
    }
  }
  return out;
}

}  // namespace gsalign
