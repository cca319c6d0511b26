// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Software splat rasterizer. Each 3D Gaussian is projected to a screen-space
// Gaussian through the first-order projection Jacobian and alpha-composited
// front to back. The falloff is exp(-q/2) with a smooth C1 taper to zero
// between the 3-sigma and 4-sigma contours, so images are continuously
// differentiable in the splat centers; rasterize_backward provides the exact
// adjoint of that forward pass with the 2D shapes held fixed.

#pragma once

#include "gsalign/core.hpp"
#include "gsalign/splats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gsalign {

struct VirtualCamera {
  double fx = 64.0, fy = 64.0;
  double cx = 32.0, cy = 32.0;
  RigidTransform pose;  // world -> camera
  int width = 64, height = 64;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw std::invalid_argument("focal lengths must be > 0");
    }
    if (width < 8 || height < 8) {
      throw std::invalid_argument("camera resolution must be at least 8x8");
    }
  }

  Vec2 project(const Vec3& p_cam) const {
    return Vec2(fx * p_cam.x() / p_cam.z() + cx,
                fy * p_cam.y() / p_cam.z() + cy);
  }

  Vec3 back_project(double u, double v, double depth) const {
    return Vec3((u - cx) / fx * depth, (v - cy) / fy * depth, depth);
  }
};

struct RenderedImage {
  int width = 0, height = 0;
  std::vector<Vec3> color;   // background (0,0,0)
  std::vector<double> alpha; // accumulated opacity
  std::vector<double> depth; // camera z of first contributor, inf if none

  RenderedImage() = default;
  RenderedImage(int w, int h)
      : width(w),
        height(h),
        color(static_cast<std::size_t>(w) * h, Vec3::Zero()),
        alpha(static_cast<std::size_t>(w) * h, 0.0),
        depth(static_cast<std::size_t>(w) * h,
              std::numeric_limits<double>::infinity()) {}

  std::size_t idx(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  bool hit(int x, int y) const { return alpha[idx(x, y)] > 0.0; }
};

namespace detail {

// Gaussian falloff with a cubic taper on q in [9, 16] (3 to 4 sigma).
inline double falloff(double q) {
  if (q >= 16.0) return 0.0;
  double t = 1.0;
  if (q > 9.0) {
    const double s = (q - 9.0) / 7.0;
    t = 1.0 - s * s * (3.0 - 2.0 * s);
  }
  return std::exp(-0.5 * q) * t;
}

inline double falloff_derivative(double q) {
  if (q >= 16.0) return 0.0;
  const double e = std::exp(-0.5 * q);
  if (q <= 9.0) return -0.5 * e;
  const double s = (q - 9.0) / 7.0;
  const double t = 1.0 - s * s * (3.0 - 2.0 * s);
  const double dt = -(6.0 * s - 6.0 * s * s) / 7.0;
  return e * (dt - 0.5 * t);
}

constexpr double kMaxWeight = 1.0 - 1e-6;
constexpr double kMinTransmittance = 1e-12;

}  // namespace detail

/// One splat after world pose + camera projection. The 2D shape (inv_cov),
/// depth order, and support radius are the frozen quantities; the center can
/// be re-derived from mu_world under a left perturbation.
struct ProjectedSplat {
  int index = -1;
  double depth = 0.0;
  Vec2 center = Vec2::Zero();
  Mat2 inv_cov = Mat2::Identity();
  double radius = 0.0;  // L-inf support bound in pixels
  double opacity = 1.0;
  Vec3 rgb = Vec3::Zero();
  Vec3 mu_world = Vec3::Zero();                  // after the registration pose
  Eigen::Matrix<double, 2, 3> jproj;             // d(center)/d(mu_cam)
};

/// Depth-sorted projection of a splat set under (pose, camera).
struct SplatProjection {
  std::vector<ProjectedSplat> splats;
};

inline SplatProjection project_splats(const std::vector<GaussianSplat>& splats,
                                      const VirtualCamera& cam,
                                      const RigidTransform& pose) {
  SplatProjection proj;
  proj.splats.reserve(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const GaussianSplat& s = splats[i];
    ProjectedSplat ps;
    ps.index = static_cast<int>(i);
    ps.mu_world = pose.apply(s.mean);
    const Vec3 mu_cam = cam.pose.apply(ps.mu_world);
    if (mu_cam.z() <= 1e-6) continue;
    const double z = mu_cam.z();
    ps.depth = z;
    ps.center = cam.project(mu_cam);
    ps.jproj << cam.fx / z, 0.0, -cam.fx * mu_cam.x() / (z * z),
                0.0, cam.fy / z, -cam.fy * mu_cam.y() / (z * z);
    const Mat3 cov_cam = cam.pose.R * pose.R * s.covariance *
                         (cam.pose.R * pose.R).transpose();
    Mat2 cov2d = ps.jproj * cov_cam * ps.jproj.transpose();
    cov2d += 1e-8 * Mat2::Identity();
    const double tr = cov2d.trace();
    const double det = cov2d.determinant();
    const double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
    const double lam_max = tr / 2.0 + disc;
    ps.radius = 4.0 * std::sqrt(lam_max) + 1.0;
    ps.inv_cov = cov2d.inverse();
    ps.opacity = std::clamp(s.opacity, 0.0, 1.0);
    ps.rgb = s.rgb;
    proj.splats.push_back(ps);
  }
  std::sort(proj.splats.begin(), proj.splats.end(),
            [](const ProjectedSplat& a, const ProjectedSplat& b) {
              return a.depth < b.depth ||
                     (a.depth == b.depth && a.index < b.index);
            });
  return proj;
}

/// Moves the projected centers under a left perturbation of the pose while
/// keeping shapes, depth order, and support frozen. Used by the photometric
/// gradient's finite-difference oracle and nowhere in the forward path.
inline SplatProjection reproject_centers(const SplatProjection& base,
                                         const VirtualCamera& cam,
                                         const RigidTransform& delta) {
  SplatProjection out = base;
  for (auto& ps : out.splats) {
    const Vec3 mu_cam = cam.pose.apply(delta.apply(ps.mu_world));
    if (mu_cam.z() > 1e-6) ps.center = cam.project(mu_cam);
  }
  return out;
}

namespace detail {

struct PixelBins {
  std::vector<int> offsets;  // size W*H+1
  std::vector<int> entries;  // indices into proj.splats, depth order per pixel
};

inline PixelBins build_bins(const SplatProjection& proj, int width, int height) {
  PixelBins bins;
  bins.offsets.assign(static_cast<std::size_t>(width) * height + 1, 0);
  auto pixel_box = [&](const ProjectedSplat& ps, int& x0, int& x1, int& y0,
                       int& y1) {
    x0 = std::max(0, static_cast<int>(std::floor(ps.center.x() - ps.radius)));
    x1 = std::min(width - 1,
                  static_cast<int>(std::ceil(ps.center.x() + ps.radius)));
    y0 = std::max(0, static_cast<int>(std::floor(ps.center.y() - ps.radius)));
    y1 = std::min(height - 1,
                  static_cast<int>(std::ceil(ps.center.y() + ps.radius)));
  };
  for (const auto& ps : proj.splats) {
    int x0, x1, y0, y1;
    pixel_box(ps, x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        ++bins.offsets[static_cast<std::size_t>(y) * width + x + 1];
  }
  for (std::size_t i = 1; i < bins.offsets.size(); ++i) {
    bins.offsets[i] += bins.offsets[i - 1];
  }
  bins.entries.resize(bins.offsets.back());
  std::vector<int> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
  for (std::size_t k = 0; k < proj.splats.size(); ++k) {
    int x0, x1, y0, y1;
    pixel_box(proj.splats[k], x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        bins.entries[cursor[static_cast<std::size_t>(y) * width + x]++] =
            static_cast<int>(k);
      }
    }
  }
  return bins;
}

}  // namespace detail

/// Front-to-back alpha compositing of a depth-sorted projection.
inline RenderedImage rasterize(const SplatProjection& proj, int width,
                               int height) {
  RenderedImage img(width, height);
  const auto bins = detail::build_bins(proj, width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t pix = img.idx(x, y);
      const Vec2 pc(x + 0.5, y + 0.5);
      double transmittance = 1.0;
      Vec3 color = Vec3::Zero();
      double first_depth = std::numeric_limits<double>::infinity();
      for (int e = bins.offsets[pix]; e < bins.offsets[pix + 1]; ++e) {
        const ProjectedSplat& ps = proj.splats[bins.entries[e]];
        const Vec2 d = pc - ps.center;
        const double q = d.dot(ps.inv_cov * d);
        const double g = detail::falloff(q);
        if (g <= 0.0) continue;
        const double w = std::min(ps.opacity * g, detail::kMaxWeight);
        if (w <= 0.0) continue;
        if (!std::isfinite(first_depth)) first_depth = ps.depth;
        color += transmittance * w * ps.rgb;
        transmittance *= 1.0 - w;
        if (transmittance < detail::kMinTransmittance) break;
      }
      img.color[pix] = color;
      img.alpha[pix] = 1.0 - transmittance;
      img.depth[pix] = first_depth;
    }
  }
  return img;
}

/// Renders a splat set under (pose, camera): transform means/covariances,
/// project through the EWA-style Jacobian, composite front to back.
inline RenderedImage render_splats(const std::vector<GaussianSplat>& splats,
                                   const VirtualCamera& cam,
                                   const RigidTransform& pose) {
  cam.validate();
  return rasterize(project_splats(splats, cam, pose), cam.width, cam.height);
}

/// Adjoint of rasterize with shapes frozen: given dL/d(color) and dL/d(alpha)
/// per pixel, accumulates dL/d(projected center) per input splat index.
inline std::vector<Vec2> rasterize_backward(
    const SplatProjection& proj, int width, int height,
    const std::vector<Vec3>& dl_dcolor, const std::vector<double>& dl_dalpha,
    std::size_t n_splats) {
  std::vector<Vec2> grad_center(n_splats, Vec2::Zero());
  const auto bins = detail::build_bins(proj, width, height);
  struct Contribution {
    int entry;     // index into proj.splats
    double w, q, g;
    Vec2 d;
    double transmittance;  // before this contribution
  };
  std::vector<Contribution> stack;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * width + x;
      const Vec3& dl_dc = dl_dcolor[pix];
      const double dl_da = dl_dalpha[pix];
      if (dl_dc.isZero(0.0) && dl_da == 0.0) continue;
      const Vec2 pc(x + 0.5, y + 0.5);
      stack.clear();
      double transmittance = 1.0;
      for (int e = bins.offsets[pix]; e < bins.offsets[pix + 1]; ++e) {
        const ProjectedSplat& ps = proj.splats[bins.entries[e]];
        const Vec2 d = pc - ps.center;
        const double q = d.dot(ps.inv_cov * d);
        const double g = detail::falloff(q);
        if (g <= 0.0) continue;
        const double w = std::min(ps.opacity * g, detail::kMaxWeight);
        if (w <= 0.0) continue;
        stack.push_back({bins.entries[e], w, q, g, d, transmittance});
        transmittance *= 1.0 - w;
        if (transmittance < detail::kMinTransmittance) break;
      }
      // Reverse sweep: suffix holds sum_{m>k} T_m w_m rgb_m.
      const double t_final = transmittance;
      Vec3 suffix = Vec3::Zero();
      for (int k = static_cast<int>(stack.size()) - 1; k >= 0; --k) {
        const Contribution& c = stack[k];
        const ProjectedSplat& ps = proj.splats[c.entry];
        const double one_minus = 1.0 - c.w;
        double dl_dw = dl_dc.dot(c.transmittance * ps.rgb - suffix / one_minus);
        dl_dw += dl_da * t_final / one_minus;
        const bool clamped = ps.opacity * c.g > detail::kMaxWeight;
        if (!clamped) {
          const double dw_dq = ps.opacity * detail::falloff_derivative(c.q);
          // d = pc - center, so dq/dcenter = -2 * inv_cov * d.
          grad_center[ps.index] += dl_dw * dw_dq * (-2.0 * (ps.inv_cov * c.d));
        }
        suffix += c.transmittance * c.w * ps.rgb;
      }
    }
  }
  return grad_center;
}

/// Cameras on a circle around the centroid of the given positions, looking
/// inward from 2x the bounding radius at a fixed elevation.
inline std::vector<VirtualCamera> default_cameras(const std::vector<Vec3>& positions,
                                                  int count = 4,
                                                  int resolution = 64) {
  if (positions.empty()) throw std::invalid_argument("no positions for cameras");
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : positions) centroid += p;
  centroid /= static_cast<double>(positions.size());
  double radius = 0.0;
  for (const auto& p : positions) radius = std::max(radius, (p - centroid).norm());
  radius = std::max(radius, 0.5);
  const double dist = 2.0 * radius;
  const double elevation = 25.0 * kPi / 180.0;

  std::vector<VirtualCamera> cams;
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * kPi * i / count + 0.35;
    const Vec3 eye = centroid + dist * Vec3(std::cos(az) * std::cos(elevation),
                                            std::sin(az) * std::cos(elevation),
                                            std::sin(elevation));
    const Vec3 z = (centroid - eye).normalized();
    Vec3 up = Vec3::UnitZ();
    if (std::abs(up.dot(z)) > 0.99) up = Vec3::UnitY();
    const Vec3 xaxis = up.cross(z).normalized();
    const Vec3 yaxis = z.cross(xaxis);
    Mat3 r;
    r.row(0) = xaxis;
    r.row(1) = yaxis;
    r.row(2) = z;
    VirtualCamera cam;
    cam.width = cam.height = resolution;
    cam.fx = cam.fy = 0.8 * resolution;
    cam.cx = resolution / 2.0;
    cam.cy = resolution / 2.0;
    cam.pose = {r, -(r * eye)};
    cams.push_back(cam);
  }
  return cams;
}

}  // namespace gsalign
