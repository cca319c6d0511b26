// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic scan pairs: piecewise-planar rooms with striped
// per-surface colors, overlap-controlled crops of a common base sample, a
// known ground-truth pose, and bounded uniform noise sized so the standard
// 2-sigma nearest-neighbor audit counts true counterparts.

#pragma once

#include "gsalign/color.hpp"
#include "gsalign/core.hpp"
#include "gsalign/metrics.hpp"
#include "gsalign/neighbors.hpp"
#include "gsalign/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace gsalign {

struct SyntheticPairSpec {
  int point_count = 5000;
  double overlap = 0.7;          // in (0, 1]
  double rotation_deg = 10.0;
  double translation_m = 0.3;
  double position_noise = 0.0;   // total uniform amplitude, meters
  double color_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(overlap > 0.0) || overlap > 1.0) {
      throw std::invalid_argument("overlap target must lie in (0, 1]");
    }
    if (point_count < 16) throw std::invalid_argument("point count too small");
    if (position_noise < 0 || color_noise < 0 || rotation_deg < 0 ||
        translation_m < 0) {
      throw std::invalid_argument("magnitudes must be non-negative");
    }
  }
};

struct SyntheticPair {
  ColoredPointCloud source;
  ColoredPointCloud target;
  RigidTransform t_gt;           // maps source frame to target frame
  std::vector<Correspondence> correspondences;  // identical base points
  double measured_overlap = 0.0;
};

namespace detail {

struct Surface {
  Vec3 origin;
  Vec3 u_axis, v_axis;  // unit, orthogonal
  double u_len = 1.0, v_len = 1.0;
  Vec3 color_a = Vec3(0.8, 0.2, 0.2);
  Vec3 color_b = Vec3(0.2, 0.2, 0.8);
  double stripe_period = 0.5;
  bool stripe_along_u = true;

  double area() const { return u_len * v_len; }

  Vec3 point(double u, double v) const {
    return origin + u * u_axis + v * v_axis;
  }

  Vec3 color_at(double u, double v) const {
    const double coord = stripe_along_u ? u : v;
    const double phase = coord / stripe_period - std::floor(coord / stripe_period);
    return phase < 0.5 ? color_a : color_b;
  }
};

inline Vec3 palette_color(SeededRng& rng, int k) {
  const double hue = std::fmod(0.61803398875 * k + rng.uniform(), 1.0);
  return hsv_to_rgb(Vec3(hue, 0.65, 0.85));
}

inline Surface make_surface(const Vec3& origin, const Vec3& u_axis, double u_len,
                            const Vec3& v_axis, double v_len, const Vec3& ca,
                            const Vec3& cb, double period, bool along_u) {
  Surface s;
  s.origin = origin;
  s.u_axis = u_axis;
  s.v_axis = v_axis;
  s.u_len = u_len;
  s.v_len = v_len;
  s.color_a = ca;
  s.color_b = cb;
  s.stripe_period = period;
  s.stripe_along_u = along_u;
  return s;
}

/// Floor plus four walls over [x0, x0+lx] x [0, ly] with height lz.
inline std::vector<Surface> room_surfaces(double x0, double lx, double ly,
                                          double lz, SeededRng& rng,
                                          int palette_offset) {
  std::vector<Surface> surfaces;
  auto pal = [&](int k) { return palette_color(rng, palette_offset + k); };
  const Vec3 ux = Vec3::UnitX(), uy = Vec3::UnitY(), uz = Vec3::UnitZ();
  surfaces.push_back(make_surface(Vec3(x0, 0, 0), ux, lx, uy, ly, pal(0),
                                  pal(1), 0.7, true));                 // floor
  surfaces.push_back(make_surface(Vec3(x0, 0, 0), ux, lx, uz, lz, pal(2),
                                  pal(3), 0.6, true));                 // y = 0
  surfaces.push_back(make_surface(Vec3(x0, ly, 0), ux, lx, uz, lz, pal(4),
                                  pal(5), 0.6, true));                 // y = ly
  surfaces.push_back(make_surface(Vec3(x0, 0, 0), uy, ly, uz, lz, pal(6),
                                  pal(7), 0.5, true));                 // x = x0
  surfaces.push_back(make_surface(Vec3(x0 + lx, 0, 0), uy, ly, uz, lz, pal(8),
                                  pal(9), 0.5, true));                 // x = x0+lx
  return surfaces;
}

inline ColoredPointCloud sample_surfaces(const std::vector<Surface>& surfaces,
                                         int n, SeededRng& rng) {
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& s : surfaces) {
    total += s.area();
    cumulative.push_back(total);
  }
  ColoredPointCloud cloud;
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const std::size_t k =
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
        cumulative.begin();
    const Surface& s = surfaces[std::min(k, surfaces.size() - 1)];
    const double u = rng.uniform() * s.u_len;
    const double v = rng.uniform() * s.v_len;
    cloud.push_back(s.point(u, v), s.color_at(u, v), true);
  }
  return cloud;
}

inline void add_noise(ColoredPointCloud& cloud, double pos_amp, double color_amp,
                      SeededRng& rng) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      cloud.positions[i][k] += rng.uniform(-pos_amp / 2.0, pos_amp / 2.0);
    }
    if (color_amp > 0.0 && cloud.color_mask[i]) {
      for (int k = 0; k < 3; ++k) {
        cloud.colors[i][k] = std::clamp(
            cloud.colors[i][k] + rng.uniform(-color_amp / 2.0, color_amp / 2.0),
            0.0, 1.0);
      }
    }
  }
}

/// Crops the base sample by x-quantiles, applies T_gt + noise, and records
/// the exact base-point correspondences plus the audited overlap.
inline SyntheticPair crop_pair(const ColoredPointCloud& base, double split,
                               const RigidTransform& t_gt, double pos_noise,
                               double color_noise, SeededRng& rng) {
  std::vector<double> xs;
  xs.reserve(base.size());
  for (const auto& p : base.positions) xs.push_back(p.x());
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double q) {
    const std::size_t i = static_cast<std::size_t>(
        std::clamp(q, 0.0, 1.0) * (sorted.size() - 1));
    return sorted[i];
  };
  const double x_hi = quantile(split);        // source keeps x <= x_hi
  const double x_lo = quantile(1.0 - split);  // target keeps x >= x_lo

  SyntheticPair pair;
  pair.t_gt = t_gt;
  std::vector<int> src_of_base(base.size(), -1), tgt_of_base(base.size(), -1);
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (xs[i] <= x_hi) {
      src_of_base[i] = static_cast<int>(pair.source.size());
      pair.source.push_back(base.positions[i], base.colors[i],
                            base.color_mask[i]);
    }
    if (xs[i] >= x_lo) {
      tgt_of_base[i] = static_cast<int>(pair.target.size());
      pair.target.push_back(t_gt.apply(base.positions[i]), base.colors[i],
                            base.color_mask[i]);
    }
  }
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (src_of_base[i] >= 0 && tgt_of_base[i] >= 0) {
      pair.correspondences.push_back({src_of_base[i], tgt_of_base[i]});
    }
  }
  add_noise(pair.source, pos_noise, color_noise, rng);
  add_noise(pair.target, pos_noise, color_noise, rng);

  // Overlap audit: source points with a target neighbor within 2 sigma of
  // the ground truth mapping (small floor when noise-free).
  const NeighborIndex tgt_index(pair.target.positions);
  const double gate = std::max(2.0 * pos_noise, 1e-9);
  int hits = 0;
  for (const auto& p : pair.source.positions) {
    if (tgt_index.nearest_distance(t_gt.apply(p)) < gate) ++hits;
  }
  pair.measured_overlap = static_cast<double>(hits) / pair.source.size();
  return pair;
}

}  // namespace detail

/// Desk-scale pair from one striped room. The two views crop a common base
/// sample by x-quantiles sized so the overlapping fraction of the source
/// equals the requested target; identical base points give the exact
/// correspondence set.
inline SyntheticPair generate_pair(const SyntheticPairSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);
  const auto surfaces = detail::room_surfaces(0.0, 4.0, 3.0, 2.2, rng, 0);

  const double split = 1.0 / (2.0 - spec.overlap);
  const int base_count =
      static_cast<int>(std::lround(spec.point_count / split));
  const ColoredPointCloud base =
      detail::sample_surfaces(surfaces, base_count, rng);

  const Vec3 axis = rng.unit_vector();
  RigidTransform t_gt;
  t_gt.R = so3_exp(axis * spec.rotation_deg * kPi / 180.0);
  t_gt.t = spec.translation_m * rng.unit_vector();

  return detail::crop_pair(base, split, t_gt, spec.position_noise,
                           spec.color_noise, rng);
}

/// Geometry-ambiguous fixture: a two-room suite whose rooms share identical
/// shapes but disjoint palettes. Wall panels repeat with pitch equal to the
/// room length, so shifting the alignment by one room is a geometric local
/// optimum with even more overlap than the true pose; only color tells the
/// two apart. Setting colored = false paints everything a uniform gray.
inline SyntheticPair two_room_pair(std::uint64_t seed, bool colored,
                                   int point_count = 4000,
                                   double position_noise = 0.004) {
  SeededRng rng(seed);
  const double room = 2.0, ly = 2.0, lz = 2.0;
  std::vector<detail::Surface> surfaces;

  // Floor and long walls span both rooms; palettes switch at the divider.
  auto pal = [&](int k) { return detail::palette_color(rng, k); };
  const Vec3 ux = Vec3::UnitX(), uy = Vec3::UnitY(), uz = Vec3::UnitZ();
  for (int r = 0; r < 2; ++r) {
    const double x0 = r * room;
    const Vec3 ca = pal(10 * r + 0), cb = pal(10 * r + 1);
    const Vec3 cc = pal(10 * r + 2), cd = pal(10 * r + 3);
    surfaces.push_back(detail::make_surface(Vec3(x0, 0, 0), ux, room, uy, ly,
                                            ca, cb, 0.6, true));  // floor
    surfaces.push_back(detail::make_surface(Vec3(x0, 0, 0), ux, room, uz, lz,
                                            cc, cd, 0.5, true));  // y = 0 wall
    surfaces.push_back(detail::make_surface(Vec3(x0, ly, 0), ux, room, uz, lz,
                                            cd, cc, 0.5, true));  // y = ly wall
  }
  // Identical transverse panels at x = 0, room, 2*room.
  for (int k = 0; k < 3; ++k) {
    const Vec3 ca = pal(20 + 2 * k), cb = pal(21 + 2 * k);
    surfaces.push_back(detail::make_surface(Vec3(k * room, 0, 0), uy, ly, uz,
                                            lz, ca, cb, 0.5, true));
  }
  if (!colored) {
    for (auto& s : surfaces) s.color_a = s.color_b = Vec3::Constant(0.5);
  }

  const double split = 0.6;  // source keeps [0, 2.4], target [1.6, 4]
  const int base_count = static_cast<int>(std::lround(point_count / split));
  const ColoredPointCloud base =
      detail::sample_surfaces(surfaces, base_count, rng);

  RigidTransform t_gt;
  t_gt.R = so3_exp(rng.unit_vector() * (2.0 * kPi / 180.0));
  t_gt.t = 0.15 * rng.unit_vector();

  return detail::crop_pair(base, split, t_gt, position_noise, 0.0, rng);
}

}  // namespace gsalign
