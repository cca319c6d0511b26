// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Color-space conversion, the seeded three-layer color encoder, and the gated
// geometric-color feature fusion.

#pragma once

#include "gsalign/core.hpp"
#include "gsalign/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <string>

namespace gsalign {

enum class ColorSpace { RGB, HSV, LAB };

inline std::string to_string(ColorSpace s) {
  switch (s) {
    case ColorSpace::RGB: return "rgb";
    case ColorSpace::HSV: return "hsv";
    case ColorSpace::LAB: return "lab";
  }
  return "rgb";
}

inline ColorSpace color_space_from_string(const std::string& s) {
  if (s == "rgb") return ColorSpace::RGB;
  if (s == "hsv") return ColorSpace::HSV;
  if (s == "lab") return ColorSpace::LAB;
  throw std::invalid_argument("unknown color space '" + s +
                              "' (expected rgb, hsv, or lab)");
}

namespace detail {

inline void check_gamut(const Vec3& c) {
  if (!(c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0)) {
    throw std::invalid_argument("color out of gamut");
  }
}

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double c) {
  return c <= 0.0031308 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

// sRGB -> XYZ (D65). The reference white is the image of (1,1,1) under this
// exact matrix so the neutral axis maps to (L, 0, 0) without residue.
inline Vec3 srgb_to_xyz(const Vec3& rgb) {
  Mat3 m;
  // clang-format off
  m << 0.4124564, 0.3575761, 0.1804375,
       0.2126729, 0.7151522, 0.0721750,
       0.0193339, 0.1191920, 0.9503041;
  // clang-format on
  return m * Vec3(srgb_to_linear(rgb.x()), srgb_to_linear(rgb.y()),
                  srgb_to_linear(rgb.z()));
}

inline Vec3 xyz_to_srgb(const Vec3& xyz) {
  Mat3 m;
  // clang-format off
  m << 0.4124564, 0.3575761, 0.1804375,
       0.2126729, 0.7151522, 0.0721750,
       0.0193339, 0.1191920, 0.9503041;
  // clang-format on
  const Vec3 lin = m.inverse() * xyz;
  return Vec3(linear_to_srgb(lin.x()), linear_to_srgb(lin.y()),
              linear_to_srgb(lin.z()));
}

inline Vec3 reference_white() { return srgb_to_xyz(Vec3(1.0, 1.0, 1.0)); }

inline double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

inline double lab_f_inv(double u) {
  constexpr double d = 6.0 / 29.0;
  return u > d ? u * u * u : 3.0 * d * d * (u - 4.0 / 29.0);
}

}  // namespace detail

/// RGB -> HSV with hue normalized to [0,1).
inline Vec3 rgb_to_hsv(const Vec3& rgb) {
  detail::check_gamut(rgb);
  const double mx = rgb.maxCoeff(), mn = rgb.minCoeff();
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == rgb.x()) {
      h = std::fmod((rgb.y() - rgb.z()) / delta, 6.0);
    } else if (mx == rgb.y()) {
      h = (rgb.z() - rgb.x()) / delta + 2.0;
    } else {
      h = (rgb.x() - rgb.y()) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return Vec3(h, s, mx);
}

inline Vec3 hsv_to_rgb(const Vec3& hsv) {
  const double h = hsv.x() * 6.0, s = hsv.y(), v = hsv.z();
  const int sector = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return Vec3(v, t, p);
    case 1: return Vec3(q, v, p);
    case 2: return Vec3(p, v, t);
    case 3: return Vec3(p, q, v);
    case 4: return Vec3(t, p, v);
    default: return Vec3(v, p, q);
  }
}

/// RGB -> CIE LAB under D65, rescaled to L in [0,1] and a, b in [-1,1].
inline Vec3 rgb_to_lab(const Vec3& rgb) {
  detail::check_gamut(rgb);
  const Vec3 xyz = detail::srgb_to_xyz(rgb);
  const Vec3 w = detail::reference_white();
  const double fx = detail::lab_f(xyz.x() / w.x());
  const double fy = detail::lab_f(xyz.y() / w.y());
  const double fz = detail::lab_f(xyz.z() / w.z());
  const double L = 116.0 * fy - 16.0;
  const double a = 500.0 * (fx - fy);
  const double b = 200.0 * (fy - fz);
  return Vec3(L / 100.0, a / 128.0, b / 128.0);
}

inline Vec3 lab_to_rgb(const Vec3& lab) {
  const double L = lab.x() * 100.0, a = lab.y() * 128.0, b = lab.z() * 128.0;
  const double fy = (L + 16.0) / 116.0;
  const double fx = fy + a / 500.0;
  const double fz = fy - b / 200.0;
  const Vec3 w = detail::reference_white();
  const Vec3 xyz(w.x() * detail::lab_f_inv(fx), w.y() * detail::lab_f_inv(fy),
                 w.z() * detail::lab_f_inv(fz));
  return detail::xyz_to_srgb(xyz);
}

inline Vec3 convert_color(const Vec3& rgb, ColorSpace target) {
  switch (target) {
    case ColorSpace::RGB: detail::check_gamut(rgb); return rgb;
    case ColorSpace::HSV: return rgb_to_hsv(rgb);
    case ColorSpace::LAB: return rgb_to_lab(rgb);
  }
  return rgb;
}

/// Weights for the three-layer encoder. All matrices are stored input-dim x
/// output-dim and are generated deterministically from the seed (Gaussian,
/// std 1/sqrt(d_in); layer-norm scale 1, shift 0).
struct ColorEncoderParams {
  MatX w1, w2, w3;                 // 3 x d, d x d, d x d
  VecX ln_scale1, ln_shift1;
  VecX ln_scale2, ln_shift2;
  VecX ln_scale3, ln_shift3;
  std::uint64_t seed = 0;

  int output_dim() const { return static_cast<int>(w1.cols()); }

  static ColorEncoderParams seeded(std::uint64_t seed, int dim) {
    if (dim < 1) throw std::invalid_argument("encoder dim must be >= 1");
    SeededRng rng(seed);
    ColorEncoderParams p;
    p.seed = seed;
    p.w1 = seeded_weight_matrix(rng, 3, dim);
    p.w2 = seeded_weight_matrix(rng, dim, dim);
    p.w3 = seeded_weight_matrix(rng, dim, dim);
    p.ln_scale1 = p.ln_scale2 = p.ln_scale3 = VecX::Ones(dim);
    p.ln_shift1 = p.ln_shift2 = p.ln_shift3 = VecX::Zero(dim);
    return p;
  }

  nlohmann::json to_json() const;
  static ColorEncoderParams from_json(const nlohmann::json& j);
};

namespace detail {

inline VecX layer_norm(const VecX& x, const VecX& scale, const VecX& shift) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const VecX normed = (x.array() - mean) / std::sqrt(var + 1e-5);
  return (normed.array() * scale.array() + shift.array()).matrix();
}

inline VecX relu(const VecX& x) { return x.cwiseMax(0.0); }

inline VecX sigmoid(const VecX& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace detail

/// Three affine layers, each followed by layer normalization; ReLU between
/// layers and a sigmoid bound at the output, so the result lives in (0,1)^d.
inline VecX encode_color(const Vec3& c, const ColorEncoderParams& p) {
  if (!c.allFinite()) throw std::invalid_argument("non-finite color input");
  if (p.w2.rows() != p.w1.cols() || p.w3.rows() != p.w2.cols()) {
    throw std::invalid_argument("encoder weight dimension mismatch");
  }
  const VecX h1 = detail::relu(
      detail::layer_norm(p.w1.transpose() * c, p.ln_scale1, p.ln_shift1));
  const VecX h2 = detail::relu(
      detail::layer_norm(p.w2.transpose() * h1, p.ln_scale2, p.ln_shift2));
  return detail::sigmoid(
      detail::layer_norm(p.w3.transpose() * h2, p.ln_scale3, p.ln_shift3));
}

/// Learned scalar gate alpha = sigmoid(omega) in (0,1).
struct FusionGate {
  double omega = 0.0;
  double alpha() const { return 1.0 / (1.0 + std::exp(-omega)); }
};

/// Channel concatenation of geometric and color features. Intermediate levels
/// scale the color block by the gate; the final level concatenates ungated.
inline VecX fuse_features(const VecX& f_geo, const VecX& f_color,
                          const FusionGate& gate, int level, int total_levels) {
  if (level < 1 || level > total_levels) {
    throw std::invalid_argument("fusion level outside [1, L]");
  }
  VecX out(f_geo.size() + f_color.size());
  out.head(f_geo.size()) = f_geo;
  if (level < total_levels) {
    out.tail(f_color.size()) = gate.alpha() * f_color;
  } else {
    out.tail(f_color.size()) = f_color;
  }
  return out;
}

// -- serialization ----------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const MatX& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatX matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  if (rows == 0) return MatX(0, 0);
  const auto cols = j.at(0).size();
  MatX m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const VecX& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline VecX vector_from_json(const nlohmann::json& j) {
  VecX v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json ColorEncoderParams::to_json() const {
  return {{"seed", seed},
          {"w1", detail::matrix_to_json(w1)},
          {"w2", detail::matrix_to_json(w2)},
          {"w3", detail::matrix_to_json(w3)},
          {"ln_scale", {detail::vector_to_json(ln_scale1),
                        detail::vector_to_json(ln_scale2),
                        detail::vector_to_json(ln_scale3)}},
          {"ln_shift", {detail::vector_to_json(ln_shift1),
                        detail::vector_to_json(ln_shift2),
                        detail::vector_to_json(ln_shift3)}}};
}

inline ColorEncoderParams ColorEncoderParams::from_json(const nlohmann::json& j) {
  ColorEncoderParams p;
  p.seed = j.at("seed").get<std::uint64_t>();
  p.w1 = detail::matrix_from_json(j.at("w1"));
  p.w2 = detail::matrix_from_json(j.at("w2"));
  p.w3 = detail::matrix_from_json(j.at("w3"));
  p.ln_scale1 = detail::vector_from_json(j.at("ln_scale").at(0));
  p.ln_scale2 = detail::vector_from_json(j.at("ln_scale").at(1));
  p.ln_scale3 = detail::vector_from_json(j.at("ln_scale").at(2));
  p.ln_shift1 = detail::vector_from_json(j.at("ln_shift").at(0));
  p.ln_shift2 = detail::vector_from_json(j.at("ln_shift").at(1));
  p.ln_shift3 = detail::vector_from_json(j.at("ln_shift").at(2));
  return p;
}

}  // namespace gsalign
