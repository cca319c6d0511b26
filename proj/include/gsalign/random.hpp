// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsalign/core.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace gsalign {

/// Seeded generator with explicit Box-Muller normals, so sampled weights are
/// identical across standard libraries (std::normal_distribution is not).
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // in [0, 1)
    return (engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  Vec3 normal3() { return Vec3(normal(), normal(), normal()); }

  Vec3 unit_vector() {
    Vec3 v;
    do {
      v = normal3();
    } while (v.norm() < 1e-12);
    return v.normalized();
  }

  /// Uniformly random rotation axis with the requested angle (radians).
  Mat3 rotation(double angle) { return so3_exp(angle * unit_vector()); }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Gaussian matrix with std 1/sqrt(rows); row-major fill order is part of the
/// serialized format.
inline MatX seeded_weight_matrix(SeededRng& rng, int rows, int cols) {
  MatX w(rows, cols);
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(rows));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) w(r, c) = std_dev * rng.normal();
  }
  return w;
}

}  // namespace gsalign
