// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Rigid-motion algebra: colored point clouds, SE(3)/SO(3) maps, twists.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gsalign {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

/// Point cloud with optional per-point RGB. Uncolored points carry the
/// sentinel color (0,0,0) and color_mask = false; they are skipped by every
/// color-dependent operation.
struct ColoredPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;           // RGB, each channel in [0,1]
  std::vector<std::uint8_t> color_mask;

  ColoredPointCloud() = default;
  explicit ColoredPointCloud(std::size_t n)
      : positions(n, Vec3::Zero()),
        colors(n, Vec3::Zero()),
        color_mask(n, 0) {}

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void push_back(const Vec3& p, const Vec3& c, bool colored = true) {
    positions.push_back(p);
    colors.push_back(colored ? c : Vec3::Zero());
    color_mask.push_back(colored ? 1 : 0);
  }

  /// Throws if the parallel arrays disagree or a color leaves [0,1].
  void validate() const {
    if (colors.size() != positions.size() ||
        color_mask.size() != positions.size()) {
      throw std::invalid_argument("point cloud arrays have mismatched length");
    }
    for (std::size_t i = 0; i < colors.size(); ++i) {
      const Vec3& c = colors[i];
      if (c.minCoeff() < 0.0 || c.maxCoeff() > 1.0) {
        throw std::invalid_argument("color channel outside [0,1]");
      }
      if (!color_mask[i] && c != Vec3::Zero()) {
        throw std::invalid_argument("uncolored point must carry sentinel color");
      }
    }
  }
};

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

/// Rigid motion T = (R, t) acting as p -> R p + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return R * p + t; }

  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  /// Composition: (*this) after other, i.e. x -> this(other(x)).
  RigidTransform operator*(const RigidTransform& other) const {
    return {R * other.R, R * other.t + t};
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  static RigidTransform from_matrix(const Mat4& m) {
    RigidTransform T;
    T.R = m.topLeftCorner<3, 3>();
    T.t = m.topRightCorner<3, 1>();
    return T;
  }

  /// RtR = I and det R = 1, both within tol (Frobenius / absolute).
  bool is_valid(double tol = 1e-9) const {
    const Mat3 err = R.transpose() * R - Mat3::Identity();
    return err.norm() <= tol && std::abs(R.determinant() - 1.0) <= tol &&
           t.allFinite();
  }
};

/// se(3) element xi = (omega, v): omega is axis-angle, v the linear part.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Vec6 vector() const {
    Vec6 x;
    x << omega, v;
    return x;
  }
  static Twist from_vector(const Vec6& x) {
    return {x.head<3>(), x.tail<3>()};
  }
};

/// SO(3) exponential via the Rodrigues closed form.
inline Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 K = skew(omega);
  if (theta < 1e-10) {
    // Second-order series; exact enough at this scale.
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * K + b * K * K;
}

/// Left Jacobian V(omega) with t = V v for the SE(3) exponential.
inline Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 K = skew(omega);
  if (theta < 1e-10) {
    return Mat3::Identity() + 0.5 * K + (1.0 / 6.0) * K * K;
  }
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  const double c = (theta - std::sin(theta)) / (theta * theta * theta);
  return Mat3::Identity() + b * K + c * K * K;
}

inline Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 K = skew(omega);
  if (theta < 1e-10) {
    return Mat3::Identity() - 0.5 * K + (1.0 / 12.0) * K * K;
  }
  const double c = 1.0 / (theta * theta) -
                   (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * K + c * K * K;
}

/// SO(3) logarithm with ||omega|| <= pi. Extraction goes through the
/// quaternion, which stays well conditioned at half turns: there the vector
/// part comes from the largest diagonal of (R + I)/2 and the sign is fixed so
/// the first nonzero axis component is positive.
inline Vec3 so3_log(const Mat3& R) {
  Eigen::Quaterniond q(R);
  if (q.w() < 0) q.coeffs() = -q.coeffs();  // angle in [0, pi]
  const double vnorm = q.vec().norm();
  if (vnorm < 1e-12) {
    return 2.0 * q.vec();  // first order near the identity
  }
  const double theta = 2.0 * std::atan2(vnorm, q.w());
  Vec3 axis = q.vec() / vnorm;
  if (theta > kPi - 1e-9) {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
  }
  return theta * axis;
}

/// exp: se(3) -> SE(3). Total function; rotation via Rodrigues, translation
/// through the left Jacobian.
inline RigidTransform se3_exp(const Twist& xi) {
  RigidTransform T;
  T.R = so3_exp(xi.omega);
  T.t = so3_left_jacobian(xi.omega) * xi.v;
  return T;
}

inline RigidTransform se3_exp(const Vec6& xi) {
  return se3_exp(Twist::from_vector(xi));
}

/// log: SE(3) -> se(3) with ||omega|| <= pi.
inline Twist se3_log(const RigidTransform& T) {
  Twist xi;
  xi.omega = so3_log(T.R);
  xi.v = so3_left_jacobian_inverse(xi.omega) * T.t;
  return xi;
}

/// Rotation angle of R in radians, in [0, pi]. Evaluated through the
/// quaternion so tiny angles are not lost to the conditioning of
/// acos((trace - 1) / 2) near 1.
inline double rotation_angle(const Mat3& R) {
  const Eigen::Quaterniond q(R);
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

/// p -> R p + t applied to every position; colors and mask pass through.
inline ColoredPointCloud apply_transform(const RigidTransform& T,
                                         const ColoredPointCloud& cloud) {
  ColoredPointCloud out = cloud;
  for (auto& p : out.positions) p = T.apply(p);
  return out;
}

}  // namespace gsalign
