// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian superpoint coarse registration: generalized splat distance, the
// row-stochastic association matrix, the covariance-weighted SVD pose solve,
// and the iterated alignment loop.

#pragma once

#include "gsalign/core.hpp"
#include "gsalign/splats.hpp"

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace gsalign {

/// Squared mean gap plus the lambda_d-weighted Frobenius covariance gap.
inline double generalized_distance(const GaussianSplat& source,
                                   const GaussianSplat& target,
                                   double lambda_d) {
  return (source.mean - target.mean).squaredNorm() +
         lambda_d * (source.covariance - target.covariance).norm();
}

struct CoarseConfig {
  double lambda_d = 0.1;   // in [0.05, 0.2]
  double gamma = 2.0;      // in [1, 3]
  int max_iters = 50;
  double tol_rot = 1e-6;   // radians
  double tol_trans = 1e-6; // meters

  void validate() const {
    if (lambda_d < 0.05 || lambda_d > 0.2) {
      throw std::invalid_argument(
          "lambda_d outside permitted range [0.05, 0.2]");
    }
    if (gamma < 1.0 || gamma > 3.0) {
      throw std::invalid_argument("gamma outside permitted range [1, 3]");
    }
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(tol_rot > 0.0) || !(tol_trans > 0.0)) {
      throw std::invalid_argument("tolerances must be > 0");
    }
  }
};

using CorrespondenceMatrix = MatX;  // rows sum to 1

/// softmax of -gamma * d with max subtraction, so gamma * d may be large.
inline VecX association_row(const VecX& distances, double gamma) {
  const double best = distances.minCoeff();
  VecX row = (-gamma * (distances.array() - best)).exp();
  return row / row.sum();
}

/// Row-wise softmax of -gamma * d over the generalized splat distances.
inline CorrespondenceMatrix correspondence_matrix(
    const std::vector<GaussianSplat>& source,
    const std::vector<GaussianSplat>& target, const CoarseConfig& cfg) {
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("correspondence over empty splat set");
  }
  const int n = static_cast<int>(source.size());
  const int m = static_cast<int>(target.size());
  MatX a(n, m);
  VecX d(m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      d[j] = generalized_distance(source[i], target[j], cfg.lambda_d);
    }
    a.row(i) = association_row(d, cfg.gamma).transpose();
  }
  return a;
}

namespace detail {

/// Inverse target covariances; near-singular ones are ridged with 1e-8 I.
inline std::vector<Mat3> inverse_target_covariances(
    const std::vector<GaussianSplat>& target) {
  std::vector<Mat3> inv;
  inv.reserve(target.size());
  bool warned = false;
  for (const auto& t : target) {
    Mat3 sigma = t.covariance;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(sigma);
    if (eig.eigenvalues().minCoeff() < 1e-12) {
      sigma += 1e-8 * Mat3::Identity();
      if (!warned) {
        std::fprintf(stderr,
                     "gsalign: singular target covariance, regularizing\n");
        warned = true;
      }
    }
    inv.push_back(sigma.inverse());
  }
  return inv;
}

}  // namespace detail

/// The weighted Mahalanobis alignment objective
///   sum_ij A_ij (R mu_i + t - mu_j)^T Sigma_j^-1 (R mu_i + t - mu_j)
/// evaluated at the given pose.
inline double mahalanobis_objective(const std::vector<GaussianSplat>& source,
                                    const std::vector<GaussianSplat>& target,
                                    const CorrespondenceMatrix& a,
                                    const RigidTransform& pose) {
  const auto inv = detail::inverse_target_covariances(target);
  double obj = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    const Vec3 y = pose.apply(source[i].mean);
    for (int j = 0; j < a.cols(); ++j) {
      if (a(i, j) == 0.0) continue;
      const Vec3 r = y - target[j].mean;
      obj += a(i, j) * r.dot(inv[j] * r);
    }
  }
  return obj;
}

/// Closed-form pose from the association matrix: A-weighted centroids, the
/// Sigma_j^-1-weighted cross matrix, SVD with a reflection guard (negate the
/// last column of V when det(V U^T) = -1), and t = mu_t - R mu_s.
inline RigidTransform weighted_svd_align(
    const std::vector<GaussianSplat>& source,
    const std::vector<GaussianSplat>& target, const CorrespondenceMatrix& a) {
  const int n = static_cast<int>(source.size());
  const int m = static_cast<int>(target.size());
  if (a.rows() != n || a.cols() != m) {
    throw std::invalid_argument("association matrix shape mismatch");
  }
  const double wsum = a.sum();
  if (!(wsum > 0.0) || !std::isfinite(wsum)) {
    throw std::runtime_error("vacuous correspondences");
  }
  const VecX row_sum = a.rowwise().sum();
  const VecX col_sum = a.colwise().sum();
  Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
  for (int i = 0; i < n; ++i) mu_s += row_sum[i] * source[i].mean;
  for (int j = 0; j < m; ++j) mu_t += col_sum[j] * target[j].mean;
  mu_s /= wsum;
  mu_t /= wsum;

  const auto inv = detail::inverse_target_covariances(target);
  Mat3 h = Mat3::Zero();
  for (int j = 0; j < m; ++j) {
    Vec3 acc = Vec3::Zero();
    for (int i = 0; i < n; ++i) acc += a(i, j) * (source[i].mean - mu_s);
    h += inv[j] * acc * (target[j].mean - mu_t).transpose();
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  Mat3 r = v * u.transpose();
  if (r.determinant() < 0.0) {
    v.col(2) = -v.col(2);
    r = v * u.transpose();
  }
  return {r, mu_t - r * mu_s};
}

struct CoarseResult {
  RigidTransform transform;
  CorrespondenceMatrix a_final;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;

  nlohmann::json to_json() const {
    nlohmann::json pose = nlohmann::json::array();
    const Mat4 m = transform.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pose.push_back(m(r, c));
    return {{"pose", pose},
            {"iterations", iterations},
            {"converged", converged},
            {"objective_trace", objective_trace}};
  }
};

/// Iterated alignment: recompute distances and the association under the
/// current pose, solve the weighted SVD step, compose, and stop once the
/// incremental rotation and translation fall below the tolerances.
inline CoarseResult coarse_register(
    const std::vector<GaussianSplat>& source,
    const std::vector<GaussianSplat>& target, const CoarseConfig& cfg,
    const RigidTransform& init = RigidTransform::identity()) {
  cfg.validate();
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("coarse registration over empty splat set");
  }
  CoarseResult result;
  result.transform = init;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const auto moved = transform_splats(result.transform, source);
    const CorrespondenceMatrix a = correspondence_matrix(moved, target, cfg);
    const RigidTransform step = weighted_svd_align(moved, target, a);
    result.transform = step * result.transform;
    result.a_final = a;
    result.iterations = iter + 1;
    result.objective_trace.push_back(
        mahalanobis_objective(moved, target, a, step));
    if (rotation_angle(step.R) < cfg.tol_rot && step.t.norm() < cfg.tol_trans) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace gsalign
