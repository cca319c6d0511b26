// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian superpoint construction: normals, anisotropic covariances with a
// normal-strength term, pooled splat feature vectors, and the truncated-SVD
// low-rank projector for those features.

#pragma once

#include "gsalign/core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gsalign {

struct GaussianSplat {
  Vec3 mean = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 log_scale = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double normal_strength = 0.0;   // lambda in the covariance model
  Mat3 covariance = Mat3::Identity();
  double opacity = 1.0;
  VecX feature;                   // fused geometric-color feature
  Vec3 rgb = Vec3::Constant(0.5); // render color
  bool colored = false;

  /// Ro(r) diag(exp(s)) Ro(r)^T + lambda n n^T, recomputed from parameters.
  Mat3 covariance_from_params() const {
    const Mat3 ro = rotation.toRotationMatrix();
    const Mat3 core =
        ro * log_scale.array().exp().matrix().asDiagonal() * ro.transpose();
    return core + normal_strength * (normal * normal.transpose());
  }
};

/// Smallest-eigenvector normal of the neighborhood's sample covariance, with
/// the sign fixed so the first nonzero component is positive. Throws on fewer
/// than 3 points or a collinear (rank-deficient) neighborhood.
inline Vec3 estimate_normal(const std::vector<Vec3>& neighborhood) {
  if (neighborhood.size() < 3) {
    throw std::invalid_argument("degenerate neighborhood");
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : neighborhood) centroid += p;
  centroid /= static_cast<double>(neighborhood.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : neighborhood) {
    const Vec3 d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(neighborhood.size());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 evals = eig.eigenvalues();  // ascending
  if (evals[1] <= 1e-12 * std::max(evals[2], 1e-300) || evals[2] <= 0.0) {
    throw std::invalid_argument("degenerate neighborhood");
  }
  Vec3 n = eig.eigenvectors().col(0);
  for (int i = 0; i < 3; ++i) {
    if (std::abs(n[i]) > 1e-12) {
      if (n[i] < 0) n = -n;
      break;
    }
  }
  return n;
}

/// Builds the splat covariance directly from quaternion/scale/normal
/// parameters. Used by build_splat and by tests that pin each term.
inline Mat3 splat_covariance(const Eigen::Quaterniond& r, const Vec3& log_scale,
                             const Vec3& n, double lambda) {
  const Mat3 ro = r.normalized().toRotationMatrix();
  return ro * log_scale.array().exp().matrix().asDiagonal() * ro.transpose() +
         lambda * (n * n.transpose());
}

/// Derives splat parameters from the neighborhood's sample covariance
/// eigendecomposition: r from the (det +1) eigenvector frame, s from the
/// log-clamped eigenvalues, n from estimate_normal. Opacity defaults to 1.
inline GaussianSplat build_splat(const Vec3& center,
                                 const std::vector<Vec3>& neighborhood,
                                 double lambda, const VecX& feature,
                                 double opacity = 1.0) {
  if (lambda < 0.0) throw std::invalid_argument("normal strength must be >= 0");
  GaussianSplat splat;
  splat.mean = center;
  splat.normal = estimate_normal(neighborhood);
  splat.normal_strength = lambda;
  splat.opacity = opacity;
  splat.feature = feature;

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : neighborhood) centroid += p;
  centroid /= static_cast<double>(neighborhood.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : neighborhood) {
    const Vec3 d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(neighborhood.size());

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Mat3 q = eig.eigenvectors();
  if (q.determinant() < 0) q.col(2) = -q.col(2);
  splat.rotation = Eigen::Quaterniond(q).normalized();
  splat.log_scale = eig.eigenvalues().cwiseMax(1e-8).array().log();
  splat.covariance =
      splat_covariance(splat.rotation, splat.log_scale, splat.normal, lambda);
  return splat;
}

/// Rigidly moves a splat: mean, covariance, frame, and normal co-rotate.
inline GaussianSplat transform_splat(const RigidTransform& T,
                                     const GaussianSplat& s) {
  GaussianSplat out = s;
  out.mean = T.apply(s.mean);
  out.covariance = T.R * s.covariance * T.R.transpose();
  out.rotation = Eigen::Quaterniond(T.R) * s.rotation;
  out.normal = T.R * s.normal;
  return out;
}

inline std::vector<GaussianSplat> transform_splats(
    const RigidTransform& T, const std::vector<GaussianSplat>& splats) {
  std::vector<GaussianSplat> out;
  out.reserve(splats.size());
  for (const auto& s : splats) out.push_back(transform_splat(T, s));
  return out;
}

/// Row-major flattening of a 3x3 matrix.
inline VecX vec_mat3(const Mat3& m) {
  VecX v(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[3 * r + c] = m(r, c);
  return v;
}

struct SplatFeature {
  VecX value;          // Concat[mu, vec(Sigma), alpha, feature], mean-pooled
  int pooled_over = 0;
  bool truncated = false;  // fewer than k neighbors were available
};

/// Mean-pools Concat[mu, vec(Sigma), alpha, feature] over the k nearest
/// neighbor splats (Euclidean distance between means, ties by index). With
/// fewer than k neighbors it pools over all and flags the result.
inline SplatFeature splat_feature(const GaussianSplat& splat,
                                  const std::vector<GaussianSplat>& neighbors,
                                  int k) {
  if (k < 2 || k > 5) throw std::invalid_argument("top-k must lie in [2, 5]");
  if (neighbors.empty()) throw std::invalid_argument("no neighbor splats");
  std::vector<std::pair<double, int>> order;
  order.reserve(neighbors.size());
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    order.emplace_back((neighbors[i].mean - splat.mean).norm(),
                       static_cast<int>(i));
  }
  std::sort(order.begin(), order.end());
  const int take = std::min<int>(k, static_cast<int>(order.size()));

  const Eigen::Index f_len = neighbors[0].feature.size();
  SplatFeature out;
  out.value = VecX::Zero(13 + f_len);
  out.pooled_over = take;
  out.truncated = take < k;
  for (int i = 0; i < take; ++i) {
    const GaussianSplat& n = neighbors[order[i].second];
    if (n.feature.size() != f_len) {
      throw std::invalid_argument("neighbor feature length mismatch");
    }
    VecX row(13 + f_len);
    row.head<3>() = n.mean;
    row.segment<9>(3) = vec_mat3(n.covariance);
    row[12] = n.opacity;
    row.tail(f_len) = n.feature;
    out.value += row;
  }
  out.value /= static_cast<double>(take);
  return out;
}

/// Rank-r factors from the truncated SVD of a calibration feature matrix.
/// project() maps into the kept right-singular subspace; reconstruct() maps
/// back, so reconstruct(project(x)) is the orthogonal projection of x.
struct LowRankProjector {
  int rank = 0;
  MatX basis;             // d x r, the kept right singular vectors
  VecX singular_values;   // all singular values of the calibration matrix

  VecX project(const VecX& x) const { return basis.transpose() * x; }
  VecX reconstruct(const VecX& z) const { return basis * z; }

  /// Frobenius error of the rank-r reconstruction of the calibration matrix,
  /// equal to sqrt(sum of discarded squared singular values).
  double reconstruction_error() const {
    double sq = 0.0;
    for (Eigen::Index i = rank; i < singular_values.size(); ++i) {
      sq += singular_values[i] * singular_values[i];
    }
    return std::sqrt(sq);
  }
};

inline LowRankProjector fit_low_rank(const MatX& features, int rank) {
  if (rank < 1 || rank > std::min(features.rows(), features.cols())) {
    throw std::invalid_argument("rank must lie in [1, min(rows, cols)]");
  }
  Eigen::JacobiSVD<MatX> svd(features, Eigen::ComputeThinU | Eigen::ComputeThinV);
  LowRankProjector p;
  p.rank = rank;
  p.basis = svd.matrixV().leftCols(rank);
  p.singular_values = svd.singularValues();
  return p;
}

// -- serialization (one splat per JSON line) ---------------------------------

inline nlohmann::json splat_to_json(const GaussianSplat& s) {
  nlohmann::json j;
  j["mu"] = {s.mean.x(), s.mean.y(), s.mean.z()};
  j["r"] = {s.rotation.w(), s.rotation.x(), s.rotation.y(), s.rotation.z()};
  j["s"] = {s.log_scale.x(), s.log_scale.y(), s.log_scale.z()};
  j["n"] = {s.normal.x(), s.normal.y(), s.normal.z()};
  j["lambda"] = s.normal_strength;
  j["alpha"] = s.opacity;
  j["rgb"] = {s.rgb.x(), s.rgb.y(), s.rgb.z()};
  j["colored"] = s.colored;
  nlohmann::json f = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.feature.size(); ++i) f.push_back(s.feature[i]);
  j["feature"] = std::move(f);
  return j;
}

inline GaussianSplat splat_from_json(const nlohmann::json& j) {
  GaussianSplat s;
  s.mean = Vec3(j.at("mu").at(0), j.at("mu").at(1), j.at("mu").at(2));
  s.rotation = Eigen::Quaterniond(j.at("r").at(0), j.at("r").at(1),
                                  j.at("r").at(2), j.at("r").at(3));
  s.log_scale = Vec3(j.at("s").at(0), j.at("s").at(1), j.at("s").at(2));
  s.normal = Vec3(j.at("n").at(0), j.at("n").at(1), j.at("n").at(2));
  s.normal_strength = j.at("lambda").get<double>();
  s.opacity = j.at("alpha").get<double>();
  s.rgb = Vec3(j.at("rgb").at(0), j.at("rgb").at(1), j.at("rgb").at(2));
  s.colored = j.at("colored").get<bool>();
  const auto& f = j.at("feature");
  s.feature = VecX(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) s.feature[i] = f.at(i).get<double>();
  s.covariance = s.covariance_from_params();
  return s;
}

inline std::string splats_to_jsonl(const std::vector<GaussianSplat>& splats) {
  std::ostringstream out;
  for (const auto& s : splats) out << splat_to_json(s).dump() << '\n';
  return out.str();
}

inline std::vector<GaussianSplat> splats_from_jsonl(const std::string& text) {
  std::vector<GaussianSplat> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(splat_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace gsalign
