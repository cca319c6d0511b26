// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end registration. Two splat levels are built per cloud: sparse
// superpoints whose spacing keeps the association softmax discriminative for
// the coarse solve, and a denser render level that carries crisp colors for
// the photometric refinement. Candidates from multi-start coarse alignment
// are ranked and selected by the joint geometric-photometric loss.

#pragma once

#include "gsalign/coarse.hpp"
#include "gsalign/color.hpp"
#include "gsalign/core.hpp"
#include "gsalign/embeddings.hpp"
#include "gsalign/fine.hpp"
#include "gsalign/neighbors.hpp"
#include "gsalign/parallel.hpp"
#include "gsalign/random.hpp"
#include "gsalign/render.hpp"
#include "gsalign/splats.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsalign {

struct RunConfig {
  // superpoint encoding (0 = derive from the scene extent)
  double voxel_size = 0.0;
  double render_voxel = 0.0;
  int neighborhood_k = 16;
  double lambda_normal = 0.05;  // in [0.01, 0.1]
  int top_k = 3;                // in [2, 5]
  int encoder_dim = 8;
  double gate_omega = 0.0;
  ColorSpace color_space = ColorSpace::HSV;
  bool use_color = true;

  CoarseConfig coarse;

  // fine stage (cameras are derived from the data)
  double gamma_d = 1.5;   // in [1, 3]
  double lambda_p = 1.0;  // in [0.1, 1]
  double step_size = 0.1;
  int fine_max_steps = 60;
  double backtrack = 0.5;
  int camera_count = 4;
  int camera_resolution = 64;

  // embeddings (exercised through the library API and serialization)
  double sigma_gs = 0.05;  // in [0.01, 0.1]
  double sigma_d = 1.0;
  double sigma_a = 1.0;
  double lambda_g = 0.1;   // in [0.01, 1]
  int d_t = 16;

  // multi-start search
  int random_restarts = 3;
  bool pca_inits = true;
  int fine_candidates = 2;
  double match_confidence = 0.1;

  std::uint64_t seed = 0;

  void validate() const {
    if (voxel_size < 0.0 || render_voxel < 0.0) {
      throw std::invalid_argument("voxel sizes must be >= 0 (0 = automatic)");
    }
    if (neighborhood_k < 3) {
      throw std::invalid_argument("neighborhood size must be >= 3");
    }
    if (lambda_normal < 0.01 || lambda_normal > 0.1) {
      throw std::invalid_argument("lambda outside permitted range [0.01, 0.1]");
    }
    if (top_k < 2 || top_k > 5) {
      throw std::invalid_argument("top-k outside permitted range [2, 5]");
    }
    if (encoder_dim < 1) throw std::invalid_argument("encoder dim must be >= 1");
    coarse.validate();
    if (gamma_d < 1.0 || gamma_d > 3.0) {
      throw std::invalid_argument("gamma_d outside permitted range [1, 3]");
    }
    if (lambda_p < 0.1 || lambda_p > 1.0) {
      throw std::invalid_argument("lambda_p outside permitted range [0.1, 1]");
    }
    if (sigma_gs < 0.01 || sigma_gs > 0.1) {
      throw std::invalid_argument("sigma_gs outside permitted range [0.01, 0.1]");
    }
    if (lambda_g < 0.01 || lambda_g > 1.0) {
      throw std::invalid_argument("lambda_g outside permitted range [0.01, 1]");
    }
    if (!(sigma_d > 0.0) || !(sigma_a > 0.0)) {
      throw std::invalid_argument("sigma_d and sigma_a must be > 0");
    }
    if (fine_candidates < 1 || random_restarts < 0) {
      throw std::invalid_argument("candidate counts must be positive");
    }
  }

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

namespace detail {

inline double bbox_diagonal(const std::vector<Vec3>& pts) {
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

/// Superpoint spacing wide enough for exp(-gamma d^2) to separate true
/// matches from neighbors at desk scale, shrunk when the cloud is too small
/// to yield a workable set.
inline double auto_superpoint_voxel(const ColoredPointCloud& cloud) {
  double voxel = bbox_diagonal(cloud.positions) / 5.0;
  voxel = std::max(voxel, 1e-3);
  for (int i = 0; i < 6; ++i) {
    if (voxel_downsample(cloud, voxel).size() >= 24) break;
    voxel *= 0.7;
  }
  return voxel;
}

}  // namespace detail

struct SuperpointData {
  std::vector<GaussianSplat> splats;
  std::vector<std::vector<int>> patches;  // dense indices per superpoint
  std::vector<Vec3> positions;            // splat means, for convenience
  double voxel = 0.0;
};

/// Downsample to superpoints, gather dense neighborhoods, and build one
/// Gaussian splat per superpoint with the fused geometric-color feature.
/// Degenerate (collinear) neighborhoods are dropped.
inline SuperpointData encode_superpoints(const ColoredPointCloud& cloud,
                                         const RunConfig& cfg,
                                         const ColorEncoderParams& encoder,
                                         double voxel_override = 0.0) {
  if (cloud.empty()) throw std::invalid_argument("empty point cloud");
  double voxel = voxel_override > 0.0 ? voxel_override : cfg.voxel_size;
  if (voxel <= 0.0) voxel = detail::auto_superpoint_voxel(cloud);
  const auto down = voxel_downsample_with_members(cloud, voxel);
  const NeighborIndex dense(cloud.positions);
  const FusionGate gate{cfg.gate_omega};

  SuperpointData out;
  out.voxel = voxel;
  const int n = static_cast<int>(down.cloud.size());
  std::vector<std::optional<GaussianSplat>> built(n);
  parallel_for(n, [&](int i) {
    const Vec3 center = down.cloud.positions[i];
    const auto idxs = dense.knn(center, cfg.neighborhood_k);
    std::vector<Vec3> neighborhood;
    neighborhood.reserve(idxs.size());
    for (int j : idxs) neighborhood.push_back(cloud.positions[j]);
    try {
      // Rotation-invariant geometric feature: normalized covariance spectrum.
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
      Vec3 spectrum = eig.eigenvalues().cwiseMax(0.0);
      const double total = std::max(spectrum.sum(), 1e-300);
      VecX f_geo = (spectrum / total).eval();

      const bool colored = cfg.use_color && down.cloud.color_mask[i];
      VecX f_color = VecX::Zero(encoder.output_dim());
      if (colored) {
        f_color = encode_color(
            convert_color(down.cloud.colors[i], cfg.color_space), encoder);
      }
      const VecX feature = fuse_features(f_geo, f_color, gate, 1, 2);

      GaussianSplat splat =
          build_splat(center, neighborhood, cfg.lambda_normal, feature);
      splat.colored = colored;
      splat.rgb = colored ? down.cloud.colors[i] : Vec3::Constant(0.5);
      built[i] = std::move(splat);
    } catch (const std::invalid_argument&) {
      // degenerate neighborhood, superpoint dropped
    }
  });
  for (int i = 0; i < n; ++i) {
    if (!built[i]) continue;
    out.splats.push_back(std::move(*built[i]));
    out.patches.push_back(down.members[i]);
    out.positions.push_back(out.splats.back().mean);
  }
  if (out.splats.empty()) {
    throw std::runtime_error("no usable superpoints after encoding");
  }
  return out;
}

/// Denser featureless splat level used only for rendering: one splat per
/// render voxel with the local color, so the photometric loss sees the
/// surface patterns the superpoint level averages away.
inline std::vector<GaussianSplat> encode_render_splats(
    const ColoredPointCloud& cloud, double voxel, double lambda_normal,
    bool use_color, int k = 10) {
  if (cloud.empty()) throw std::invalid_argument("empty point cloud");
  const auto down = voxel_downsample_with_members(cloud, voxel);
  const NeighborIndex dense(cloud.positions);
  const int n = static_cast<int>(down.cloud.size());
  std::vector<std::optional<GaussianSplat>> built(n);
  parallel_for(n, [&](int i) {
    const Vec3 center = down.cloud.positions[i];
    const auto idxs = dense.knn(center, k);
    std::vector<Vec3> neighborhood;
    neighborhood.reserve(idxs.size());
    for (int j : idxs) neighborhood.push_back(cloud.positions[j]);
    try {
      GaussianSplat splat =
          build_splat(center, neighborhood, lambda_normal, VecX());
      splat.colored = use_color && down.cloud.color_mask[i];
      splat.rgb = splat.colored ? down.cloud.colors[i] : Vec3::Constant(0.5);
      built[i] = std::move(splat);
    } catch (const std::invalid_argument&) {
    }
  });
  std::vector<GaussianSplat> out;
  for (int i = 0; i < n; ++i) {
    if (built[i]) out.push_back(std::move(*built[i]));
  }
  if (out.empty()) throw std::runtime_error("no usable render splats");
  return out;
}

struct SuperpointMatch {
  int source = 0;
  int target = 0;
  double confidence = 0.0;
};

struct RegistrationReport {
  RigidTransform pose;
  bool converged = false;
  CoarseResult coarse;
  FineResult fine;
  double total_loss = std::numeric_limits<double>::infinity();
  int candidates_tried = 0;
  double model_seconds = 0.0;
  double pose_seconds = 0.0;
  double total_seconds = 0.0;
  SuperpointData source_superpoints;
  SuperpointData target_superpoints;
  std::vector<SuperpointMatch> matches;

  nlohmann::json to_json(bool include_matches = true) const {
    nlohmann::json j;
    nlohmann::json pose_flat = nlohmann::json::array();
    const Mat4 m = pose.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pose_flat.push_back(m(r, c));
    j["pose"] = pose_flat;
    j["converged"] = converged;
    j["coarse"] = coarse.to_json();
    j["fine"] = fine.to_json();
    j["total_loss"] = total_loss;
    j["candidates_tried"] = candidates_tried;
    j["timing"] = {{"model", model_seconds},
                   {"pose", pose_seconds},
                   {"total", total_seconds}};
    if (include_matches) {
      auto points = [](const std::vector<Vec3>& ps) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : ps) arr.push_back({p.x(), p.y(), p.z()});
        return arr;
      };
      nlohmann::json pairs = nlohmann::json::array();
      for (const auto& mt : matches) {
        pairs.push_back({mt.source, mt.target, mt.confidence});
      }
      j["matches"] = {{"source_superpoints", points(source_superpoints.positions)},
                      {"target_superpoints", points(target_superpoints.positions)},
                      {"pairs", pairs},
                      {"source_patches", source_superpoints.patches},
                      {"target_patches", target_superpoints.patches}};
    }
    return j;
  }
};

namespace detail {

inline std::vector<RigidTransform> initial_poses(const SuperpointData& src,
                                                 const SuperpointData& tgt,
                                                 const RunConfig& cfg) {
  std::vector<RigidTransform> inits{RigidTransform::identity()};
  auto moments = [](const std::vector<Vec3>& pts) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : pts) c += p;
    c /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) {
      const Vec3 d = p - c;
      cov += d * d.transpose();
    }
    return std::make_pair(c, Mat3((cov / pts.size()).eval()));
  };
  const auto [cs, cov_s] = moments(src.positions);
  const auto [ct, cov_t] = moments(tgt.positions);

  if (cfg.pca_inits) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov_s), et(cov_t);
    Mat3 qs = es.eigenvectors(), qt = et.eigenvectors();
    if (qs.determinant() < 0) qs.col(0) = -qs.col(0);
    if (qt.determinant() < 0) qt.col(0) = -qt.col(0);
    const Vec3 signs[4] = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1),
                           Vec3(-1, -1, 1)};
    for (const Vec3& s : signs) {
      const Mat3 r = qt * s.asDiagonal() * qs.transpose();
      inits.push_back({r, ct - r * cs});
    }
  }
  SeededRng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  for (int i = 0; i < cfg.random_restarts; ++i) {
    const Mat3 r = rng.rotation(rng.uniform(0.0, kPi / 4.0));
    inits.push_back({r, ct - r * cs});
  }
  return inits;
}

inline bool near_duplicate(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(Mat3(a.R.transpose() * b.R)) < 1e-2 &&
         (a.t - b.t).norm() < 5e-2;
}

}  // namespace detail

/// Multi-start coarse registration over the superpoint level, candidate
/// ranking and fine refinement over the render level, selection by the final
/// joint loss. The geometric term stays frozen to each candidate's final
/// association, per the fine-stage contract.
inline RegistrationReport register_encoded(
    const SuperpointData& src, const SuperpointData& tgt,
    const std::vector<GaussianSplat>& render_src,
    const std::vector<GaussianSplat>& render_tgt, const RunConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  FineConfig fine_cfg;
  fine_cfg.gamma_d = cfg.gamma_d;
  fine_cfg.lambda_p = cfg.lambda_p;
  fine_cfg.step_size = cfg.step_size;
  fine_cfg.max_steps = cfg.fine_max_steps;
  fine_cfg.backtrack = cfg.backtrack;
  std::vector<Vec3> render_tgt_means;
  render_tgt_means.reserve(render_tgt.size());
  for (const auto& s : render_tgt) render_tgt_means.push_back(s.mean);
  fine_cfg.cameras = default_cameras(render_tgt_means, cfg.camera_count,
                                     cfg.camera_resolution);

  const PhotometricContext photo_ctx =
      make_photometric_context(render_tgt, fine_cfg);
  auto photo_or_inf = [&](const RigidTransform& pose) {
    try {
      return photometric_loss(photo_ctx, render_src, pose).loss;
    } catch (const std::runtime_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  struct Candidate {
    CoarseResult coarse;
    double score = std::numeric_limits<double>::infinity();
  };
  const auto inits = detail::initial_poses(src, tgt, cfg);
  std::vector<Candidate> candidates(inits.size());
  parallel_for(static_cast<int>(inits.size()), [&](int i) {
    candidates[i].coarse =
        coarse_register(src.splats, tgt.splats, cfg.coarse, inits[i]);
  });
  for (auto& cand : candidates) {
    const double geo =
        mahalanobis_objective(src.splats, tgt.splats, cand.coarse.a_final,
                              cand.coarse.transform);
    cand.score = geo + cfg.lambda_p * photo_or_inf(cand.coarse.transform);
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.score < b.score;
            });
  // Drop basins already represented by a better-scoring candidate.
  std::vector<Candidate> distinct;
  for (auto& cand : candidates) {
    bool dup = false;
    for (const auto& kept : distinct) {
      if (detail::near_duplicate(cand.coarse.transform, kept.coarse.transform)) {
        dup = true;
        break;
      }
    }
    if (!dup) distinct.push_back(std::move(cand));
  }

  RegistrationReport report;
  report.candidates_tried = static_cast<int>(distinct.size());
  const int refine = std::min<int>(cfg.fine_candidates,
                                   static_cast<int>(distinct.size()));
  for (int i = 0; i < refine; ++i) {
    const Candidate& cand = distinct[i];
    const FrozenGeometricLoss frozen =
        make_frozen_geometric_loss(src.splats, tgt.splats, cand.coarse.a_final);
    GeometricLossFn geo_fn = [&frozen](const RigidTransform& pose, Vec6* grad) {
      if (grad) *grad = frozen.gradient(pose);
      return frozen.loss(pose);
    };
    FineResult fine;
    try {
      fine = fine_register(render_tgt, render_src, cand.coarse.transform,
                           fine_cfg, geo_fn);
    } catch (const std::runtime_error&) {
      continue;  // candidate with no photometric overlap
    }
    const double loss =
        frozen.loss(fine.transform) + cfg.lambda_p * photo_or_inf(fine.transform);
    if (loss < report.total_loss) {
      report.total_loss = loss;
      report.pose = fine.transform;
      report.converged = fine.converged || cand.coarse.converged;
      report.coarse = cand.coarse;
      report.fine = std::move(fine);
    }
  }
  if (!std::isfinite(report.total_loss)) {
    throw std::runtime_error("registration failed: no refinable candidate");
  }

  // Superpoint matches from the winning association matrix.
  const CorrespondenceMatrix& a = report.coarse.a_final;
  for (int i = 0; i < a.rows(); ++i) {
    int best_j = 0;
    const double conf = a.row(i).maxCoeff(&best_j);
    if (conf >= cfg.match_confidence) {
      report.matches.push_back({i, best_j, conf});
    }
  }
  report.pose_seconds =
      std::chrono::duration<double>(clock::now() - t_start).count();
  return report;
}

/// Full pipeline entry point mirroring the command-line register flow:
/// encode both levels, run the multi-start coarse+fine search, and report
/// pose, traces, matches, and the model/pose timing split.
inline RegistrationReport register_clouds(const ColoredPointCloud& source,
                                          const ColoredPointCloud& target,
                                          const RunConfig& cfg) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto encoder = ColorEncoderParams::seeded(cfg.seed, cfg.encoder_dim);
  SuperpointData src_sp = encode_superpoints(source, cfg, encoder);
  SuperpointData tgt_sp = encode_superpoints(target, cfg, encoder);
  const double render_voxel = cfg.render_voxel > 0.0
                                  ? cfg.render_voxel
                                  : std::max(src_sp.voxel, tgt_sp.voxel) / 4.0;
  const auto render_src = encode_render_splats(
      source, render_voxel, cfg.lambda_normal, cfg.use_color);
  const auto render_tgt = encode_render_splats(
      target, render_voxel, cfg.lambda_normal, cfg.use_color);
  const auto t1 = clock::now();

  RegistrationReport report =
      register_encoded(src_sp, tgt_sp, render_src, render_tgt, cfg);
  report.model_seconds = std::chrono::duration<double>(t1 - t0).count();
  report.total_seconds =
      std::chrono::duration<double>(clock::now() - t0).count();
  report.source_superpoints = std::move(src_sp);
  report.target_superpoints = std::move(tgt_sp);
  return report;
}

// -- RunConfig serialization --------------------------------------------------

inline nlohmann::json RunConfig::to_json() const {
  return {{"voxel_size", voxel_size},
          {"render_voxel", render_voxel},
          {"neighborhood_k", neighborhood_k},
          {"lambda_normal", lambda_normal},
          {"top_k", top_k},
          {"encoder_dim", encoder_dim},
          {"gate_omega", gate_omega},
          {"color_space", to_string(color_space)},
          {"use_color", use_color},
          {"lambda_d", coarse.lambda_d},
          {"gamma", coarse.gamma},
          {"coarse_max_iters", coarse.max_iters},
          {"tol_rot", coarse.tol_rot},
          {"tol_trans", coarse.tol_trans},
          {"gamma_d", gamma_d},
          {"lambda_p", lambda_p},
          {"step_size", step_size},
          {"fine_max_steps", fine_max_steps},
          {"backtrack", backtrack},
          {"camera_count", camera_count},
          {"camera_resolution", camera_resolution},
          {"sigma_gs", sigma_gs},
          {"sigma_d", sigma_d},
          {"sigma_a", sigma_a},
          {"lambda_g", lambda_g},
          {"d_t", d_t},
          {"random_restarts", random_restarts},
          {"pca_inits", pca_inits},
          {"fine_candidates", fine_candidates},
          {"match_confidence", match_confidence},
          {"seed", seed}};
}

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("voxel_size", cfg.voxel_size);
  get("render_voxel", cfg.render_voxel);
  get("neighborhood_k", cfg.neighborhood_k);
  get("lambda_normal", cfg.lambda_normal);
  get("top_k", cfg.top_k);
  get("encoder_dim", cfg.encoder_dim);
  get("gate_omega", cfg.gate_omega);
  if (j.contains("color_space")) {
    cfg.color_space = color_space_from_string(j.at("color_space"));
  }
  get("use_color", cfg.use_color);
  get("lambda_d", cfg.coarse.lambda_d);
  get("gamma", cfg.coarse.gamma);
  get("coarse_max_iters", cfg.coarse.max_iters);
  get("tol_rot", cfg.coarse.tol_rot);
  get("tol_trans", cfg.coarse.tol_trans);
  get("gamma_d", cfg.gamma_d);
  get("lambda_p", cfg.lambda_p);
  get("step_size", cfg.step_size);
  get("fine_max_steps", cfg.fine_max_steps);
  get("backtrack", cfg.backtrack);
  get("camera_count", cfg.camera_count);
  get("camera_resolution", cfg.camera_resolution);
  get("sigma_gs", cfg.sigma_gs);
  get("sigma_d", cfg.sigma_d);
  get("sigma_a", cfg.sigma_a);
  get("lambda_g", cfg.lambda_g);
  get("d_t", cfg.d_t);
  get("random_restarts", cfg.random_restarts);
  get("pca_inits", cfg.pca_inits);
  get("fine_candidates", cfg.fine_candidates);
  get("match_confidence", cfg.match_confidence);
  get("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace gsalign
