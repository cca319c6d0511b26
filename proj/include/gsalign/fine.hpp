// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Photometric fine registration: distance-weighted photometric loss over the
// rendered overlap, its analytic SE(3) gradient under the left-perturbation
// model, the frozen-association geometric loss, and monotone gradient descent
// with a backtracking line search.

#pragma once

#include "gsalign/coarse.hpp"
#include "gsalign/core.hpp"
#include "gsalign/neighbors.hpp"
#include "gsalign/render.hpp"
#include "gsalign/splats.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gsalign {

struct FineConfig {
  double gamma_d = 1.5;     // in [1, 3]
  double lambda_p = 0.5;    // in [0.1, 1]
  double step_size = 0.1;
  int max_steps = 100;
  double backtrack = 0.5;   // in (0, 1)
  std::vector<VirtualCamera> cameras;

  void validate() const {
    if (gamma_d < 1.0 || gamma_d > 3.0) {
      throw std::invalid_argument("gamma_d outside permitted range [1, 3]");
    }
    if (lambda_p < 0.1 || lambda_p > 1.0) {
      throw std::invalid_argument("lambda_p outside permitted range [0.1, 1]");
    }
    if (!(step_size > 0.0)) throw std::invalid_argument("step size must be > 0");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (!(backtrack > 0.0) || !(backtrack < 1.0)) {
      throw std::invalid_argument("backtracking factor must lie in (0, 1)");
    }
    if (cameras.empty()) throw std::invalid_argument("at least one camera");
    for (const auto& c : cameras) c.validate();
  }
};

/// Target-side state reused across loss and gradient evaluations: the target
/// renders are fixed, as is the index over target means used for the
/// per-pixel distance weights.
struct PhotometricContext {
  std::vector<VirtualCamera> cameras;
  std::vector<RenderedImage> target_views;
  NeighborIndex target_means;
  double gamma_d = 1.5;
};

inline PhotometricContext make_photometric_context(
    const std::vector<GaussianSplat>& target, const FineConfig& cfg) {
  cfg.validate();
  PhotometricContext ctx;
  ctx.cameras = cfg.cameras;
  ctx.gamma_d = cfg.gamma_d;
  std::vector<Vec3> means;
  means.reserve(target.size());
  for (const auto& s : target) means.push_back(s.mean);
  ctx.target_means = NeighborIndex(means);
  for (const auto& cam : ctx.cameras) {
    ctx.target_views.push_back(
        render_splats(target, cam, RigidTransform::identity()));
  }
  return ctx;
}

/// Per-camera, per-pixel weights omega_i = exp(-gamma_d * d_i), where d_i is
/// the distance from the pixel's back-projected source surface point to the
/// nearest target splat mean. Zero where the source render has no coverage.
using PixelWeights = std::vector<std::vector<double>>;

struct PhotometricEval {
  double loss = 0.0;
  double overlap = 0.0;  // sum of opacity products over all cameras
  PixelWeights weights;
  std::vector<RenderedImage> source_views;
};

namespace detail {

inline double camera_loss(const RenderedImage& target_view,
                          const RenderedImage& source_view,
                          const std::vector<double>& weights) {
  double loss = 0.0;
  const std::size_t n = target_view.color.size();
  for (std::size_t p = 0; p < n; ++p) {
    const double mass = target_view.alpha[p] * source_view.alpha[p];
    if (mass <= 0.0) continue;
    loss += weights[p] * mass * (target_view.color[p] - source_view.color[p])
                                    .squaredNorm();
  }
  return loss;
}

}  // namespace detail

/// Weighted photometric loss: for each camera, per-pixel squared color
/// difference between the fixed target render and the source rendered at the
/// current pose, weighted by omega_i and by the pair of accumulated
/// opacities (so the integrand vanishes continuously off the overlap), summed
/// over pixels and averaged over cameras. Throws when no camera sees any
/// overlap at all.
inline PhotometricEval photometric_loss(const PhotometricContext& ctx,
                                        const std::vector<GaussianSplat>& source,
                                        const RigidTransform& pose) {
  PhotometricEval eval;
  eval.weights.resize(ctx.cameras.size());
  double total = 0.0;
  for (std::size_t c = 0; c < ctx.cameras.size(); ++c) {
    const VirtualCamera& cam = ctx.cameras[c];
    RenderedImage view = render_splats(source, cam, pose);
    auto& w = eval.weights[c];
    w.assign(view.color.size(), 0.0);
    const RigidTransform cam_to_world = cam.pose.inverse();
    for (int y = 0; y < view.height; ++y) {
      for (int x = 0; x < view.width; ++x) {
        const std::size_t p = view.idx(x, y);
        if (view.alpha[p] <= 0.0) continue;
        const Vec3 surface = cam_to_world.apply(
            cam.back_project(x + 0.5, y + 0.5, view.depth[p]));
        const double d = ctx.target_means.nearest_distance(surface);
        w[p] = std::exp(-ctx.gamma_d * d);
        eval.overlap += ctx.target_views[c].alpha[p] * view.alpha[p];
      }
    }
    total += detail::camera_loss(ctx.target_views[c], view, w);
    eval.source_views.push_back(std::move(view));
  }
  if (eval.overlap <= 0.0) throw std::runtime_error("no photometric overlap");
  eval.loss = total / static_cast<double>(ctx.cameras.size());
  return eval;
}

/// The objective the analytic gradient differentiates: pixel weights and 2D
/// splat shapes frozen at the base pose, centers displaced by the left
/// perturbation exp(delta^). At delta = 0 this equals the weighted loss with
/// the given weights. Serves as the finite-difference oracle's target.
inline double photometric_loss_frozen(
    const PhotometricContext& ctx,
    const std::vector<SplatProjection>& base_projections,
    const PixelWeights& weights, const Twist& delta) {
  const RigidTransform d = se3_exp(delta);
  double total = 0.0;
  for (std::size_t c = 0; c < ctx.cameras.size(); ++c) {
    const VirtualCamera& cam = ctx.cameras[c];
    const SplatProjection moved = reproject_centers(base_projections[c], cam, d);
    const RenderedImage view = rasterize(moved, cam.width, cam.height);
    total += detail::camera_loss(ctx.target_views[c], view, weights[c]);
  }
  return total / static_cast<double>(ctx.cameras.size());
}

/// Analytic gradient of the frozen-weight photometric objective with respect
/// to the left-perturbation twist (omega, v) at the current pose. Splat
/// centers are the differentiable carriers; 2D shapes, depth order, and
/// weights are held fixed for the step.
inline Vec6 se3_photometric_gradient(const PhotometricContext& ctx,
                                     const std::vector<GaussianSplat>& source,
                                     const RigidTransform& pose,
                                     std::vector<SplatProjection>* projections_out = nullptr,
                                     PixelWeights* weights_out = nullptr) {
  Vec6 grad = Vec6::Zero();
  std::vector<SplatProjection> projections;
  PhotometricEval eval = photometric_loss(ctx, source, pose);
  for (std::size_t c = 0; c < ctx.cameras.size(); ++c) {
    const VirtualCamera& cam = ctx.cameras[c];
    SplatProjection proj = project_splats(source, cam, pose);
    const RenderedImage& view = eval.source_views[c];
    const RenderedImage& target_view = ctx.target_views[c];

    const std::size_t n_pix = view.color.size();
    std::vector<Vec3> dl_dcolor(n_pix, Vec3::Zero());
    std::vector<double> dl_dalpha(n_pix, 0.0);
    for (std::size_t p = 0; p < n_pix; ++p) {
      const double m = eval.weights[c][p] * target_view.alpha[p];
      if (m <= 0.0) continue;
      const Vec3 residual = view.color[p] - target_view.color[p];
      dl_dcolor[p] = 2.0 * m * view.alpha[p] * residual;
      dl_dalpha[p] = m * residual.squaredNorm();
    }
    const auto grad_center = rasterize_backward(
        proj, cam.width, cam.height, dl_dcolor, dl_dalpha, source.size());

    for (const auto& ps : proj.splats) {
      const Vec2& gc = grad_center[ps.index];
      if (gc.isZero(0.0)) continue;
      const Vec3 g_mu_cam = ps.jproj.transpose() * gc;
      const Vec3 g_mu_world = cam.pose.R.transpose() * g_mu_cam;
      grad.head<3>() += ps.mu_world.cross(g_mu_world);
      grad.tail<3>() += g_mu_world;
    }
    projections.push_back(std::move(proj));
  }
  grad /= static_cast<double>(ctx.cameras.size());
  if (projections_out) *projections_out = std::move(projections);
  if (weights_out) *weights_out = std::move(eval.weights);
  return grad;
}

// -- geometric loss with a frozen association --------------------------------

/// Precomputed quadratic form of the Eq.-style Mahalanobis objective for a
/// fixed association: L(pose) = sum_i y_i^T B_i y_i - 2 y_i . c_i + d with
/// y_i = pose(mu_i).
struct FrozenGeometricLoss {
  std::vector<Vec3> source_means;
  std::vector<Mat3> b;
  std::vector<Vec3> c;
  double d = 0.0;

  double loss(const RigidTransform& pose) const {
    double total = 0.0;
    for (std::size_t i = 0; i < source_means.size(); ++i) {
      const Vec3 y = pose.apply(source_means[i]);
      total += y.dot(b[i] * y) - 2.0 * y.dot(c[i]);
    }
    return total + d;
  }

  Vec6 gradient(const RigidTransform& pose) const {
    Vec6 g = Vec6::Zero();
    for (std::size_t i = 0; i < source_means.size(); ++i) {
      const Vec3 y = pose.apply(source_means[i]);
      const Vec3 gy = 2.0 * (b[i] * y - c[i]);
      g.head<3>() += y.cross(gy);
      g.tail<3>() += gy;
    }
    return g;
  }
};

inline FrozenGeometricLoss make_frozen_geometric_loss(
    const std::vector<GaussianSplat>& source,
    const std::vector<GaussianSplat>& target, const CorrespondenceMatrix& a) {
  const auto inv = detail::inverse_target_covariances(target);
  FrozenGeometricLoss f;
  const int n = static_cast<int>(source.size());
  const int m = static_cast<int>(target.size());
  f.source_means.reserve(n);
  f.b.assign(n, Mat3::Zero());
  f.c.assign(n, Vec3::Zero());
  for (int i = 0; i < n; ++i) f.source_means.push_back(source[i].mean);
  for (int j = 0; j < m; ++j) {
    const Vec3& q = target[j].mean;
    const Mat3& w = inv[j];
    const Vec3 wq = w * q;
    const double qwq = q.dot(wq);
    for (int i = 0; i < n; ++i) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      f.b[i] += aij * w;
      f.c[i] += aij * wq;
      f.d += aij * qwq;
    }
  }
  return f;
}

/// The coarse stage's Mahalanobis objective at the current pose with the
/// final association frozen; used as L_geo in the joint loss.
inline double geometric_loss(const std::vector<GaussianSplat>& source,
                             const std::vector<GaussianSplat>& target,
                             const CorrespondenceMatrix& a,
                             const RigidTransform& pose) {
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("geometric loss over empty splat set");
  }
  return mahalanobis_objective(source, target, a, pose);
}

struct FineResult {
  RigidTransform transform;
  std::vector<double> loss_trace;
  int steps = 0;
  bool converged = false;

  nlohmann::json to_json() const {
    nlohmann::json pose = nlohmann::json::array();
    const Mat4 m = transform.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pose.push_back(m(r, c));
    return {{"pose", pose},
            {"steps", steps},
            {"converged", converged},
            {"loss_trace", loss_trace}};
  }
};

/// Geometric term callback: returns the loss at the pose and, if grad is not
/// null, writes the left-perturbation gradient.
using GeometricLossFn = std::function<double(const RigidTransform&, Vec6*)>;

/// Riemannian gradient descent on L_total = L_geo + lambda_p * L_photo with a
/// backtracking line search, so the recorded loss trace is non-increasing.
/// Exhausted backtracking returns the best pose found with converged = false.
inline FineResult fine_register(const std::vector<GaussianSplat>& target,
                                const std::vector<GaussianSplat>& source,
                                const RigidTransform& init,
                                const FineConfig& cfg,
                                const GeometricLossFn& geo) {
  cfg.validate();
  const PhotometricContext ctx = make_photometric_context(target, cfg);

  auto total_loss = [&](const RigidTransform& pose) {
    return geo(pose, nullptr) +
           cfg.lambda_p * photometric_loss(ctx, source, pose).loss;
  };
  // Line-search trials that step outside every camera count as rejected.
  auto trial_loss = [&](const RigidTransform& pose) {
    try {
      return total_loss(pose);
    } catch (const std::runtime_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  FineResult result;
  result.transform = init;
  double current = total_loss(init);
  result.loss_trace.push_back(current);

  // Each step resumes near the previously accepted step size instead of
  // re-walking the whole backtracking ladder.
  double eta_start = cfg.step_size;
  for (int step = 0; step < cfg.max_steps; ++step) {
    Vec6 g_geo = Vec6::Zero();
    geo(result.transform, &g_geo);
    const Vec6 g_photo =
        se3_photometric_gradient(ctx, source, result.transform);
    const Vec6 g = g_geo + cfg.lambda_p * g_photo;
    if (g.norm() < 1e-8) {
      result.converged = true;
      break;
    }
    double eta = eta_start;
    bool accepted = false;
    while (eta >= 1e-12) {
      const RigidTransform candidate =
          se3_exp(Twist::from_vector(-eta * g)) * result.transform;
      const double candidate_loss = trial_loss(candidate);
      if (candidate_loss <= current) {
        result.transform = candidate;
        current = candidate_loss;
        result.loss_trace.push_back(current);
        result.steps = step + 1;
        accepted = true;
        eta_start = std::min(cfg.step_size, eta / cfg.backtrack);
        break;
      }
      eta *= cfg.backtrack;
    }
    if (!accepted) {
      result.converged = false;
      return result;
    }
  }
  return result;
}

}  // namespace gsalign
