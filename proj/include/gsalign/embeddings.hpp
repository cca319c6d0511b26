// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Structure-aware pair embeddings (Gaussian, color-distance, angle) and the
// geometry-biased self-attention over them. Everything here is a
// deterministic forward computation with seeded projection matrices; the
// embeddings depend only on distances, covariance gaps, hues, and angles, so
// they are invariant under a common rigid motion of both inputs.

#pragma once

#include "gsalign/core.hpp"
#include "gsalign/random.hpp"
#include "gsalign/splats.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gsalign {

/// Sine position embedding: PE(x)[2i] = sin(x / 10000^(2i/d)),
/// PE(x)[2i+1] = cos(x / 10000^(2i/d)). PE(0) is the alternating 0/1 pattern.
struct SinusoidalPE {
  int dim;

  explicit SinusoidalPE(int d) : dim(d) {
    if (d < 2 || d % 2 != 0) {
      throw std::invalid_argument("PE dimension must be even and >= 2");
    }
  }

  VecX operator()(double x) const {
    VecX pe(dim);
    for (int i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, 2.0 * i / dim);
      pe[2 * i] = std::sin(x / freq);
      pe[2 * i + 1] = std::cos(x / freq);
    }
    return pe;
  }
};

struct EmbeddingParams {
  int d_t = 16;
  MatX w_gs, w_hd, w_a, w_q, w_k, w_v;  // d_t x d_t projections
  double sigma_gs = 0.05;               // in [0.01, 0.1]
  double sigma_d = 1.0;
  double sigma_a = 1.0;
  double lambda_g = 0.1;                // in [0.01, 1]
  std::uint64_t seed = 0;

  static EmbeddingParams seeded(std::uint64_t seed, int d_t,
                                double sigma_gs = 0.05, double sigma_d = 1.0,
                                double sigma_a = 1.0, double lambda_g = 0.1) {
    EmbeddingParams p;
    p.d_t = d_t;
    p.sigma_gs = sigma_gs;
    p.sigma_d = sigma_d;
    p.sigma_a = sigma_a;
    p.lambda_g = lambda_g;
    p.seed = seed;
    p.validate();
    SeededRng rng(seed);
    p.w_gs = seeded_weight_matrix(rng, d_t, d_t);
    p.w_hd = seeded_weight_matrix(rng, d_t, d_t);
    p.w_a = seeded_weight_matrix(rng, d_t, d_t);
    p.w_q = seeded_weight_matrix(rng, d_t, d_t);
    p.w_k = seeded_weight_matrix(rng, d_t, d_t);
    p.w_v = seeded_weight_matrix(rng, d_t, d_t);
    return p;
  }

  void validate() const {
    if (d_t < 2 || d_t % 2 != 0) {
      throw std::invalid_argument("embedding dimension d_t must be even");
    }
    if (sigma_gs < 0.01 || sigma_gs > 0.1) {
      throw std::invalid_argument("sigma_gs outside permitted range [0.01, 0.1]");
    }
    if (!(sigma_d > 0.0)) throw std::invalid_argument("sigma_d must be > 0");
    if (!(sigma_a > 0.0)) throw std::invalid_argument("sigma_a must be > 0");
    if (lambda_g < 0.01 || lambda_g > 1.0) {
      throw std::invalid_argument("lambda_g outside permitted range [0.01, 1]");
    }
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},       {"d_t", d_t},
            {"sigma_gs", sigma_gs}, {"sigma_d", sigma_d},
            {"sigma_a", sigma_a}, {"lambda_g", lambda_g}};
  }

  static EmbeddingParams from_json(const nlohmann::json& j) {
    return seeded(j.at("seed").get<std::uint64_t>(), j.at("d_t").get<int>(),
                  j.at("sigma_gs").get<double>(), j.at("sigma_d").get<double>(),
                  j.at("sigma_a").get<double>(), j.at("lambda_g").get<double>());
  }
};

/// PE((2 * |Sigma_i - Sigma_j|_F * |mu_i - mu_j|) / sigma_GS) * W_GS.
inline VecX gaussian_embedding(const GaussianSplat& gi, const GaussianSplat& gj,
                               const EmbeddingParams& p) {
  const double delta_mu = (gi.mean - gj.mean).norm();
  const double delta_sigma = (gi.covariance - gj.covariance).norm();
  const double arg = (delta_sigma + delta_sigma) * delta_mu / p.sigma_gs;
  return p.w_gs.transpose() * SinusoidalPE(p.d_t)(arg);
}

/// PE(|h_i - h_j| * |p_i - p_j| / sigma_d) * W_HD. The hue vectors are the
/// color-space coordinates of the two points; their difference is Euclidean.
inline VecX color_distance_embedding(const Vec3& pi, const Vec3& hue_i,
                                     const Vec3& pj, const Vec3& hue_j,
                                     const EmbeddingParams& p) {
  const double d = (pi - pj).norm() / p.sigma_d;
  const double delta_h = (hue_i - hue_j).norm();
  return p.w_hd.transpose() * SinusoidalPE(p.d_t)(delta_h * d);
}

/// Component-wise max over k of PE(theta_k / sigma_a) * W_a with
/// theta_k = atan2(|v_i x v_j|, v_i . v_j), v = p - p_k. Triplets where
/// either vector degenerates are skipped; all-degenerate input throws.
inline VecX angle_embedding(const Vec3& pi, const Vec3& pj,
                            const std::vector<Vec3>& anchors,
                            const EmbeddingParams& p) {
  const SinusoidalPE pe(p.d_t);
  VecX best;
  bool any = false;
  for (const Vec3& pk : anchors) {
    const Vec3 vi = pi - pk;
    const Vec3 vj = pj - pk;
    if (vi.norm() <= 1e-12 || vj.norm() <= 1e-12) continue;
    const double theta = std::atan2(vi.cross(vj).norm(), vi.dot(vj));
    const VecX e = p.w_a.transpose() * pe(theta / p.sigma_a);
    if (!any) {
      best = e;
      any = true;
    } else {
      best = best.cwiseMax(e);
    }
  }
  if (!any) throw std::invalid_argument("degenerate angle triplet");
  return best;
}

/// The embeddings attached to one superpoint pair. The combined embedding is
/// the sum of the three components; the geometric bias term combines the
/// color-distance and angle embeddings.
struct PairEmbedding {
  VecX e_gs;
  VecX e_hd;
  VecX ang;
  VecX e_gse;  // e_gs + e_hd + ang
  VecX e_geo;  // e_hd + ang

  static PairEmbedding combine(VecX gs, VecX hd, VecX angle) {
    PairEmbedding pe;
    pe.e_gse = gs + hd + angle;
    pe.e_geo = hd + angle;
    pe.e_gs = std::move(gs);
    pe.e_hd = std::move(hd);
    pe.ang = std::move(angle);
    return pe;
  }
};

struct AttentionResult {
  MatX attended;  // one row per element
  MatX weights;   // row-stochastic attention matrix
};

/// Self-attention over a set of pair embeddings:
///   a_ij = softmax_j(Q_i . K_j / sqrt(d_t) + lambda_g log(1 + geo_j)) V_j,
/// where geo_j is the attended element's E_geo reduced to a scalar by the
/// mean of its components, clamped at zero before the log.
inline AttentionResult gs_self_attention(const std::vector<PairEmbedding>& items,
                                         const EmbeddingParams& p) {
  if (items.empty()) throw std::invalid_argument("attention over empty set");
  const int m = static_cast<int>(items.size());
  MatX q(m, p.d_t), k(m, p.d_t), v(m, p.d_t);
  VecX geo_bias(m);
  for (int i = 0; i < m; ++i) {
    if (items[i].e_gse.size() != p.d_t) {
      throw std::invalid_argument("embedding dimension does not match params");
    }
    q.row(i) = (p.w_q.transpose() * items[i].e_gse).transpose();
    k.row(i) = (p.w_k.transpose() * items[i].e_gse).transpose();
    v.row(i) = (p.w_v.transpose() * items[i].e_gse).transpose();
    geo_bias[i] =
        p.lambda_g * std::log(1.0 + std::max(0.0, items[i].e_geo.mean()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.d_t));
  AttentionResult out;
  out.weights = MatX(m, m);
  for (int i = 0; i < m; ++i) {
    VecX logits = scale * (k * q.row(i).transpose()) + geo_bias;
    const double mx = logits.maxCoeff();
    VecX w = (logits.array() - mx).exp();
    out.weights.row(i) = (w / w.sum()).transpose();
  }
  out.attended = out.weights * v;
  return out;
}

}  // namespace gsalign
