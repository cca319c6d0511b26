// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0

#include "gsalign/embeddings.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace gsalign {
namespace {

using testing::random_transform;

// Direct sinusoid evaluation used as the oracle for every PE-based check.
VecX pe_oracle(double x, int dim) {
  VecX out(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / dim);
    out[2 * i] = std::sin(x / freq);
    out[2 * i + 1] = std::cos(x / freq);
  }
  return out;
}

GaussianSplat splat_at(const Vec3& mean, const Mat3& cov) {
  GaussianSplat s;
  s.mean = mean;
  s.covariance = cov;
  return s;
}

TEST(SinusoidalPE, ZeroGivesAlternatingPattern) {
  const SinusoidalPE pe(8);
  const VecX v = pe(0.0);
  for (int i = 0; i < 8; i += 2) {
    EXPECT_DOUBLE_EQ(v[i], 0.0);
    EXPECT_DOUBLE_EQ(v[i + 1], 1.0);
  }
}

TEST(SinusoidalPE, ComponentsBoundedAndMatchOracle) {
  const SinusoidalPE pe(16);
  for (double x : {0.1, 1.0, 7.5, 20.0, -3.0}) {
    const VecX v = pe(x);
    EXPECT_LE(v.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LE((v - pe_oracle(x, 16)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(SinusoidalPE, RejectsOddDimension) {
  EXPECT_THROW(SinusoidalPE(7), std::invalid_argument);
}

TEST(GaussianEmbedding, IdenticalSplatsGiveProjectedZeroPattern) {
  const auto params = EmbeddingParams::seeded(1, 8);
  const GaussianSplat g = splat_at(Vec3(1, 2, 3), 2.0 * Mat3::Identity());
  const VecX got = gaussian_embedding(g, g, params);
  const VecX want = params.w_gs.transpose() * pe_oracle(0.0, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GaussianEmbedding, MatchesScalarOracle) {
  auto params = EmbeddingParams::seeded(2, 8);
  params.sigma_gs = 0.05;
  // delta_mu = 1, delta_sigma = 0.5 -> argument (0.5 + 0.5) * 1 / 0.05 = 20.
  Mat3 cov_j = Mat3::Identity();
  cov_j(0, 0) += 0.5;
  const GaussianSplat gi = splat_at(Vec3::Zero(), Mat3::Identity());
  const GaussianSplat gj = splat_at(Vec3(1, 0, 0), cov_j);
  const VecX got = gaussian_embedding(gi, gj, params);
  const VecX want = params.w_gs.transpose() * pe_oracle(20.0, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GaussianEmbedding, InvariantUnderCommonRigidMotion) {
  SeededRng rng(3);
  const auto params = EmbeddingParams::seeded(4, 8);
  const GaussianSplat gi = splat_at(rng.normal3(), Mat3::Identity() * 0.5);
  Mat3 cj = Mat3::Identity();
  cj(1, 1) = 3.0;
  const GaussianSplat gj = splat_at(rng.normal3(), cj);
  const RigidTransform t = random_transform(rng);
  const VecX before = gaussian_embedding(gi, gj, params);
  const VecX after =
      gaussian_embedding(transform_splat(t, gi), transform_splat(t, gj), params);
  EXPECT_LE((before - after).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ColorDistanceEmbedding, IdenticalHuesCollapseToZeroArgument) {
  const auto params = EmbeddingParams::seeded(5, 8);
  const Vec3 hue(0.3, 0.5, 0.7);
  const VecX got = color_distance_embedding(Vec3(0, 0, 0), hue, Vec3(4, 0, 0),
                                            hue, params);
  const VecX want = params.w_hd.transpose() * pe_oracle(0.0, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ColorDistanceEmbedding, CoincidentPointsCollapseToZeroArgument) {
  const auto params = EmbeddingParams::seeded(6, 8);
  const VecX got = color_distance_embedding(Vec3(1, 1, 1), Vec3(0.1, 0, 0),
                                            Vec3(1, 1, 1), Vec3(0.9, 0, 0),
                                            params);
  const VecX want = params.w_hd.transpose() * pe_oracle(0.0, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ColorDistanceEmbedding, MatchesScalarOracle) {
  auto params = EmbeddingParams::seeded(7, 8);
  params.sigma_d = 1.0;
  // delta_h = 0.3, distance = 2 -> PE(0.6).
  const VecX got =
      color_distance_embedding(Vec3(0, 0, 0), Vec3(0.3, 0, 0), Vec3(2, 0, 0),
                               Vec3(0, 0, 0), params);
  const VecX want = params.w_hd.transpose() * pe_oracle(0.6, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AngleEmbedding, PerpendicularVectorsGiveRightAngle) {
  auto params = EmbeddingParams::seeded(8, 8);
  params.sigma_a = 1.0;
  const VecX got = angle_embedding(Vec3(1, 0, 0), Vec3(0, 1, 0),
                                   {Vec3(0, 0, 0)}, params);
  const VecX want = params.w_a.transpose() * pe_oracle(kPi / 2, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AngleEmbedding, ParallelVectorsGiveZeroAngle) {
  const auto params = EmbeddingParams::seeded(9, 8);
  const VecX got = angle_embedding(Vec3(1, 0, 0), Vec3(2, 0, 0),
                                   {Vec3(0, 0, 0)}, params);
  const VecX want = params.w_a.transpose() * pe_oracle(0.0, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AngleEmbedding, QuarterPiFromSharedAnchor) {
  auto params = EmbeddingParams::seeded(10, 8);
  params.sigma_a = 1.0;
  const VecX got = angle_embedding(Vec3(1, 0, 0), Vec3(1, 1, 0),
                                   {Vec3(0, 0, 0)}, params);
  const VecX want = params.w_a.transpose() * pe_oracle(kPi / 4, 8);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AngleEmbedding, MaxPoolsOverAnchors) {
  const auto params = EmbeddingParams::seeded(11, 8);
  const std::vector<Vec3> anchors{Vec3(0, 0, 0), Vec3(0, 0, 1)};
  const VecX pooled =
      angle_embedding(Vec3(1, 0, 0), Vec3(0, 1, 0), anchors, params);
  const VecX a = angle_embedding(Vec3(1, 0, 0), Vec3(0, 1, 0), {anchors[0]},
                                 params);
  const VecX b = angle_embedding(Vec3(1, 0, 0), Vec3(0, 1, 0), {anchors[1]},
                                 params);
  EXPECT_LE((pooled - a.cwiseMax(b)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AngleEmbedding, AllDegenerateTripletsThrow) {
  const auto params = EmbeddingParams::seeded(12, 8);
  EXPECT_THROW(
      angle_embedding(Vec3(1, 1, 1), Vec3(2, 2, 2), {Vec3(1, 1, 1)}, params),
      std::invalid_argument);
}

TEST(PairEmbeddings, InvariantUnderCommonRigidMotion) {
  SeededRng rng(13);
  const auto params = EmbeddingParams::seeded(14, 8);
  const Vec3 pi = rng.normal3(), pj = rng.normal3(), pk = rng.normal3();
  const Vec3 hue_i(0.2, 0.4, 0.8), hue_j(0.5, 0.1, 0.3);
  const RigidTransform t = random_transform(rng);
  const VecX hd_before =
      color_distance_embedding(pi, hue_i, pj, hue_j, params);
  const VecX hd_after = color_distance_embedding(t.apply(pi), hue_i,
                                                 t.apply(pj), hue_j, params);
  EXPECT_LE((hd_before - hd_after).cwiseAbs().maxCoeff(), 1e-9);
  const VecX ang_before = angle_embedding(pi, pj, {pk}, params);
  const VecX ang_after =
      angle_embedding(t.apply(pi), t.apply(pj), {t.apply(pk)}, params);
  EXPECT_LE((ang_before - ang_after).cwiseAbs().maxCoeff(), 1e-9);
}

PairEmbedding item_from(const VecX& gse, const VecX& geo) {
  PairEmbedding p;
  p.e_gse = gse;
  p.e_geo = geo;
  return p;
}

TEST(SelfAttention, SingleElementGetsFullWeight) {
  const auto params = EmbeddingParams::seeded(15, 8);
  const PairEmbedding item = item_from(VecX::Random(8), VecX::Zero(8));
  const auto result = gs_self_attention({item}, params);
  EXPECT_DOUBLE_EQ(result.weights(0, 0), 1.0);
  const VecX v1 = params.w_v.transpose() * item.e_gse;
  EXPECT_LE((result.attended.row(0).transpose() - v1).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(SelfAttention, EqualLogitsGiveUniformWeights) {
  const auto params = EmbeddingParams::seeded(16, 8);
  const PairEmbedding item = item_from(VecX::Ones(8), VecX::Zero(8));
  const auto result = gs_self_attention({item, item, item, item}, params);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(result.weights(i, j), 0.25, 1e-12);
  }
}

TEST(SelfAttention, TwoElementHandSoftmax) {
  // Hand-set projections: d_t = 2, identity Q/K/V, zero geometric bias.
  EmbeddingParams params = EmbeddingParams::seeded(17, 2);
  params.w_q = params.w_k = params.w_v = MatX::Identity(2, 2);
  params.lambda_g = 0.01;
  VecX e1(2), e2(2);
  e1 << 1.0, 0.0;
  e2 << 0.0, 1.0;
  const auto result = gs_self_attention(
      {item_from(e1, VecX::Zero(2)), item_from(e2, VecX::Zero(2))}, params);
  // Logits for query 1: (e1.e1, e1.e2)/sqrt(2) = (1, 0)/sqrt(2).
  const double s = 1.0 / std::sqrt(2.0);
  const double z0 = std::exp(s), z1 = std::exp(0.0);
  EXPECT_NEAR(result.weights(0, 0), z0 / (z0 + z1), 1e-12);
  EXPECT_NEAR(result.weights(0, 1), z1 / (z0 + z1), 1e-12);
  const VecX expected =
      result.weights(0, 0) * e1 + result.weights(0, 1) * e2;
  EXPECT_LE((result.attended.row(0).transpose() - expected).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(SelfAttention, WeightsAreRowStochastic) {
  SeededRng rng(18);
  const auto params = EmbeddingParams::seeded(19, 8);
  std::vector<PairEmbedding> items;
  for (int i = 0; i < 7; ++i) {
    items.push_back(item_from(VecX::Random(8), VecX::Random(8)));
  }
  const auto result = gs_self_attention(items, params);
  for (int i = 0; i < result.weights.rows(); ++i) {
    EXPECT_NEAR(result.weights.row(i).sum(), 1.0, 1e-9);
    EXPECT_GE(result.weights.row(i).minCoeff(), 0.0);
  }
}

TEST(SelfAttention, PermutationEquivariant) {
  const auto params = EmbeddingParams::seeded(20, 8);
  std::vector<PairEmbedding> items;
  for (int i = 0; i < 5; ++i) {
    items.push_back(item_from(VecX::Random(8), VecX::Random(8)));
  }
  const auto base = gs_self_attention(items, params);
  const std::vector<int> perm{3, 1, 4, 0, 2};
  std::vector<PairEmbedding> shuffled;
  for (int i : perm) shuffled.push_back(items[i]);
  const auto permuted = gs_self_attention(shuffled, params);
  for (int i = 0; i < 5; ++i) {
    EXPECT_LE((permuted.attended.row(i) - base.attended.row(perm[i]))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(EmbeddingParams, ValidationQuotesPaperRanges) {
  EXPECT_THROW(EmbeddingParams::seeded(0, 8, 0.5), std::invalid_argument);
  try {
    EmbeddingParams::seeded(0, 8, 0.5);
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[0.01, 0.1]"), std::string::npos);
  }
  EXPECT_THROW(EmbeddingParams::seeded(0, 8, 0.05, 1.0, 1.0, 2.0),
               std::invalid_argument);
}

TEST(EmbeddingParams, JsonRoundTripReproducesProjections) {
  const auto params = EmbeddingParams::seeded(21, 8, 0.03, 2.0, 0.5, 0.2);
  const auto restored = EmbeddingParams::from_json(params.to_json());
  EXPECT_EQ((params.w_gs - restored.w_gs).norm(), 0.0);
  EXPECT_EQ((params.w_v - restored.w_v).norm(), 0.0);
  EXPECT_DOUBLE_EQ(params.sigma_d, restored.sigma_d);
}

}  // namespace
}  // namespace gsalign
