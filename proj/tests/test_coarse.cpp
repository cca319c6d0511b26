// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0

#include "gsalign/coarse.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace gsalign {
namespace {

using testing::expect_near;
using testing::random_transform;

GaussianSplat splat_at(const Vec3& mean, const Mat3& cov = Mat3::Identity()) {
  GaussianSplat s;
  s.mean = mean;
  s.covariance = cov;
  return s;
}

// Splats drawn uniformly from a box: wide enough apart that the soft
// association concentrates on true counterparts.
std::vector<GaussianSplat> random_splats(int n, SeededRng& rng,
                                         double spread = 4.0,
                                         bool anisotropic = false) {
  std::vector<GaussianSplat> splats;
  for (int i = 0; i < n; ++i) {
    Mat3 cov = Mat3::Identity();
    if (anisotropic) {
      const Mat3 r = rng.rotation(rng.uniform(0.0, kPi));
      Vec3 evals(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0),
                 rng.uniform(0.5, 2.0));
      cov = r * evals.asDiagonal() * r.transpose();
    }
    const Vec3 p(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                 rng.uniform(-spread, spread));
    splats.push_back(splat_at(p, cov));
  }
  return splats;
}

TEST(GeneralizedDistance, IdenticalSplatsGiveZero) {
  const GaussianSplat s = splat_at(Vec3(1, 2, 3), 2.0 * Mat3::Identity());
  EXPECT_DOUBLE_EQ(generalized_distance(s, s, 0.1), 0.0);
}

TEST(GeneralizedDistance, PureMeanGapIgnoresLambda) {
  const GaussianSplat a = splat_at(Vec3::Zero());
  const GaussianSplat b = splat_at(Vec3(1, 0, 0));
  EXPECT_DOUBLE_EQ(generalized_distance(a, b, 0.05), 1.0);
  EXPECT_DOUBLE_EQ(generalized_distance(a, b, 0.2), 1.0);
}

TEST(GeneralizedDistance, HandComputedMixedGap) {
  const GaussianSplat a = splat_at(Vec3::Zero(), Mat3::Identity());
  const GaussianSplat b = splat_at(Vec3(1, 1, 0), 2.0 * Mat3::Identity());
  // |mu|^2 = 2; |I - 2I|_F = sqrt(3); lambda_d = 0.1.
  EXPECT_NEAR(generalized_distance(a, b, 0.1), 2.0 + 0.1 * std::sqrt(3.0),
              1e-12);
}

TEST(AssociationRow, SingleTargetGetsFullWeight) {
  const VecX row = association_row(VecX::Constant(1, 5.0), 2.0);
  EXPECT_DOUBLE_EQ(row[0], 1.0);
}

TEST(AssociationRow, EqualDistancesGiveUniformRow) {
  const VecX row = association_row(VecX::Constant(4, 3.0), 1.5);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(row[j], 0.25, 1e-15);
}

TEST(AssociationRow, MatchesScalarSoftmaxOracle) {
  VecX d(2);
  d << 0.0, 1.0;
  const VecX row = association_row(d, 1.0);
  const double e = std::exp(-1.0);
  EXPECT_NEAR(row[0], 1.0 / (1.0 + e), 1e-12);
  EXPECT_NEAR(row[1], e / (1.0 + e), 1e-12);
  EXPECT_NEAR(row[0], 0.7311, 1e-4);
  EXPECT_NEAR(row[1], 0.2689, 1e-4);
}

TEST(AssociationRow, InvariantUnderRowShift) {
  SeededRng rng(1);
  VecX d(6);
  for (int i = 0; i < 6; ++i) d[i] = rng.uniform(0.0, 5.0);
  const VecX base = association_row(d, 2.5);
  const VecX shifted = association_row(d.array() + 17.0, 2.5);
  EXPECT_LE((base - shifted).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CorrespondenceMatrix, RowsAreStochastic) {
  SeededRng rng(2);
  const auto source = random_splats(12, rng, 2.0, true);
  const auto target = random_splats(9, rng, 2.0, true);
  CoarseConfig cfg;
  const CorrespondenceMatrix a = correspondence_matrix(source, target, cfg);
  for (int i = 0; i < a.rows(); ++i) {
    EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-9);
    EXPECT_GE(a.row(i).minCoeff(), 0.0);
  }
}

TEST(CorrespondenceMatrix, LargeGammaDistanceProductsStayFinite) {
  // gamma * d would overflow exp without max subtraction.
  const GaussianSplat near = splat_at(Vec3::Zero());
  const GaussianSplat far = splat_at(Vec3(400, 0, 0));
  CoarseConfig cfg;
  cfg.gamma = 3.0;
  const CorrespondenceMatrix a =
      correspondence_matrix({near}, {near, far}, cfg);
  EXPECT_TRUE(a.allFinite());
  EXPECT_NEAR(a.sum(), 1.0, 1e-12);
}

TEST(WeightedSvdAlign, SelfAlignmentIsIdentity) {
  SeededRng rng(3);
  const auto splats = random_splats(8, rng);
  const MatX a = MatX::Identity(8, 8);
  const RigidTransform t = weighted_svd_align(splats, splats, a);
  EXPECT_LE(rotation_angle(t.R), 1e-9);
  EXPECT_LE(t.t.norm(), 1e-9);
}

TEST(WeightedSvdAlign, RecoversGroundTruthOnExactCorrespondences) {
  SeededRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform() * 30);
    const auto source = random_splats(n, rng);
    const RigidTransform gt = random_transform(rng);
    std::vector<GaussianSplat> target;
    for (const auto& s : source) target.push_back(transform_splat(gt, s));
    const MatX a = MatX::Identity(n, n);
    const RigidTransform est = weighted_svd_align(source, target, a);
    expect_near(est.R, gt.R, 1e-9);
    expect_near(est.t, gt.t, 1e-9);
  }
}

TEST(WeightedSvdAlign, ReflectionGuardKeepsProperRotation) {
  // Coplanar points paired through an in-plane mirror: the best linear fit is
  // improper, so the guard must flip to a det +1 rotation without losing
  // objective value on the plane.
  std::vector<GaussianSplat> source{
      splat_at(Vec3(1, 0, 0)), splat_at(Vec3(0, 1, 0)),
      splat_at(Vec3(-1, 0, 0)), splat_at(Vec3(0, -1, 0))};
  std::vector<GaussianSplat> target = source;
  MatX a = MatX::Zero(4, 4);
  a(0, 0) = 1;  // x-axis fixed
  a(1, 3) = 1;  // y flipped
  a(2, 2) = 1;
  a(3, 1) = 1;
  const RigidTransform est = weighted_svd_align(source, target, a);
  EXPECT_NEAR(est.R.determinant(), 1.0, 1e-9);

  // Reflected candidate (the unguarded optimum) evaluated on the same
  // objective: the guarded pose must not be worse on coplanar data.
  const Mat3 mirror = Vec3(1, -1, 1).asDiagonal();
  const double guarded = mahalanobis_objective(source, target, a, est);
  const double reflected =
      mahalanobis_objective(source, target, a, {mirror, Vec3::Zero()});
  EXPECT_LE(guarded, reflected + 1e-12);
}

TEST(WeightedSvdAlign, AllZeroAssociationThrows) {
  SeededRng rng(5);
  const auto splats = random_splats(3, rng);
  EXPECT_THROW(weighted_svd_align(splats, splats, MatX::Zero(3, 3)),
               std::runtime_error);
}

TEST(WeightedSvdAlign, SolverBeatsIdentityOnRandomInstances) {
  SeededRng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform() * 10);
    const int m = 3 + static_cast<int>(rng.uniform() * 10);
    const auto source = random_splats(n, rng);
    const auto target = random_splats(m, rng);
    MatX a(n, m);
    for (int i = 0; i < n; ++i) {
      VecX row(m);
      for (int j = 0; j < m; ++j) row[j] = rng.uniform();
      a.row(i) = (row / row.sum()).transpose();
    }
    const RigidTransform est = weighted_svd_align(source, target, a);
    const double at_est = mahalanobis_objective(source, target, a, est);
    const double at_identity =
        mahalanobis_objective(source, target, a, RigidTransform::identity());
    EXPECT_LE(at_est, at_identity + 1e-9);
  }
}

TEST(MahalanobisObjective, DoublingCovariancesHalvesValue) {
  SeededRng rng(7);
  const auto source = random_splats(5, rng);
  auto target = random_splats(5, rng);
  MatX a = MatX::Identity(5, 5);
  const RigidTransform pose = random_transform(rng);
  const double base = mahalanobis_objective(source, target, a, pose);
  for (auto& t : target) t.covariance *= 2.0;
  const double doubled = mahalanobis_objective(source, target, a, pose);
  EXPECT_NEAR(doubled, base / 2.0, 1e-9 * std::abs(base));
}

TEST(CoarseRegister, AlignedIdenticalSetsConvergeImmediately) {
  SeededRng rng(8);
  // Well separated splats so the soft association is effectively diagonal.
  std::vector<GaussianSplat> splats;
  for (int i = 0; i < 6; ++i) {
    splats.push_back(splat_at(6.0 * rng.normal3(), Mat3::Identity() * 0.01));
  }
  CoarseConfig cfg;
  const CoarseResult result = coarse_register(splats, splats, cfg);
  EXPECT_TRUE(result.converged);
  EXPECT_EQ(result.iterations, 1);
  EXPECT_LE(rotation_angle(result.transform.R), cfg.tol_rot);
  EXPECT_LE(result.transform.t.norm(), cfg.tol_trans);
}

// Exact-covariance scene: per-splat isotropic spreads (down-weighting still
// varies per target) with the target transformed consistently. The closed
// form solve is exact in this regime; anisotropic covariances leave it a
// descent step only, which the descent-property test covers.
std::pair<std::vector<GaussianSplat>, std::vector<GaussianSplat>>
synthetic_scene(SeededRng& rng, int n, double angle_deg, double trans,
                RigidTransform* gt_out) {
  auto source = random_splats(n, rng, 4.0, false);
  for (auto& s : source) {
    const double sigma = rng.uniform(0.7, 1.5);
    s.covariance = sigma * sigma * Mat3::Identity();
  }
  RigidTransform gt;
  gt.R = rng.rotation(angle_deg * kPi / 180.0);
  gt.t = trans * rng.unit_vector();
  std::vector<GaussianSplat> target;
  for (const auto& s : source) target.push_back(transform_splat(gt, s));
  *gt_out = gt;
  return {source, target};
}

// Multi-start harness mirroring pipeline usage: identity plus the
// principal-axis alignments, keeping the lowest-objective result. A single
// identity start only converges when the initial displacement stays below
// the splat spacing.
CoarseResult coarse_multistart(const std::vector<GaussianSplat>& source,
                               const std::vector<GaussianSplat>& target,
                               const CoarseConfig& cfg) {
  auto moments = [](const std::vector<GaussianSplat>& splats) {
    Vec3 c = Vec3::Zero();
    for (const auto& s : splats) c += s.mean;
    c /= static_cast<double>(splats.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& s : splats) {
      const Vec3 d = s.mean - c;
      cov += d * d.transpose();
    }
    return std::make_pair(c, cov);
  };
  const auto [cs, cov_s] = moments(source);
  const auto [ct, cov_t] = moments(target);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov_s), et(cov_t);
  Mat3 qs = es.eigenvectors(), qt = et.eigenvectors();
  if (qs.determinant() < 0) qs.col(0) = -qs.col(0);
  if (qt.determinant() < 0) qt.col(0) = -qt.col(0);

  std::vector<RigidTransform> inits{RigidTransform::identity()};
  for (const Vec3& sign : {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1),
                           Vec3(-1, -1, 1)}) {
    const Mat3 r = qt * sign.asDiagonal() * qs.transpose();
    inits.push_back({r, ct - r * cs});
  }
  CoarseResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (const auto& init : inits) {
    const CoarseResult result = coarse_register(source, target, cfg, init);
    const double obj = mahalanobis_objective(source, target, result.a_final,
                                             result.transform);
    if (obj < best_obj) {
      best_obj = obj;
      best = result;
    }
  }
  return best;
}

TEST(CoarseRegister, RecoversTwentyDegreePose) {
  SeededRng rng(9);
  RigidTransform gt;
  const auto [source, target] = synthetic_scene(rng, 50, 20.0, 0.3, &gt);
  const CoarseResult result = coarse_multistart(source, target, CoarseConfig{});
  const double rre =
      rotation_angle(Mat3(result.transform.R.transpose() * gt.R)) * 180.0 / kPi;
  EXPECT_LT(rre, 0.5);
  EXPECT_LT((result.transform.t - gt.t).norm(), 0.02);
  for (double v : result.objective_trace) EXPECT_TRUE(std::isfinite(v));
}

TEST(CoarseRegister, IdentityInitConvergesWithinItsBasin) {
  SeededRng rng(12);
  RigidTransform gt;
  const auto [source, target] = synthetic_scene(rng, 50, 6.0, 0.15, &gt);
  const CoarseResult result = coarse_register(source, target, CoarseConfig{});
  const double rre =
      rotation_angle(Mat3(result.transform.R.transpose() * gt.R)) * 180.0 / kPi;
  EXPECT_LT(rre, 0.5);
  EXPECT_LT((result.transform.t - gt.t).norm(), 0.02);
}

TEST(CoarseRegister, GammaRangeEndsBothConverge) {
  for (double gamma : {1.0, 3.0}) {
    SeededRng rng(10);
    RigidTransform gt;
    const auto [source, target] = synthetic_scene(rng, 40, 15.0, 0.2, &gt);
    CoarseConfig cfg;
    cfg.gamma = gamma;
    const CoarseResult result = coarse_multistart(source, target, cfg);
    const double rre =
        rotation_angle(Mat3(result.transform.R.transpose() * gt.R)) * 180.0 /
        kPi;
    EXPECT_LT(rre, 0.5) << "gamma = " << gamma;
    EXPECT_LT((result.transform.t - gt.t).norm(), 0.02) << "gamma = " << gamma;
  }
}

TEST(CoarseRegister, ConfigValidationQuotesRanges) {
  CoarseConfig cfg;
  cfg.lambda_d = 0.5;
  try {
    cfg.validate();
    FAIL() << "expected validation failure";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[0.05, 0.2]"), std::string::npos);
  }
  cfg = CoarseConfig{};
  cfg.gamma = 0.5;
  try {
    cfg.validate();
    FAIL() << "expected validation failure";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[1, 3]"), std::string::npos);
  }
}

TEST(CoarseResult, JsonHasRowMajorPoseAndTrace) {
  SeededRng rng(11);
  RigidTransform gt;
  const auto [source, target] = synthetic_scene(rng, 10, 5.0, 0.1, &gt);
  const CoarseResult result = coarse_register(source, target, CoarseConfig{});
  const auto j = result.to_json();
  ASSERT_EQ(j.at("pose").size(), 16u);
  EXPECT_DOUBLE_EQ(j.at("pose").at(15).get<double>(), 1.0);
  EXPECT_EQ(j.at("objective_trace").size(),
            static_cast<std::size_t>(result.iterations));
}

}  // namespace
}  // namespace gsalign
