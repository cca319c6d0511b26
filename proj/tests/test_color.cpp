// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0

#include "gsalign/color.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace gsalign {
namespace {

using testing::expect_near;

// Straight-line sRGB -> XYZ -> LAB with published D65 constants, written
// independently of the library path.
Vec3 lab_reference(const Vec3& rgb) {
  auto lin = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double r = lin(rgb.x()), g = lin(rgb.y()), b = lin(rgb.z());
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  auto f = [](double t) {
    return t > 0.008856451679 ? std::cbrt(t) : 7.787037037 * t + 16.0 / 116.0;
  };
  const double fx = f(x / 0.95047), fy = f(y / 1.0), fz = f(z / 1.08883);
  return Vec3((116.0 * fy - 16.0) / 100.0, 500.0 * (fx - fy) / 128.0,
              200.0 * (fy - fz) / 128.0);
}

TEST(ConvertColor, PureRedInHsv) {
  expect_near(convert_color(Vec3(1, 0, 0), ColorSpace::HSV), Vec3(0, 1, 1),
              1e-12);
}

TEST(ConvertColor, WhiteMapsToNeutralLab) {
  expect_near(convert_color(Vec3(1, 1, 1), ColorSpace::LAB), Vec3(1, 0, 0),
              1e-9);
}

TEST(ConvertColor, LabMatchesReferenceColorimetry) {
  const Vec3 got = convert_color(Vec3(0.5, 0.2, 0.8), ColorSpace::LAB);
  expect_near(got, lab_reference(Vec3(0.5, 0.2, 0.8)), 1e-4);
}

TEST(ConvertColor, OutOfGamutThrows) {
  EXPECT_THROW(convert_color(Vec3(1.2, 0, 0), ColorSpace::HSV),
               std::invalid_argument);
  EXPECT_THROW(convert_color(Vec3(0, -0.1, 0), ColorSpace::LAB),
               std::invalid_argument);
}

TEST(ConvertColor, HsvRoundTripOnGrid) {
  for (int r = 0; r < 16; ++r) {
    for (int g = 0; g < 16; ++g) {
      for (int b = 0; b < 16; ++b) {
        const Vec3 rgb(r / 15.0, g / 15.0, b / 15.0);
        const Vec3 back = hsv_to_rgb(rgb_to_hsv(rgb));
        EXPECT_LE((back - rgb).cwiseAbs().maxCoeff(), 1e-6)
            << rgb.transpose();
      }
    }
  }
}

TEST(ConvertColor, LabRoundTripOnGrid) {
  for (int r = 0; r < 16; ++r) {
    for (int g = 0; g < 16; ++g) {
      for (int b = 0; b < 16; ++b) {
        const Vec3 rgb(r / 15.0, g / 15.0, b / 15.0);
        const Vec3 back = lab_to_rgb(rgb_to_lab(rgb));
        EXPECT_LE((back - rgb).cwiseAbs().maxCoeff(), 1e-6)
            << rgb.transpose();
      }
    }
  }
}

// Straight-line re-evaluation of the encoder stack from the same weights.
VecX encoder_oracle(const Vec3& input, const ColorEncoderParams& p) {
  auto layer = [](const MatX& w, const VecX& x, const VecX& scale,
                  const VecX& shift) {
    VecX z = VecX::Zero(w.cols());
    for (int c = 0; c < w.cols(); ++c) {
      for (int r = 0; r < w.rows(); ++r) z[c] += w(r, c) * x[r];
    }
    double mean = 0.0;
    for (int i = 0; i < z.size(); ++i) mean += z[i];
    mean /= z.size();
    double var = 0.0;
    for (int i = 0; i < z.size(); ++i) var += (z[i] - mean) * (z[i] - mean);
    var /= z.size();
    for (int i = 0; i < z.size(); ++i) {
      z[i] = (z[i] - mean) / std::sqrt(var + 1e-5) * scale[i] + shift[i];
    }
    return z;
  };
  VecX h = layer(p.w1, VecX(input), p.ln_scale1, p.ln_shift1);
  for (int i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i]);
  h = layer(p.w2, h, p.ln_scale2, p.ln_shift2);
  for (int i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i]);
  h = layer(p.w3, h, p.ln_scale3, p.ln_shift3);
  for (int i = 0; i < h.size(); ++i) h[i] = 1.0 / (1.0 + std::exp(-h[i]));
  return h;
}

TEST(EncodeColor, DeterministicForIdenticalInputs) {
  const auto params = ColorEncoderParams::seeded(3, 8);
  const VecX a = encode_color(Vec3(0.3, 0.6, 0.9), params);
  const VecX b = encode_color(Vec3(0.3, 0.6, 0.9), params);
  EXPECT_EQ((a - b).norm(), 0.0);
}

TEST(EncodeColor, OutputStrictlyInsideUnitInterval) {
  SeededRng rng(4);
  const auto params = ColorEncoderParams::seeded(5, 12);
  for (int i = 0; i < 50; ++i) {
    const VecX out = encode_color(Vec3(rng.uniform(), rng.uniform(), rng.uniform()),
                                  params);
    EXPECT_GT(out.minCoeff(), 0.0);
    EXPECT_LT(out.maxCoeff(), 1.0);
  }
}

TEST(EncodeColor, MatchesStraightLineOracle) {
  const auto params = ColorEncoderParams::seeded(42, 8);
  const VecX got = encode_color(Vec3(0.2, 0.4, 0.6), params);
  const VecX want = encoder_oracle(Vec3(0.2, 0.4, 0.6), params);
  ASSERT_EQ(got.size(), want.size());
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EncodeColor, SmallPerturbationStaysSmall) {
  const auto params = ColorEncoderParams::seeded(6, 8);
  const Vec3 base(0.25, 0.5, 0.75);
  const VecX a = encode_color(base, params);
  const VecX b = encode_color(base + Vec3(1e-6, -1e-6, 1e-6), params);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(EncodeColor, DimensionMismatchThrows) {
  auto params = ColorEncoderParams::seeded(7, 8);
  params.w2 = MatX::Zero(5, 8);
  EXPECT_THROW(encode_color(Vec3(0.1, 0.2, 0.3), params), std::invalid_argument);
}

TEST(EncoderParams, JsonRoundTripReproducesOutputs) {
  const auto params = ColorEncoderParams::seeded(11, 8);
  const auto restored = ColorEncoderParams::from_json(params.to_json());
  const Vec3 c(0.9, 0.1, 0.4);
  EXPECT_EQ((encode_color(c, params) - encode_color(c, restored)).norm(), 0.0);
}

TEST(FuseFeatures, GateClosesColorBlock) {
  VecX f_geo(2), f_color(2);
  f_geo << 1, 2;
  f_color << 0.5, 0.5;
  const VecX fused = fuse_features(f_geo, f_color, FusionGate{-40.0}, 1, 2);
  EXPECT_NEAR(fused[0], 1.0, 0.0);
  EXPECT_NEAR(fused[1], 2.0, 0.0);
  EXPECT_LE(std::abs(fused[2]), 1e-15);
  EXPECT_LE(std::abs(fused[3]), 1e-15);
}

TEST(FuseFeatures, FinalLevelIgnoresGate) {
  VecX f_geo(1), f_color(1);
  f_geo << 3;
  f_color << 0.7;
  const VecX a = fuse_features(f_geo, f_color, FusionGate{-40.0}, 2, 2);
  const VecX b = fuse_features(f_geo, f_color, FusionGate{40.0}, 2, 2);
  EXPECT_EQ((a - b).norm(), 0.0);
  EXPECT_NEAR(a[1], 0.7, 0.0);
}

TEST(FuseFeatures, HandEvaluatedGatedConcat) {
  VecX f_geo(2), f_color(2);
  f_geo << 1, 2;
  f_color << 0.5, 0.5;
  const VecX fused = fuse_features(f_geo, f_color, FusionGate{0.0}, 1, 2);
  ASSERT_EQ(fused.size(), 4);
  EXPECT_DOUBLE_EQ(fused[0], 1.0);
  EXPECT_DOUBLE_EQ(fused[1], 2.0);
  EXPECT_DOUBLE_EQ(fused[2], 0.25);  // alpha = sigmoid(0) = 0.5
  EXPECT_DOUBLE_EQ(fused[3], 0.25);
}

TEST(FuseFeatures, LengthIsAlwaysTheSum) {
  SeededRng rng(14);
  for (int i = 0; i < 20; ++i) {
    const int gn = 1 + static_cast<int>(rng.uniform() * 6);
    const int cn = 1 + static_cast<int>(rng.uniform() * 6);
    const int level = 1 + static_cast<int>(rng.uniform() * 3);
    const VecX fused = fuse_features(VecX::Random(gn), VecX::Random(cn),
                                     FusionGate{rng.normal()}, level, 3);
    EXPECT_EQ(fused.size(), gn + cn);
  }
}

TEST(FuseFeatures, LevelOutsideRangeThrows) {
  EXPECT_THROW(fuse_features(VecX::Ones(1), VecX::Ones(1), FusionGate{}, 0, 2),
               std::invalid_argument);
  EXPECT_THROW(fuse_features(VecX::Ones(1), VecX::Ones(1), FusionGate{}, 3, 2),
               std::invalid_argument);
}

}  // namespace
}  // namespace gsalign
