#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "pdzseg/corruptions.hpp"
#include "pdzseg/error.hpp"
#include "pdzseg/rng.hpp"

namespace pdzseg {
namespace {

// Smooth test scene with edges in every direction.
ImageTensor test_scene(int size) {
  ImageTensor img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool disk = (x - size / 2) * (x - size / 2) + (y - size / 2) * (y - size / 2) < size * size / 9;
      img.at(y, x, 0) = disk ? 0.85f : 0.3f + 0.4f * static_cast<float>(x) / size;
      img.at(y, x, 1) = disk ? 0.55f : 0.2f + 0.3f * static_cast<float>(y) / size;
      img.at(y, x, 2) = ((x / 8 + y / 8) % 2) ? 0.6f : 0.25f;
    }
  }
  return img;
}

double mean_abs_dev(const ImageTensor& a, const ImageTensor& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) sum += std::abs(a.pixels()[i] - b.pixels()[i]);
  return sum / static_cast<double>(a.pixels().size());
}

TEST(Corruptions, KindNamesRoundTrip) {
  for (auto k : kAllCorruptions) EXPECT_EQ(parse_corruption_kind(to_string(k)), k);
  EXPECT_EQ(to_string(CorruptionKind::kSmoke), "smoke");
  EXPECT_THROW(parse_corruption_kind("fog"), Error);
}

TEST(Corruptions, SeverityBounds) {
  const ImageTensor img(8, 8, 0.5f);
  for (int s : {0, 6, -1}) {
    try {
      corrupt(img, CorruptionSpec{CorruptionKind::kContrast, s, 0});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kBadSeverity);
    }
  }
}

TEST(Corruptions, DeterministicInRangeAndShapePreserving) {
  const auto img = test_scene(48);
  for (auto k : kAllCorruptions) {
    for (int s = 1; s <= 5; ++s) {
      const CorruptionSpec spec{k, s, 7};
      const auto a = corrupt(img, spec);
      EXPECT_EQ(a, corrupt(img, spec));
      EXPECT_EQ(a.height(), 48);
      EXPECT_EQ(a.width(), 48);
      const auto [lo, hi] = std::minmax_element(a.pixels().begin(), a.pixels().end());
      EXPECT_GE(*lo, 0.0f);
      EXPECT_LE(*hi, 1.0f);
    }
  }
}

TEST(Corruptions, SeedChangesStochasticKinds) {
  const auto img = test_scene(32);
  for (auto k : {CorruptionKind::kGaussianNoise, CorruptionKind::kSmoke, CorruptionKind::kMotionBlur}) {
    EXPECT_NE(corrupt(img, {k, 3, 1}), corrupt(img, {k, 3, 2})) << to_string(k);
  }
}

TEST(Corruptions, DeviationGrowsWithSeverity) {
  const auto img = test_scene(64);
  for (auto k : kAllCorruptions) {
    double prev = 0.0;
    for (int s = 1; s <= 5; ++s) {
      const double mad = mean_abs_dev(corrupt(img, {k, s, 0}), img);
      EXPECT_GE(mad, prev) << to_string(k) << " severity " << s;
      prev = mad;
    }
  }
}

TEST(Corruptions, DeviationGrowsWithSeverityOnRandomScenes) {
  for (std::uint64_t trial = 0; trial < 12; ++trial) {
    // Blocky random scenes: flat regions plus hard edges.
    const auto noise = pdzseg::testing::random_image(6, 6, 300 + trial);
    ImageTensor img(48, 48);
    for (int y = 0; y < 48; ++y) {
      for (int x = 0; x < 48; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = noise.at(y / 8, x / 8, c);
      }
    }
    for (auto k : kAllCorruptions) {
      double prev = 0.0;
      for (int s = 1; s <= 5; ++s) {
        const double mad = mean_abs_dev(corrupt(img, {k, s, trial}), img);
        EXPECT_GE(mad, prev) << to_string(k) << " severity " << s << " trial " << trial;
        prev = mad;
      }
    }
  }
}

TEST(Corruptions, SmokeHazeIsSharedAcrossSeverities) {
  // Equal strengths give identical output; the haze depends on the seed only.
  const auto img = test_scene(32);
  EXPECT_EQ(kSmokeStrength[2], kSmokeStrength[3]);
  EXPECT_EQ(corrupt(img, {CorruptionKind::kSmoke, 3, 5}), corrupt(img, {CorruptionKind::kSmoke, 4, 5}));
}

TEST(Corruptions, NoiseStdMatchesSigmaOnMidGray) {
  const ImageTensor gray(256, 256, 0.5f);
  const auto noisy = corrupt(gray, {CorruptionKind::kGaussianNoise, 3, 11});
  double sum = 0.0;
  double sq = 0.0;
  for (float v : noisy.pixels()) {
    sum += v;
    sq += double(v) * v;
  }
  const double n = static_cast<double>(noisy.pixels().size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd, kNoiseSigma[2], 0.05 * kNoiseSigma[2]);
}

TEST(Corruptions, ContrastFactorOneIsIdentity) {
  const auto img = test_scene(24);
  const auto out = scale_contrast(img, 1.0);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) EXPECT_NEAR(out.pixels()[i], img.pixels()[i], 1e-6f);
}

TEST(Corruptions, ContrastPullsTowardChannelMean) {
  const auto img = test_scene(24);
  const auto flat = scale_contrast(img, 0.0);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(flat.at(0, 0, c), flat.at(23, 17, c), 1e-6f);
}

TEST(Corruptions, PhotometricKindsCommuteWithFlip) {
  const auto img = test_scene(40);
  for (auto k : {CorruptionKind::kBrightness, CorruptionKind::kContrast}) {
    for (int s = 1; s <= 5; ++s) {
      const auto a = flip_horizontal(corrupt(img, {k, s, 3}));
      const auto b = corrupt(flip_horizontal(img), {k, s, 3});
      for (std::size_t i = 0; i < a.pixels().size(); ++i) EXPECT_NEAR(a.pixels()[i], b.pixels()[i], 1e-5f);
    }
  }
}

TEST(Corruptions, BrightnessRaisesValue) {
  const auto img = test_scene(16);
  const auto out = shift_brightness(img, 0.2);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const float v_in = std::max({img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)});
      const float v_out = std::max({out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2)});
      EXPECT_NEAR(v_out, std::min(1.0f, v_in + 0.2f), 1e-5f);
    }
  }
}

TEST(Corruptions, HsvRoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const std::array<float, 3> rgb = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                                      static_cast<float>(rng.uniform())};
    const auto back = hsv_to_rgb(rgb_to_hsv(rgb));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(back[c], rgb[c], 1e-5f);
  }
  const auto hsv = rgb_to_hsv({1.0f, 0.0f, 0.0f});
  EXPECT_NEAR(hsv[0], 0.0f, 1e-6f);
  EXPECT_NEAR(hsv[1], 1.0f, 1e-6f);
  EXPECT_NEAR(hsv[2], 1.0f, 1e-6f);
}

TEST(Corruptions, MotionBlurKeepsConstantsAndSmearsEdges) {
  const ImageTensor flat(30, 30, 0.4f);
  const auto out = motion_blur(flat, 10, 3.0, 20.0);
  for (float v : out.pixels()) EXPECT_NEAR(v, 0.4f, 1e-5f);
  ImageTensor dot(31, 31);
  for (int c = 0; c < 3; ++c) dot.at(15, 15, c) = 1.0f;
  const auto smear = motion_blur(dot, 6, 3.0, 0.0);
  int lit = 0;
  for (int x = 0; x < 31; ++x) lit += smear.at(15, x, 0) > 0.0f;
  EXPECT_GT(lit, 1);
  EXPECT_EQ(smear.at(5, 15, 0), 0.0f);
}

TEST(Corruptions, PlasmaIsNormalised) {
  Rng rng(8);
  const auto map = plasma_fractal(64, 2.0, rng);
  ASSERT_EQ(map.size(), 64u * 64u);
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  EXPECT_DOUBLE_EQ(*lo, 0.0);
  EXPECT_DOUBLE_EQ(*hi, 1.0);
  EXPECT_THROW(plasma_fractal(48, 2.0, rng), Error);
}

TEST(Corruptions, SmokeBrightensDarkRegions) {
  // Output is (x + s * haze) * m / (m + s) with m the image maximum.
  ImageTensor scene(32, 32, 0.1f);
  for (int c = 0; c < 3; ++c) scene.at(0, 0, c) = 1.0f;
  Rng rng(9);
  const auto out = smoke(scene, 2.0, 2.0, rng);
  double mean = 0.0;
  for (float v : out.pixels()) mean += v;
  EXPECT_GT(mean / static_cast<double>(out.pixels().size()), 0.2);
  EXPECT_LT(out.at(0, 0, 0), 1.0f);
}

}  // namespace
}  // namespace pdzseg
