#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "pdzseg/image.hpp"
#include "pdzseg/rng.hpp"

namespace pdzseg {

enum class CorruptionKind { kGaussianNoise, kMotionBlur, kSmoke, kBrightness, kContrast };

inline constexpr std::array<CorruptionKind, 5> kAllCorruptions = {
    CorruptionKind::kGaussianNoise, CorruptionKind::kMotionBlur, CorruptionKind::kSmoke, CorruptionKind::kBrightness,
    CorruptionKind::kContrast};

std::string_view to_string(CorruptionKind kind);
// Throws kInvalidConfig for unknown names.
CorruptionKind parse_corruption_kind(std::string_view name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 3;  // 1..5
  std::uint64_t seed = 0;

  bool operator==(const CorruptionSpec&) const = default;
};

// Severity tables (index severity - 1).
inline constexpr std::array<double, 5> kNoiseSigma = {0.08, 0.12, 0.18, 0.26, 0.38};
inline constexpr std::array<std::array<double, 2>, 5> kMotionBlurRadiusSigma = {
    {{10, 3}, {15, 5}, {15, 8}, {15, 12}, {20, 15}}};
// Fog strengths per severity. One plasma decay serves every severity so the
// haze field depends only on the seed and strength alone sets severity.
inline constexpr std::array<double, 5> kSmokeStrength = {1.5, 2.0, 2.5, 2.5, 3.0};
inline constexpr double kSmokeDecay = 1.7;
inline constexpr std::array<double, 5> kBrightnessShift = {0.1, 0.2, 0.3, 0.4, 0.5};
inline constexpr std::array<double, 5> kContrastFactor = {0.4, 0.3, 0.2, 0.1, 0.05};

// Deterministic in (image, spec); output has the input's shape and values
// in [0, 1]. Throws kBadSeverity outside 1..5.
ImageTensor corrupt(const ImageTensor& image, const CorruptionSpec& spec);

// Building blocks, exposed for tests.
ImageTensor add_gaussian_noise(const ImageTensor& image, double sigma, Rng& rng);
ImageTensor motion_blur(const ImageTensor& image, int radius, double sigma, double angle_degrees);
ImageTensor smoke(const ImageTensor& image, double strength, double decay, Rng& rng);
ImageTensor shift_brightness(const ImageTensor& image, double shift);
ImageTensor scale_contrast(const ImageTensor& image, double factor);

// Diamond-square height map normalised to [0, 1]; mapsize a power of two.
std::vector<double> plasma_fractal(int mapsize, double decay, Rng& rng);

std::array<float, 3> rgb_to_hsv(std::array<float, 3> rgb);
std::array<float, 3> hsv_to_rgb(std::array<float, 3> hsv);

}  // namespace pdzseg
