#include "pdzseg/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pdzseg/error.hpp"

namespace pdzseg {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

int next_pow2(int v) {
  int p = 1;
  while (p < v) p <<= 1;
  return p;
}

}  // namespace

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kGaussianNoise: return "gaussian_noise";
    case CorruptionKind::kMotionBlur: return "motion_blur";
    case CorruptionKind::kSmoke: return "smoke";
    case CorruptionKind::kBrightness: return "brightness";
    case CorruptionKind::kContrast: return "contrast";
  }
  return "unknown";
}

CorruptionKind parse_corruption_kind(std::string_view name) {
  for (CorruptionKind k : kAllCorruptions) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kInvalidConfig, "unknown corruption kind '" + std::string(name) + "'");
}

ImageTensor add_gaussian_noise(const ImageTensor& image, double sigma, Rng& rng) {
  ImageTensor out = image;
  for (float& v : out.pixels()) v = clamp01(v + rng.normal(0.0, sigma));
  return out;
}

ImageTensor motion_blur(const ImageTensor& image, int radius, double sigma, double angle_degrees) {
  // One-sided Gaussian streak of 2r+1 taps along the blur direction.
  const int taps = 2 * radius + 1;
  std::vector<double> weight(taps);
  double total = 0.0;
  for (int i = 0; i < taps; ++i) {
    weight[i] = std::exp(-static_cast<double>(i) * i / (2.0 * sigma * sigma));
    total += weight[i];
  }
  for (double& w : weight) w /= total;
  const double theta = angle_degrees * std::numbers::pi / 180.0;
  std::vector<int> ox(taps);
  std::vector<int> oy(taps);
  for (int i = 0; i < taps; ++i) {
    ox[i] = static_cast<int>(std::lround(i * std::cos(theta)));
    oy[i] = static_cast<int>(std::lround(i * std::sin(theta)));
  }
  const int h = image.height();
  const int w = image.width();
  ImageTensor out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int i = 0; i < taps; ++i) {
        const int sy = std::clamp(y - oy[i], 0, h - 1);
        const int sx = std::clamp(x - ox[i], 0, w - 1);
        for (int c = 0; c < 3; ++c) acc[c] += weight[i] * image.at(sy, sx, c);
      }
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(acc[c]);
    }
  }
  return out;
}

std::vector<double> plasma_fractal(int mapsize, double decay, Rng& rng) {
  if (mapsize < 2 || (mapsize & (mapsize - 1)) != 0) {
    throw Error(ErrorKind::kOutOfRange, "plasma map size must be a power of two >= 2");
  }
  const int n = mapsize;
  std::vector<double> map(static_cast<std::size_t>(n) * n, 0.0);
  auto at = [&](int y, int x) -> double& { return map[static_cast<std::size_t>((y + n) % n) * n + (x + n) % n]; };
  double wibble = 100.0;
  // The reference recipe perturbs by wibble * U(-wibble, wibble).
  auto wibbled_mean = [&](double sum) { return sum / 4.0 + wibble * rng.uniform(-wibble, wibble); };
  for (int step = n; step >= 2; step /= 2) {
    const int half = step / 2;
    // squares: centre of each cell from its four (wrapped) corners
    for (int y = 0; y < n; y += step) {
      for (int x = 0; x < n; x += step) {
        const double sum = at(y, x) + at(y + step, x) + at(y, x + step) + at(y + step, x + step);
        at(y + half, x + half) = wibbled_mean(sum);
      }
    }
    // diamonds: top edge midpoints, then left edge midpoints
    for (int y = 0; y < n; y += step) {
      for (int x = 0; x < n; x += step) {
        const double sum = at(y + half, x + half) + at(y - half, x + half) + at(y, x) + at(y, x + step);
        at(y, x + half) = wibbled_mean(sum);
      }
    }
    for (int y = 0; y < n; y += step) {
      for (int x = 0; x < n; x += step) {
        const double sum = at(y + half, x + half) + at(y + half, x - half) + at(y, x) + at(y + step, x);
        at(y + half, x) = wibbled_mean(sum);
      }
    }
    wibble /= decay;
  }
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  const double mn = *lo;
  const double range = *hi - mn;
  for (double& v : map) v = range > 0.0 ? (v - mn) / range : 0.0;
  return map;
}

ImageTensor smoke(const ImageTensor& image, double strength, double decay, Rng& rng) {
  const int h = image.height();
  const int w = image.width();
  const int size = next_pow2(std::max({h, w, 2}));
  const std::vector<double> plasma = plasma_fractal(size, decay, rng);
  float max_val = 0.0f;
  for (float v : image.pixels()) max_val = std::max(max_val, v);
  const double norm = max_val / (max_val + strength);
  ImageTensor out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double haze = strength * plasma[static_cast<std::size_t>(y) * size + x];
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01((image.at(y, x, c) + haze) * norm);
    }
  }
  return out;
}

std::array<float, 3> rgb_to_hsv(std::array<float, 3> rgb) {
  const float r = rgb[0], g = rgb[1], b = rgb[2];
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float delta = mx - mn;
  float hue = 0.0f;
  if (delta > 0.0f) {
    if (mx == r) {
      hue = (g - b) / delta;
    } else if (mx == g) {
      hue = 2.0f + (b - r) / delta;
    } else {
      hue = 4.0f + (r - g) / delta;
    }
    hue /= 6.0f;
    if (hue < 0.0f) hue += 1.0f;
  }
  const float sat = mx > 0.0f ? delta / mx : 0.0f;
  return {hue, sat, mx};
}

std::array<float, 3> hsv_to_rgb(std::array<float, 3> hsv) {
  const float h = hsv[0], s = hsv[1], v = hsv[2];
  const float h6 = h * 6.0f;
  const int i = static_cast<int>(std::floor(h6)) % 6;
  const float f = h6 - std::floor(h6);
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - f * s);
  const float t = v * (1.0f - (1.0f - f) * s);
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

ImageTensor shift_brightness(const ImageTensor& image, double shift) {
  ImageTensor out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      auto hsv = rgb_to_hsv({image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2)});
      hsv[2] = clamp01(hsv[2] + shift);
      const auto rgb = hsv_to_rgb(hsv);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(rgb[c]);
    }
  }
  return out;
}

ImageTensor scale_contrast(const ImageTensor& image, double factor) {
  const double n = static_cast<double>(image.height()) * image.width();
  double mean[3] = {0.0, 0.0, 0.0};
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) mean[c] += image.at(y, x, c);
    }
  }
  for (double& m : mean) m /= std::max(n, 1.0);
  ImageTensor out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01((image.at(y, x, c) - mean[c]) * factor + mean[c]);
    }
  }
  return out;
}

ImageTensor corrupt(const ImageTensor& image, const CorruptionSpec& spec) {
  if (spec.severity < 1 || spec.severity > 5) {
    throw Error(ErrorKind::kBadSeverity, "severity " + std::to_string(spec.severity) + " outside 1..5");
  }
  const std::size_t s = static_cast<std::size_t>(spec.severity - 1);
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(spec.kind) + 1));
  switch (spec.kind) {
    case CorruptionKind::kGaussianNoise:
      return add_gaussian_noise(image, kNoiseSigma[s], rng);
    case CorruptionKind::kMotionBlur: {
      const double angle = rng.uniform(-45.0, 45.0);
      return motion_blur(image, static_cast<int>(kMotionBlurRadiusSigma[s][0]), kMotionBlurRadiusSigma[s][1], angle);
    }
    case CorruptionKind::kSmoke:
      return smoke(image, kSmokeStrength[s], kSmokeDecay, rng);
    case CorruptionKind::kBrightness:
      return shift_brightness(image, kBrightnessShift[s]);
    case CorruptionKind::kContrast:
      return scale_contrast(image, kContrastFactor[s]);
  }
  throw Error(ErrorKind::kInvalidConfig, "unhandled corruption kind");
}

}  // namespace pdzseg
