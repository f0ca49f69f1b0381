#include "fixtures.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <vector>

#include "pdzseg/loss.hpp"
#include "pdzseg/rng.hpp"

namespace pdzseg::testing {

ImageTensor random_image(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(height, width);
  for (float& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

ClassMask random_mask(int height, int width, std::uint64_t seed, double p) {
  Rng rng(seed);
  ClassMask m(height, width);
  for (auto& v : m.labels()) v = rng.uniform() < p ? 1 : 0;
  return m;
}

namespace {

// Background pixels not 4-reachable from the border become foreground.
void fill_holes(ClassMask& m) {
  const int h = m.height();
  const int w = m.width();
  std::vector<char> outside(static_cast<std::size_t>(h) * w, 0);
  std::deque<std::pair<int, int>> queue;
  auto push = [&](int y, int x) {
    const auto i = static_cast<std::size_t>(y) * w + x;
    if (m.at(y, x) == 0 && !outside[i]) {
      outside[i] = 1;
      queue.emplace_back(y, x);
    }
  };
  for (int x = 0; x < w; ++x) {
    push(0, x);
    push(h - 1, x);
  }
  for (int y = 0; y < h; ++y) {
    push(y, 0);
    push(y, w - 1);
  }
  while (!queue.empty()) {
    auto [y, x] = queue.front();
    queue.pop_front();
    if (y > 0) push(y - 1, x);
    if (y + 1 < h) push(y + 1, x);
    if (x > 0) push(y, x - 1);
    if (x + 1 < w) push(y, x + 1);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!outside[static_cast<std::size_t>(y) * w + x]) m.at(y, x) = 1;
    }
  }
}

}  // namespace

ClassMask grown_mask(int height, int width, int target_pixels, std::uint64_t seed) {
  Rng rng(seed);
  ClassMask m(height, width);
  std::vector<std::pair<int, int>> frontier;
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
  m.at(y0, x0) = 1;
  frontier.emplace_back(y0, x0);
  int grown = 1;
  static constexpr int kDy[4] = {-1, 1, 0, 0};
  static constexpr int kDx[4] = {0, 0, -1, 1};
  while (grown < target_pixels && !frontier.empty()) {
    const auto pick = rng.below(frontier.size());
    auto [y, x] = frontier[pick];
    const int k = static_cast<int>(rng.below(4));
    const int ny = y + kDy[k];
    const int nx = x + kDx[k];
    if (m.in_bounds(ny, nx) && m.at(ny, nx) == 0) {
      m.at(ny, nx) = 1;
      frontier.emplace_back(ny, nx);
      ++grown;
    }
  }
  fill_holes(m);
  return m;
}

ClassMask blob_mask(int size, std::uint64_t seed) {
  Rng rng(seed);
  ClassMask m(size, size);
  const double cx = rng.uniform(0.35, 0.65) * size;
  const double cy = rng.uniform(0.35, 0.65) * size;
  const int parts = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < parts; ++k) {
    // Every ellipse contains the common centre, so the union is connected.
    const double a = rng.uniform(0.08, 0.3) * size;
    const double b = rng.uniform(0.05, 0.15) * size;
    const double theta = rng.uniform(0.0, 3.14159265358979);
    const double shift = rng.uniform(0.0, 0.6) * a;
    const double ex = cx + shift * std::cos(theta);
    const double ey = cy + shift * std::sin(theta);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x - ex;
        const double dy = y - ey;
        const double u = dx * std::cos(theta) + dy * std::sin(theta);
        const double v = -dx * std::sin(theta) + dy * std::cos(theta);
        if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) m.at(y, x) = 1;
      }
    }
  }
  m.at(static_cast<int>(cy), static_cast<int>(cx)) = 1;
  return m;
}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.encoder.image_size = 16;
  cfg.encoder.patch_size = 4;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.num_blocks = 2;
  cfg.encoder.num_heads = 2;
  cfg.encoder.selected_levels = {1, 2};
  cfg.decoder.unified_channels = 16;
  cfg.lora = LoRAConfig{};
  return cfg;
}

template <typename T>
void randomize_adapters(SegModel<T>& model, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  model.encoder().for_each_parameter([&](const std::string& name, Parameter<T>& p) {
    if (name.ends_with("lora_B")) {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(rng.normal(0.0, stddev));
    }
  });
}

template void randomize_adapters<float>(SegModel<float>&, std::uint64_t, double);
template void randomize_adapters<double>(SegModel<double>&, std::uint64_t, double);

GradCheckResult check_gradients(SegModel<double>& model, const ImageTensor& image, const ClassMask& mask,
                                double step) {
  model.zero_grad();
  model.accumulate_gradients(image, mask, 1.0);
  GradCheckResult result;
  model.for_each_parameter([&](const std::string& name, Parameter<double>& p) {
    if (!p.trainable) return;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& v = p.value.data()[i];
      const double saved = v;
      v = saved + step;
      const double up = ce_loss(model.forward(image), mask);
      v = saved - step;
      const double down = ce_loss(model.forward(image), mask);
      v = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad.data()[i];
      const double abs_err = std::abs(numeric - analytic);
      // Relative to the larger magnitude, floored so gradients that are
      // zero up to rounding do not divide by ~0.
      const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      ++result.checked;
    }
  });
  return result;
}

TempDir::TempDir() {
  auto base = std::filesystem::temp_directory_path();
  Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
  for (;;) {
    auto candidate = base / ("pdzseg_test_" + std::to_string(rng.next_u64() % 100000000));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      break;
    }
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace pdzseg::testing
