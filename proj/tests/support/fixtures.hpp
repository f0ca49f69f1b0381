#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pdzseg/image.hpp"
#include "pdzseg/model.hpp"

namespace pdzseg::testing {

ImageTensor random_image(int height, int width, std::uint64_t seed);
// Independent Bernoulli(p) labels.
ClassMask random_mask(int height, int width, std::uint64_t seed, double p = 0.5);
// 4-connected region grown pixel by pixel from a random seed, holes filled.
ClassMask grown_mask(int height, int width, int target_pixels, std::uint64_t seed);
// Union of one to three overlapping rotated ellipses; a single component.
ClassMask blob_mask(int size, std::uint64_t seed);

// 16 px input, patch 4, width 8, two blocks of two heads, 16 decoder channels.
ModelConfig tiny_model_config();

// Fills every LoRA B matrix with N(0, stddev) so adapter gradients are non-trivial.
template <typename T>
void randomize_adapters(SegModel<T>& model, std::uint64_t seed, double stddev = 0.1);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};
// Central differences on every trainable scalar of the model against the
// analytic gradient of the pixel-mean cross-entropy. Rounding in the loss
// dominates below step ~1e-4 (error grows as 1/step); truncation stays
// negligible up to 1e-3.
GradCheckResult check_gradients(SegModel<double>& model, const ImageTensor& image, const ClassMask& mask,
                                double step = 1e-4);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pdzseg::testing
