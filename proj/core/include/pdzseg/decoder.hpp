#pragma once

#include <cstdint>
#include <vector>

#include "pdzseg/encoder.hpp"
#include "pdzseg/layers.hpp"

namespace pdzseg {

enum class FuseResolution { kInputResolution, kQuarterThenUpsample };

struct DecoderConfig {
  int unified_channels = 256;
  int num_classes = 2;
  FuseResolution fuse_resolution = FuseResolution::kInputResolution;
  bool fuse_activation = false;  // ReLU after the fusion layer

  void validate() const;

  bool operator==(const DecoderConfig&) const = default;
};

template <typename T>
class MlpDecoder {
 public:
  struct Cache {
    std::vector<FeatureMap<T>> levels;     // decoder inputs
    std::vector<FeatureMap<T>> projected;  // at level resolution
    Mat<T> concat;                         // at fusion resolution
    Mat<T> fused_pre;
    Mat<T> fused;
    int fuse_height = 0;
    int fuse_width = 0;
  };

  MlpDecoder(const DecoderConfig& cfg, int num_levels, int in_channels, std::uint64_t seed);

  const DecoderConfig& config() const { return cfg_; }
  int num_levels() const { return static_cast<int>(proj_.size()); }
  int in_channels() const { return proj_.empty() ? 0 : proj_.front().in_features(); }

  // Per-pixel linear map of one level to unified_channels.
  FeatureMap<T> project_level(const FeatureMap<T>& level, int index) const;

  // Logits map of size out_height x out_width x num_classes.
  // Throws kEmptyFeatures when no levels are given.
  FeatureMap<T> predict_logits(const MultiLevelFeatures<T>& features, int out_height, int out_width,
                               Cache* cache = nullptr) const;

  // Accumulates parameter gradients; returns feature gradients when requested.
  MultiLevelFeatures<T> backward(const FeatureMap<T>& dlogits, Cache& cache, bool need_feature_grad);

  void for_each_parameter(const ParameterVisitor<T>& visit);

  std::vector<Linear<T>>& projections() { return proj_; }
  Linear<T>& fuse() { return fuse_; }
  Linear<T>& head() { return head_; }

 private:
  FeatureMap<T> forward_chunked(const std::vector<FeatureMap<T>>& projected, int out_height, int out_width) const;

  DecoderConfig cfg_;
  std::vector<Linear<T>> proj_;
  Linear<T> fuse_;
  Linear<T> head_;
};

}  // namespace pdzseg
