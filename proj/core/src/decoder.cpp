#include "pdzseg/decoder.hpp"

#include <algorithm>

#include "pdzseg/error.hpp"
#include "pdzseg/resample.hpp"

namespace pdzseg {

namespace {

constexpr std::uint64_t kDecoderInitTag = 0x6465636f646572ULL;
constexpr int kChunkRows = 32;

// Rows [y0, y1) of the bilinear resize of `in` to height x width.
template <typename T>
Mat<T> resize_rows(const FeatureMap<T>& in, const std::vector<LinearTap>& ty, const std::vector<LinearTap>& tx,
                   int y0, int y1) {
  const int width = static_cast<int>(tx.size());
  Mat<T> out(static_cast<Eigen::Index>(y1 - y0) * width, in.data.cols());
  for (int y = y0; y < y1; ++y) {
    const auto& ay = ty[y];
    const T wy = static_cast<T>(ay.weight);
    for (int x = 0; x < width; ++x) {
      const auto& ax = tx[x];
      const T wx = static_cast<T>(ax.weight);
      out.row(static_cast<Eigen::Index>(y - y0) * width + x) =
          (T(1) - wy) * ((T(1) - wx) * in.data.row(static_cast<Eigen::Index>(ay.lo) * in.width + ax.lo) +
                         wx * in.data.row(static_cast<Eigen::Index>(ay.lo) * in.width + ax.hi)) +
          wy * ((T(1) - wx) * in.data.row(static_cast<Eigen::Index>(ay.hi) * in.width + ax.lo) +
                wx * in.data.row(static_cast<Eigen::Index>(ay.hi) * in.width + ax.hi));
    }
  }
  return out;
}

}  // namespace

void DecoderConfig::validate() const {
  if (unified_channels < 1) throw Error(ErrorKind::kInvalidConfig, "unified_channels must be >= 1");
  if (num_classes < 2) throw Error(ErrorKind::kInvalidConfig, "num_classes must be >= 2");
}

template <typename T>
MlpDecoder<T>::MlpDecoder(const DecoderConfig& cfg, int num_levels, int in_channels, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  if (num_levels < 1) throw Error(ErrorKind::kEmptyFeatures, "decoder needs at least one level");
  if (in_channels < 1) throw Error(ErrorKind::kInvalidConfig, "decoder input channels must be positive");
  Rng rng(mix_seed(seed, kDecoderInitTag));
  const int u = cfg_.unified_channels;
  for (int l = 0; l < num_levels; ++l) {
    proj_.emplace_back(in_channels, u);
    fill_normal(proj_.back().weight.value, rng, 0.02);
  }
  fuse_ = Linear<T>(num_levels * u, u);
  fill_normal(fuse_.weight.value, rng, 0.02);
  head_ = Linear<T>(u, cfg_.num_classes);
  fill_normal(head_.weight.value, rng, 0.02);
}

template <typename T>
FeatureMap<T> MlpDecoder<T>::project_level(const FeatureMap<T>& level, int index) const {
  if (index < 0 || index >= num_levels()) throw Error(ErrorKind::kOutOfRange, "decoder level index");
  if (level.channels() != in_channels()) {
    throw Error(ErrorKind::kShapeMismatch, "level has " + std::to_string(level.channels()) + " channels, decoder expects " +
                                               std::to_string(in_channels()));
  }
  return FeatureMap<T>{level.height, level.width, proj_[index].forward(level.data)};
}

template <typename T>
FeatureMap<T> MlpDecoder<T>::forward_chunked(const std::vector<FeatureMap<T>>& projected, int out_height,
                                             int out_width) const {
  const int h = projected.front().height;
  const int w = projected.front().width;
  const auto ty = linear_taps(h, out_height);
  const auto tx = linear_taps(w, out_width);
  const Eigen::Index u = cfg_.unified_channels;
  FeatureMap<T> logits{out_height, out_width,
                       Mat<T>(static_cast<Eigen::Index>(out_height) * out_width, cfg_.num_classes)};
  for (int y0 = 0; y0 < out_height; y0 += kChunkRows) {
    const int y1 = std::min(out_height, y0 + kChunkRows);
    Mat<T> concat(static_cast<Eigen::Index>(y1 - y0) * out_width, u * num_levels());
    for (int l = 0; l < num_levels(); ++l) concat.middleCols(l * u, u) = resize_rows(projected[l], ty, tx, y0, y1);
    Mat<T> fused = fuse_.forward(concat);
    if (cfg_.fuse_activation) fused = fused.cwiseMax(T(0));
    logits.data.middleRows(static_cast<Eigen::Index>(y0) * out_width, concat.rows()) = head_.forward(fused);
  }
  return logits;
}

template <typename T>
FeatureMap<T> MlpDecoder<T>::predict_logits(const MultiLevelFeatures<T>& features, int out_height, int out_width,
                                            Cache* cache) const {
  if (features.levels.empty()) throw Error(ErrorKind::kEmptyFeatures, "no feature levels supplied");
  if (static_cast<int>(features.levels.size()) != num_levels()) {
    throw Error(ErrorKind::kShapeMismatch, "decoder built for " + std::to_string(num_levels()) + " levels, got " +
                                               std::to_string(features.levels.size()));
  }
  const int h = features.levels.front().height;
  const int w = features.levels.front().width;
  for (const auto& lv : features.levels) {
    if (lv.height != h || lv.width != w) throw Error(ErrorKind::kShapeMismatch, "feature levels differ in size");
  }
  if (out_height < 1 || out_width < 1) throw Error(ErrorKind::kOutOfRange, "output size must be positive");

  std::vector<FeatureMap<T>> projected;
  projected.reserve(features.levels.size());
  for (int l = 0; l < num_levels(); ++l) projected.push_back(project_level(features.levels[l], l));

  const bool quarter = cfg_.fuse_resolution == FuseResolution::kQuarterThenUpsample;
  if (!cache) {
    if (!quarter) return forward_chunked(projected, out_height, out_width);
    FeatureMap<T> small = forward_chunked(projected, h, w);
    return resize_feature_map(small, out_height, out_width);
  }

  const int fh = quarter ? h : out_height;
  const int fw = quarter ? w : out_width;
  const Eigen::Index u = cfg_.unified_channels;
  cache->concat.resize(static_cast<Eigen::Index>(fh) * fw, u * num_levels());
  for (int l = 0; l < num_levels(); ++l) {
    cache->concat.middleCols(l * u, u) = resize_feature_map(projected[l], fh, fw).data;
  }
  cache->fused_pre = fuse_.forward(cache->concat);
  cache->fused = cfg_.fuse_activation ? Mat<T>(cache->fused_pre.cwiseMax(T(0))) : cache->fused_pre;
  FeatureMap<T> logits{fh, fw, head_.forward(cache->fused)};
  cache->levels = features.levels;
  cache->projected = std::move(projected);
  cache->fuse_height = fh;
  cache->fuse_width = fw;
  if (quarter) return resize_feature_map(logits, out_height, out_width);
  return logits;
}

template <typename T>
MultiLevelFeatures<T> MlpDecoder<T>::backward(const FeatureMap<T>& dlogits, Cache& c, bool need_feature_grad) {
  const FeatureMap<T> dl = resize_feature_map_backward(dlogits, c.fuse_height, c.fuse_width);
  Mat<T> dfused = head_.backward(c.fused, dl.data, true);
  if (cfg_.fuse_activation) dfused = (c.fused_pre.array() > T(0)).select(dfused, T(0));
  const Mat<T> dconcat = fuse_.backward(c.concat, dfused, true);
  const Eigen::Index u = cfg_.unified_channels;
  MultiLevelFeatures<T> grads;
  for (int l = 0; l < num_levels(); ++l) {
    FeatureMap<T> dresized{c.fuse_height, c.fuse_width, dconcat.middleCols(l * u, u)};
    const FeatureMap<T> dproj = resize_feature_map_backward(dresized, c.projected[l].height, c.projected[l].width);
    Mat<T> dlevel = proj_[l].backward(c.levels[l].data, dproj.data, need_feature_grad);
    if (need_feature_grad) grads.levels.push_back(FeatureMap<T>{c.levels[l].height, c.levels[l].width, std::move(dlevel)});
  }
  return grads;
}

template <typename T>
void MlpDecoder<T>::for_each_parameter(const ParameterVisitor<T>& visit) {
  for (int l = 0; l < num_levels(); ++l) {
    visit("proj." + std::to_string(l) + ".weight", proj_[l].weight);
    visit("proj." + std::to_string(l) + ".bias", proj_[l].bias);
  }
  visit("fuse.weight", fuse_.weight);
  visit("fuse.bias", fuse_.bias);
  visit("head.weight", head_.weight);
  visit("head.bias", head_.bias);
}

template class MlpDecoder<float>;
template class MlpDecoder<double>;

}  // namespace pdzseg
