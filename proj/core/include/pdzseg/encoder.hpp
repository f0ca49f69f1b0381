#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pdzseg/image.hpp"
#include "pdzseg/layers.hpp"
#include "pdzseg/lora.hpp"

namespace pdzseg {

inline constexpr int kFeatureUpsample = 4;

enum class PosEmbedInit { kRandom, kSinCos };

// Random encoder weights when no pretrained checkpoint is loaded.
// kTruncNormal: std 0.02 everywhere. kFanIn: std 1/sqrt(fan_in) for linear
// layers and std 1 for random class and position embeddings, which keeps
// narrow encoders from collapsing to the identity.
enum class WeightInit { kTruncNormal, kFanIn };

struct EncoderConfig {
  int image_size = 532;
  int patch_size = 14;
  int embed_dim = 768;
  int num_blocks = 12;
  int num_heads = 12;
  std::vector<int> selected_levels = {3, 6, 9, 12};  // 1-based block indices
  int mlp_ratio = 4;
  std::array<float, 3> pixel_mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> pixel_std = {0.229f, 0.224f, 0.225f};
  PosEmbedInit pos_embed_init = PosEmbedInit::kRandom;
  WeightInit weight_init = WeightInit::kTruncNormal;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int feature_size() const { return grid() * kFeatureUpsample; }
  int head_dim() const { return embed_dim / num_heads; }
  // Highest selected block; later blocks never affect the output.
  int depth_used() const;

  // Throws kInvalidConfig (or kIndivisibleSize for image/patch sizes).
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
struct TokenSequence {
  Mat<T> tokens;  // (1 + N) x D, class token first
  int rows = 0;   // patch grid rows
  int cols = 0;   // patch grid cols
};

template <typename T>
struct MultiLevelFeatures {
  std::vector<FeatureMap<T>> levels;  // each (4g x 4g) x 2D: patch channels then class-token channels
};

template <typename T>
struct MultiHeadAttention {
  LoraLinear<T> query;
  Linear<T> key;
  LoraLinear<T> value;
  Linear<T> proj;
  int num_heads = 1;

  struct Cache {
    Mat<T> input;
    typename LoraLinear<T>::Cache query_cache;
    typename LoraLinear<T>::Cache value_cache;
    Mat<T> q;
    Mat<T> k;
    Mat<T> v;
    std::vector<Mat<T>> probs;  // per head, tokens x tokens
    Mat<T> context;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int heads);

  Mat<T> forward(const Mat<T>& x, Cache* cache) const;
  Mat<T> backward(const Mat<T>& dy, Cache& cache);

  // Row-stochastic attention matrices for each head (diagnostics/tests).
  std::vector<Mat<T>> attention_probs(const Mat<T>& x) const;
};

// Pre-norm block: x + attn(ln1(x)), then h + mlp(ln2(h)).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> norm1;
  MultiHeadAttention<T> attn;
  LayerNorm<T> norm2;
  Linear<T> fc1;
  Linear<T> fc2;

  struct Cache {
    typename LayerNorm<T>::Cache norm1_cache;
    typename MultiHeadAttention<T>::Cache attn_cache;
    typename LayerNorm<T>::Cache norm2_cache;
    Mat<T> mlp_in;
    Mat<T> hidden_pre;
    Mat<T> hidden;
  };

  TransformerBlock() = default;
  TransformerBlock(int dim, int heads, int mlp_ratio);

  Mat<T> forward(const Mat<T>& x, Cache* cache) const;
  Mat<T> backward(const Mat<T>& dy, Cache& cache);
};

template <typename T>
using ParameterVisitor = std::function<void(const std::string&, Parameter<T>&)>;

template <typename T>
class VitEncoder {
 public:
  struct Cache {
    Mat<T> patches;
    std::vector<typename TransformerBlock<T>::Cache> blocks;
  };

  VitEncoder(const EncoderConfig& cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }

  // Image -> class token + N patch tokens with positional embeddings added.
  // Throws kIndivisibleSize when the side is not a multiple of the patch.
  TokenSequence<T> patchify_embed(const ImageTensor& image) const;

  // One transformer block (0-based index).
  TokenSequence<T> transformer_block_forward(const TokenSequence<T>& tokens, int block_index) const;

  // Token sequences after each selected block.
  std::vector<TokenSequence<T>> forward_levels(const ImageTensor& image, Cache* cache) const;

  MultiLevelFeatures<T> extract_multilevel(const ImageTensor& image) const;

  // Backprop of level-token gradients into trainable parameters.
  void backward(const std::vector<Mat<T>>& level_token_grads, Cache& cache);

  void inject_lora(const LoRAConfig& cfg, std::uint64_t seed);
  bool adapted() const { return lora_.has_value(); }
  const std::optional<LoRAConfig>& lora_config() const { return lora_; }

  // Visits every parameter with a stable dotted name.
  void for_each_parameter(const ParameterVisitor<T>& visit);

  bool has_trainable();

  Linear<T>& patch_embed() { return patch_embed_; }
  Parameter<T>& cls_token() { return cls_token_; }
  Parameter<T>& pos_embed() { return pos_embed_; }
  std::vector<TransformerBlock<T>>& blocks() { return blocks_; }
  const std::vector<TransformerBlock<T>>& blocks() const { return blocks_; }

 private:
  Mat<T> patchify(const ImageTensor& image) const;

  EncoderConfig cfg_;
  Linear<T> patch_embed_;
  Parameter<T> cls_token_;
  Parameter<T> pos_embed_;
  std::vector<TransformerBlock<T>> blocks_;
  std::optional<LoRAConfig> lora_;
};

// Reshape a token sequence into a (rows x cols) x 2D map of patch tokens
// concatenated with the broadcast class token, then bilinearly upsample x4.
template <typename T>
FeatureMap<T> tokens_to_level(const TokenSequence<T>& seq);
template <typename T>
Mat<T> tokens_to_level_backward(const FeatureMap<T>& grad, int rows, int cols);

// Fixed 2-D sine/cosine table, (1 + g*g) x dim with a zero class-token row.
template <typename T>
Mat<T> sincos_position_table(int dim, int grid);

// Bicubic resampling of a (1 + g*g) x D positional table to a new grid,
// class-token row preserved.
template <typename T>
Mat<T> interpolate_pos_embed(const Mat<T>& table, int new_grid);

}  // namespace pdzseg
