#include "pdzseg/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "pdzseg/error.hpp"

namespace pdzseg {

namespace {

constexpr std::uint64_t kEncoderInitTag = 0x656e636f646572ULL;

bool is_level(const std::vector<int>& levels, int block_number) {
  return std::find(levels.begin(), levels.end(), block_number) != levels.end();
}

// Cubic convolution kernel with a = -0.75.
double cubic_weight(double t) {
  constexpr double a = -0.75;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

int EncoderConfig::depth_used() const {
  return selected_levels.empty() ? 0 : *std::max_element(selected_levels.begin(), selected_levels.end());
}

void EncoderConfig::validate() const {
  if (patch_size <= 0 || image_size <= 0) throw Error(ErrorKind::kInvalidConfig, "image and patch size must be positive");
  if (image_size % patch_size != 0) {
    throw Error(ErrorKind::kIndivisibleSize, "image_size " + std::to_string(image_size) +
                                                 " is not a multiple of patch_size " + std::to_string(patch_size));
  }
  if (embed_dim <= 0 || num_heads <= 0) throw Error(ErrorKind::kInvalidConfig, "embed_dim and num_heads must be positive");
  if (embed_dim % num_heads != 0) {
    throw Error(ErrorKind::kInvalidConfig, "embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                                               std::to_string(num_heads));
  }
  if (num_blocks < 1) throw Error(ErrorKind::kInvalidConfig, "num_blocks must be >= 1");
  if (mlp_ratio < 1) throw Error(ErrorKind::kInvalidConfig, "mlp_ratio must be >= 1");
  if (selected_levels.empty()) throw Error(ErrorKind::kInvalidConfig, "selected_levels is empty");
  for (std::size_t i = 0; i < selected_levels.size(); ++i) {
    const int m = selected_levels[i];
    if (m < 1 || m > num_blocks) {
      throw Error(ErrorKind::kInvalidConfig, "selected level " + std::to_string(m) + " outside 1.." +
                                                 std::to_string(num_blocks));
    }
    if (i > 0 && m <= selected_levels[i - 1]) throw Error(ErrorKind::kInvalidConfig, "selected_levels must increase");
  }
  for (float s : pixel_std) {
    if (!(s > 0.0f)) throw Error(ErrorKind::kInvalidConfig, "pixel_std must be positive");
  }
  if (pos_embed_init == PosEmbedInit::kSinCos && embed_dim % 4 != 0) {
    throw Error(ErrorKind::kInvalidConfig, "sin-cos positional table needs embed_dim divisible by 4");
  }
}

// ---- attention ----------------------------------------------------------

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(int dim, int heads)
    : query(dim, dim), key(dim, dim), value(dim, dim), proj(dim, dim), num_heads(heads) {}

template <typename T>
Mat<T> MultiHeadAttention<T>::forward(const Mat<T>& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = query.base.out_features();
  const Eigen::Index dh = dim / num_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  typename LoraLinear<T>::Cache qc;
  typename LoraLinear<T>::Cache vc;
  Mat<T> q = query.forward(x, &qc);
  Mat<T> k = key.forward(x);
  Mat<T> v = value.forward(x, &vc);

  Mat<T> context(n, dim);
  std::vector<Mat<T>> probs;
  if (cache) probs.reserve(num_heads);
  for (int h = 0; h < num_heads; ++h) {
    Mat<T> p = scale * (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose());
    softmax_rows_inplace(p);
    context.middleCols(h * dh, dh).noalias() = p * v.middleCols(h * dh, dh);
    if (cache) probs.push_back(std::move(p));
  }
  Mat<T> out = proj.forward(context);
  if (cache) {
    cache->input = x;
    cache->query_cache = std::move(qc);
    cache->value_cache = std::move(vc);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

template <typename T>
Mat<T> MultiHeadAttention<T>::backward(const Mat<T>& dy, Cache& c) {
  const Eigen::Index n = c.input.rows();
  const Eigen::Index dim = query.base.out_features();
  const Eigen::Index dh = dim / num_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  const Mat<T> dcontext = proj.backward(c.context, dy, true);
  Mat<T> dq(n, dim);
  Mat<T> dk(n, dim);
  Mat<T> dv(n, dim);
  for (int h = 0; h < num_heads; ++h) {
    const Mat<T>& p = c.probs[h];
    const auto dctx = dcontext.middleCols(h * dh, dh);
    Mat<T> dp = dctx * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * dctx;
    // softmax Jacobian, row-wise: ds = p * (dp - <dp, p>)
    const Eigen::Matrix<T, Eigen::Dynamic, 1> inner = (dp.array() * p.array()).rowwise().sum();
    Mat<T> ds = (p.array() * (dp.colwise() - inner).array()).matrix();
    ds *= scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  Mat<T> dx = query.backward(c.input, dq, c.query_cache);
  dx.noalias() += key.backward(c.input, dk, true);
  dx.noalias() += value.backward(c.input, dv, c.value_cache);
  return dx;
}

template <typename T>
std::vector<Mat<T>> MultiHeadAttention<T>::attention_probs(const Mat<T>& x) const {
  Cache c;
  forward(x, &c);
  return std::move(c.probs);
}

// ---- block --------------------------------------------------------------

template <typename T>
TransformerBlock<T>::TransformerBlock(int dim, int heads, int mlp_ratio)
    : norm1(dim), attn(dim, heads), norm2(dim), fc1(dim, dim * mlp_ratio), fc2(dim * mlp_ratio, dim) {}

template <typename T>
Mat<T> TransformerBlock<T>::forward(const Mat<T>& x, Cache* cache) const {
  if (!cache) {
    Mat<T> h = x + attn.forward(norm1.forward(x, nullptr), nullptr);
    Mat<T> hidden = gelu(fc1.forward(norm2.forward(h, nullptr)));
    h.noalias() += fc2.forward(hidden);
    return h;
  }
  Mat<T> a_in = norm1.forward(x, &cache->norm1_cache);
  Mat<T> h = x + attn.forward(a_in, &cache->attn_cache);
  cache->mlp_in = norm2.forward(h, &cache->norm2_cache);
  cache->hidden_pre = fc1.forward(cache->mlp_in);
  cache->hidden = gelu(cache->hidden_pre);
  h.noalias() += fc2.forward(cache->hidden);
  return h;
}

template <typename T>
Mat<T> TransformerBlock<T>::backward(const Mat<T>& dy, Cache& c) {
  Mat<T> dhidden = gelu_backward(c.hidden_pre, fc2.backward(c.hidden, dy, true));
  Mat<T> dh = dy + norm2.backward(fc1.backward(c.mlp_in, dhidden, true), c.norm2_cache);
  Mat<T> dx = dh + norm1.backward(attn.backward(dh, c.attn_cache), c.norm1_cache);
  return dx;
}

// ---- encoder ------------------------------------------------------------

template <typename T>
VitEncoder<T>::VitEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(seed, kEncoderInitTag));
  const int d = cfg_.embed_dim;
  const int g = cfg_.grid();
  const bool fan_in = cfg_.weight_init == WeightInit::kFanIn;
  auto init_linear = [&](Linear<T>& lin) {
    const double sd = fan_in ? 1.0 / std::sqrt(static_cast<double>(lin.in_features())) : 0.02;
    fill_trunc_normal(lin.weight.value, rng, sd);
  };
  const double embed_sd = fan_in ? 1.0 : 0.02;
  patch_embed_ = Linear<T>(3 * cfg_.patch_size * cfg_.patch_size, d);
  init_linear(patch_embed_);
  cls_token_ = Parameter<T>(1, d);
  fill_trunc_normal(cls_token_.value, rng, embed_sd);
  pos_embed_ = Parameter<T>(1 + g * g, d);
  if (cfg_.pos_embed_init == PosEmbedInit::kSinCos) {
    pos_embed_.value = sincos_position_table<T>(d, g);
  } else {
    fill_trunc_normal(pos_embed_.value, rng, embed_sd);
  }
  blocks_.reserve(cfg_.num_blocks);
  for (int b = 0; b < cfg_.num_blocks; ++b) {
    TransformerBlock<T> blk(d, cfg_.num_heads, cfg_.mlp_ratio);
    for (Linear<T>* lin : {&blk.attn.query.base, &blk.attn.key, &blk.attn.value.base, &blk.attn.proj, &blk.fc1, &blk.fc2}) {
      init_linear(*lin);
    }
    blocks_.push_back(std::move(blk));
  }
}

template <typename T>
Mat<T> VitEncoder<T>::patchify(const ImageTensor& image) const {
  const int p = cfg_.patch_size;
  if (image.height() % p != 0 || image.width() % p != 0) {
    throw Error(ErrorKind::kIndivisibleSize, "image " + std::to_string(image.height()) + "x" +
                                                 std::to_string(image.width()) + " is not a multiple of patch size " +
                                                 std::to_string(p));
  }
  if (image.height() != cfg_.image_size || image.width() != cfg_.image_size) {
    throw Error(ErrorKind::kShapeMismatch, "encoder expects " + std::to_string(cfg_.image_size) + "x" +
                                               std::to_string(cfg_.image_size) + " input");
  }
  const int g = cfg_.grid();
  Mat<T> patches(static_cast<Eigen::Index>(g) * g, 3 * p * p);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      auto row = patches.row(static_cast<Eigen::Index>(gy) * g + gx);
      for (int c = 0; c < 3; ++c) {
        const float mean = cfg_.pixel_mean[c];
        const float inv_std = 1.0f / cfg_.pixel_std[c];
        for (int dy = 0; dy < p; ++dy) {
          for (int dx = 0; dx < p; ++dx) {
            const float v = (image.at(gy * p + dy, gx * p + dx, c) - mean) * inv_std;
            row(c * p * p + dy * p + dx) = static_cast<T>(v);
          }
        }
      }
    }
  }
  return patches;
}

template <typename T>
TokenSequence<T> VitEncoder<T>::patchify_embed(const ImageTensor& image) const {
  const Mat<T> patches = patchify(image);
  const int g = cfg_.grid();
  TokenSequence<T> seq;
  seq.rows = g;
  seq.cols = g;
  seq.tokens.resize(patches.rows() + 1, cfg_.embed_dim);
  seq.tokens.row(0) = cls_token_.value.row(0);
  seq.tokens.bottomRows(patches.rows()) = patch_embed_.forward(patches);
  seq.tokens += pos_embed_.value;
  return seq;
}

template <typename T>
TokenSequence<T> VitEncoder<T>::transformer_block_forward(const TokenSequence<T>& tokens, int block_index) const {
  if (block_index < 0 || block_index >= static_cast<int>(blocks_.size())) {
    throw Error(ErrorKind::kOutOfRange, "block index " + std::to_string(block_index));
  }
  if (tokens.tokens.cols() != cfg_.embed_dim ||
      tokens.tokens.rows() != static_cast<Eigen::Index>(tokens.rows) * tokens.cols + 1) {
    throw Error(ErrorKind::kShapeMismatch, "token sequence does not match encoder width or grid");
  }
  return TokenSequence<T>{blocks_[block_index].forward(tokens.tokens, nullptr), tokens.rows, tokens.cols};
}

template <typename T>
std::vector<TokenSequence<T>> VitEncoder<T>::forward_levels(const ImageTensor& image, Cache* cache) const {
  const Mat<T> patches = patchify(image);
  const int g = cfg_.grid();
  Mat<T> x(patches.rows() + 1, cfg_.embed_dim);
  x.row(0) = cls_token_.value.row(0);
  x.bottomRows(patches.rows()) = patch_embed_.forward(patches);
  x += pos_embed_.value;

  const int depth = cfg_.depth_used();
  std::vector<TokenSequence<T>> levels;
  levels.reserve(cfg_.selected_levels.size());
  if (cache) {
    cache->patches = patches;
    cache->blocks.assign(depth, {});
  }
  for (int b = 0; b < depth; ++b) {
    x = blocks_[b].forward(x, cache ? &cache->blocks[b] : nullptr);
    if (is_level(cfg_.selected_levels, b + 1)) levels.push_back(TokenSequence<T>{x, g, g});
  }
  return levels;
}

template <typename T>
MultiLevelFeatures<T> VitEncoder<T>::extract_multilevel(const ImageTensor& image) const {
  MultiLevelFeatures<T> out;
  for (const auto& seq : forward_levels(image, nullptr)) out.levels.push_back(tokens_to_level(seq));
  return out;
}

template <typename T>
void VitEncoder<T>::backward(const std::vector<Mat<T>>& level_token_grads, Cache& cache) {
  if (level_token_grads.size() != cfg_.selected_levels.size()) {
    throw Error(ErrorKind::kShapeMismatch, "one gradient per selected level expected");
  }
  const bool stem_trainable = patch_embed_.weight.trainable || patch_embed_.bias.trainable || cls_token_.trainable ||
                              pos_embed_.trainable;
  // Lowest block whose parameters need gradients; nothing below it is visited.
  int lowest = stem_trainable ? -1 : cfg_.depth_used();
  if (!stem_trainable) {
    bool found = false;
    for (int b = 0; b < cfg_.depth_used() && !found; ++b) {
      bool any = false;
      auto& blk = blocks_[b];
      for (const Parameter<T>* p : {&blk.norm1.gamma, &blk.norm1.beta, &blk.attn.query.base.weight,
                                    &blk.attn.query.base.bias, &blk.attn.key.weight, &blk.attn.key.bias,
                                    &blk.attn.value.base.weight, &blk.attn.value.base.bias, &blk.attn.proj.weight,
                                    &blk.attn.proj.bias, &blk.norm2.gamma, &blk.norm2.beta, &blk.fc1.weight,
                                    &blk.fc1.bias, &blk.fc2.weight, &blk.fc2.bias}) {
        any = any || p->trainable;
      }
      for (const auto* ad : {&blk.attn.query.adapter, &blk.attn.value.adapter}) {
        if (*ad) any = any || (*ad)->a.trainable || (*ad)->b.trainable;
      }
      if (any) {
        lowest = b;
        found = true;
      }
    }
  }
  if (lowest >= cfg_.depth_used()) return;

  Mat<T> g = Mat<T>::Zero(cache.patches.rows() + 1, cfg_.embed_dim);
  int level = static_cast<int>(cfg_.selected_levels.size()) - 1;
  for (int b = cfg_.depth_used() - 1; b >= std::max(lowest, 0); --b) {
    if (level >= 0 && cfg_.selected_levels[level] == b + 1) {
      g += level_token_grads[level];
      --level;
    }
    g = blocks_[b].backward(g, cache.blocks[b]);
  }
  if (lowest >= 0) return;
  if (cls_token_.trainable) cls_token_.grad.row(0) += g.row(0);
  if (pos_embed_.trainable) pos_embed_.grad += g;
  patch_embed_.backward(cache.patches, g.bottomRows(cache.patches.rows()), false);
}

template <typename T>
void VitEncoder<T>::inject_lora(const LoRAConfig& cfg, std::uint64_t seed) {
  if (lora_) throw Error(ErrorKind::kAlreadyAdapted, "encoder already carries LoRA adapters");
  cfg.validate();
  Rng rng(mix_seed(seed, 0x6c6f7261ULL));
  const T scale = static_cast<T>(cfg.scale());
  for_each_parameter([](const std::string&, Parameter<T>& p) { p.trainable = false; });
  for (auto& blk : blocks_) {
    if (cfg.adapt_query) blk.attn.query.attach(cfg.rank, scale, rng);
    if (cfg.adapt_value) blk.attn.value.attach(cfg.rank, scale, rng);
  }
  lora_ = cfg;
}

template <typename T>
void VitEncoder<T>::for_each_parameter(const ParameterVisitor<T>& visit) {
  visit("patch_embed.weight", patch_embed_.weight);
  visit("patch_embed.bias", patch_embed_.bias);
  visit("cls_token", cls_token_);
  visit("pos_embed", pos_embed_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& blk = blocks_[b];
    const std::string pre = "blocks." + std::to_string(b) + ".";
    auto linear = [&](const std::string& name, Linear<T>& lin) {
      visit(pre + name + ".weight", lin.weight);
      visit(pre + name + ".bias", lin.bias);
    };
    auto lora = [&](const std::string& name, LoraLinear<T>& lin) {
      linear(name, lin.base);
      if (lin.adapter) {
        visit(pre + name + ".lora_A", lin.adapter->a);
        visit(pre + name + ".lora_B", lin.adapter->b);
      }
    };
    visit(pre + "norm1.weight", blk.norm1.gamma);
    visit(pre + "norm1.bias", blk.norm1.beta);
    lora("attn.q", blk.attn.query);
    linear("attn.k", blk.attn.key);
    lora("attn.v", blk.attn.value);
    linear("attn.proj", blk.attn.proj);
    visit(pre + "norm2.weight", blk.norm2.gamma);
    visit(pre + "norm2.bias", blk.norm2.beta);
    linear("mlp.fc1", blk.fc1);
    linear("mlp.fc2", blk.fc2);
  }
}

template <typename T>
bool VitEncoder<T>::has_trainable() {
  bool any = false;
  for_each_parameter([&](const std::string&, Parameter<T>& p) { any = any || p.trainable; });
  return any;
}

// ---- helpers --------------------------------------------------------------

template <typename T>
FeatureMap<T> tokens_to_level(const TokenSequence<T>& seq) {
  const Eigen::Index n = static_cast<Eigen::Index>(seq.rows) * seq.cols;
  const Eigen::Index d = seq.tokens.cols();
  FeatureMap<T> map{seq.rows, seq.cols, Mat<T>(n, 2 * d)};
  map.data.leftCols(d) = seq.tokens.bottomRows(n);
  map.data.rightCols(d) = seq.tokens.row(0).replicate(n, 1);
  return resize_feature_map(map, seq.rows * kFeatureUpsample, seq.cols * kFeatureUpsample);
}

template <typename T>
Mat<T> tokens_to_level_backward(const FeatureMap<T>& grad, int rows, int cols) {
  const FeatureMap<T> g = resize_feature_map_backward(grad, rows, cols);
  const Eigen::Index d = g.data.cols() / 2;
  Mat<T> out(g.data.rows() + 1, d);
  out.row(0) = g.data.rightCols(d).colwise().sum();
  out.bottomRows(g.data.rows()) = g.data.leftCols(d);
  return out;
}

template <typename T>
Mat<T> sincos_position_table(int dim, int grid) {
  const int half = dim / 2;     // channels per axis
  const int quarter = half / 2;  // frequencies per axis
  Mat<T> table = Mat<T>::Zero(1 + static_cast<Eigen::Index>(grid) * grid, dim);
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      auto row = table.row(1 + static_cast<Eigen::Index>(y) * grid + x);
      for (int i = 0; i < quarter; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
        row(i) = static_cast<T>(std::sin(y * omega));
        row(quarter + i) = static_cast<T>(std::cos(y * omega));
        row(half + i) = static_cast<T>(std::sin(x * omega));
        row(half + quarter + i) = static_cast<T>(std::cos(x * omega));
      }
    }
  }
  return table;
}

template <typename T>
Mat<T> interpolate_pos_embed(const Mat<T>& table, int new_grid) {
  const Eigen::Index n = table.rows() - 1;
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (static_cast<Eigen::Index>(g) * g != n) throw Error(ErrorKind::kShapeMismatch, "positional table is not square");
  if (new_grid < 1) throw Error(ErrorKind::kOutOfRange, "target grid must be positive");
  if (g == new_grid) return table;

  struct Tap {
    int idx[4];
    double w[4];
  };
  auto taps = [&](int out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(g) / out;
    for (int i = 0; i < out; ++i) {
      const double src = (i + 0.5) * ratio - 0.5;
      const int base = static_cast<int>(std::floor(src));
      const double frac = src - base;
      for (int k = 0; k < 4; ++k) {
        t[i].idx[k] = std::clamp(base - 1 + k, 0, g - 1);
        t[i].w[k] = cubic_weight(frac - (k - 1));
      }
    }
    return t;
  };
  const auto ty = taps(new_grid);
  const auto tx = taps(new_grid);
  const Eigen::Index d = table.cols();
  Mat<T> out(1 + static_cast<Eigen::Index>(new_grid) * new_grid, d);
  out.row(0) = table.row(0);
  // separable: columns first, then rows
  Mat<T> horiz(static_cast<Eigen::Index>(g) * new_grid, d);
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < new_grid; ++x) {
      auto dst = horiz.row(static_cast<Eigen::Index>(y) * new_grid + x);
      dst.setZero();
      for (int k = 0; k < 4; ++k) {
        dst += static_cast<T>(tx[x].w[k]) * table.row(1 + static_cast<Eigen::Index>(y) * g + tx[x].idx[k]);
      }
    }
  }
  for (int y = 0; y < new_grid; ++y) {
    for (int x = 0; x < new_grid; ++x) {
      auto dst = out.row(1 + static_cast<Eigen::Index>(y) * new_grid + x);
      dst.setZero();
      for (int k = 0; k < 4; ++k) {
        dst += static_cast<T>(ty[y].w[k]) * horiz.row(static_cast<Eigen::Index>(ty[y].idx[k]) * new_grid + x);
      }
    }
  }
  return out;
}

#define PDZSEG_INSTANTIATE_ENCODER(T)                                                  \
  template struct MultiHeadAttention<T>;                                               \
  template struct TransformerBlock<T>;                                                 \
  template class VitEncoder<T>;                                                        \
  template FeatureMap<T> tokens_to_level<T>(const TokenSequence<T>&);                  \
  template Mat<T> tokens_to_level_backward<T>(const FeatureMap<T>&, int, int);         \
  template Mat<T> sincos_position_table<T>(int, int);                                  \
  template Mat<T> interpolate_pos_embed<T>(const Mat<T>&, int);

PDZSEG_INSTANTIATE_ENCODER(float)
PDZSEG_INSTANTIATE_ENCODER(double)

#undef PDZSEG_INSTANTIATE_ENCODER

}  // namespace pdzseg
