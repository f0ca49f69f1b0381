#pragma once

#include <cstdint>
#include <optional>

#include "pdzseg/layers.hpp"

namespace pdzseg {

struct LoRAConfig {
  int rank = 4;
  double alpha = 4.0;  // scale = alpha / rank; alpha == rank reproduces Q = Wq x + Bq Aq x
  bool adapt_query = true;
  bool adapt_value = true;

  double scale() const { return alpha / rank; }
  // rank >= 1, alpha > 0, at least one target (kInvalidConfig).
  void validate() const;

  bool operator==(const LoRAConfig&) const = default;
};

// A: rank x in (down-projection), B: out x rank (up-projection, zero-initialised).
template <typename T>
struct LoRAPair {
  Parameter<T> a;
  Parameter<T> b;
};

// A frozen linear projection with an optional low-rank adapter:
// y = x W^T + b + scale * (x A^T) B^T.
template <typename T>
struct LoraLinear {
  Linear<T> base;
  std::optional<LoRAPair<T>> adapter;
  T scale = T(1);

  struct Cache {
    Mat<T> down;  // x A^T
  };

  LoraLinear() = default;
  LoraLinear(int in_features, int out_features) : base(in_features, out_features) {}

  Mat<T> forward(const Mat<T>& x, Cache* cache) const;
  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy, const Cache& cache);

  // Adds a fresh adapter: A ~ N(0, 0.02^2), B = 0. Throws kAlreadyAdapted.
  void attach(int rank, T adapter_scale, Rng& rng);
};

// base(x) + (alpha / rank) * B (A x) for a row-per-token x.
template <typename T>
Mat<T> lora_linear_forward(const Mat<T>& x, const Linear<T>& base, const LoRAPair<T>& pair, const LoRAConfig& cfg);

// Trainable adapter parameters for a ViT of the given width and depth.
std::size_t lora_parameter_count(const LoRAConfig& cfg, int embed_dim, int num_blocks);

}  // namespace pdzseg
