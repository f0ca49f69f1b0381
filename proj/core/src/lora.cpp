#include "pdzseg/lora.hpp"

#include "pdzseg/error.hpp"

namespace pdzseg {

void LoRAConfig::validate() const {
  if (rank < 1) throw Error(ErrorKind::kInvalidConfig, "lora rank must be >= 1");
  if (!(alpha > 0.0)) throw Error(ErrorKind::kInvalidConfig, "lora alpha must be positive");
  if (!adapt_query && !adapt_value) throw Error(ErrorKind::kInvalidConfig, "lora must adapt query or value");
}

template <typename T>
Mat<T> LoraLinear<T>::forward(const Mat<T>& x, Cache* cache) const {
  Mat<T> y = base.forward(x);
  if (adapter) {
    Mat<T> down = x * adapter->a.value.transpose();
    y.noalias() += scale * (down * adapter->b.value.transpose());
    if (cache) cache->down = std::move(down);
  }
  return y;
}

template <typename T>
Mat<T> LoraLinear<T>::backward(const Mat<T>& x, const Mat<T>& dy, const Cache& cache) {
  Mat<T> dx = base.backward(x, dy, true);
  if (adapter) {
    LoRAPair<T>& p = *adapter;
    // y_adapter = scale * down B^T, down = x A^T
    Mat<T> ddown = scale * (dy * p.b.value);
    if (p.b.trainable) p.b.grad.noalias() += scale * (dy.transpose() * cache.down);
    if (p.a.trainable) p.a.grad.noalias() += ddown.transpose() * x;
    dx.noalias() += ddown * p.a.value;
  }
  return dx;
}

template <typename T>
void LoraLinear<T>::attach(int rank, T adapter_scale, Rng& rng) {
  if (adapter) throw Error(ErrorKind::kAlreadyAdapted, "projection already carries an adapter");
  LoRAPair<T> pair{Parameter<T>(rank, base.in_features()), Parameter<T>(base.out_features(), rank)};
  fill_normal(pair.a.value, rng, 0.02);
  adapter = std::move(pair);
  scale = adapter_scale;
}

template <typename T>
Mat<T> lora_linear_forward(const Mat<T>& x, const Linear<T>& base, const LoRAPair<T>& pair, const LoRAConfig& cfg) {
  const T s = static_cast<T>(cfg.scale());
  Mat<T> y = base.forward(x);
  y.noalias() += s * ((x * pair.a.value.transpose()) * pair.b.value.transpose());
  return y;
}

std::size_t lora_parameter_count(const LoRAConfig& cfg, int embed_dim, int num_blocks) {
  const std::size_t per_projection = 2u * static_cast<std::size_t>(cfg.rank) * embed_dim;
  const std::size_t projections = (cfg.adapt_query ? 1u : 0u) + (cfg.adapt_value ? 1u : 0u);
  return per_projection * projections * static_cast<std::size_t>(num_blocks);
}

template struct LoraLinear<float>;
template struct LoraLinear<double>;
template Mat<float> lora_linear_forward<float>(const Mat<float>&, const Linear<float>&, const LoRAPair<float>&,
                                               const LoRAConfig&);
template Mat<double> lora_linear_forward<double>(const Mat<double>&, const Linear<double>&, const LoRAPair<double>&,
                                                 const LoRAConfig&);

}  // namespace pdzseg
