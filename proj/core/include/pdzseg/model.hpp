#pragma once

#include <cstdint>
#include <optional>

#include "pdzseg/decoder.hpp"
#include "pdzseg/encoder.hpp"
#include "pdzseg/lora.hpp"

namespace pdzseg {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::optional<LoRAConfig> lora = LoRAConfig{};
  // Without adapters, train the full encoder instead of freezing it.
  bool train_encoder_without_lora = false;

  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Encoder + decoder. Input images must already be at encoder resolution.
template <typename T>
class SegModel {
 public:
  SegModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  FeatureMap<T> forward(const ImageTensor& image) const;
  ClassMask predict(const ImageTensor& image) const;

  // Forward + backward of the pixel-mean cross-entropy. Gradients scaled by
  // `weight` are added to every trainable parameter. Returns the loss.
  T accumulate_gradients(const ImageTensor& image, const ClassMask& target, T weight);

  // Names are prefixed "encoder." / "decoder.".
  void for_each_parameter(const ParameterVisitor<T>& visit);

  void zero_grad();
  std::size_t trainable_parameter_count();
  std::size_t trainable_encoder_parameter_count();

  VitEncoder<T>& encoder() { return encoder_; }
  const VitEncoder<T>& encoder() const { return encoder_; }
  MlpDecoder<T>& decoder() { return decoder_; }
  const MlpDecoder<T>& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  VitEncoder<T> encoder_;
  MlpDecoder<T> decoder_;
};

}  // namespace pdzseg
