#include "pdzseg/model.hpp"

#include "pdzseg/error.hpp"
#include "pdzseg/loss.hpp"

namespace pdzseg {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (lora) lora->validate();
}

template <typename T>
SegModel<T>::SegModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      encoder_(cfg.encoder, seed),
      decoder_(cfg.decoder, static_cast<int>(cfg.encoder.selected_levels.size()), 2 * cfg.encoder.embed_dim, seed) {
  cfg_.validate();
  if (cfg_.lora) {
    encoder_.inject_lora(*cfg_.lora, seed);
  } else if (!cfg_.train_encoder_without_lora) {
    encoder_.for_each_parameter([](const std::string&, Parameter<T>& p) { p.trainable = false; });
  }
}

template <typename T>
FeatureMap<T> SegModel<T>::forward(const ImageTensor& image) const {
  return decoder_.predict_logits(encoder_.extract_multilevel(image), image.height(), image.width());
}

template <typename T>
ClassMask SegModel<T>::predict(const ImageTensor& image) const {
  return argmax_mask(forward(image));
}

template <typename T>
T SegModel<T>::accumulate_gradients(const ImageTensor& image, const ClassMask& target, T weight) {
  if (target.height() != image.height() || target.width() != image.width()) {
    throw Error(ErrorKind::kShapeMismatch, "mask and image sizes differ");
  }
  const bool encoder_grads = encoder_.has_trainable();
  typename VitEncoder<T>::Cache enc_cache;
  const auto seqs = encoder_.forward_levels(image, encoder_grads ? &enc_cache : nullptr);
  MultiLevelFeatures<T> features;
  for (const auto& s : seqs) features.levels.push_back(tokens_to_level(s));

  typename MlpDecoder<T>::Cache dec_cache;
  const FeatureMap<T> logits = decoder_.predict_logits(features, image.height(), image.width(), &dec_cache);
  FeatureMap<T> dlogits;
  const T loss = ce_loss_with_grad(logits, target, dlogits);
  dlogits.data *= weight;

  const MultiLevelFeatures<T> dfeat = decoder_.backward(dlogits, dec_cache, encoder_grads);
  if (encoder_grads) {
    std::vector<Mat<T>> token_grads;
    token_grads.reserve(dfeat.levels.size());
    for (std::size_t l = 0; l < dfeat.levels.size(); ++l) {
      token_grads.push_back(tokens_to_level_backward(dfeat.levels[l], seqs[l].rows, seqs[l].cols));
    }
    encoder_.backward(token_grads, enc_cache);
  }
  return loss;
}

template <typename T>
void SegModel<T>::for_each_parameter(const ParameterVisitor<T>& visit) {
  encoder_.for_each_parameter([&](const std::string& name, Parameter<T>& p) { visit("encoder." + name, p); });
  decoder_.for_each_parameter([&](const std::string& name, Parameter<T>& p) { visit("decoder." + name, p); });
}

template <typename T>
void SegModel<T>::zero_grad() {
  for_each_parameter([](const std::string&, Parameter<T>& p) {
    if (p.trainable) p.zero_grad();
  });
}

template <typename T>
std::size_t SegModel<T>::trainable_parameter_count() {
  std::size_t n = 0;
  for_each_parameter([&](const std::string&, Parameter<T>& p) {
    if (p.trainable) n += p.size();
  });
  return n;
}

template <typename T>
std::size_t SegModel<T>::trainable_encoder_parameter_count() {
  std::size_t n = 0;
  encoder_.for_each_parameter([&](const std::string&, Parameter<T>& p) {
    if (p.trainable) n += p.size();
  });
  return n;
}

template class SegModel<float>;
template class SegModel<double>;

}  // namespace pdzseg
