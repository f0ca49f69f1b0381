#pragma once

#include "pdzseg/image.hpp"
#include "pdzseg/tensor.hpp"

namespace pdzseg {

// Mean over pixels of -log softmax(logits)[target]. Throws kShapeMismatch
// when sizes differ and kBadLabel for labels outside the class range.
template <typename T>
T ce_loss(const FeatureMap<T>& logits, const ClassMask& target);

// Same loss; also writes dLoss/dlogits into grad (same shape as logits).
template <typename T>
T ce_loss_with_grad(const FeatureMap<T>& logits, const ClassMask& target, FeatureMap<T>& grad);

// Per-pixel argmax; ties resolve to the lower class index.
template <typename T>
ClassMask argmax_mask(const FeatureMap<T>& logits);

}  // namespace pdzseg
