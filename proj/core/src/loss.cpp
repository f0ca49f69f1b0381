#include "pdzseg/loss.hpp"

#include <cmath>

#include "pdzseg/error.hpp"

namespace pdzseg {

namespace {

template <typename T>
void check_shapes(const FeatureMap<T>& logits, const ClassMask& target) {
  if (logits.height != target.height() || logits.width != target.width()) {
    throw Error(ErrorKind::kShapeMismatch, "logits " + std::to_string(logits.height) + "x" +
                                               std::to_string(logits.width) + " vs mask " +
                                               std::to_string(target.height()) + "x" + std::to_string(target.width()));
  }
  if (target.empty()) throw Error(ErrorKind::kShapeMismatch, "empty target mask");
}

template <typename T>
T ce_impl(const FeatureMap<T>& logits, const ClassMask& target, FeatureMap<T>* grad) {
  check_shapes(logits, target);
  const Eigen::Index n = logits.data.rows();
  const Eigen::Index c = logits.data.cols();
  const auto labels = target.labels();
  if (grad) *grad = FeatureMap<T>{logits.height, logits.width, Mat<T>(n, c)};
  const T inv_n = T(1) / static_cast<T>(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label >= c) throw Error(ErrorKind::kBadLabel, "label " + std::to_string(label) + " outside class range");
    const auto row = logits.data.row(i);
    const T mx = row.maxCoeff();
    T sum = 0;
    for (Eigen::Index k = 0; k < c; ++k) sum += std::exp(row(k) - mx);
    const T log_z = mx + std::log(sum);
    total += static_cast<double>(log_z - row(label));
    if (grad) {
      for (Eigen::Index k = 0; k < c; ++k) {
        const T p = std::exp(row(k) - log_z);
        grad->data(i, k) = (p - (k == label ? T(1) : T(0))) * inv_n;
      }
    }
  }
  return static_cast<T>(total / static_cast<double>(n));
}

}  // namespace

template <typename T>
T ce_loss(const FeatureMap<T>& logits, const ClassMask& target) {
  return ce_impl<T>(logits, target, nullptr);
}

template <typename T>
T ce_loss_with_grad(const FeatureMap<T>& logits, const ClassMask& target, FeatureMap<T>& grad) {
  return ce_impl<T>(logits, target, &grad);
}

template <typename T>
ClassMask argmax_mask(const FeatureMap<T>& logits) {
  ClassMask out(logits.height, logits.width);
  for (int y = 0; y < logits.height; ++y) {
    for (int x = 0; x < logits.width; ++x) {
      const auto row = logits.data.row(static_cast<Eigen::Index>(y) * logits.width + x);
      int best = 0;
      for (int k = 1; k < row.size(); ++k) {
        if (row(k) > row(best)) best = k;
      }
      out.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template float ce_loss<float>(const FeatureMap<float>&, const ClassMask&);
template double ce_loss<double>(const FeatureMap<double>&, const ClassMask&);
template float ce_loss_with_grad<float>(const FeatureMap<float>&, const ClassMask&, FeatureMap<float>&);
template double ce_loss_with_grad<double>(const FeatureMap<double>&, const ClassMask&, FeatureMap<double>&);
template ClassMask argmax_mask<float>(const FeatureMap<float>&);
template ClassMask argmax_mask<double>(const FeatureMap<double>&);

}  // namespace pdzseg
