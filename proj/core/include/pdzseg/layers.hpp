#pragma once

#include <optional>
#include <vector>

#include "pdzseg/rng.hpp"
#include "pdzseg/tensor.hpp"

namespace pdzseg {

// Fills a matrix from N(0, stddev) truncated at two standard deviations.
template <typename T>
void fill_trunc_normal(Mat<T>& m, Rng& rng, double stddev);

template <typename T>
void fill_normal(Mat<T>& m, Rng& rng, double stddev);

// y = x W^T + b, weight stored (out x in).
template <typename T>
struct Linear {
  Parameter<T> weight;
  Parameter<T> bias;

  Linear() = default;
  Linear(int in_features, int out_features);

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Mat<T> forward(const Mat<T>& x) const;
  // Accumulates gradients of trainable parameters; returns dL/dx when
  // need_input_grad, otherwise an empty matrix.
  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy, bool need_input_grad = true);

  void set_trainable(bool on) { weight.trainable = bias.trainable = on; }
};

template <typename T>
struct LayerNorm {
  Parameter<T> gamma;
  Parameter<T> beta;
  T eps = T(1e-6);

  struct Cache {
    Mat<T> normalized;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  };

  LayerNorm() = default;
  explicit LayerNorm(int dim);

  Mat<T> forward(const Mat<T>& x, Cache* cache) const;
  Mat<T> backward(const Mat<T>& dy, const Cache& cache);

  void set_trainable(bool on) { gamma.trainable = beta.trainable = on; }
};

// Exact (erf) GELU.
template <typename T>
Mat<T> gelu(const Mat<T>& x);
template <typename T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy);

// Softmax over each row, numerically stabilised.
template <typename T>
void softmax_rows_inplace(Mat<T>& m);

// Bilinear resampling of a spatial map (half-pixel centres, edge clamp)
// and its adjoint.
template <typename T>
FeatureMap<T> resize_feature_map(const FeatureMap<T>& in, int height, int width);
template <typename T>
FeatureMap<T> resize_feature_map_backward(const FeatureMap<T>& grad_out, int in_height, int in_width);

}  // namespace pdzseg
