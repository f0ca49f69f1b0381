#include "pdzseg/layers.hpp"

#include <cmath>
#include <numbers>

#include "pdzseg/resample.hpp"

namespace pdzseg {

template <typename T>
void fill_trunc_normal(Mat<T>& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v;
    do {
      v = rng.normal();
    } while (std::abs(v) > 2.0);
    m.data()[i] = static_cast<T>(v * stddev);
  }
}

template <typename T>
void fill_normal(Mat<T>& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
Linear<T>::Linear(int in_features, int out_features) : weight(out_features, in_features), bias(1, out_features) {}

template <typename T>
Mat<T> Linear<T>::forward(const Mat<T>& x) const {
  Mat<T> y(x.rows(), weight.value.rows());
  y.noalias() = x * weight.value.transpose();
  y.rowwise() += bias.value.row(0);
  return y;
}

template <typename T>
Mat<T> Linear<T>::backward(const Mat<T>& x, const Mat<T>& dy, bool need_input_grad) {
  if (weight.trainable) weight.grad.noalias() += dy.transpose() * x;
  if (bias.trainable) bias.grad.row(0) += dy.colwise().sum();
  if (!need_input_grad) return {};
  Mat<T> dx(dy.rows(), weight.value.cols());
  dx.noalias() = dy * weight.value;
  return dx;
}

template <typename T>
LayerNorm<T>::LayerNorm(int dim) : gamma(1, dim), beta(1, dim) {
  gamma.value.setOnes();
}

template <typename T>
Mat<T> LayerNorm<T>::forward(const Mat<T>& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  const T dim = static_cast<T>(x.cols());
  Mat<T> xhat(n, x.cols());
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).sum() / dim;
    auto centered = x.row(i).array() - mean;
    const T var = centered.square().sum() / dim;
    inv_std(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Mat<T> y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Mat<T> LayerNorm<T>::backward(const Mat<T>& dy, const Cache& cache) {
  const auto& xhat = cache.normalized;
  if (gamma.trainable) gamma.grad.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  if (beta.trainable) beta.grad.row(0) += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  const T dim = static_cast<T>(dy.cols());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_d = dxhat.row(i).sum() / dim;
    const T mean_dx = dxhat.row(i).dot(xhat.row(i)) / dim;
    dx.row(i) = (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx) * cache.inv_std(i);
  }
  return dx;
}

template <typename T>
Mat<T> gelu(const Mat<T>& x) {
  return x.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); });
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
  const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  Mat<T> dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const T v = x.data()[i];
    const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
    dx.data()[i] = dy.data()[i] * (cdf + v * pdf);
  }
  return dx;
}

template <typename T>
void softmax_rows_inplace(Mat<T>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

template <typename T>
FeatureMap<T> resize_feature_map(const FeatureMap<T>& in, int height, int width) {
  if (height == in.height && width == in.width) return in;
  const auto ty = linear_taps(in.height, height);
  const auto tx = linear_taps(in.width, width);
  FeatureMap<T> out{height, width, Mat<T>(static_cast<Eigen::Index>(height) * width, in.data.cols())};
  for (int y = 0; y < height; ++y) {
    const auto& ay = ty[y];
    const T wy = static_cast<T>(ay.weight);
    for (int x = 0; x < width; ++x) {
      const auto& ax = tx[x];
      const T wx = static_cast<T>(ax.weight);
      const auto r00 = in.data.row(static_cast<Eigen::Index>(ay.lo) * in.width + ax.lo);
      const auto r01 = in.data.row(static_cast<Eigen::Index>(ay.lo) * in.width + ax.hi);
      const auto r10 = in.data.row(static_cast<Eigen::Index>(ay.hi) * in.width + ax.lo);
      const auto r11 = in.data.row(static_cast<Eigen::Index>(ay.hi) * in.width + ax.hi);
      out.data.row(static_cast<Eigen::Index>(y) * width + x) =
          (T(1) - wy) * ((T(1) - wx) * r00 + wx * r01) + wy * ((T(1) - wx) * r10 + wx * r11);
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> resize_feature_map_backward(const FeatureMap<T>& grad_out, int in_height, int in_width) {
  if (grad_out.height == in_height && grad_out.width == in_width) return grad_out;
  const auto ty = linear_taps(in_height, grad_out.height);
  const auto tx = linear_taps(in_width, grad_out.width);
  FeatureMap<T> grad_in{in_height, in_width,
                        Mat<T>::Zero(static_cast<Eigen::Index>(in_height) * in_width, grad_out.data.cols())};
  for (int y = 0; y < grad_out.height; ++y) {
    const auto& ay = ty[y];
    const T wy = static_cast<T>(ay.weight);
    for (int x = 0; x < grad_out.width; ++x) {
      const auto& ax = tx[x];
      const T wx = static_cast<T>(ax.weight);
      const auto g = grad_out.data.row(static_cast<Eigen::Index>(y) * grad_out.width + x);
      grad_in.data.row(static_cast<Eigen::Index>(ay.lo) * in_width + ax.lo) += (T(1) - wy) * (T(1) - wx) * g;
      grad_in.data.row(static_cast<Eigen::Index>(ay.lo) * in_width + ax.hi) += (T(1) - wy) * wx * g;
      grad_in.data.row(static_cast<Eigen::Index>(ay.hi) * in_width + ax.lo) += wy * (T(1) - wx) * g;
      grad_in.data.row(static_cast<Eigen::Index>(ay.hi) * in_width + ax.hi) += wy * wx * g;
    }
  }
  return grad_in;
}

#define PDZSEG_INSTANTIATE_LAYERS(T)                                                               \
  template void fill_trunc_normal<T>(Mat<T>&, Rng&, double);                                       \
  template void fill_normal<T>(Mat<T>&, Rng&, double);                                             \
  template struct Linear<T>;                                                                       \
  template struct LayerNorm<T>;                                                                    \
  template Mat<T> gelu<T>(const Mat<T>&);                                                          \
  template Mat<T> gelu_backward<T>(const Mat<T>&, const Mat<T>&);                                  \
  template void softmax_rows_inplace<T>(Mat<T>&);                                                  \
  template FeatureMap<T> resize_feature_map<T>(const FeatureMap<T>&, int, int);                    \
  template FeatureMap<T> resize_feature_map_backward<T>(const FeatureMap<T>&, int, int);

PDZSEG_INSTANTIATE_LAYERS(float)
PDZSEG_INSTANTIATE_LAYERS(double)

#undef PDZSEG_INSTANTIATE_LAYERS

}  // namespace pdzseg
