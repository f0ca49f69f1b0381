#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace pdzseg {

// Row-major dynamic matrix. Token sequences are (tokens x channels);
// spatial maps are (rows*cols x channels) in row-major pixel order.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  Mat<T> value;
  Mat<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(Eigen::Index rows, Eigen::Index cols) : value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)) {}

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Spatial feature map stored as (height*width) x channels.
template <typename T>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Mat<T> data;

  int channels() const { return static_cast<int>(data.cols()); }
};

}  // namespace pdzseg
