#include "pdzseg/resample.hpp"

#include <algorithm>
#include <cmath>

namespace pdzseg {

std::vector<LinearTap> linear_taps(int in_size, int out_size) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in_size - 1) lo = in_size - 1;
    const int hi = std::min(lo + 1, in_size - 1);
    double w = src - lo;
    if (hi == lo) w = 0.0;
    taps[i] = {lo, hi, w};
  }
  return taps;
}

std::vector<int> nearest_taps(int in_size, int out_size) {
  std::vector<int> taps(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    // Integer form of floor((i + 0.5) * in / out).
    const long long num = (2LL * i + 1) * in_size;
    const long long src = num / (2LL * out_size);
    taps[i] = static_cast<int>(std::min<long long>(src, in_size - 1));
  }
  return taps;
}

}  // namespace pdzseg
