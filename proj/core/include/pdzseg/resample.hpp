#pragma once

#include <vector>

namespace pdzseg {

// One output coordinate of a 1-D linear resampling: value =
// (1 - weight) * in[lo] + weight * in[hi]. Half-pixel convention, clamped.
struct LinearTap {
  int lo = 0;
  int hi = 0;
  double weight = 0.0;
};

std::vector<LinearTap> linear_taps(int in_size, int out_size);

// Index of the source sample nearest to each output coordinate.
std::vector<int> nearest_taps(int in_size, int out_size);

}  // namespace pdzseg
