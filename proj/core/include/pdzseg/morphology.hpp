#pragma once

#include <vector>

#include "pdzseg/image.hpp"

namespace pdzseg {

struct ComponentLabels {
  std::vector<int> labels;  // -1 for background, else component index
  std::vector<std::size_t> sizes;
  int count() const { return static_cast<int>(sizes.size()); }
};

// Connected components of label-1 pixels. Components are numbered in
// row-major order of their first pixel.
ComponentLabels label_components(const ClassMask& mask, int connectivity = 8);

// Binary mask of the largest 8-connected dissection-zone component; ties go
// to the component whose first pixel comes first in row-major order. Returns
// an all-zero mask if there is no foreground.
ClassMask largest_component(const ClassMask& mask);

// Exact squared Euclidean distance from each pixel centre to the nearest
// background pixel centre. Pixels outside the image count as background, so
// the value is finite everywhere; background pixels get 0.
std::vector<double> squared_distance_transform(const ClassMask& mask);

// Zhang-Suen thinning of the label-1 region.
ClassMask thin_zhang_suen(const ClassMask& mask);

}  // namespace pdzseg
