#pragma once

#include <vector>

#include "pdzseg/image.hpp"
#include "pdzseg/prompt.hpp"

namespace pdzseg {

using Contour = std::vector<PixelPoint>;

// Outer boundary of every 8-connected dissection-zone component, traced
// clockwise (Moore neighbourhood, Jacob's stopping rule) from its first
// pixel in row-major order. Consecutive points are 8-adjacent and the
// polyline closes back on its first point. Holes are not traced.
std::vector<Contour> extract_contours(const ClassMask& mask);

// Boundary predicate: label 1 and 4-adjacent to label 0 or the image edge.
bool is_boundary_pixel(const ClassMask& mask, int y, int x);

// Paints the contour pixels and fills everything they enclose.
ClassMask fill_contours(const std::vector<Contour>& contours, int height, int width);

}  // namespace pdzseg
