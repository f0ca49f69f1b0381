#include "pdzseg/contour.hpp"

#include <optional>

#include "pdzseg/morphology.hpp"

namespace pdzseg {

namespace {

// Clockwise from west in image coordinates (y down).
constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

int direction_to(PixelPoint from, PixelPoint to) {
  for (int d = 0; d < 8; ++d) {
    if (from.x + kDx[d] == to.x && from.y + kDy[d] == to.y) return d;
  }
  return -1;
}

Contour trace(const ComponentLabels& comps, int height, int width, int label, PixelPoint start) {
  auto inside = [&](PixelPoint p) {
    return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height &&
           comps.labels[static_cast<std::size_t>(p.y) * width + p.x] == label;
  };
  Contour out{start};
  // start is the component's first pixel in raster order, so its west
  // neighbour is outside
  PixelPoint current = start;
  PixelPoint backtrack{start.x - 1, start.y};
  const std::size_t limit = 8 * static_cast<std::size_t>(width) * height + 8;
  for (std::size_t iter = 0; iter < limit; ++iter) {
    const int from = direction_to(current, backtrack);
    PixelPoint prev = backtrack;
    std::optional<PixelPoint> next;
    for (int k = 1; k <= 8 && !next; ++k) {
      const int d = (from + k) % 8;
      const PixelPoint cand{current.x + kDx[d], current.y + kDy[d]};
      if (inside(cand)) {
        next = cand;
      } else {
        prev = cand;
      }
    }
    if (!next) break;  // isolated pixel
    // Done once the first move out of start is about to repeat.
    if (current == start && out.size() > 1 && *next == out[1]) {
      out.pop_back();
      break;
    }
    current = *next;
    backtrack = prev;
    out.push_back(current);
  }
  return out;
}

}  // namespace

bool is_boundary_pixel(const ClassMask& mask, int y, int x) {
  if (!mask.in_bounds(y, x) || mask.at(y, x) != 1) return false;
  constexpr int dy[4] = {-1, 1, 0, 0};
  constexpr int dx[4] = {0, 0, -1, 1};
  for (int k = 0; k < 4; ++k) {
    const int ny = y + dy[k];
    const int nx = x + dx[k];
    if (!mask.in_bounds(ny, nx) || mask.at(ny, nx) != 1) return true;
  }
  return false;
}

std::vector<Contour> extract_contours(const ClassMask& mask) {
  ClassMask fg(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) fg.at(y, x) = mask.at(y, x) == 1 ? 1 : 0;
  }
  const ComponentLabels comps = label_components(fg, 8);
  std::vector<Contour> out;
  std::vector<bool> seen(static_cast<std::size_t>(comps.count()), false);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const int l = comps.labels[static_cast<std::size_t>(y) * mask.width() + x];
      if (l < 0 || seen[static_cast<std::size_t>(l)]) continue;
      seen[static_cast<std::size_t>(l)] = true;
      out.push_back(trace(comps, mask.height(), mask.width(), l, PixelPoint{x, y}));
    }
  }
  return out;
}

ClassMask fill_contours(const std::vector<Contour>& contours, int height, int width) {
  // Contour pixels are walls; whatever the outside cannot reach (4-connected)
  // is inside.
  const int h = height + 2;
  const int w = width + 2;
  std::vector<std::uint8_t> wall(static_cast<std::size_t>(h) * w, 0);
  for (const auto& c : contours) {
    for (const auto& p : c) {
      if (p.x >= 0 && p.y >= 0 && p.x < width && p.y < height) wall[static_cast<std::size_t>(p.y + 1) * w + p.x + 1] = 1;
    }
  }
  std::vector<std::uint8_t> outside(wall.size(), 0);
  std::vector<int> stack{0};
  outside[0] = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int y = i / w;
    const int x = i % w;
    const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
    for (const auto& n : nbr) {
      if (n[0] < 0 || n[1] < 0 || n[0] >= h || n[1] >= w) continue;
      const int j = n[0] * w + n[1];
      if (outside[j] || wall[j]) continue;
      outside[j] = 1;
      stack.push_back(j);
    }
  }
  ClassMask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(y, x) = outside[static_cast<std::size_t>(y + 1) * w + x + 1] ? 0 : 1;
  }
  return out;
}

}  // namespace pdzseg
