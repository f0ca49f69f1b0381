#include "pdzseg/morphology.hpp"

#include <array>
#include <limits>

namespace pdzseg {

namespace {

constexpr std::array<int, 8> kDx8 = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr std::array<int, 8> kDy8 = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr std::array<int, 4> kDx4 = {0, -1, 1, 0};
constexpr std::array<int, 4> kDy4 = {-1, 0, 0, 1};

// Felzenszwalb-Huttenlocher lower envelope of parabolas, in place on f.
// Callers guarantee each line holds at least one zero sample.
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto intersect = [&](int q, int p) {
    return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
  };
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double diff = q - v[k];
    d[q] = diff * diff + f[v[k]];
  }
  f.swap(d);
}

}  // namespace

ComponentLabels label_components(const ClassMask& mask, int connectivity) {
  const int h = mask.height();
  const int w = mask.width();
  ComponentLabels out;
  out.labels.assign(static_cast<std::size_t>(h) * w, -1);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (mask.at(y, x) != 1 || out.labels[idx] != -1) continue;
      const int id = out.count();
      out.sizes.push_back(0);
      out.labels[idx] = id;
      stack.assign(1, static_cast<int>(idx));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        ++out.sizes[id];
        const int cy = cur / w;
        const int cx = cur % w;
        for (int k = 0; k < connectivity; ++k) {
          const int ny = cy + (connectivity == 8 ? kDy8[k] : kDy4[k]);
          const int nx = cx + (connectivity == 8 ? kDx8[k] : kDx4[k]);
          if (!mask.in_bounds(ny, nx) || mask.at(ny, nx) != 1) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
          if (out.labels[nidx] != -1) continue;
          out.labels[nidx] = id;
          stack.push_back(static_cast<int>(nidx));
        }
      }
    }
  }
  return out;
}

ClassMask largest_component(const ClassMask& mask) {
  const auto comps = label_components(mask, 8);
  ClassMask out(mask.height(), mask.width());
  if (comps.count() == 0) return out;
  int best = 0;
  for (int i = 1; i < comps.count(); ++i) {
    if (comps.sizes[i] > comps.sizes[best]) best = i;
  }
  auto labels = out.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = comps.labels[i] == best ? 1 : 0;
  return out;
}

std::vector<double> squared_distance_transform(const ClassMask& mask) {
  // Work on a grid padded by one background ring.
  const int h = mask.height() + 2;
  const int w = mask.width() + 2;
  // Finite stand-in for infinity keeps the envelope arithmetic NaN-free.
  constexpr double kFar = 1e20;
  std::vector<double> grid(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      grid[static_cast<std::size_t>(y + 1) * w + x + 1] = mask.at(y, x) == 1 ? kFar : 0.0;
    }
  }
  const int n = std::max(h, w);
  std::vector<double> f;
  std::vector<double> d(n);
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  for (int x = 0; x < w; ++x) {
    f.resize(h);
    d.resize(h);
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = f[y];
  }
  for (int y = 0; y < h; ++y) {
    f.assign(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, grid.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
    d.resize(w);
    edt_1d(f, d, v, z);
    std::copy(f.begin(), f.end(), grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  std::vector<double> out(static_cast<std::size_t>(mask.height()) * mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      out[static_cast<std::size_t>(y) * mask.width() + x] = grid[static_cast<std::size_t>(y + 1) * w + x + 1];
    }
  }
  return out;
}

ClassMask thin_zhang_suen(const ClassMask& mask) {
  ClassMask img = mask;
  for (auto& v : img.labels()) v = v == 1 ? 1 : 0;
  const int h = img.height();
  const int w = img.width();
  auto px = [&](int y, int x) -> int { return img.in_bounds(y, x) ? img.at(y, x) : 0; };
  std::vector<std::size_t> removals;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      removals.clear();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (img.at(y, x) != 1) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {px(y - 1, x), px(y - 1, x + 1), px(y, x + 1), px(y + 1, x + 1),
                            px(y + 1, x), px(y + 1, x - 1), px(y, x - 1), px(y - 1, x - 1)};
          int neighbours = 0;
          int transitions = 0;
          for (int k = 0; k < 8; ++k) {
            neighbours += p[k];
            if (p[k] == 0 && p[(k + 1) % 8] == 1) ++transitions;
          }
          if (neighbours < 2 || neighbours > 6 || transitions != 1) continue;
          const bool cond = pass == 0 ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                      : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
          if (cond) removals.push_back(static_cast<std::size_t>(y) * w + x);
        }
      }
      for (auto idx : removals) img.labels()[idx] = 0;
      if (!removals.empty()) changed = true;
    }
  }
  return img;
}

}  // namespace pdzseg
