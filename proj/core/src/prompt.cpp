#include "pdzseg/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <string>

#include "pdzseg/error.hpp"
#include "pdzseg/morphology.hpp"

namespace pdzseg {

namespace {

void require_region(const ClassMask& mask) {
  if (mask.count(1) == 0) throw Error(ErrorKind::kNoRegion, "mask has no dissection-zone pixels");
}

PixelPoint deepest_point(const ClassMask& region) {
  const auto dist = squared_distance_transform(region);
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (region.labels()[i] == 1 && dist[i] > best_value) {
      best_value = dist[i];
      best = i;
    }
  }
  return {static_cast<int>(best % region.width()), static_cast<int>(best / region.width())};
}

VisualPrompt make_prompt(PromptKind kind, std::vector<PixelPoint> points, const ClassMask& mask) {
  VisualPrompt p;
  p.kind = kind;
  p.points = std::move(points);
  p.stroke_width = default_stroke_width(mask.height(), mask.width());
  p.color = kDefaultPromptColor;
  return p;
}

// Longest shortest path through the skeleton graph (8-neighbour steps of
// length 1 or sqrt 2), as a dense pixel chain.
std::vector<PixelPoint> skeleton_diameter_path(const ClassMask& skeleton) {
  const int w = skeleton.width();
  std::vector<int> node_of(skeleton.labels().size(), -1);
  std::vector<PixelPoint> nodes;
  for (int y = 0; y < skeleton.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      if (skeleton.at(y, x) == 1) {
        node_of[static_cast<std::size_t>(y) * w + x] = static_cast<int>(nodes.size());
        nodes.push_back({x, y});
      }
    }
  }
  const int n = static_cast<int>(nodes.size());
  if (n == 0) return {};
  if (n == 1) return {nodes[0]};

  // Adjacency in a fixed neighbour order.
  static constexpr int kDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  static constexpr int kDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 8; ++k) {
      const int ny = nodes[i].y + kDy[k];
      const int nx = nodes[i].x + kDx[k];
      if (!skeleton.in_bounds(ny, nx)) continue;
      const int j = node_of[static_cast<std::size_t>(ny) * w + nx];
      if (j < 0) continue;
      adj[i].emplace_back(j, (kDx[k] != 0 && kDy[k] != 0) ? std::sqrt(2.0) : 1.0);
    }
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr double kTol = 1e-9;
  std::vector<double> dist(n);
  std::vector<int> pred(n);
  std::vector<int> best_pred;
  int best_src = 0;
  int best_dst = 0;
  double best_len = -1.0;
  using Item = std::pair<double, int>;
  for (int src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(pred.begin(), pred.end(), -1);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (auto [v, wgt] : adj[u]) {
        const double nd = d + wgt;
        if (nd < dist[v] - kTol) {
          dist[v] = nd;
          pred[v] = u;
          pq.emplace(nd, v);
        }
      }
    }
    for (int dst = 0; dst < n; ++dst) {
      if (dist[dst] != kInf && dist[dst] > best_len + kTol) {
        best_len = dist[dst];
        best_src = src;
        best_dst = dst;
        best_pred = pred;
      }
    }
  }
  std::vector<PixelPoint> path;
  for (int v = best_dst; v != -1; v = best_pred[v]) path.push_back(nodes[v]);
  std::reverse(path.begin(), path.end());
  (void)best_src;
  return path;
}

std::vector<PixelPoint> subsample(const std::vector<PixelPoint>& path, std::size_t max_vertices) {
  if (path.size() <= max_vertices) return path;
  std::vector<PixelPoint> out;
  out.reserve(max_vertices);
  const double step = static_cast<double>(path.size() - 1) / static_cast<double>(max_vertices - 1);
  for (std::size_t i = 0; i < max_vertices; ++i) {
    out.push_back(path[static_cast<std::size_t>(std::lround(step * static_cast<double>(i)))]);
  }
  return out;
}

struct LongScribble {
  std::vector<PixelPoint> dense;     // full skeleton path
  std::vector<PixelPoint> vertices;  // emitted polyline
  ClassMask region;                  // largest component
};

LongScribble build_long_scribble(const ClassMask& mask) {
  require_region(mask);
  LongScribble out;
  out.region = largest_component(mask);
  out.dense = skeleton_diameter_path(thin_zhang_suen(out.region));
  if (out.dense.empty()) out.dense = {deepest_point(out.region)};
  if (out.dense.size() == 1) {
    out.vertices = {out.dense[0], out.dense[0]};
  } else {
    out.vertices = subsample(out.dense, kMaxScribbleVertices);
  }
  return out;
}

double sq_dist_to_segment(double px, double py, PixelPoint a, PixelPoint b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = px - (a.x + t * dx);
  const double ey = py - (a.y + t * dy);
  return ex * ex + ey * ey;
}

}  // namespace

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::kNone: return "none";
    case PromptKind::kPoint: return "point";
    case PromptKind::kShortScribble: return "short_scribble";
    case PromptKind::kLongScribble: return "long_scribble";
    case PromptKind::kBbox: return "bbox";
  }
  return "none";
}

PromptKind parse_prompt_kind(std::string_view name) {
  for (auto k : {PromptKind::kNone, PromptKind::kPoint, PromptKind::kShortScribble, PromptKind::kLongScribble,
                 PromptKind::kBbox}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kUnknownPromptKind, "unknown prompt kind '" + std::string(name) + "'");
}

int default_stroke_width(int height, int width) {
  const double scaled = 0.008 * std::min(height, width);
  return std::max(3, static_cast<int>(std::lround(scaled)));
}

void VisualPrompt::validate(int height, int width) const {
  const std::size_t n = points.size();
  bool count_ok = false;
  switch (kind) {
    case PromptKind::kNone: count_ok = n == 0; break;
    case PromptKind::kPoint: count_ok = n == 1; break;
    case PromptKind::kShortScribble:
    case PromptKind::kLongScribble: count_ok = n >= 2; break;
    case PromptKind::kBbox: count_ok = n == 2; break;
  }
  if (!count_ok) {
    throw Error(ErrorKind::kInvalidPrompt,
                std::string(to_string(kind)) + " prompt cannot have " + std::to_string(n) + " points");
  }
  if (stroke_width < 1) throw Error(ErrorKind::kInvalidPrompt, "stroke_width must be >= 1");
  for (const auto& p : points) {
    if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) {
      throw Error(ErrorKind::kOutOfBounds, "prompt point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                               ") outside " + std::to_string(width) + "x" + std::to_string(height));
    }
  }
}

VisualPrompt no_prompt(int height, int width) {
  VisualPrompt p;
  p.stroke_width = default_stroke_width(height, width);
  return p;
}

VisualPrompt gen_point(const ClassMask& mask, std::uint64_t /*seed*/) {
  require_region(mask);
  return make_prompt(PromptKind::kPoint, {deepest_point(largest_component(mask))}, mask);
}

VisualPrompt gen_bbox(const ClassMask& mask, std::uint64_t /*seed*/) {
  require_region(mask);
  int x0 = mask.width();
  int y0 = mask.height();
  int x1 = -1;
  int y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(y, x) != 1) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  return make_prompt(PromptKind::kBbox, {{x0, y0}, {x1, y1}}, mask);
}

VisualPrompt gen_long_scribble(const ClassMask& mask, std::uint64_t /*seed*/) {
  auto scribble = build_long_scribble(mask);
  return make_prompt(PromptKind::kLongScribble, std::move(scribble.vertices), mask);
}

VisualPrompt gen_short_scribble(const ClassMask& mask, std::uint64_t /*seed*/) {
  const auto scribble = build_long_scribble(mask);
  const auto& verts = scribble.vertices;
  std::vector<double> cum(verts.size(), 0.0);
  for (std::size_t i = 1; i < verts.size(); ++i) {
    cum[i] = cum[i - 1] + std::hypot(verts[i].x - verts[i - 1].x, verts[i].y - verts[i - 1].y);
  }
  const double total = cum.back();
  if (total == 0.0) return make_prompt(PromptKind::kShortScribble, verts, mask);

  // Point at a given arc position, rounded to a pixel; falls back to the
  // nearest skeleton pixel when rounding leaves the region.
  auto point_at = [&](double s) {
    std::size_t seg = 1;
    while (seg + 1 < verts.size() && cum[seg] < s) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double t = len > 0.0 ? (s - cum[seg - 1]) / len : 0.0;
    const double fx = verts[seg - 1].x + t * (verts[seg].x - verts[seg - 1].x);
    const double fy = verts[seg - 1].y + t * (verts[seg].y - verts[seg - 1].y);
    PixelPoint p{static_cast<int>(std::lround(fx)), static_cast<int>(std::lround(fy))};
    if (scribble.region.in_bounds(p.y, p.x) && scribble.region.at(p.y, p.x) == 1) return p;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : scribble.dense) {
      const double d = (q.x - fx) * (q.x - fx) + (q.y - fy) * (q.y - fy);
      if (d < best) {
        best = d;
        p = q;
      }
    }
    return p;
  };

  const double lo = 0.5 * (1.0 - kShortScribbleFraction) * total;
  const double hi = lo + kShortScribbleFraction * total;
  std::vector<PixelPoint> out{point_at(lo)};
  for (std::size_t i = 0; i < verts.size(); ++i) {
    if (cum[i] > lo && cum[i] < hi && verts[i] != out.back()) out.push_back(verts[i]);
  }
  const auto end = point_at(hi);
  if (end != out.back() || out.size() == 1) out.push_back(end);
  return make_prompt(PromptKind::kShortScribble, subsample(out, kMaxScribbleVertices), mask);
}

VisualPrompt generate_prompt(PromptKind kind, const ClassMask& mask, std::uint64_t seed) {
  switch (kind) {
    case PromptKind::kNone: return no_prompt(mask.height(), mask.width());
    case PromptKind::kPoint: return gen_point(mask, seed);
    case PromptKind::kShortScribble: return gen_short_scribble(mask, seed);
    case PromptKind::kLongScribble: return gen_long_scribble(mask, seed);
    case PromptKind::kBbox: return gen_bbox(mask, seed);
  }
  return no_prompt(mask.height(), mask.width());
}

double polyline_length(const std::vector<PixelPoint>& points) {
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    total += std::hypot(points[i].x - points[i - 1].x, points[i].y - points[i - 1].y);
  }
  return total;
}

ClassMask prompt_footprint(const VisualPrompt& prompt, int height, int width) {
  prompt.validate(height, width);
  ClassMask out(height, width);
  const int w = prompt.stroke_width;
  switch (prompt.kind) {
    case PromptKind::kNone: break;
    case PromptKind::kPoint: {
      const int r = 2 * w;
      const auto c = prompt.points[0];
      for (int y = std::max(0, c.y - r); y <= std::min(height - 1, c.y + r); ++y) {
        for (int x = std::max(0, c.x - r); x <= std::min(width - 1, c.x + r); ++x) {
          if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= r * r) out.at(y, x) = 1;
        }
      }
      break;
    }
    case PromptKind::kShortScribble:
    case PromptKind::kLongScribble: {
      const double half = 0.5 * w;
      const double limit = half * half;
      const int reach = static_cast<int>(std::ceil(half));
      for (std::size_t i = 1; i < prompt.points.size(); ++i) {
        const auto a = prompt.points[i - 1];
        const auto b = prompt.points[i];
        for (int y = std::max(0, std::min(a.y, b.y) - reach); y <= std::min(height - 1, std::max(a.y, b.y) + reach); ++y) {
          for (int x = std::max(0, std::min(a.x, b.x) - reach); x <= std::min(width - 1, std::max(a.x, b.x) + reach);
               ++x) {
            if (sq_dist_to_segment(x, y, a, b) <= limit) out.at(y, x) = 1;
          }
        }
      }
      break;
    }
    case PromptKind::kBbox: {
      const int x0 = std::min(prompt.points[0].x, prompt.points[1].x);
      const int x1 = std::max(prompt.points[0].x, prompt.points[1].x);
      const int y0 = std::min(prompt.points[0].y, prompt.points[1].y);
      const int y1 = std::max(prompt.points[0].y, prompt.points[1].y);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (x < x0 + w || x > x1 - w || y < y0 + w || y > y1 - w) out.at(y, x) = 1;
        }
      }
      break;
    }
  }
  return out;
}

ImageTensor render_prompt_overlay(const ImageTensor& image, const VisualPrompt& prompt) {
  ImageTensor out = image;
  if (prompt.kind == PromptKind::kNone) {
    prompt.validate(image.height(), image.width());
    return out;
  }
  const auto footprint = prompt_footprint(prompt, image.height(), image.width());
  const float rgb[3] = {prompt.color[0] / 255.0f, prompt.color[1] / 255.0f, prompt.color[2] / 255.0f};
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (footprint.at(y, x) != 1) continue;
      for (int c = 0; c < ImageTensor::kChannels; ++c) out.at(y, x, c) = rgb[c];
    }
  }
  return out;
}

nlohmann::json prompt_to_json(const VisualPrompt& prompt) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : prompt.points) pts.push_back({p.x, p.y});
  return {{"kind", std::string(to_string(prompt.kind))},
          {"points", pts},
          {"stroke_width", prompt.stroke_width},
          {"color", {prompt.color[0], prompt.color[1], prompt.color[2]}}};
}

VisualPrompt prompt_from_json(const nlohmann::json& doc, int image_height, int image_width) {
  auto invalid = [](const std::string& what) { return Error(ErrorKind::kInvalidPrompt, what); };
  if (!doc.is_object()) throw invalid("prompt must be an object");
  auto kind = doc.find("kind");
  if (kind == doc.end() || !kind->is_string()) throw invalid("prompt lacks string 'kind'");
  VisualPrompt p;
  p.kind = parse_prompt_kind(kind->get_ref<const std::string&>());
  if (auto pts = doc.find("points"); pts != doc.end()) {
    if (!pts->is_array()) throw invalid("'points' must be an array");
    for (const auto& pt : *pts) {
      if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number_integer() || !pt[1].is_number_integer()) {
        throw invalid("each point must be [x, y] integers");
      }
      p.points.push_back({pt[0].get<int>(), pt[1].get<int>()});
    }
  }
  p.stroke_width = default_stroke_width(image_height, image_width);
  if (auto sw = doc.find("stroke_width"); sw != doc.end()) {
    if (!sw->is_number_integer()) throw invalid("'stroke_width' must be an integer");
    p.stroke_width = sw->get<int>();
  }
  if (auto color = doc.find("color"); color != doc.end()) {
    if (!color->is_array() || color->size() != 3) throw invalid("'color' must be [r, g, b]");
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& v = (*color)[c];
      if (!v.is_number_integer() || v.get<int>() < 0 || v.get<int>() > 255) throw invalid("color channels must be 0..255");
      p.color[c] = static_cast<std::uint8_t>(v.get<int>());
    }
  }
  p.validate(image_height, image_width);
  return p;
}

}  // namespace pdzseg
