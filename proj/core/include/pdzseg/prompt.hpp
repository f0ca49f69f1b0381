#pragma once

#include <compare>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string_view>
#include <vector>

#include "pdzseg/image.hpp"

namespace pdzseg {

enum class PromptKind { kNone, kPoint, kShortScribble, kLongScribble, kBbox };

std::string_view to_string(PromptKind kind);
// Throws Error(kUnknownPromptKind).
PromptKind parse_prompt_kind(std::string_view name);

struct PixelPoint {
  int x = 0;  // column, grows right
  int y = 0;  // row, grows down
  auto operator<=>(const PixelPoint&) const = default;
};

inline constexpr Rgb8 kDefaultPromptColor = {0, 255, 0};

// max(3, round(0.008 * min(H, W)))
int default_stroke_width(int height, int width);

struct VisualPrompt {
  PromptKind kind = PromptKind::kNone;
  std::vector<PixelPoint> points;
  int stroke_width = 3;
  Rgb8 color = kDefaultPromptColor;

  // Point count matches the kind, stroke_width >= 1 (kInvalidPrompt) and
  // every point lies inside a height x width image (kOutOfBounds).
  void validate(int height, int width) const;

  bool operator==(const VisualPrompt&) const = default;
};

VisualPrompt no_prompt(int height, int width);

// Generators. All operate on dissection-zone pixels (label 1) and throw
// Error(kNoRegion) on masks without any. The seed is accepted for
// reproducibility bookkeeping; ties are broken in row-major order, so the
// current generators do not draw from it.
VisualPrompt gen_point(const ClassMask& mask, std::uint64_t seed);
VisualPrompt gen_bbox(const ClassMask& mask, std::uint64_t seed);
VisualPrompt gen_long_scribble(const ClassMask& mask, std::uint64_t seed);
VisualPrompt gen_short_scribble(const ClassMask& mask, std::uint64_t seed);

// Dispatches on kind; kNone yields an empty prompt sized for the mask.
VisualPrompt generate_prompt(PromptKind kind, const ClassMask& mask, std::uint64_t seed);

inline constexpr std::size_t kMaxScribbleVertices = 64;
inline constexpr double kShortScribbleFraction = 0.30;

double polyline_length(const std::vector<PixelPoint>& points);

// Pixels covered by the prompt's stroke geometry (1 = painted).
ClassMask prompt_footprint(const VisualPrompt& prompt, int height, int width);

// Copy of `image` with the prompt painted in prompt.color.
ImageTensor render_prompt_overlay(const ImageTensor& image, const VisualPrompt& prompt);

nlohmann::json prompt_to_json(const VisualPrompt& prompt);
// Missing stroke_width/color fall back to the defaults for the given image
// size. Schema violations throw kInvalidPrompt, unknown kinds
// kUnknownPromptKind.
VisualPrompt prompt_from_json(const nlohmann::json& doc, int image_height, int image_width);

}  // namespace pdzseg
