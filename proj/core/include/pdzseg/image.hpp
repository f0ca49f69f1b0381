#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pdzseg {

// H x W x 3 frame with interleaved channels, values in [0, 1].
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;
  ImageTensor(int height, int width, float fill = 0.0f);
  ImageTensor(int height, int width, std::vector<float> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }

  float at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
  float& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

  // Clamps every value into [0, 1] in place.
  void clamp_unit();

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

// H x W label map; 0 = no-go zone, 1 = dissection zone.
class ClassMask {
 public:
  ClassMask() = default;
  ClassMask(int height, int width, std::uint8_t fill = 0);
  ClassMask(int height, int width, std::vector<std::uint8_t> labels);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return labels_.empty(); }
  bool in_bounds(int y, int x) const { return y >= 0 && x >= 0 && y < height_ && x < width_; }

  std::uint8_t at(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int y, int x) { return labels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const std::uint8_t> labels() const { return labels_; }
  std::span<std::uint8_t> labels() { return labels_; }

  std::size_t count(std::uint8_t label) const;

  bool operator==(const ClassMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> labels_;
};

using Rgb8 = std::array<std::uint8_t, 3>;

// Bilinear resampling with half-pixel centers (edge clamped). Resizing to
// the same size is an exact copy.
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);

// Nearest-neighbour resampling; never produces labels absent from the input.
ClassMask resize_nearest(const ClassMask& mask, int height, int width);

ImageTensor flip_horizontal(const ImageTensor& image);

// PNG codec. Images decode to RGB (gray/alpha are expanded/dropped); masks
// decode as raw 8-bit single-channel values.
ImageTensor read_png_rgb(const std::filesystem::path& path);
ClassMask read_png_gray(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const ImageTensor& image);
void write_png_gray(const std::filesystem::path& path, const ClassMask& mask);

ImageTensor decode_png_rgb(std::span<const std::uint8_t> bytes);
ClassMask decode_png_gray(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png_rgb(const ImageTensor& image);
std::vector<std::uint8_t> encode_png_gray(const ClassMask& mask);

struct PngSize {
  int width = 0;
  int height = 0;
};

// Reads only the IHDR chunk.
PngSize peek_png_size(std::span<const std::uint8_t> bytes);

std::uint8_t to_u8(float v);

}  // namespace pdzseg
