#include "pdzseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pdzseg/error.hpp"
#include "pdzseg/resample.hpp"

namespace pdzseg {

namespace {

void check_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorKind::kShapeMismatch,
                "image dimensions must be positive, got " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> decode(std::span<const std::uint8_t> bytes, png_uint_32 format, int& height,
                                 int& width) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::kIo, std::string("png decode failed: ") + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorKind::kIo, std::string("png decode failed: ") + img.message);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return buffer;
}

std::vector<std::uint8_t> encode(const std::uint8_t* data, int height, int width, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, data, 0, nullptr)) {
    throw Error(ErrorKind::kIo, std::string("png encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, data, 0, nullptr)) {
    throw Error(ErrorKind::kIo, std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

ImageTensor::ImageTensor(int height, int width, float fill) : height_(height), width_(width) {
  check_dims(height, width);
  pixels_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  check_dims(height, width);
  if (pixels_.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw Error(ErrorKind::kShapeMismatch, "pixel buffer size does not match dimensions");
  }
}

void ImageTensor::clamp_unit() {
  for (float& v : pixels_) v = std::clamp(v, 0.0f, 1.0f);
}

ClassMask::ClassMask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  check_dims(height, width);
  labels_.assign(static_cast<std::size_t>(height) * width, fill);
}

ClassMask::ClassMask(int height, int width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  check_dims(height, width);
  if (labels_.size() != static_cast<std::size_t>(height) * width) {
    throw Error(ErrorKind::kShapeMismatch, "label buffer size does not match dimensions");
  }
}

std::size_t ClassMask::count(std::uint8_t label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
  if (height == image.height() && width == image.width()) return image;
  check_dims(height, width);
  const auto ty = linear_taps(image.height(), height);
  const auto tx = linear_taps(image.width(), width);
  ImageTensor out(height, width);
  for (int y = 0; y < height; ++y) {
    const auto& ay = ty[y];
    for (int x = 0; x < width; ++x) {
      const auto& ax = tx[x];
      for (int c = 0; c < ImageTensor::kChannels; ++c) {
        const double top = (1.0 - ax.weight) * image.at(ay.lo, ax.lo, c) + ax.weight * image.at(ay.lo, ax.hi, c);
        const double bottom =
            (1.0 - ax.weight) * image.at(ay.hi, ax.lo, c) + ax.weight * image.at(ay.hi, ax.hi, c);
        out.at(y, x, c) = static_cast<float>((1.0 - ay.weight) * top + ay.weight * bottom);
      }
    }
  }
  return out;
}

ClassMask resize_nearest(const ClassMask& mask, int height, int width) {
  if (height == mask.height() && width == mask.width()) return mask;
  check_dims(height, width);
  const auto ty = nearest_taps(mask.height(), height);
  const auto tx = nearest_taps(mask.width(), width);
  ClassMask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(y, x) = mask.at(ty[y], tx[x]);
  }
  return out;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < ImageTensor::kChannels; ++c) {
        out.at(y, x, c) = image.at(y, image.width() - 1 - x, c);
      }
    }
  }
  return out;
}

std::uint8_t to_u8(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

ImageTensor decode_png_rgb(std::span<const std::uint8_t> bytes) {
  int h = 0;
  int w = 0;
  const auto raw = decode(bytes, PNG_FORMAT_RGB, h, w);
  std::vector<float> pixels(raw.size());
  std::transform(raw.begin(), raw.end(), pixels.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return ImageTensor(h, w, std::move(pixels));
}

ClassMask decode_png_gray(std::span<const std::uint8_t> bytes) {
  int h = 0;
  int w = 0;
  auto raw = decode(bytes, PNG_FORMAT_GRAY, h, w);
  return ClassMask(h, w, std::move(raw));
}

std::vector<std::uint8_t> encode_png_rgb(const ImageTensor& image) {
  std::vector<std::uint8_t> raw(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), raw.begin(), to_u8);
  return encode(raw.data(), image.height(), image.width(), PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_png_gray(const ClassMask& mask) {
  return encode(mask.labels().data(), mask.height(), mask.width(), PNG_FORMAT_GRAY);
}

PngSize peek_png_size(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kSignature, 8) != 0 ||
      std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw Error(ErrorKind::kIo, "not a PNG stream");
  }
  auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(bytes[off]) << 24) | (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 8) | static_cast<std::uint32_t>(bytes[off + 3]);
  };
  const std::uint32_t w = be32(16);
  const std::uint32_t h = be32(20);
  if (w > 0x7fffffff || h > 0x7fffffff) throw Error(ErrorKind::kIo, "PNG dimensions overflow");
  return {static_cast<int>(w), static_cast<int>(h)};
}

ImageTensor read_png_rgb(const std::filesystem::path& path) { return decode_png_rgb(read_file(path)); }

ClassMask read_png_gray(const std::filesystem::path& path) { return decode_png_gray(read_file(path)); }

void write_png_rgb(const std::filesystem::path& path, const ImageTensor& image) {
  write_file(path, encode_png_rgb(image));
}

void write_png_gray(const std::filesystem::path& path, const ClassMask& mask) {
  write_file(path, encode_png_gray(mask));
}

}  // namespace pdzseg
