#include "pdzseg/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "pdzseg/error.hpp"

namespace pdzseg {

namespace {

struct Ellipse {
  double cx, cy, a, b, theta;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = dx * std::cos(theta) + dy * std::sin(theta);
    const double v = -dx * std::sin(theta) + dy * std::cos(theta);
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

ClassMask rasterize(const Ellipse& e, int size) {
  ClassMask m(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.at(y, x) = e.contains(x, y) ? 1 : 0;
  }
  return m;
}

// True when the masks come within `gap` pixels (Chebyshev) of each other.
bool too_close(const ClassMask& a, const ClassMask& b, int gap) {
  const int n = a.height();
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!a.at(y, x)) continue;
      for (int dy = -gap; dy <= gap; ++dy) {
        for (int dx = -gap; dx <= gap; ++dx) {
          if (b.in_bounds(y + dy, x + dx) && b.at(y + dy, x + dx)) return true;
        }
      }
    }
  }
  return false;
}

ClassMask draw_blob(int size, Rng& rng, const ClassMask* other) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    Ellipse e{};
    e.a = rng.uniform(0.16, 0.26) * size;
    e.b = rng.uniform(0.08, 0.13) * size;
    e.theta = rng.uniform(0.0, std::numbers::pi);
    // Half-extents of the rotated ellipse keep it inside the frame.
    const double c = std::cos(e.theta);
    const double sn = std::sin(e.theta);
    const double hx = std::sqrt(e.a * e.a * c * c + e.b * e.b * sn * sn);
    const double hy = std::sqrt(e.a * e.a * sn * sn + e.b * e.b * c * c);
    e.cx = rng.uniform(hx, size - 1.0 - hx);
    e.cy = rng.uniform(hy, size - 1.0 - hy);
    ClassMask m = rasterize(e, size);
    if (m.count(1) < 5) continue;
    if (other && too_close(m, *other, 2)) continue;
    return m;
  }
  throw Error(ErrorKind::kOutOfRange, "could not place two separated blobs at size " + std::to_string(size));
}

}  // namespace

void SynthConfig::validate() const {
  if (image_size < kMinTargetSize) throw Error(ErrorKind::kInvalidConfig, "synthetic image_size below 16");
  if (train_videos < 1 || test_videos < 0 || frames_per_video < 1) {
    throw Error(ErrorKind::kInvalidConfig, "synthetic split sizes must be positive");
  }
}

SynthFrame synth_two_blob_frame(int size, bool target_both, Rng& rng) {
  ImageTensor image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      image.at(y, x, 0) = static_cast<float>(0.55 + 0.10 * rng.uniform());
      image.at(y, x, 1) = static_cast<float>(0.25 + 0.08 * rng.uniform());
      image.at(y, x, 2) = static_cast<float>(0.25 + 0.08 * rng.uniform());
    }
  }
  const ClassMask first = draw_blob(size, rng, nullptr);
  const ClassMask second = draw_blob(size, rng, &first);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (first.at(y, x) || second.at(y, x)) {
        image.at(y, x, 0) = 0.85f;
        image.at(y, x, 1) = 0.60f;
        image.at(y, x, 2) = 0.55f;
      }
    }
  }
  ClassMask mask(size, size);
  const bool pick_first = rng.uniform() < 0.5;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool on = target_both ? (first.at(y, x) || second.at(y, x)) : (pick_first ? first.at(y, x) : second.at(y, x));
      mask.at(y, x) = on ? 1 : 0;
    }
  }
  return SynthFrame{std::move(image), std::move(mask)};
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, const SynthConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  DatasetManifest manifest;
  manifest.split["train"] = {};
  manifest.split["test"] = {};
  const int videos = cfg.train_videos + cfg.test_videos;
  for (int v = 0; v < videos; ++v) {
    char vid[32];
    std::snprintf(vid, sizeof(vid), "v%04d", v);
    manifest.split[v < cfg.train_videos ? "train" : "test"].push_back(vid);
    for (int f = 0; f < cfg.frames_per_video; ++f) {
      char sid[48];
      std::snprintf(sid, sizeof(sid), "%s_f%03d", vid, f);
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(v) * 100003u + f));
      const SynthFrame frame = synth_two_blob_frame(cfg.image_size, cfg.target_both, rng);
      SampleRecord rec{sid, vid, dir / "images" / (std::string(sid) + ".png"), dir / "masks" / (std::string(sid) + ".png")};
      write_png_rgb(rec.image_path, frame.image);
      write_png_gray(rec.mask_path, frame.mask);
      manifest.samples.push_back(std::move(rec));
    }
  }
  write_manifest(dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace pdzseg
