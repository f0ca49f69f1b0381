#pragma once

#include <cstdint>
#include <filesystem>

#include "pdzseg/image.hpp"
#include "pdzseg/manifest.hpp"
#include "pdzseg/rng.hpp"

namespace pdzseg {

// Stand-in scenes: two look-alike elliptical blobs on a noisy tissue-coloured
// background. The labelled dissection zone is one blob chosen at random, so
// only a prompt can tell which one is meant (both blobs when target_both).
struct SynthConfig {
  int image_size = 64;
  int train_videos = 200;
  int test_videos = 20;
  int frames_per_video = 10;
  bool target_both = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthFrame {
  ImageTensor image;
  ClassMask mask;
};

SynthFrame synth_two_blob_frame(int size, bool target_both, Rng& rng);

// Writes PNG pairs and manifest.json under `dir`; returns the manifest.
// Frame i of video v is drawn from an independent seeded stream.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, const SynthConfig& cfg);

}  // namespace pdzseg
