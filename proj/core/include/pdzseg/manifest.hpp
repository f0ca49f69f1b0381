#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pdzseg/image.hpp"

namespace pdzseg {

struct SampleRecord {
  std::string sample_id;
  std::string video_id;
  std::filesystem::path image_path;  // resolved against the manifest directory
  std::filesystem::path mask_path;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::vector<SampleRecord> samples;
  std::map<std::string, std::vector<std::string>> split;  // split name -> video ids

  // Samples whose video belongs to the named split, in manifest order.
  std::vector<SampleRecord> samples_in_split(const std::string& name) const;

  bool operator==(const DatasetManifest&) const = default;
};

inline constexpr int kManifestVersion = 1;

// Parses and validates a manifest document. Relative sample paths are
// resolved against `base_dir`; referenced files must exist.
DatasetManifest parse_manifest_text(const std::string& text, const std::filesystem::path& base_dir);
DatasetManifest parse_manifest(const std::filesystem::path& path);

// Writes paths relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct LoadedPair {
  ImageTensor image;
  ClassMask mask;
};

inline constexpr int kMinTargetSize = 16;

// Reads the pair at native resolution and validates shapes and labels.
LoadedPair load_native_pair(const SampleRecord& record);

// Native pair resized to target_size x target_size: bilinear for the image,
// nearest-neighbour for the mask.
LoadedPair load_pair(const SampleRecord& record, int target_size);

void validate_labels(const ClassMask& mask);

}  // namespace pdzseg
