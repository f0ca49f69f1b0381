#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "pdzseg/corruptions.hpp"
#include "pdzseg/manifest.hpp"
#include "pdzseg/prompt.hpp"
#include "pdzseg/train.hpp"

namespace pdzseg {

// Stable 64-bit FNV-1a of a string, for per-sample seed derivation.
std::uint64_t fnv1a64(std::string_view text);

// Load at model resolution, draw the prompt of `kind` from the resized
// mask, overlay it, then apply the optional corruption. A sample without
// any dissection pixels cannot be prompted and is returned unprompted.
TrainSample prepare_sample(const SampleRecord& record, int image_size, PromptKind kind, std::uint64_t seed,
                           const std::optional<CorruptionSpec>& corruption = std::nullopt);

// Rendered (sample, kind) pairs, kept in memory up to a byte budget and
// optionally persisted as raw float files in a cache directory.
class SampleCache {
 public:
  explicit SampleCache(std::optional<std::filesystem::path> dir = std::nullopt,
                       std::size_t memory_budget_bytes = std::size_t{1} << 30);

  // Directory named by PDZSEG_CACHE, if set and non-empty.
  static std::optional<std::filesystem::path> dir_from_env();

  const TrainSample& get(const SampleRecord& record, int image_size, PromptKind kind, std::uint64_t seed);

  std::size_t memory_hits() const { return memory_hits_; }
  std::size_t disk_hits() const { return disk_hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::string key(const SampleRecord& record, int image_size, PromptKind kind, std::uint64_t seed) const;
  std::optional<TrainSample> read_disk(const std::string& key) const;
  void write_disk(const std::string& key, const TrainSample& sample) const;

  std::optional<std::filesystem::path> dir_;
  std::size_t budget_;
  std::size_t used_ = 0;
  std::map<std::string, TrainSample> memory_;
  TrainSample scratch_;
  std::size_t memory_hits_ = 0;
  std::size_t disk_hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace pdzseg
