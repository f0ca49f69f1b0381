#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdzseg/model.hpp"

namespace pdzseg {

// Named-tensor archive:
//   "PDZSEGCK" | u32 version | u64 len | manifest JSON | u32 count |
//   count x (u32 len | name | u8 dtype | u64 rows | u64 cols | data)
// Little-endian; dtype 0 = float32, 1 = float64.
struct ArchiveTensor {
  std::string name;
  std::uint8_t dtype = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<std::uint8_t> bytes;
};

struct Archive {
  nlohmann::json manifest;
  std::vector<ArchiveTensor> tensors;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

void write_archive(const std::filesystem::path& path, const Archive& archive);
// Throws kCheckpoint on a bad magic/version/truncation, kIo if unreadable.
Archive read_archive(const std::filesystem::path& path);

template <typename T>
ArchiveTensor pack_tensor(const std::string& name, const Mat<T>& value);
template <typename T>
Mat<T> unpack_tensor(const ArchiveTensor& tensor);

enum class CheckpointContents {
  kFull,      // every parameter
  kAdapters,  // trainable tensors only (LoRA + decoder); base rebuilt from init_seed or base_checkpoint
};

struct CheckpointMeta {
  ModelConfig model;
  CheckpointContents contents = CheckpointContents::kFull;
  std::uint64_t init_seed = 0;
  std::optional<std::string> base_checkpoint;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, SegModel<float>& model, const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Rebuilds the model described by the checkpoint and loads its tensors.
// With image_size set, the encoder is built at that resolution and the
// positional table is bicubically resampled to the new grid.
SegModel<float> load_checkpoint(const std::filesystem::path& path, std::optional<int> image_size = std::nullopt);

// Copies matching tensors into an existing model. With strict, every
// archive tensor must exist in the model. Returns the number loaded.
std::size_t apply_checkpoint(SegModel<float>& model, const std::filesystem::path& path, bool strict = true);

// SHA-256 of every parameter's raw bytes, keyed by name.
template <typename T>
std::map<std::string, std::string> parameter_digests(SegModel<T>& model, bool frozen_only = false);

}  // namespace pdzseg
