#include "pdzseg/data.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>

#include "pdzseg/error.hpp"
#include "pdzseg/hash.hpp"

namespace pdzseg {

namespace {

constexpr char kCacheMagic[4] = {'P', 'Z', 'C', '1'};

std::size_t sample_bytes(const TrainSample& s) {
  return s.image.pixels().size() * sizeof(float) + s.mask.labels().size();
}

}  // namespace

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TrainSample prepare_sample(const SampleRecord& record, int image_size, PromptKind kind, std::uint64_t seed,
                           const std::optional<CorruptionSpec>& corruption) {
  if (image_size < kMinTargetSize) {
    throw Error(ErrorKind::kOutOfRange, "target size must be >= " + std::to_string(kMinTargetSize));
  }
  // Prompts are synthesized and drawn on the native frame, then resized with it.
  LoadedPair pair = load_native_pair(record);
  const std::uint64_t sample_seed = mix_seed(seed, fnv1a64(record.sample_id));
  if (kind != PromptKind::kNone && pair.mask.count(1) > 0) {
    const VisualPrompt prompt = generate_prompt(kind, pair.mask, sample_seed);
    pair.image = render_prompt_overlay(pair.image, prompt);
  }
  TrainSample out{resize_bilinear(pair.image, image_size, image_size),
                  resize_nearest(pair.mask, image_size, image_size)};
  if (corruption) {
    CorruptionSpec spec = *corruption;
    spec.seed = mix_seed(spec.seed, fnv1a64(record.sample_id));
    out.image = corrupt(out.image, spec);
  }
  return out;
}

SampleCache::SampleCache(std::optional<std::filesystem::path> dir, std::size_t memory_budget_bytes)
    : dir_(std::move(dir)), budget_(memory_budget_bytes) {
  if (dir_) {
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create cache directory " + dir_->string() + ": " + ec.message());
  }
}

std::optional<std::filesystem::path> SampleCache::dir_from_env() {
  const char* v = std::getenv("PDZSEG_CACHE");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

std::string SampleCache::key(const SampleRecord& record, int image_size, PromptKind kind, std::uint64_t seed) const {
  std::string k = record.sample_id + "|" + record.image_path.string() + "|" + record.mask_path.string() + "|" +
                  std::to_string(image_size) + "|" + std::string(to_string(kind)) + "|" + std::to_string(seed);
  std::error_code ec;
  for (const auto& p : {record.image_path, record.mask_path}) {
    const auto size = std::filesystem::file_size(p, ec);
    k += "|" + std::to_string(ec ? 0 : size);
  }
  return sha256_hex(k);
}

std::optional<TrainSample> SampleCache::read_disk(const std::string& key) const {
  if (!dir_) return std::nullopt;
  std::ifstream in(*dir_ / (key + ".bin"), std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  std::int32_t dims[2];
  if (!in.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0) return std::nullopt;
  if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims)) || dims[0] <= 0 || dims[1] <= 0) return std::nullopt;
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1];
  std::vector<float> pixels(n * 3);
  std::vector<std::uint8_t> labels(n);
  if (!in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size() * sizeof(float)))) {
    return std::nullopt;
  }
  if (!in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()))) return std::nullopt;
  return TrainSample{ImageTensor(dims[0], dims[1], std::move(pixels)), ClassMask(dims[0], dims[1], std::move(labels))};
}

void SampleCache::write_disk(const std::string& key, const TrainSample& s) const {
  if (!dir_) return;
  const auto final_path = *dir_ / (key + ".bin");
  const auto tmp_path = *dir_ / (key + ".tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) return;  // a read-only cache degrades to recomputation
    const std::int32_t dims[2] = {s.image.height(), s.image.width()};
    out.write(kCacheMagic, 4);
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(s.image.pixels().data()),
              static_cast<std::streamsize>(s.image.pixels().size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(s.mask.labels().data()), static_cast<std::streamsize>(s.mask.labels().size()));
    if (!out) return;
  }
  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
}

const TrainSample& SampleCache::get(const SampleRecord& record, int image_size, PromptKind kind, std::uint64_t seed) {
  const std::string k = key(record, image_size, kind, seed);
  if (auto it = memory_.find(k); it != memory_.end()) {
    ++memory_hits_;
    return it->second;
  }
  std::optional<TrainSample> s = read_disk(k);
  if (s) {
    ++disk_hits_;
  } else {
    ++misses_;
    s = prepare_sample(record, image_size, kind, seed);
    write_disk(k, *s);
  }
  const std::size_t bytes = sample_bytes(*s);
  if (used_ + bytes <= budget_) {
    used_ += bytes;
    return memory_.emplace(k, std::move(*s)).first->second;
  }
  scratch_ = std::move(*s);
  return scratch_;
}

}  // namespace pdzseg
