#include "pdzseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pdzseg/config.hpp"
#include "pdzseg/error.hpp"
#include "pdzseg/hash.hpp"

namespace pdzseg {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'D', 'Z', 'S', 'E', 'G', 'C', 'K'};
constexpr std::uint64_t kMaxManifestBytes = 64ull << 20;

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::filesystem::path& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) {
    throw Error(ErrorKind::kCheckpoint, "truncated archive " + path.string());
  }
  return v;
}

template <typename T>
constexpr std::uint8_t dtype_of() {
  return std::is_same_v<T, float> ? 0 : 1;
}

std::size_t dtype_size(std::uint8_t dtype) { return dtype == 0 ? 4 : 8; }

std::string contents_name(CheckpointContents c) { return c == CheckpointContents::kFull ? "full" : "adapters"; }

}  // namespace

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kArchiveVersion);
    const std::string manifest = archive.manifest.dump();
    put<std::uint64_t>(out, manifest.size());
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& t : archive.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint8_t>(out, t.dtype);
      put<std::uint64_t>(out, t.rows);
      put<std::uint64_t>(out, t.cols);
      out.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
    }
    if (!out) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::kCheckpoint, path.string() + " is not a checkpoint archive");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kArchiveVersion) {
    throw Error(ErrorKind::kCheckpoint, "unsupported archive version " + std::to_string(version));
  }
  const auto manifest_len = get<std::uint64_t>(in, path);
  if (manifest_len > kMaxManifestBytes) throw Error(ErrorKind::kCheckpoint, "manifest too large");
  std::string manifest(manifest_len, '\0');
  if (!in.read(manifest.data(), static_cast<std::streamsize>(manifest_len))) {
    throw Error(ErrorKind::kCheckpoint, "truncated manifest in " + path.string());
  }
  Archive archive;
  try {
    archive.manifest = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCheckpoint, std::string("manifest is not JSON: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveTensor t;
    const auto name_len = get<std::uint32_t>(in, path);
    if (name_len > 4096) throw Error(ErrorKind::kCheckpoint, "tensor name too long");
    t.name.resize(name_len);
    if (!in.read(t.name.data(), name_len)) throw Error(ErrorKind::kCheckpoint, "truncated tensor name");
    t.dtype = get<std::uint8_t>(in, path);
    if (t.dtype > 1) throw Error(ErrorKind::kCheckpoint, "unknown dtype for " + t.name);
    t.rows = get<std::uint64_t>(in, path);
    t.cols = get<std::uint64_t>(in, path);
    const std::uint64_t n = t.rows * t.cols * dtype_size(t.dtype);
    if (t.cols != 0 && n / t.cols / dtype_size(t.dtype) != t.rows) throw Error(ErrorKind::kCheckpoint, "tensor size overflow");
    t.bytes.resize(n);
    if (!in.read(reinterpret_cast<char*>(t.bytes.data()), static_cast<std::streamsize>(n))) {
      throw Error(ErrorKind::kCheckpoint, "truncated data for " + t.name);
    }
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

template <typename T>
ArchiveTensor pack_tensor(const std::string& name, const Mat<T>& value) {
  ArchiveTensor t{name, dtype_of<T>(), static_cast<std::uint64_t>(value.rows()),
                  static_cast<std::uint64_t>(value.cols()), {}};
  t.bytes.resize(static_cast<std::size_t>(value.size()) * sizeof(T));
  std::memcpy(t.bytes.data(), value.data(), t.bytes.size());
  return t;
}

template <typename T>
Mat<T> unpack_tensor(const ArchiveTensor& t) {
  Mat<T> out(static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  const std::size_t n = static_cast<std::size_t>(t.rows * t.cols);
  if (t.dtype == dtype_of<T>()) {
    std::memcpy(out.data(), t.bytes.data(), n * sizeof(T));
  } else if (t.dtype == 0) {
    const auto* src = reinterpret_cast<const float*>(t.bytes.data());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<T>(src[i]);
  } else {
    const auto* src = reinterpret_cast<const double*>(t.bytes.data());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<T>(src[i]);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, SegModel<float>& model, const CheckpointMeta& meta) {
  Archive archive;
  archive.manifest = {{"format", "pdzseg-checkpoint"},
                      {"model", to_json(model.config())},
                      {"contents", contents_name(meta.contents)},
                      {"init_seed", meta.init_seed},
                      {"base_checkpoint", meta.base_checkpoint ? nlohmann::json(*meta.base_checkpoint) : nlohmann::json()},
                      {"extra", meta.extra}};
  model.for_each_parameter([&](const std::string& name, Parameter<float>& p) {
    if (meta.contents == CheckpointContents::kAdapters && !p.trainable) return;
    archive.tensors.push_back(pack_tensor(name, p.value));
  });
  write_archive(path, archive);
}

namespace {

CheckpointMeta meta_from_manifest(const nlohmann::json& m, const std::filesystem::path& path) {
  try {
    if (m.value("format", "") != "pdzseg-checkpoint") throw Error(ErrorKind::kCheckpoint, "unexpected format tag");
    CheckpointMeta meta;
    meta.model = model_config_from_json(m.at("model"));
    const std::string contents = m.at("contents").get<std::string>();
    if (contents == "full") {
      meta.contents = CheckpointContents::kFull;
    } else if (contents == "adapters") {
      meta.contents = CheckpointContents::kAdapters;
    } else {
      throw Error(ErrorKind::kCheckpoint, "unknown contents '" + contents + "'");
    }
    meta.init_seed = m.at("init_seed").get<std::uint64_t>();
    if (m.contains("base_checkpoint") && !m["base_checkpoint"].is_null()) {
      meta.base_checkpoint = m["base_checkpoint"].get<std::string>();
    }
    if (m.contains("extra")) meta.extra = m["extra"];
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCheckpoint, "bad manifest in " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kCheckpoint) throw;
    throw Error(ErrorKind::kCheckpoint, "bad manifest in " + path.string() + ": " + e.what());
  }
}

std::size_t apply_archive(SegModel<float>& model, const Archive& archive, bool strict) {
  std::map<std::string, const ArchiveTensor*> by_name;
  for (const auto& t : archive.tensors) by_name[t.name] = &t;
  std::size_t loaded = 0;
  const int grid = model.config().encoder.grid();
  model.for_each_parameter([&](const std::string& name, Parameter<float>& p) {
    auto it = by_name.find(name);
    if (it == by_name.end()) return;
    Mat<float> v = unpack_tensor<float>(*it->second);
    if (name == "encoder.pos_embed" && v.cols() == p.value.cols() && v.rows() != p.value.rows()) {
      v = interpolate_pos_embed(v, grid);
    }
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
      throw Error(ErrorKind::kCheckpoint, name + ": stored " + std::to_string(v.rows()) + "x" +
                                              std::to_string(v.cols()) + ", model expects " +
                                              std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
    }
    p.value = std::move(v);
    by_name.erase(it);
    ++loaded;
  });
  if (strict && !by_name.empty()) {
    throw Error(ErrorKind::kCheckpoint, "archive tensor '" + by_name.begin()->first + "' has no model counterpart");
  }
  return loaded;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  return meta_from_manifest(read_archive(path).manifest, path);
}

SegModel<float> load_checkpoint(const std::filesystem::path& path, std::optional<int> image_size) {
  const Archive archive = read_archive(path);
  const CheckpointMeta meta = meta_from_manifest(archive.manifest, path);
  ModelConfig cfg = meta.model;
  if (image_size) cfg.encoder.image_size = *image_size;
  SegModel<float> model(cfg, meta.init_seed);
  if (meta.contents == CheckpointContents::kAdapters && meta.base_checkpoint) {
    std::filesystem::path base = *meta.base_checkpoint;
    if (base.is_relative()) base = path.parent_path() / base;
    apply_checkpoint(model, base, false);
  }
  apply_archive(model, archive, true);
  return model;
}

std::size_t apply_checkpoint(SegModel<float>& model, const std::filesystem::path& path, bool strict) {
  return apply_archive(model, read_archive(path), strict);
}

template <typename T>
std::map<std::string, std::string> parameter_digests(SegModel<T>& model, bool frozen_only) {
  std::map<std::string, std::string> out;
  model.for_each_parameter([&](const std::string& name, Parameter<T>& p) {
    if (frozen_only && p.trainable) return;
    out[name] = sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(p.value.data()),
                                                         static_cast<std::size_t>(p.value.size()) * sizeof(T)));
  });
  return out;
}

template ArchiveTensor pack_tensor<float>(const std::string&, const Mat<float>&);
template ArchiveTensor pack_tensor<double>(const std::string&, const Mat<double>&);
template Mat<float> unpack_tensor<float>(const ArchiveTensor&);
template Mat<double> unpack_tensor<double>(const ArchiveTensor&);
template std::map<std::string, std::string> parameter_digests<float>(SegModel<float>&, bool);
template std::map<std::string, std::string> parameter_digests<double>(SegModel<double>&, bool);

}  // namespace pdzseg
