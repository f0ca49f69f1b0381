#include "pdzseg/manifest.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "pdzseg/error.hpp"

namespace pdzseg {

namespace {

using nlohmann::json;

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorKind::kMalformedManifest, what); }

const std::string& require_string(const json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    malformed("sample " + std::to_string(index) + " lacks string field '" + key + "'");
  }
  return it->get_ref<const std::string&>();
}

}  // namespace

std::vector<SampleRecord> DatasetManifest::samples_in_split(const std::string& name) const {
  std::vector<SampleRecord> out;
  auto it = split.find(name);
  if (it == split.end()) return out;
  const std::set<std::string> videos(it->second.begin(), it->second.end());
  for (const auto& s : samples) {
    if (videos.contains(s.video_id)) out.push_back(s);
  }
  return out;
}

DatasetManifest parse_manifest_text(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  if (!doc.is_object()) malformed("top level must be an object");

  DatasetManifest manifest;
  auto version = doc.find("version");
  if (version == doc.end() || !version->is_number_integer()) malformed("missing integer 'version'");
  manifest.version = version->get<int>();
  if (manifest.version != kManifestVersion) {
    malformed("unsupported manifest version " + std::to_string(manifest.version));
  }

  auto samples = doc.find("samples");
  if (samples == doc.end() || !samples->is_array()) malformed("missing array 'samples'");
  std::set<std::string> ids;
  std::set<std::string> videos_with_samples;
  std::size_t index = 0;
  for (const auto& entry : *samples) {
    if (!entry.is_object()) malformed("sample " + std::to_string(index) + " is not an object");
    SampleRecord rec;
    rec.sample_id = require_string(entry, "id", index);
    rec.video_id = require_string(entry, "video", index);
    rec.image_path = base_dir / require_string(entry, "image", index);
    rec.mask_path = base_dir / require_string(entry, "mask", index);
    if (!ids.insert(rec.sample_id).second) malformed("duplicate sample id '" + rec.sample_id + "'");
    videos_with_samples.insert(rec.video_id);
    manifest.samples.push_back(std::move(rec));
    ++index;
  }

  auto split = doc.find("split");
  if (split == doc.end() || !split->is_object()) malformed("missing object 'split'");
  std::map<std::string, std::string> owner;  // video -> split name
  for (const auto& [name, list] : split->items()) {
    if (!list.is_array()) malformed("split '" + name + "' must be an array");
    auto& videos = manifest.split[name];
    for (const auto& v : list) {
      if (!v.is_string()) malformed("split '" + name + "' must list video id strings");
      const auto& vid = v.get_ref<const std::string&>();
      auto [it, inserted] = owner.emplace(vid, name);
      if (!inserted && it->second != name) {
        throw Error(ErrorKind::kSplitOverlap,
                    "video '" + vid + "' appears in both '" + it->second + "' and '" + name + "'");
      }
      if (!videos_with_samples.contains(vid)) {
        throw Error(ErrorKind::kDanglingReference, "split '" + name + "' lists video '" + vid + "' with no samples");
      }
      if (inserted) videos.push_back(vid);
    }
  }

  for (const auto& s : manifest.samples) {
    for (const auto* p : {&s.image_path, &s.mask_path}) {
      if (!std::filesystem::is_regular_file(*p)) {
        throw Error(ErrorKind::kDanglingReference, "sample '" + s.sample_id + "' references missing file " + p->string());
      }
    }
  }
  return manifest;
}

DatasetManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kDanglingReference, "manifest not found: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest_text(buf.str(), path.parent_path());
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    auto r = p.lexically_relative(base.empty() ? std::filesystem::path(".") : base);
    return (r.empty() ? p : r).generic_string();
  };
  json doc;
  doc["version"] = manifest.version;
  doc["samples"] = json::array();
  for (const auto& s : manifest.samples) {
    doc["samples"].push_back({{"id", s.sample_id}, {"video", s.video_id}, {"image", rel(s.image_path)}, {"mask", rel(s.mask_path)}});
  }
  doc["split"] = json::object();
  for (const auto& [name, videos] : manifest.split) doc["split"][name] = videos;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

void validate_labels(const ClassMask& mask) {
  for (auto v : mask.labels()) {
    if (v > 1) throw Error(ErrorKind::kBadLabel, "mask contains label " + std::to_string(v));
  }
}

LoadedPair load_native_pair(const SampleRecord& record) {
  LoadedPair pair{read_png_rgb(record.image_path), read_png_gray(record.mask_path)};
  if (pair.image.height() != pair.mask.height() || pair.image.width() != pair.mask.width()) {
    throw Error(ErrorKind::kShapeMismatch, "sample '" + record.sample_id + "': image and mask sizes differ");
  }
  validate_labels(pair.mask);
  return pair;
}

LoadedPair load_pair(const SampleRecord& record, int target_size) {
  if (target_size < kMinTargetSize) {
    throw Error(ErrorKind::kOutOfRange, "target size must be >= " + std::to_string(kMinTargetSize));
  }
  auto pair = load_native_pair(record);
  return {resize_bilinear(pair.image, target_size, target_size), resize_nearest(pair.mask, target_size, target_size)};
}

}  // namespace pdzseg
