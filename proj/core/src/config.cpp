#include "pdzseg/config.hpp"

#include <set>

#include "pdzseg/error.hpp"
#include "pdzseg/hash.hpp"

namespace pdzseg {

namespace {

using nlohmann::json;

std::string_view to_string(PosEmbedInit v) { return v == PosEmbedInit::kSinCos ? "sincos" : "random"; }
std::string_view to_string(WeightInit v) { return v == WeightInit::kFanIn ? "fan_in" : "trunc_normal"; }
std::string_view to_string(FuseResolution v) {
  return v == FuseResolution::kQuarterThenUpsample ? "quarter_then_upsample" : "input_resolution";
}

void check_keys(const json& doc, const std::set<std::string>& allowed, const char* what) {
  if (!doc.is_object()) throw Error(ErrorKind::kInvalidConfig, std::string(what) + " must be an object");
  for (const auto& [k, v] : doc.items()) {
    if (!allowed.count(k)) throw Error(ErrorKind::kInvalidConfig, "unknown key '" + k + "' in " + what);
  }
}

template <typename V>
void read(const json& doc, const char* key, V& out, const char* what) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<V>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string(what) + "." + key + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  mix.validate();
}

ExperimentConfig paper_preset() {
  ExperimentConfig c;
  c.model.encoder = EncoderConfig{};
  c.model.decoder = DecoderConfig{};
  c.model.lora = LoRAConfig{};
  c.train = TrainConfig{};
  c.mix = MixSpec::single(PromptKind::kLongScribble);
  c.paths.output_dir = "runs/paper";
  return c;
}

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  EncoderConfig& e = c.model.encoder;
  e.image_size = 64;
  e.patch_size = 4;
  e.embed_dim = 32;
  e.num_blocks = 2;
  e.num_heads = 2;
  e.selected_levels = {1, 2};
  e.pos_embed_init = PosEmbedInit::kRandom;
  c.model.decoder.unified_channels = 32;
  c.model.lora = LoRAConfig{};
  c.train.epochs = 1;
  c.train.max_steps = 500;
  c.train.batch_size = 8;
  c.train.learning_rate = 3e-3;
  c.train.validate_each_epoch = false;
  c.mix = MixSpec::single(PromptKind::kLongScribble);
  c.paths.output_dir = "runs/desk";
  return c;
}

ExperimentConfig preset_by_name(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  throw Error(ErrorKind::kInvalidConfig, "unknown preset '" + name + "' (expected paper or desk)");
}

json to_json(const EncoderConfig& c) {
  return {{"image_size", c.image_size},
          {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},
          {"num_blocks", c.num_blocks},
          {"num_heads", c.num_heads},
          {"selected_levels", c.selected_levels},
          {"mlp_ratio", c.mlp_ratio},
          {"pixel_mean", c.pixel_mean},
          {"pixel_std", c.pixel_std},
          {"pos_embed_init", to_string(c.pos_embed_init)},
          {"weight_init", to_string(c.weight_init)}};
}

json to_json(const DecoderConfig& c) {
  return {{"unified_channels", c.unified_channels},
          {"num_classes", c.num_classes},
          {"fuse_resolution", to_string(c.fuse_resolution)},
          {"fuse_activation", c.fuse_activation}};
}

json to_json(const LoRAConfig& c) {
  json targets = json::array();
  if (c.adapt_query) targets.push_back("query");
  if (c.adapt_value) targets.push_back("value");
  return {{"rank", c.rank}, {"alpha", c.alpha}, {"target_projections", targets}};
}

json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"decoder", to_json(c.decoder)},
          {"lora", c.lora ? to_json(*c.lora) : json(nullptr)},
          {"train_encoder_without_lora", c.train_encoder_without_lora}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed},
          {"max_steps", c.max_steps ? json(*c.max_steps) : json(nullptr)},
          {"validate_each_epoch", c.validate_each_epoch}};
}

json to_json(const MixSpec& c) {
  json fractions = json::object();
  for (const auto& [k, f] : c.per_kind_fractions) fractions[std::string(to_string(k))] = f;
  return {{"regime", to_string(c.regime)},
          {"prompt_kind", c.prompt_kind ? json(std::string(to_string(*c.prompt_kind))) : json(nullptr)},
          {"prompted_fraction", c.prompted_fraction},
          {"per_kind_fractions", fractions}};
}

json to_json(const PathsConfig& c) {
  return {{"manifest", c.manifest},
          {"output_dir", c.output_dir},
          {"init_checkpoint", c.init_checkpoint ? json(*c.init_checkpoint) : json(nullptr)}};
}

json to_json(const ExperimentConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"mix", to_json(c.mix)},
          {"paths", to_json(c.paths)},
          {"init_seed", c.init_seed}};
}

EncoderConfig encoder_config_from_json(const json& doc, EncoderConfig c) {
  constexpr const char* what = "encoder";
  check_keys(doc,
             {"image_size", "patch_size", "embed_dim", "num_blocks", "num_heads", "selected_levels", "mlp_ratio",
              "pixel_mean", "pixel_std", "pos_embed_init", "weight_init"},
             what);
  read(doc, "image_size", c.image_size, what);
  read(doc, "patch_size", c.patch_size, what);
  read(doc, "embed_dim", c.embed_dim, what);
  read(doc, "num_blocks", c.num_blocks, what);
  read(doc, "num_heads", c.num_heads, what);
  read(doc, "selected_levels", c.selected_levels, what);
  read(doc, "mlp_ratio", c.mlp_ratio, what);
  read(doc, "pixel_mean", c.pixel_mean, what);
  read(doc, "pixel_std", c.pixel_std, what);
  std::string pos = std::string(to_string(c.pos_embed_init));
  read(doc, "pos_embed_init", pos, what);
  if (pos == "random") {
    c.pos_embed_init = PosEmbedInit::kRandom;
  } else if (pos == "sincos") {
    c.pos_embed_init = PosEmbedInit::kSinCos;
  } else {
    throw Error(ErrorKind::kInvalidConfig, "pos_embed_init must be random or sincos");
  }
  std::string init = std::string(to_string(c.weight_init));
  read(doc, "weight_init", init, what);
  if (init == "trunc_normal") {
    c.weight_init = WeightInit::kTruncNormal;
  } else if (init == "fan_in") {
    c.weight_init = WeightInit::kFanIn;
  } else {
    throw Error(ErrorKind::kInvalidConfig, "weight_init must be trunc_normal or fan_in");
  }
  return c;
}

DecoderConfig decoder_config_from_json(const json& doc, DecoderConfig c) {
  constexpr const char* what = "decoder";
  check_keys(doc, {"unified_channels", "num_classes", "fuse_resolution", "fuse_activation"}, what);
  read(doc, "unified_channels", c.unified_channels, what);
  read(doc, "num_classes", c.num_classes, what);
  read(doc, "fuse_activation", c.fuse_activation, what);
  std::string res = std::string(to_string(c.fuse_resolution));
  read(doc, "fuse_resolution", res, what);
  if (res == "input_resolution") {
    c.fuse_resolution = FuseResolution::kInputResolution;
  } else if (res == "quarter_then_upsample") {
    c.fuse_resolution = FuseResolution::kQuarterThenUpsample;
  } else {
    throw Error(ErrorKind::kInvalidConfig, "fuse_resolution must be input_resolution or quarter_then_upsample");
  }
  return c;
}

LoRAConfig lora_config_from_json(const json& doc, LoRAConfig c) {
  constexpr const char* what = "lora";
  check_keys(doc, {"rank", "alpha", "target_projections"}, what);
  read(doc, "rank", c.rank, what);
  read(doc, "alpha", c.alpha, what);
  if (doc.contains("target_projections")) {
    std::vector<std::string> targets;
    read(doc, "target_projections", targets, what);
    c.adapt_query = c.adapt_value = false;
    for (const auto& t : targets) {
      if (t == "query") {
        c.adapt_query = true;
      } else if (t == "value") {
        c.adapt_value = true;
      } else {
        throw Error(ErrorKind::kInvalidConfig, "lora target '" + t + "' (expected query or value)");
      }
    }
  }
  return c;
}

ModelConfig model_config_from_json(const json& doc, ModelConfig c) {
  check_keys(doc, {"encoder", "decoder", "lora", "train_encoder_without_lora"}, "model");
  if (doc.contains("encoder")) c.encoder = encoder_config_from_json(doc["encoder"], c.encoder);
  if (doc.contains("decoder")) c.decoder = decoder_config_from_json(doc["decoder"], c.decoder);
  if (doc.contains("lora")) {
    if (doc["lora"].is_null()) {
      c.lora.reset();
    } else {
      c.lora = lora_config_from_json(doc["lora"], c.lora.value_or(LoRAConfig{}));
    }
  }
  read(doc, "train_encoder_without_lora", c.train_encoder_without_lora, "model");
  return c;
}

TrainConfig train_config_from_json(const json& doc, TrainConfig c) {
  constexpr const char* what = "train";
  check_keys(doc,
             {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "seed", "max_steps",
              "validate_each_epoch"},
             what);
  read(doc, "epochs", c.epochs, what);
  read(doc, "batch_size", c.batch_size, what);
  read(doc, "learning_rate", c.learning_rate, what);
  read(doc, "beta1", c.beta1, what);
  read(doc, "beta2", c.beta2, what);
  read(doc, "adam_eps", c.adam_eps, what);
  read(doc, "seed", c.seed, what);
  read(doc, "validate_each_epoch", c.validate_each_epoch, what);
  if (doc.contains("max_steps")) {
    if (doc["max_steps"].is_null()) {
      c.max_steps.reset();
    } else {
      int v = 0;
      read(doc, "max_steps", v, what);
      c.max_steps = v;
    }
  }
  return c;
}

MixSpec mix_spec_from_json(const json& doc, MixSpec c) {
  constexpr const char* what = "mix";
  check_keys(doc, {"regime", "prompt_kind", "prompted_fraction", "per_kind_fractions"}, what);
  if (doc.contains("regime")) {
    std::string r;
    read(doc, "regime", r, what);
    const MixRegime regime = parse_mix_regime(r);
    if (regime == MixRegime::kFourWayMix && c.regime != MixRegime::kFourWayMix) c = MixSpec::four_way();
    c.regime = regime;
  }
  if (doc.contains("prompt_kind")) {
    if (doc["prompt_kind"].is_null()) {
      c.prompt_kind.reset();
    } else {
      std::string k;
      read(doc, "prompt_kind", k, what);
      c.prompt_kind = parse_prompt_kind(k);
    }
  }
  read(doc, "prompted_fraction", c.prompted_fraction, what);
  if (doc.contains("per_kind_fractions")) {
    std::map<std::string, double> raw;
    read(doc, "per_kind_fractions", raw, what);
    c.per_kind_fractions.clear();
    for (const auto& [k, f] : raw) c.per_kind_fractions[parse_prompt_kind(k)] = f;
  }
  return c;
}

ExperimentConfig experiment_from_json(const json& doc, ExperimentConfig c) {
  check_keys(doc, {"model", "train", "mix", "paths", "init_seed"}, "config");
  if (doc.contains("model")) c.model = model_config_from_json(doc["model"], c.model);
  if (doc.contains("train")) c.train = train_config_from_json(doc["train"], c.train);
  if (doc.contains("mix")) c.mix = mix_spec_from_json(doc["mix"], c.mix);
  if (doc.contains("paths")) {
    const json& p = doc["paths"];
    check_keys(p, {"manifest", "output_dir", "init_checkpoint"}, "paths");
    read(p, "manifest", c.paths.manifest, "paths");
    read(p, "output_dir", c.paths.output_dir, "paths");
    if (p.contains("init_checkpoint")) {
      if (p["init_checkpoint"].is_null()) {
        c.paths.init_checkpoint.reset();
      } else {
        std::string v;
        read(p, "init_checkpoint", v, "paths");
        c.paths.init_checkpoint = v;
      }
    }
  }
  read(doc, "init_seed", c.init_seed, "config");
  return c;
}

std::string canonical_json(const json& doc) { return doc.dump(-1, ' ', true); }

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(canonical_json(to_json(cfg))); }

}  // namespace pdzseg
