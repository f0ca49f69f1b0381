#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pdzseg/corruptions.hpp"
#include "pdzseg/model.hpp"
#include "pdzseg/train.hpp"

namespace pdzseg {

struct PathsConfig {
  std::string manifest;
  std::string output_dir = "runs/default";
  std::optional<std::string> init_checkpoint;  // pretrained base weights

  bool operator==(const PathsConfig&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  MixSpec mix;
  PathsConfig paths;
  std::uint64_t init_seed = 0;

  // Validates every sub-config.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

// 532 px, ViT-Base (patch 14, width 768, 12 blocks, 12 heads, levels
// 3/6/9/12), rank-4 adapters, Adam at 1e-3, batch 8, 100 epochs.
ExperimentConfig paper_preset();
// Small CPU-scale configuration used by the synthetic experiments.
ExperimentConfig desk_preset();
// "paper" or "desk"; throws kInvalidConfig otherwise.
ExperimentConfig preset_by_name(const std::string& name);

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const DecoderConfig& c);
nlohmann::json to_json(const LoRAConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const MixSpec& c);
nlohmann::json to_json(const PathsConfig& c);
nlohmann::json to_json(const ExperimentConfig& c);

// Each reader starts from `base` and overrides the keys present in `doc`.
// Unknown keys and wrong types throw kInvalidConfig.
EncoderConfig encoder_config_from_json(const nlohmann::json& doc, EncoderConfig base = {});
DecoderConfig decoder_config_from_json(const nlohmann::json& doc, DecoderConfig base = {});
LoRAConfig lora_config_from_json(const nlohmann::json& doc, LoRAConfig base = {});
ModelConfig model_config_from_json(const nlohmann::json& doc, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});
MixSpec mix_spec_from_json(const nlohmann::json& doc, MixSpec base = {});
ExperimentConfig experiment_from_json(const nlohmann::json& doc, ExperimentConfig base = {});

// Compact dump with sorted keys and shortest round-trip number formatting.
std::string canonical_json(const nlohmann::json& doc);
// SHA-256 of the canonical serialization.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace pdzseg
