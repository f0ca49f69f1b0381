#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pdzseg/config.hpp"
#include "pdzseg/corruptions.hpp"
#include "pdzseg/manifest.hpp"
#include "pdzseg/metrics.hpp"
#include "pdzseg/model.hpp"

namespace pdzseg {

struct EvalOptions {
  std::string split = "test";
  PromptKind prompt_kind = PromptKind::kNone;
  std::optional<CorruptionSpec> corruption;
  std::uint64_t seed = 0;  // prompt synthesis seed
};

// Prompt from ground truth, overlay, optional corruption, argmax; counts are
// summed over the split before scoring. Throws kInvalidConfig on an empty split.
MetricsReport run_eval(const SegModel<float>& model, const DatasetManifest& manifest, const EvalOptions& opts);

struct StepEvent {
  int step = 0;  // 1-based
  int total = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainingOutcome {
  nlohmann::json report;
  std::filesystem::path final_checkpoint;
  std::optional<std::filesystem::path> best_checkpoint;
  std::filesystem::path report_path;
};

// Full training run: mixed dataset, cosine-annealed Adam over
// epochs * ceil(N / batch) steps (or max_steps), per-epoch validation on the
// test split, final and best checkpoints plus a JSON run report in
// cfg.paths.output_dir. Returns the trained model through `model_out`.
TrainingOutcome run_training(const DatasetManifest& manifest, const ExperimentConfig& cfg,
                             const std::function<void(const StepEvent&)>& on_step = {},
                             std::optional<SegModel<float>>* model_out = nullptr);

}  // namespace pdzseg
