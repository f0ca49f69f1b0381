#include "pdzseg/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pdzseg/checkpoint.hpp"
#include "pdzseg/data.hpp"
#include "pdzseg/error.hpp"

namespace pdzseg {

MetricsReport run_eval(const SegModel<float>& model, const DatasetManifest& manifest, const EvalOptions& opts) {
  const auto records = manifest.samples_in_split(opts.split);
  if (records.empty()) throw Error(ErrorKind::kInvalidConfig, "split '" + opts.split + "' has no samples");
  const int size = model.config().encoder.image_size;
  ConfusionCounts total(model.config().decoder.num_classes);
  for (const auto& rec : records) {
    const TrainSample s = prepare_sample(rec, size, opts.prompt_kind, opts.seed, opts.corruption);
    total += confusion_counts(model.predict(s.image), s.mask, model.config().decoder.num_classes);
  }
  std::optional<std::string> corruption;
  if (opts.corruption) {
    corruption = std::string(to_string(opts.corruption->kind)) + "@" + std::to_string(opts.corruption->severity);
  }
  return summarize(total, records.size(), opts.split, std::string(to_string(opts.prompt_kind)), corruption);
}

namespace {

PromptKind validation_kind(const MixSpec& mix) {
  if (mix.regime != MixRegime::kFourWayMix && mix.prompt_kind) return *mix.prompt_kind;
  return PromptKind::kLongScribble;
}

}  // namespace

TrainingOutcome run_training(const DatasetManifest& manifest, const ExperimentConfig& cfg,
                             const std::function<void(const StepEvent&)>& on_step,
                             std::optional<SegModel<float>>* model_out) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const std::filesystem::path out_dir = cfg.paths.output_dir;
  std::filesystem::create_directories(out_dir);

  SegModel<float> model(cfg.model, cfg.init_seed);
  if (cfg.paths.init_checkpoint) apply_checkpoint(model, *cfg.paths.init_checkpoint, false);

  const std::vector<MixedSample> mixed = build_mixed_dataset(manifest, cfg.mix, cfg.train.seed, "train");
  if (mixed.empty()) throw Error(ErrorKind::kInvalidConfig, "train split has no samples");
  const bool has_test = !manifest.samples_in_split("test").empty();

  SampleCache cache(SampleCache::dir_from_env());
  Adam<float> optimizer(cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps);
  const int steps = total_steps(cfg.train, mixed.size());
  const int size = cfg.model.encoder.image_size;
  const std::size_t batch = static_cast<std::size_t>(cfg.train.batch_size);

  const CheckpointContents contents = cfg.model.lora ? CheckpointContents::kAdapters : CheckpointContents::kFull;
  CheckpointMeta meta{cfg.model, contents, cfg.init_seed, cfg.paths.init_checkpoint, {}};
  if (meta.base_checkpoint) meta.base_checkpoint = std::filesystem::absolute(*meta.base_checkpoint).string();

  nlohmann::json epochs = nlohmann::json::array();
  std::vector<double> step_losses;
  step_losses.reserve(static_cast<std::size_t>(steps));
  std::optional<double> best_iou;
  std::optional<std::filesystem::path> best_path;
  int step = 0;
  for (int epoch = 0; step < steps; ++epoch) {
    std::vector<std::size_t> order(mixed.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.train.seed, 0x65706f6368ULL + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size() && step < steps; start += batch) {
      std::vector<TrainSample> samples;
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
        const MixedSample& m = mixed[order[i]];
        samples.push_back(cache.get(m.record, size, m.kind, cfg.train.seed));
      }
      std::vector<const TrainSample*> ptrs;
      for (const auto& s : samples) ptrs.push_back(&s);
      const double lr = cosine_lr(step, steps, cfg.train.learning_rate);
      const double loss = train_step(model, optimizer, ptrs, lr);
      ++step;
      ++epoch_steps;
      epoch_loss += loss;
      step_losses.push_back(loss);
      if (on_step) on_step(StepEvent{step, steps, epoch + 1, loss, lr});
    }

    nlohmann::json entry = {{"epoch", epoch + 1}, {"steps", epoch_steps}, {"mean_loss", epoch_loss / epoch_steps}};
    if (cfg.train.validate_each_epoch && has_test) {
      const MetricsReport r = run_eval(model, manifest, EvalOptions{"test", validation_kind(cfg.mix), {}, 0});
      entry["validation"] = report_to_json(r);
      if (r.mean_iou && (!best_iou || *r.mean_iou > *best_iou)) {
        best_iou = r.mean_iou;
        best_path = out_dir / "best.ckpt";
        CheckpointMeta m = meta;
        m.extra = {{"epoch", epoch + 1}, {"mean_iou", *r.mean_iou}};
        save_checkpoint(*best_path, model, m);
      }
    }
    epochs.push_back(std::move(entry));
  }

  const std::filesystem::path final_path = out_dir / "final.ckpt";
  CheckpointMeta final_meta = meta;
  final_meta.extra = {{"steps", steps}};
  save_checkpoint(final_path, model, final_meta);

  nlohmann::json mix_counts = nlohmann::json::object();
  for (const auto& [kind, n] : count_kinds(mixed)) mix_counts[std::string(to_string(kind))] = n;
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  TrainingOutcome outcome;
  outcome.report = {{"config_hash", config_hash(cfg)},
                    {"config", to_json(cfg)},
                    {"total_steps", steps},
                    {"train_samples", mixed.size()},
                    {"per_epoch", epochs},
                    {"step_losses", step_losses},
                    {"realized_mix_counts", mix_counts},
                    {"best_mean_iou", best_iou ? nlohmann::json(*best_iou) : nlohmann::json()},
                    {"final_checkpoint", final_path.string()},
                    {"best_checkpoint", best_path ? nlohmann::json(best_path->string()) : nlohmann::json()},
                    {"wall_clock_seconds", seconds}};
  outcome.final_checkpoint = final_path;
  outcome.best_checkpoint = best_path;
  outcome.report_path = out_dir / "run_report.json";
  std::ofstream(outcome.report_path) << outcome.report.dump(2) << '\n';
  if (model_out) model_out->emplace(std::move(model));
  return outcome;
}

}  // namespace pdzseg
