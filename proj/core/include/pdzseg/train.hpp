#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdzseg/image.hpp"
#include "pdzseg/manifest.hpp"
#include "pdzseg/model.hpp"
#include "pdzseg/prompt.hpp"

namespace pdzseg {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // When set, run exactly this many optimizer steps (epochs repeat as
  // needed) instead of epochs * ceil(N / batch).
  std::optional<int> max_steps;
  bool validate_each_epoch = true;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

enum class MixRegime { kSinglePrompt, kPromptVsNone, kFourWayMix };

std::string_view to_string(MixRegime regime);
MixRegime parse_mix_regime(std::string_view name);

struct MixSpec {
  MixRegime regime = MixRegime::kSinglePrompt;
  std::optional<PromptKind> prompt_kind = PromptKind::kLongScribble;
  double prompted_fraction = 1.0;
  std::map<PromptKind, double> per_kind_fractions;

  static MixSpec single(PromptKind kind);
  static MixSpec prompt_vs_none(PromptKind kind, double prompted_fraction);
  // 25% each of long scribble, short scribble, box and no prompt.
  static MixSpec four_way();

  // Kind -> fraction over all samples (kNone included); sums to 1.
  std::map<PromptKind, double> fractions() const;

  // Throws kInvalidConfig when fractions are out of range or do not sum to 1.
  void validate() const;

  bool operator==(const MixSpec&) const = default;
};

struct MixedSample {
  SampleRecord record;
  PromptKind kind = PromptKind::kNone;
};

// Per-kind counts by largest remainder, then a seeded shuffle of the kind
// labels over the samples of `split` in manifest order.
std::vector<MixedSample> build_mixed_dataset(const DatasetManifest& manifest, const MixSpec& mix, std::uint64_t seed,
                                             const std::string& split = "train");

std::map<PromptKind, std::size_t> count_kinds(const std::vector<MixedSample>& samples);

// base * (1 + cos(pi t / T)) / 2; throws kOutOfRange unless 0 <= t <= T, T >= 1.
double cosine_lr(int step, int total, double base);

// Optimizer steps for a dataset of n samples.
int total_steps(const TrainConfig& cfg, std::size_t n);

template <typename T>
class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates every trainable parameter of the model with its current grad.
  void step(SegModel<T>& model, double lr);
  int steps_taken() const { return t_; }

 private:
  struct Moments {
    Mat<T> m;
    Mat<T> v;
  };
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

struct TrainSample {
  ImageTensor image;  // prompt already overlaid, at model resolution
  ClassMask mask;
};

// Zero grads, accumulate the batch-mean loss, apply one Adam update.
// Throws kNonFiniteLoss (parameters untouched) when the loss is not finite.
template <typename T>
T train_step(SegModel<T>& model, Adam<T>& optimizer, const std::vector<const TrainSample*>& batch, double lr);

}  // namespace pdzseg
