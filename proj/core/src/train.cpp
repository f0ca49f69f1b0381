#include "pdzseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pdzseg/error.hpp"

namespace pdzseg {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::kInvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kInvalidConfig, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kInvalidConfig, "learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw Error(ErrorKind::kInvalidConfig, "adam_eps must be positive");
  if (max_steps && *max_steps < 1) throw Error(ErrorKind::kInvalidConfig, "max_steps must be >= 1");
}

std::string_view to_string(MixRegime regime) {
  switch (regime) {
    case MixRegime::kSinglePrompt: return "single_prompt";
    case MixRegime::kPromptVsNone: return "prompt_vs_none_ratio";
    case MixRegime::kFourWayMix: return "four_way_mix";
  }
  return "unknown";
}

MixRegime parse_mix_regime(std::string_view name) {
  for (MixRegime r : {MixRegime::kSinglePrompt, MixRegime::kPromptVsNone, MixRegime::kFourWayMix}) {
    if (to_string(r) == name) return r;
  }
  throw Error(ErrorKind::kInvalidConfig, "unknown mix regime '" + std::string(name) + "'");
}

MixSpec MixSpec::single(PromptKind kind) {
  MixSpec m;
  m.regime = MixRegime::kSinglePrompt;
  m.prompt_kind = kind;
  m.prompted_fraction = 1.0;
  return m;
}

MixSpec MixSpec::prompt_vs_none(PromptKind kind, double prompted_fraction) {
  MixSpec m;
  m.regime = MixRegime::kPromptVsNone;
  m.prompt_kind = kind;
  m.prompted_fraction = prompted_fraction;
  return m;
}

MixSpec MixSpec::four_way() {
  MixSpec m;
  m.regime = MixRegime::kFourWayMix;
  m.prompt_kind.reset();
  m.per_kind_fractions = {{PromptKind::kLongScribble, 0.25},
                          {PromptKind::kShortScribble, 0.25},
                          {PromptKind::kBbox, 0.25},
                          {PromptKind::kNone, 0.25}};
  return m;
}

std::map<PromptKind, double> MixSpec::fractions() const {
  switch (regime) {
    case MixRegime::kSinglePrompt:
      return {{prompt_kind.value_or(PromptKind::kNone), 1.0}};
    case MixRegime::kPromptVsNone: {
      const PromptKind k = prompt_kind.value_or(PromptKind::kNone);
      if (k == PromptKind::kNone) return {{PromptKind::kNone, 1.0}};
      return {{k, prompted_fraction}, {PromptKind::kNone, 1.0 - prompted_fraction}};
    }
    case MixRegime::kFourWayMix:
      return per_kind_fractions;
  }
  return {};
}

void MixSpec::validate() const {
  if (regime != MixRegime::kFourWayMix && !prompt_kind) {
    throw Error(ErrorKind::kInvalidConfig, std::string(to_string(regime)) + " needs a prompt_kind");
  }
  if (!(prompted_fraction >= 0.0 && prompted_fraction <= 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "prompted_fraction must lie in [0, 1]");
  }
  if (regime == MixRegime::kFourWayMix && per_kind_fractions.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "four_way_mix needs per_kind_fractions");
  }
  double sum = 0.0;
  for (const auto& [kind, f] : fractions()) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorKind::kInvalidConfig, "mix fractions must lie in [0, 1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::kInvalidConfig, "mix fractions sum to " + std::to_string(sum));
}

std::vector<MixedSample> build_mixed_dataset(const DatasetManifest& manifest, const MixSpec& mix, std::uint64_t seed,
                                             const std::string& split) {
  mix.validate();
  const std::vector<SampleRecord> records = manifest.samples_in_split(split);
  const std::size_t n = records.size();
  const auto fractions = mix.fractions();

  // largest remainder; ties go to the kind listed first
  std::vector<std::pair<PromptKind, std::size_t>> counts;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (const auto& [kind, f] : fractions) {
    const double exact = f * static_cast<double>(n);
    const auto whole = static_cast<std::size_t>(std::floor(exact + 1e-9));
    counts.emplace_back(kind, whole);
    remainders.emplace_back(exact - static_cast<double>(whole), counts.size() - 1);
    assigned += whole;
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n && i < remainders.size(); ++i, ++assigned) ++counts[remainders[i].second].second;

  std::vector<PromptKind> labels;
  labels.reserve(n);
  for (const auto& [kind, c] : counts) labels.insert(labels.end(), c, kind);
  Rng rng(mix_seed(seed, 0x6d6978ULL));
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);

  std::vector<MixedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(MixedSample{records[i], labels[i]});
  return out;
}

std::map<PromptKind, std::size_t> count_kinds(const std::vector<MixedSample>& samples) {
  std::map<PromptKind, std::size_t> out;
  for (const auto& s : samples) ++out[s.kind];
  return out;
}

double cosine_lr(int step, int total, double base) {
  if (total < 1) throw Error(ErrorKind::kOutOfRange, "total steps must be >= 1");
  if (step < 0 || step > total) {
    throw Error(ErrorKind::kOutOfRange, "step " + std::to_string(step) + " outside 0.." + std::to_string(total));
  }
  if (step == total) return 0.0;
  if (2 * step == total) return base / 2.0;
  return base * (1.0 + std::cos(std::numbers::pi * step / total)) / 2.0;
}

int total_steps(const TrainConfig& cfg, std::size_t n) {
  if (cfg.max_steps) return *cfg.max_steps;
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  return static_cast<int>(per_epoch * cfg.epochs);
}

template <typename T>
void Adam<T>::step(SegModel<T>& model, double lr) {
  ++t_;
  const T b1 = static_cast<T>(beta1_);
  const T b2 = static_cast<T>(beta2_);
  const T c1 = static_cast<T>(1.0 - std::pow(beta1_, t_));
  const T c2 = static_cast<T>(1.0 - std::pow(beta2_, t_));
  const T step_size = static_cast<T>(lr);
  const T eps = static_cast<T>(eps_);
  model.for_each_parameter([&](const std::string& name, Parameter<T>& p) {
    if (!p.trainable) return;
    auto it = state_.find(name);
    if (it == state_.end()) {
      it = state_.emplace(name, Moments{Mat<T>::Zero(p.value.rows(), p.value.cols()),
                                        Mat<T>::Zero(p.value.rows(), p.value.cols())}).first;
    }
    Moments& s = it->second;
    s.m = b1 * s.m + (T(1) - b1) * p.grad;
    s.v = b2 * s.v + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step_size * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  });
}

template <typename T>
T train_step(SegModel<T>& model, Adam<T>& optimizer, const std::vector<const TrainSample*>& batch, double lr) {
  if (batch.empty()) throw Error(ErrorKind::kOutOfRange, "empty batch");
  model.zero_grad();
  const T weight = T(1) / static_cast<T>(batch.size());
  double total = 0.0;
  for (const TrainSample* s : batch) total += static_cast<double>(model.accumulate_gradients(s->image, s->mask, weight));
  const double loss = total / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) {
    model.zero_grad();
    throw Error(ErrorKind::kNonFiniteLoss, "batch loss is " + std::to_string(loss) + " at optimizer step " +
                                               std::to_string(optimizer.steps_taken() + 1) + " (lr " +
                                               std::to_string(lr) + ", batch " + std::to_string(batch.size()) + ")");
  }
  optimizer.step(model, lr);
  return static_cast<T>(loss);
}

template class Adam<float>;
template class Adam<double>;
template float train_step<float>(SegModel<float>&, Adam<float>&, const std::vector<const TrainSample*>&, double);
template double train_step<double>(SegModel<double>&, Adam<double>&, const std::vector<const TrainSample*>&, double);

}  // namespace pdzseg
