#include <benchmark/benchmark.h>

#include "pdzseg/config.hpp"
#include "pdzseg/contour.hpp"
#include "pdzseg/corruptions.hpp"
#include "pdzseg/metrics.hpp"
#include "pdzseg/model.hpp"
#include "pdzseg/morphology.hpp"
#include "pdzseg/prompt.hpp"
#include "pdzseg/rng.hpp"
#include "pdzseg/synth.hpp"
#include "pdzseg/train.hpp"

namespace {

using namespace pdzseg;

ImageTensor noise_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(size, size);
  for (float& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

SynthFrame frame(int size) {
  Rng rng(3);
  return synth_two_blob_frame(size, false, rng);
}

void BM_DeskForward(benchmark::State& state) {
  const SegModel<float> model(desk_preset().model, 1);
  const auto img = noise_image(64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(img));
}
BENCHMARK(BM_DeskForward)->Unit(benchmark::kMillisecond);

void BM_DeskTrainStep(benchmark::State& state) {
  SegModel<float> model(desk_preset().model, 1);
  Adam<float> adam(0.9, 0.999, 1e-8);
  const auto f = frame(64);
  std::vector<TrainSample> samples(8, TrainSample{f.image, f.mask});
  std::vector<const TrainSample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(model, adam, batch, 1e-3));
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);

void BM_BaseEncoder(benchmark::State& state) {
  EncoderConfig cfg;
  cfg.image_size = static_cast<int>(state.range(0));
  VitEncoder<float> enc(cfg, 1);
  enc.inject_lora(LoRAConfig{}, 2);
  const auto img = noise_image(cfg.image_size, 3);
  for (auto _ : state) benchmark::DoNotOptimize(enc.extract_multilevel(img));
}
BENCHMARK(BM_BaseEncoder)->Arg(112)->Arg(224)->Unit(benchmark::kMillisecond);

void BM_LongScribble(benchmark::State& state) {
  const auto f = frame(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gen_long_scribble(f.mask, 1));
}
BENCHMARK(BM_LongScribble)->Arg(64)->Arg(256);

void BM_DistanceTransform(benchmark::State& state) {
  const auto f = frame(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(squared_distance_transform(f.mask));
}
BENCHMARK(BM_DistanceTransform)->Arg(64)->Arg(256);

void BM_Corruption(benchmark::State& state) {
  const auto img = noise_image(256, 4);
  const auto kind = kAllCorruptions[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(std::string(to_string(kind)));
  for (auto _ : state) benchmark::DoNotOptimize(corrupt(img, {kind, 3, 5}));
}
BENCHMARK(BM_Corruption)->DenseRange(0, static_cast<int>(kAllCorruptions.size()) - 1);

void BM_ContourRoundTrip(benchmark::State& state) {
  const auto f = frame(256);
  for (auto _ : state) benchmark::DoNotOptimize(fill_contours(extract_contours(f.mask), 256, 256));
}
BENCHMARK(BM_ContourRoundTrip);

void BM_Confusion(benchmark::State& state) {
  const auto a = frame(256).mask;
  Rng rng(9);
  const auto b = synth_two_blob_frame(256, true, rng).mask;
  for (auto _ : state) benchmark::DoNotOptimize(confusion_counts(a, b));
}
BENCHMARK(BM_Confusion);

}  // namespace

BENCHMARK_MAIN();
