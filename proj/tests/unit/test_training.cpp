#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "pdzseg/checkpoint.hpp"
#include "pdzseg/config.hpp"
#include "pdzseg/data.hpp"
#include "pdzseg/error.hpp"
#include "pdzseg/loss.hpp"
#include "pdzseg/pipeline.hpp"
#include "pdzseg/synth.hpp"
#include "pdzseg/train.hpp"

namespace pdzseg {
namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kIo;
}

DatasetManifest in_memory_manifest(int n_train, int n_test = 0) {
  DatasetManifest m;
  for (int i = 0; i < n_train + n_test; ++i) {
    const bool train = i < n_train;
    const std::string vid = (train ? "tr" : "te") + std::to_string(i / 10);
    m.samples.push_back({"s" + std::to_string(i), vid, "img.png", "mask.png"});
    auto& list = m.split[train ? "train" : "test"];
    if (list.empty() || list.back() != vid) list.push_back(vid);
  }
  return m;
}

TEST(Loss, ConfidentCorrectLogitsGiveNearZero) {
  FeatureMap<double> logits{4, 4, Mat<double>(16, 2)};
  ClassMask target(4, 4);
  for (int i = 0; i < 16; ++i) {
    target.labels()[i] = static_cast<std::uint8_t>(i % 2);
    logits.data(i, i % 2) = 20.0;
    logits.data(i, 1 - i % 2) = 0.0;
  }
  EXPECT_LT(ce_loss(logits, target), 1e-8);
}

TEST(Loss, UniformLogitsGiveLogTwo) {
  FeatureMap<double> logits{3, 5, Mat<double>::Constant(15, 2, 0.7)};
  EXPECT_NEAR(ce_loss(logits, testing::random_mask(3, 5, 1)), std::numbers::ln2, 1e-15);
}

TEST(Loss, PerPixelOracleAndGradient) {
  Rng rng(2);
  FeatureMap<double> logits{8, 8, Mat<double>(64, 2)};
  for (Eigen::Index i = 0; i < logits.data.size(); ++i) logits.data.data()[i] = rng.normal(0.0, 3.0);
  const auto target = testing::random_mask(8, 8, 3);
  double expected = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double a = logits.data(i, 0);
    const double b = logits.data(i, 1);
    const double z = target.labels()[i] ? b : a;
    expected += -(z - std::log(std::exp(a) + std::exp(b)));
  }
  expected /= 64.0;
  FeatureMap<double> grad;
  EXPECT_NEAR(ce_loss_with_grad(logits, target, grad), expected, 1e-6);
  EXPECT_NEAR(ce_loss(logits, target), expected, 1e-12);
  for (int i = 0; i < 64; ++i) {
    const double p1 = 1.0 / (1.0 + std::exp(logits.data(i, 0) - logits.data(i, 1)));
    EXPECT_NEAR(grad.data(i, 1), (p1 - target.labels()[i]) / 64.0, 1e-12);
    EXPECT_NEAR(grad.data(i, 0) + grad.data(i, 1), 0.0, 1e-15);
  }
}

TEST(Loss, Errors) {
  FeatureMap<float> logits{4, 4, Mat<float>::Zero(16, 2)};
  EXPECT_EQ(kind_of([&] { ce_loss(logits, ClassMask(4, 5)); }), ErrorKind::kShapeMismatch);
  ClassMask bad(4, 4);
  bad.at(1, 1) = 2;
  EXPECT_EQ(kind_of([&] { ce_loss(logits, bad); }), ErrorKind::kBadLabel);
}

TEST(Loss, ArgmaxTiesGoToLowerClass) {
  FeatureMap<float> logits{1, 3, Mat<float>(3, 2)};
  logits.data << 1, 1, 0, 2, 3, -1;
  const auto m = argmax_mask(logits);
  EXPECT_EQ(m.at(0, 0), 0);
  EXPECT_EQ(m.at(0, 1), 1);
  EXPECT_EQ(m.at(0, 2), 0);
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
  EXPECT_EQ(cosine_lr(0, 100, 1e-3), 1e-3);
  EXPECT_EQ(cosine_lr(50, 100, 1e-3), 5e-4);
  EXPECT_EQ(cosine_lr(100, 100, 1e-3), 0.0);
  EXPECT_NEAR(cosine_lr(25, 100, 1.0), (1 + std::cos(std::numbers::pi / 4)) / 2, 1e-15);
  EXPECT_EQ(kind_of([] { cosine_lr(-1, 10, 1.0); }), ErrorKind::kOutOfRange);
  EXPECT_EQ(kind_of([] { cosine_lr(11, 10, 1.0); }), ErrorKind::kOutOfRange);
  EXPECT_EQ(kind_of([] { cosine_lr(0, 0, 1.0); }), ErrorKind::kOutOfRange);
}

TEST(Schedule, CosineIsMonotoneNonIncreasing) {
  for (int total : {1, 7, 100, 18500}) {
    double prev = cosine_lr(0, total, 1e-3);
    for (int t = 1; t <= total; ++t) {
      const double cur = cosine_lr(t, total, 1e-3);
      EXPECT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(Schedule, TotalSteps) {
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 8;
  EXPECT_EQ(total_steps(cfg, 1480), 18500);
  EXPECT_EQ(total_steps(cfg, 1481), 18600);
  cfg.epochs = 1;
  EXPECT_EQ(total_steps(cfg, 4), 1);
  cfg.max_steps = 500;
  EXPECT_EQ(total_steps(cfg, 4), 500);
}

TEST(Mixing, KindNamesRoundTrip) {
  for (auto r : {MixRegime::kSinglePrompt, MixRegime::kPromptVsNone, MixRegime::kFourWayMix}) {
    EXPECT_EQ(parse_mix_regime(to_string(r)), r);
  }
  EXPECT_THROW(parse_mix_regime("two_way"), Error);
}

TEST(Mixing, RatiosRealisedExactly) {
  const auto m = in_memory_manifest(1480);
  auto half = count_kinds(build_mixed_dataset(m, MixSpec::prompt_vs_none(PromptKind::kLongScribble, 0.5), 1));
  EXPECT_EQ(half[PromptKind::kLongScribble], 740u);
  EXPECT_EQ(half[PromptKind::kNone], 740u);
  auto four = count_kinds(build_mixed_dataset(m, MixSpec::four_way(), 1));
  for (auto k : {PromptKind::kLongScribble, PromptKind::kShortScribble, PromptKind::kBbox, PromptKind::kNone}) {
    EXPECT_EQ(four[k], 370u);
  }
  auto all = count_kinds(build_mixed_dataset(m, MixSpec::single(PromptKind::kPoint), 1));
  EXPECT_EQ(all[PromptKind::kPoint], 1480u);
  EXPECT_EQ(all.count(PromptKind::kNone), 0u);
}

TEST(Mixing, OddCountsUseLargestRemainder) {
  const auto m = in_memory_manifest(7);
  auto c = count_kinds(build_mixed_dataset(m, MixSpec::prompt_vs_none(PromptKind::kBbox, 0.6), 3));
  EXPECT_EQ(c[PromptKind::kBbox] + c[PromptKind::kNone], 7u);
  EXPECT_TRUE(c[PromptKind::kBbox] == 4u || c[PromptKind::kBbox] == 5u);
}

TEST(Mixing, SeededAndOrderPreserving) {
  const auto m = in_memory_manifest(100);
  const auto spec = MixSpec::prompt_vs_none(PromptKind::kLongScribble, 0.4);
  const auto a = build_mixed_dataset(m, spec, 9);
  const auto b = build_mixed_dataset(m, spec, 9);
  const auto c = build_mixed_dataset(m, spec, 10);
  ASSERT_EQ(a.size(), 100u);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].record.sample_id, m.samples[i].sample_id);
    EXPECT_EQ(a[i].kind, b[i].kind);
    differs = differs || a[i].kind != c[i].kind;
  }
  EXPECT_TRUE(differs);
}

TEST(Mixing, SpecValidation) {
  EXPECT_THROW(MixSpec::prompt_vs_none(PromptKind::kBbox, 1.5).validate(), Error);
  MixSpec bad = MixSpec::four_way();
  bad.per_kind_fractions[PromptKind::kBbox] = 0.3;
  EXPECT_THROW(bad.validate(), Error);
  const auto f = MixSpec::four_way().fractions();
  EXPECT_DOUBLE_EQ(f.at(PromptKind::kNone), 0.25);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto cfg = testing::tiny_model_config();
  SegModel<float> model(cfg, 0);
  model.zero_grad();
  std::vector<Mat<float>> before;
  model.for_each_parameter([&](const std::string&, Parameter<float>& p) {
    before.push_back(p.value);
    if (p.trainable) p.grad.setConstant(0.5f);
  });
  Adam<float> adam(0.9, 0.999, 1e-8);
  adam.step(model, 0.01);
  EXPECT_EQ(adam.steps_taken(), 1);
  std::size_t i = 0;
  model.for_each_parameter([&](const std::string& name, Parameter<float>& p) {
    const Mat<float> delta = p.value - before[i++];
    if (p.trainable) {
      EXPECT_NEAR(delta.maxCoeff(), -0.01f, 1e-6f) << name;
      EXPECT_NEAR(delta.minCoeff(), -0.01f, 1e-6f) << name;
    } else {
      EXPECT_EQ(delta.cwiseAbs().maxCoeff(), 0.0f) << name;
    }
  });
}

class TrainStepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int i = 0; i < 4; ++i) {
      samples_.push_back({testing::random_image(16, 16, 100 + i), testing::blob_mask(16, 200 + i)});
    }
    for (const auto& s : samples_) batch_.push_back(&s);
  }
  std::vector<TrainSample> samples_;
  std::vector<const TrainSample*> batch_;
};

TEST_F(TrainStepTest, FrozenTensorsStayBitwiseEqual) {
  SegModel<float> model(testing::tiny_model_config(), 1);
  const auto frozen = parameter_digests(model, true);
  const auto all = parameter_digests(model, false);
  Adam<float> adam(0.9, 0.999, 1e-8);
  for (int i = 0; i < 5; ++i) train_step(model, adam, batch_, 1e-2);
  EXPECT_EQ(parameter_digests(model, true), frozen);
  EXPECT_NE(parameter_digests(model, false), all);
}

TEST_F(TrainStepTest, LossSequenceIsReproducible) {
  auto run = [&] {
    SegModel<float> model(testing::tiny_model_config(), 2);
    Adam<float> adam(0.9, 0.999, 1e-8);
    std::vector<float> losses;
    for (int i = 0; i < 5; ++i) losses.push_back(train_step(model, adam, batch_, 1e-2));
    return losses;
  };
  EXPECT_EQ(run(), run());
}

TEST_F(TrainStepTest, NonFiniteLossLeavesParametersUntouched) {
  SegModel<float> model(testing::tiny_model_config(), 3);
  model.decoder().head().bias.value(0, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto digests = parameter_digests(model);
  Adam<float> adam(0.9, 0.999, 1e-8);
  EXPECT_EQ(kind_of([&] { train_step(model, adam, batch_, 1e-2); }), ErrorKind::kNonFiniteLoss);
  EXPECT_EQ(parameter_digests(model), digests);
}

class RunTrainingTest : public ::testing::Test {
 protected:
  static ExperimentConfig tiny_experiment(const std::filesystem::path& out) {
    ExperimentConfig cfg = desk_preset();
    cfg.model = testing::tiny_model_config();
    cfg.train.epochs = 1;
    cfg.train.max_steps.reset();
    cfg.train.batch_size = 8;
    cfg.train.validate_each_epoch = true;
    cfg.mix = MixSpec::prompt_vs_none(PromptKind::kLongScribble, 0.5);
    cfg.paths.output_dir = out.string();
    return cfg;
  }
  testing::TempDir dir_;
};

TEST_F(RunTrainingTest, OneEpochOfFourSamplesIsOneStepAndReproducible) {
  SynthConfig sc;
  sc.image_size = 16;
  sc.train_videos = 1;
  sc.test_videos = 1;
  sc.frames_per_video = 4;
  const auto manifest = write_synthetic_dataset(dir_ / "data", sc);
  const auto a = run_training(manifest, tiny_experiment(dir_ / "run_a"));
  const auto b = run_training(manifest, tiny_experiment(dir_ / "run_b"));
  EXPECT_EQ(a.report["total_steps"], 1);
  EXPECT_EQ(a.report["step_losses"].size(), 1u);
  EXPECT_EQ(a.report["per_epoch"], b.report["per_epoch"]);
  EXPECT_EQ(a.report["step_losses"], b.report["step_losses"]);
  EXPECT_EQ(a.report["realized_mix_counts"]["long_scribble"], 2);
  EXPECT_EQ(a.report["realized_mix_counts"]["none"], 2);
  EXPECT_TRUE(a.report["per_epoch"][0].contains("validation"));
  EXPECT_TRUE(std::filesystem::exists(a.final_checkpoint));
  EXPECT_TRUE(std::filesystem::exists(a.report_path));
  EXPECT_EQ(a.report["config_hash"], config_hash(tiny_experiment(dir_ / "run_a")));
}

TEST_F(RunTrainingTest, OverfitLossDecreasesEarly) {
  SynthConfig sc;
  sc.image_size = 16;
  sc.train_videos = 1;
  sc.test_videos = 0;
  sc.frames_per_video = 8;
  const auto manifest = write_synthetic_dataset(dir_ / "data", sc);
  auto cfg = tiny_experiment(dir_ / "run");
  cfg.mix = MixSpec::single(PromptKind::kLongScribble);
  cfg.train.max_steps = 10;
  cfg.train.learning_rate = 3e-3;
  const auto out = run_training(manifest, cfg);
  const auto losses = out.report["step_losses"].get<std::vector<double>>();
  ASSERT_EQ(losses.size(), 10u);
  int violations = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) violations += losses[i] > losses[i - 1];
  EXPECT_LE(violations, 2);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Data, PrepareSampleIsDeterministicAndPrompted) {
  testing::TempDir dir;
  SynthConfig sc;
  sc.image_size = 32;
  sc.train_videos = 1;
  sc.test_videos = 0;
  sc.frames_per_video = 1;
  const auto m = write_synthetic_dataset(dir.path(), sc);
  const auto& rec = m.samples.front();
  const auto plain = prepare_sample(rec, 32, PromptKind::kNone, 0);
  const auto a = prepare_sample(rec, 32, PromptKind::kLongScribble, 0);
  const auto b = prepare_sample(rec, 32, PromptKind::kLongScribble, 0);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, plain.mask);
  EXPECT_NE(a.image, plain.image);
  const auto noisy = prepare_sample(rec, 32, PromptKind::kNone, 0, CorruptionSpec{CorruptionKind::kGaussianNoise, 3, 1});
  EXPECT_NE(noisy.image, plain.image);
}

TEST(Data, PromptIsDrawnAtNativeResolution) {
  testing::TempDir dir;
  SynthConfig sc;
  sc.image_size = 64;
  sc.train_videos = 1;
  sc.test_videos = 0;
  sc.frames_per_video = 1;
  const auto m = write_synthetic_dataset(dir.path(), sc);
  const auto& rec = m.samples.front();
  const auto native = load_native_pair(rec);
  const auto prompt = generate_prompt(PromptKind::kLongScribble, native.mask, mix_seed(5, fnv1a64(rec.sample_id)));
  const auto expected = resize_bilinear(render_prompt_overlay(native.image, prompt), 32, 32);
  const auto sample = prepare_sample(rec, 32, PromptKind::kLongScribble, 5);
  EXPECT_EQ(sample.image, expected);
  EXPECT_EQ(sample.mask, resize_nearest(native.mask, 32, 32));
}

TEST(Data, CacheServesRepeatsAndPersists) {
  testing::TempDir dir;
  SynthConfig sc;
  sc.image_size = 32;
  sc.train_videos = 1;
  sc.test_videos = 0;
  sc.frames_per_video = 2;
  const auto m = write_synthetic_dataset(dir / "data", sc);
  SampleCache cache(dir / "cache");
  const TrainSample first = cache.get(m.samples[0], 32, PromptKind::kBbox, 4);
  const TrainSample again = cache.get(m.samples[0], 32, PromptKind::kBbox, 4);
  EXPECT_EQ(first.image, again.image);
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_EQ(cache.memory_hits(), 1u);
  SampleCache fresh(dir / "cache");
  const TrainSample disk = fresh.get(m.samples[0], 32, PromptKind::kBbox, 4);
  EXPECT_EQ(fresh.disk_hits(), 1u);
  EXPECT_EQ(disk.image, first.image);
  EXPECT_EQ(disk.mask, first.mask);
}

TEST(Data, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

}  // namespace
}  // namespace pdzseg
