#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "pdzseg/checkpoint.hpp"
#include "pdzseg/config.hpp"
#include "pdzseg/error.hpp"
#include "pdzseg/loss.hpp"

namespace pdzseg {
namespace {

using nlohmann::json;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kIo;
}

TEST(Config, FullScalePresetValues) {
  const auto cfg = paper_preset();
  EXPECT_EQ(cfg.model.encoder.image_size, 532);
  EXPECT_EQ(cfg.model.encoder.patch_size, 14);
  EXPECT_EQ(cfg.model.encoder.embed_dim, 768);
  EXPECT_EQ(cfg.model.encoder.num_blocks, 12);
  EXPECT_EQ(cfg.model.encoder.selected_levels, (std::vector<int>{3, 6, 9, 12}));
  EXPECT_EQ(cfg.model.decoder.unified_channels, 256);
  ASSERT_TRUE(cfg.model.lora.has_value());
  EXPECT_EQ(cfg.model.lora->rank, 4);
  EXPECT_EQ(cfg.train.learning_rate, 1e-3);
  EXPECT_EQ(cfg.train.batch_size, 8);
  EXPECT_EQ(cfg.train.epochs, 100);
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_NO_THROW(desk_preset().validate());
  EXPECT_EQ(kind_of([] { preset_by_name("huge"); }), ErrorKind::kInvalidConfig);
}

TEST(Config, JsonRoundTrip) {
  for (const auto& cfg : {paper_preset(), desk_preset()}) {
    EXPECT_EQ(experiment_from_json(to_json(cfg)), cfg);
  }
  auto custom = desk_preset();
  custom.mix = MixSpec::four_way();
  custom.model.lora.reset();
  custom.model.decoder.fuse_resolution = FuseResolution::kQuarterThenUpsample;
  custom.train.max_steps.reset();
  custom.paths.init_checkpoint = "base.ckpt";
  EXPECT_EQ(experiment_from_json(to_json(custom)), custom);
}

TEST(Config, PartialDocumentsOverrideTheBase) {
  const auto base = desk_preset();
  const auto cfg = experiment_from_json(json{{"train", {{"learning_rate", 0.01}}}}, base);
  EXPECT_EQ(cfg.train.learning_rate, 0.01);
  EXPECT_EQ(cfg.model, base.model);
}

TEST(Config, UnknownKeysAndWrongTypesRejected) {
  EXPECT_EQ(kind_of([] { experiment_from_json(json{{"trian", json::object()}}); }), ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of([] { experiment_from_json(json{{"train", {{"epochs", "ten"}}}}); }), ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of([] { encoder_config_from_json(json{{"pos_embed_init", "learned"}}); }),
            ErrorKind::kInvalidConfig);
  EXPECT_EQ(kind_of([] { encoder_config_from_json(json{{"weight_init", "xavier"}}); }), ErrorKind::kInvalidConfig);
  EXPECT_EQ(encoder_config_from_json(json{{"weight_init", "fan_in"}}).weight_init, WeightInit::kFanIn);
}

TEST(Config, HashIsCanonical) {
  const auto a = desk_preset();
  EXPECT_EQ(config_hash(a), config_hash(desk_preset()));
  EXPECT_EQ(config_hash(a).size(), 64u);
  auto b = a;
  b.train.learning_rate *= 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(canonical_json(json{{"b", 1}, {"a", {{"d", 2}, {"c", 3}}}}), R"({"a":{"c":3,"d":2},"b":1})");
}

TEST(Config, ValidationCatchesBadValues) {
  auto cfg = desk_preset();
  cfg.train.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = desk_preset();
  cfg.model.decoder.num_classes = 1;
  EXPECT_THROW(cfg.validate(), Error);
}

class CheckpointTest : public ::testing::Test {
 protected:
  testing::TempDir dir_;
};

TEST_F(CheckpointTest, ArchiveRoundTrip) {
  Archive ar;
  ar.manifest = {{"k", 1}};
  Mat<float> f(2, 3);
  f << 1, 2, 3, 4, 5, 6;
  Mat<double> d = Mat<double>::Constant(1, 4, 0.1);
  ar.tensors.push_back(pack_tensor("f", f));
  ar.tensors.push_back(pack_tensor("d", d));
  write_archive(dir_ / "a.bin", ar);
  const auto back = read_archive(dir_ / "a.bin");
  EXPECT_EQ(back.manifest, ar.manifest);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(unpack_tensor<float>(back.tensors[0]), f);
  EXPECT_EQ(unpack_tensor<double>(back.tensors[1]), d);
}

TEST_F(CheckpointTest, CorruptFilesRejected) {
  std::ofstream(dir_ / "junk.ckpt") << "not a checkpoint at all";
  EXPECT_EQ(kind_of([&] { read_archive(dir_ / "junk.ckpt"); }), ErrorKind::kCheckpoint);
  EXPECT_EQ(kind_of([&] { read_archive(dir_ / "missing.ckpt"); }), ErrorKind::kIo);
  SegModel<float> model(testing::tiny_model_config(), 0);
  save_checkpoint(dir_ / "m.ckpt", model, CheckpointMeta{model.config()});
  std::filesystem::resize_file(dir_ / "m.ckpt", std::filesystem::file_size(dir_ / "m.ckpt") - 10);
  EXPECT_EQ(kind_of([&] { read_archive(dir_ / "m.ckpt"); }), ErrorKind::kCheckpoint);
}

TEST_F(CheckpointTest, FullAndAdapterCheckpointsReproducePredictions) {
  SegModel<float> model(testing::tiny_model_config(), 4);
  testing::randomize_adapters(model, 5);
  model.decoder().head().bias.value(0, 1) = 0.3f;
  const auto img = testing::random_image(16, 16, 6);
  const auto logits = model.forward(img);

  save_checkpoint(dir_ / "full.ckpt", model, CheckpointMeta{model.config(), CheckpointContents::kFull, 4});
  save_checkpoint(dir_ / "lora.ckpt", model, CheckpointMeta{model.config(), CheckpointContents::kAdapters, 4});
  EXPECT_LT(std::filesystem::file_size(dir_ / "lora.ckpt"), std::filesystem::file_size(dir_ / "full.ckpt"));
  EXPECT_EQ(load_checkpoint(dir_ / "full.ckpt").forward(img).data, logits.data);
  EXPECT_EQ(load_checkpoint(dir_ / "lora.ckpt").forward(img).data, logits.data);

  const auto meta = read_checkpoint_meta(dir_ / "lora.ckpt");
  EXPECT_EQ(meta.contents, CheckpointContents::kAdapters);
  EXPECT_EQ(meta.init_seed, 4u);
  EXPECT_EQ(meta.model, model.config());
}

TEST_F(CheckpointTest, LoadingAtAnotherResolutionResamplesPositions) {
  SegModel<float> model(testing::tiny_model_config(), 7);
  save_checkpoint(dir_ / "m.ckpt", model, CheckpointMeta{model.config()});
  const auto bigger = load_checkpoint(dir_ / "m.ckpt", 32);
  EXPECT_EQ(bigger.config().encoder.image_size, 32);
  EXPECT_EQ(bigger.encoder().config().grid(), 8);
  const auto logits = bigger.forward(testing::random_image(32, 32, 8));
  EXPECT_EQ(logits.height, 32);
}

TEST_F(CheckpointTest, StrictApplyNeedsMatchingTensors) {
  SegModel<float> model(testing::tiny_model_config(), 9);
  save_checkpoint(dir_ / "m.ckpt", model, CheckpointMeta{model.config()});
  auto other_cfg = testing::tiny_model_config();
  other_cfg.decoder.unified_channels = 8;
  SegModel<float> other(other_cfg, 9);
  EXPECT_EQ(kind_of([&] { apply_checkpoint(other, dir_ / "m.ckpt", true); }), ErrorKind::kCheckpoint);
  SegModel<float> same(testing::tiny_model_config(), 10);
  EXPECT_GT(apply_checkpoint(same, dir_ / "m.ckpt", true), 0u);
  EXPECT_EQ(parameter_digests(same), parameter_digests(model));
}

}  // namespace
}  // namespace pdzseg
