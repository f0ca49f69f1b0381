#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "pdzseg/checkpoint.hpp"
#include "pdzseg/config.hpp"
#include "pdzseg/synth.hpp"

namespace pdzseg {
namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(PDZSEG_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    SynthConfig sc;
    sc.image_size = 16;
    sc.train_videos = 1;
    sc.test_videos = 1;
    sc.frames_per_video = 4;
    write_synthetic_dataset(dir_->path() / "data", sc);
    ExperimentConfig cfg = desk_preset();
    cfg.model = testing::tiny_model_config();
    cfg.train.max_steps = 2;
    cfg.paths.output_dir = (dir_->path() / "run").string();
    std::ofstream(dir_->path() / "tiny.json") << to_json(cfg).dump(2);
    SegModel<float> model(cfg.model, 0);
    save_checkpoint(dir_->path() / "tiny.ckpt", model, CheckpointMeta{cfg.model});
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string path(const std::string& name) { return (dir_->path() / name).string(); }
  static testing::TempDir* dir_;
};

testing::TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("train --no-such-flag").code, 1);
  EXPECT_EQ(run("eval --manifest x.json").code, 1);  // --ckpt required
  EXPECT_EQ(run("train --preset galactic").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, MissingManifestIsARuntimeFailure) {
  const auto r = run("train --preset desk --manifest " + path("absent.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("DanglingReference"), std::string::npos);
}

TEST_F(CliTest, DryRunEchoesConfigAndHash) {
  const auto r = run("train --config " + path("tiny.json") + " --manifest " + path("data/manifest.json") + " --dry-run");
  ASSERT_EQ(r.code, 0) << r.output;
  auto cfg = experiment_from_json(nlohmann::json::parse(std::ifstream(path("tiny.json"))), desk_preset());
  cfg.paths.manifest = path("data/manifest.json");
  EXPECT_NE(r.output.find("config_hash: " + config_hash(cfg)), std::string::npos);
  EXPECT_NE(r.output.find("\"total_steps\": 2"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(path("run")));
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  const auto r = run("train --config " + path("tiny.json") + " --manifest " + path("data/manifest.json") +
                     " --lr 0.125 --max-steps 3 --dry-run");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("\"learning_rate\": 0.125"), std::string::npos);
  EXPECT_NE(r.output.find("\"total_steps\": 3"), std::string::npos);
}

TEST_F(CliTest, TrainEvalPredictEndToEnd) {
  const std::string cache = path("cache");
  const auto train = run("train --config " + path("tiny.json") + " --manifest " + path("data/manifest.json"),
                         "PDZSEG_CACHE=" + cache);
  ASSERT_EQ(train.code, 0) << train.output;
  EXPECT_TRUE(std::filesystem::exists(path("run/final.ckpt")));
  EXPECT_FALSE(std::filesystem::is_empty(cache));

  const auto eval = run("eval --manifest " + path("data/manifest.json") + " --split test --prompt long_scribble --ckpt " +
                        path("run/final.ckpt") + " --out " + path("metrics.json"));
  ASSERT_EQ(eval.code, 0) << eval.output;
  EXPECT_NE(eval.output.find("dissection IoU"), std::string::npos);
  const auto report = nlohmann::json::parse(std::ifstream(path("metrics.json")));
  EXPECT_EQ(report["prompt_kind"], "long_scribble");
  EXPECT_EQ(report["n_images"], 4);

  std::ofstream(path("prompt.json")) << R"({"kind": "point", "points": [[4, 5]]})";
  const auto image = path("data/images/v0000_f000.png");
  const auto pred = run("predict --ckpt " + path("run/final.ckpt") + " --image " + image + " --prompt " +
                        path("prompt.json") + " --out " + path("pred.png") + " --contours " + path("pred.json"));
  ASSERT_EQ(pred.code, 0) << pred.output;
  EXPECT_EQ(read_png_gray(path("pred.png")).width(), 16);
  EXPECT_TRUE(nlohmann::json::parse(std::ifstream(path("pred.json"))).contains("contours"));

  const auto bad_eval = run("eval --manifest " + path("data/manifest.json") + " --prompt ellipse --ckpt " +
                            path("run/final.ckpt"));
  EXPECT_EQ(bad_eval.code, 2);
}

TEST_F(CliTest, CorruptWritesImage) {
  const auto image = path("data/images/v0000_f000.png");
  const auto r = run("corrupt --kind smoke --severity 3 --seed 7 " + image + " " + path("out.png"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto again = run("corrupt --kind smoke --severity 3 --seed 7 " + image + " " + path("out2.png"));
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(read_png_rgb(path("out.png")), read_png_rgb(path("out2.png")));
  ASSERT_EQ(run("corrupt --kind smoke --severity 3 --seed 8 " + image + " " + path("out3.png")).code, 0);
  EXPECT_NE(read_png_rgb(path("out.png")), read_png_rgb(path("out3.png")));
  ASSERT_EQ(run("corrupt --kind smoke --severity 3 --corruption-seed 7 " + image + " " + path("out4.png")).code, 0);
  EXPECT_EQ(read_png_rgb(path("out.png")), read_png_rgb(path("out4.png")));
  EXPECT_EQ(run("corrupt --kind smoke --severity 9 " + image + " " + path("bad.png")).code, 2);
  EXPECT_EQ(run("corrupt --kind fog " + image + " " + path("bad.png")).code, 2);
}

TEST_F(CliTest, GenPromptsWritesDocuments) {
  const auto r = run("gen-prompts --config " + path("tiny.json") + " --manifest " + path("data/manifest.json") +
                     " --split train --kind bbox --out " + path("prompts"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto index = nlohmann::json::parse(std::ifstream(path("prompts/prompts.json")));
  ASSERT_EQ(index.size(), 4u);
  EXPECT_EQ(index[0]["prompt"]["kind"], "bbox");
}

TEST_F(CliTest, SynthDataAndServeDryRun) {
  const auto r = run("synth-data --out " + path("synth") + " --size 32 --train-videos 1 --test-videos 1 --frames 2");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(path("synth/manifest.json")));
  const auto serve = run("serve --model tiny=" + path("tiny.ckpt") + " --dry-run");
  EXPECT_EQ(serve.code, 0) << serve.output;
  EXPECT_NE(serve.output.find("\"model_id\": \"tiny\""), std::string::npos);
  EXPECT_EQ(run("serve --model " + path("absent.ckpt") + " --dry-run").code, 2);
}

}  // namespace
}  // namespace pdzseg
