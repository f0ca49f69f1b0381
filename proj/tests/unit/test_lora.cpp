#include <gtest/gtest.h>

#include <Eigen/LU>

#include "fixtures.hpp"
#include "pdzseg/encoder.hpp"
#include "pdzseg/error.hpp"
#include "pdzseg/lora.hpp"
#include "pdzseg/rng.hpp"

namespace pdzseg {
namespace {

Mat<double> random_mat(int r, int c, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

LoraLinear<double> adapted_layer(int in, int out, int rank, double scale, std::uint64_t seed) {
  LoraLinear<double> layer(in, out);
  Rng rng(seed);
  fill_normal(layer.base.weight.value, rng, 0.5);
  fill_normal(layer.base.bias.value, rng, 0.5);
  layer.base.set_trainable(false);
  layer.attach(rank, scale, rng);
  return layer;
}

TEST(LoRA, ConfigValidation) {
  LoRAConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.rank = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.alpha = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.adapt_query = cfg.adapt_value = false;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_DOUBLE_EQ((LoRAConfig{8, 16.0}).scale(), 2.0);
}

TEST(LoRA, ParameterCountForVitBase) {
  EXPECT_EQ(lora_parameter_count(LoRAConfig{}, 768, 12), 147456u);
  LoRAConfig q_only;
  q_only.adapt_value = false;
  EXPECT_EQ(lora_parameter_count(q_only, 768, 12), 73728u);
}

TEST(LoRA, FreshAdapterIsANoOp) {
  auto layer = adapted_layer(6, 5, 3, 1.0, 1);
  EXPECT_EQ(layer.adapter->b.value.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(layer.adapter->a.value.cwiseAbs().maxCoeff(), 0.0);
  const auto x = random_mat(4, 6, 2);
  EXPECT_EQ(layer.forward(x, nullptr), layer.base.forward(x));
}

TEST(LoRA, AttachTwiceFails) {
  auto layer = adapted_layer(4, 4, 2, 1.0, 1);
  Rng rng(0);
  try {
    layer.attach(2, 1.0, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kAlreadyAdapted);
  }
}

TEST(LoRA, DenseOracleWithZeroBase) {
  Linear<double> base(5, 4);
  LoRAPair<double> pair{Parameter<double>(2, 5), Parameter<double>(4, 2)};
  pair.a.value = random_mat(2, 5, 3);
  pair.b.value = random_mat(4, 2, 4);
  const LoRAConfig cfg{2, 2.0};
  const auto x = random_mat(3, 5, 5);
  const Mat<double> delta = pair.b.value * pair.a.value;
  const Mat<double> expected = x * delta.transpose();
  EXPECT_LT((lora_linear_forward(x, base, pair, cfg) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LoRA, DoublingAlphaDoublesTheUpdate) {
  Linear<double> base(5, 4);
  Rng rng(6);
  fill_normal(base.weight.value, rng, 1.0);
  LoRAPair<double> pair{Parameter<double>(2, 5), Parameter<double>(4, 2)};
  pair.a.value = random_mat(2, 5, 7);
  pair.b.value = random_mat(4, 2, 8);
  const auto x = random_mat(3, 5, 9);
  const Mat<double> plain = base.forward(x);
  const Mat<double> one = lora_linear_forward(x, base, pair, LoRAConfig{2, 3.0}) - plain;
  const Mat<double> two = lora_linear_forward(x, base, pair, LoRAConfig{2, 6.0}) - plain;
  EXPECT_LT((two - 2.0 * one).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LoRA, UpdateRankIsBoundedByR) {
  for (int r : {1, 2, 4}) {
    const Mat<double> b = random_mat(16, r, 10 + r);
    const Mat<double> a = random_mat(r, 12, 20 + r);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd(b * a));
    EXPECT_LE(lu.rank(), r);
  }
}

TEST(LoRA, BackwardLeavesBaseUntouchedAndMatchesFiniteDifference) {
  auto layer = adapted_layer(5, 4, 2, 1.5, 11);
  layer.adapter->b.value = random_mat(4, 2, 12);
  const auto x = random_mat(3, 5, 13);
  const auto w = random_mat(3, 4, 14);
  LoraLinear<double>::Cache cache;
  layer.forward(x, &cache);
  layer.base.weight.zero_grad();
  layer.base.bias.zero_grad();
  layer.adapter->a.zero_grad();
  layer.adapter->b.zero_grad();
  const auto dx = layer.backward(x, w, cache);
  EXPECT_EQ(layer.base.weight.grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(layer.base.bias.grad.cwiseAbs().maxCoeff(), 0.0);

  const double h = 1e-6;
  auto loss = [&] { return layer.forward(x, nullptr).cwiseProduct(w).sum(); };
  for (auto* p : {&layer.adapter->a, &layer.adapter->b}) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& v = p->value.data()[i];
      const double saved = v;
      v = saved + h;
      const double up = loss();
      v = saved - h;
      const double down = loss();
      v = saved;
      EXPECT_NEAR(p->grad.data()[i], (up - down) / (2 * h), 1e-7);
    }
  }
  Mat<double> num(3, 5);
  Mat<double> xp = x;
  for (Eigen::Index i = 0; i < xp.size(); ++i) {
    const double saved = xp.data()[i];
    xp.data()[i] = saved + h;
    const double up = layer.forward(xp, nullptr).cwiseProduct(w).sum();
    xp.data()[i] = saved - h;
    const double down = layer.forward(xp, nullptr).cwiseProduct(w).sum();
    xp.data()[i] = saved;
    num.data()[i] = (up - down) / (2 * h);
  }
  EXPECT_LT((dx - num).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(LoRA, InjectionExposesOnlyAdapterMatrices) {
  const auto cfg = testing::tiny_model_config();
  VitEncoder<float> enc(cfg.encoder, 0);
  enc.inject_lora(LoRAConfig{}, 1);
  std::size_t trainable = 0;
  enc.for_each_parameter([&](const std::string& name, Parameter<float>& p) {
    const bool is_adapter = name.ends_with("lora_A") || name.ends_with("lora_B");
    EXPECT_EQ(p.trainable, is_adapter) << name;
    if (p.trainable) trainable += p.size();
  });
  EXPECT_EQ(trainable, lora_parameter_count(LoRAConfig{}, 8, 2));
  try {
    enc.inject_lora(LoRAConfig{}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kAlreadyAdapted);
  }
  LoRAConfig zero;
  zero.rank = 0;
  VitEncoder<float> other(cfg.encoder, 0);
  EXPECT_THROW(other.inject_lora(zero, 1), Error);
}

TEST(LoRA, InjectedEncoderMatchesFrozenBaseAtInit) {
  const auto cfg = testing::tiny_model_config();
  VitEncoder<float> base(cfg.encoder, 3);
  VitEncoder<float> adapted(cfg.encoder, 3);
  adapted.inject_lora(LoRAConfig{}, 4);
  const auto img = testing::random_image(16, 16, 5);
  const auto a = base.extract_multilevel(img);
  const auto b = adapted.extract_multilevel(img);
  ASSERT_EQ(a.levels.size(), b.levels.size());
  for (std::size_t l = 0; l < a.levels.size(); ++l) EXPECT_EQ(a.levels[l].data, b.levels[l].data);
}

}  // namespace
}  // namespace pdzseg
