#include <gtest/gtest.h>

#include <cmath>

#include "simcond/diffusion_training.hpp"
#include "simcond/errors.hpp"
#include "test_support.hpp"

using namespace simcond;

TEST(MGrid, Sizes) {
  EXPECT_EQ(arithmetic_grid(-1, 1, 0.02).size(), 101u);
  EXPECT_EQ(arithmetic_grid(-1, 1, 0.04).size(), 51u);
  EXPECT_EQ(arithmetic_grid(0, 1, 0.02).size(), 51u);
  EXPECT_EQ(arithmetic_grid(-0.1, 0.1, 0.02).size(), 11u);
  EXPECT_EQ(arithmetic_grid(0.3, 0.3, 0.02), std::vector<double>{0.3});
  auto g = arithmetic_grid(-1, 1, 0.02);
  EXPECT_EQ(g.front(), -1.0);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_EQ(g[50], 0.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] - g[i - 1], 0.02, 1e-12);
}

TEST(MGrid, Errors) {
  EXPECT_THROW(arithmetic_grid(1, -1, 0.02), ValidationError);
  EXPECT_THROW(arithmetic_grid(-1, 1, 0.0), ValidationError);
  EXPECT_THROW(arithmetic_grid(-1, 1, -0.1), ValidationError);
  EXPECT_THROW(arithmetic_grid(-1, std::nan(""), 0.1), ValidationError);
  EXPECT_THROW(MGridSampler({}, 0), ValidationError);
}

TEST(MGrid, SamplerIsUniformChiSquare) {
  MGridSampler sampler(arithmetic_grid(-1, 1, 0.04), 7);
  const int draws = 100000;
  std::vector<int> counts(sampler.grid().size(), 0);
  for (int i = 0; i < draws; ++i) ++counts[sampler.next_index()];
  const double expected = static_cast<double>(draws) / counts.size();
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of chi-square with 50 degrees of freedom.
  EXPECT_LT(chi2, 76.154);
}

TEST(MGrid, SamplerCoversGridAndIsSeeded) {
  MGridSampler a(arithmetic_grid(-1, 1, 0.02), 3), b(arithmetic_grid(-1, 1, 0.02), 3);
  std::vector<bool> seen(101, false);
  for (int i = 0; i < 10100; ++i) {
    auto k = a.next_index();
    EXPECT_EQ(k, b.next_index());
    seen[k] = true;
  }
  EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 101);
}

TEST(DiffusionTrainConfig, Validation) {
  DiffusionTrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.m_low = -1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.m_low = 0.5;
  c.m_high = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

namespace {

DiffusionTrainResult tiny_run(std::uint64_t seed) {
  auto encoder = EncoderCheckpoint::initialise(testkit::tiny_encoder_config(), 1);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(99);
  auto images = torch::rand({12, 3, 8, 8}, gen) * 2 - 1;
  DiffusionTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = seed;
  return train_diffusion(images, encoder, cfg, make_noise_schedule(50, 1e-3, 0.2), testkit::tiny_denoiser_config());
}

}  // namespace

TEST(TrainDiffusion, SameSeedSameLossSequence) {
  auto a = tiny_run(5), b = tiny_run(5), c = tiny_run(6);
  ASSERT_EQ(a.step_total.size(), 6u);
  EXPECT_EQ(a.step_total, b.step_total);
  EXPECT_NE(a.step_total, c.step_total);
  for (double v : a.step_total) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(a.epochs.size(), 2u);
  EXPECT_EQ(a.model.metadata().at("T"), "50");
}

TEST(TrainDiffusion, EmptyCorpusRejected) {
  auto encoder = EncoderCheckpoint::initialise(testkit::tiny_encoder_config(), 1);
  DatasetManifest empty;
  EXPECT_THROW(train_diffusion(empty, encoder, {}, make_noise_schedule(50, 1e-3, 0.2), testkit::tiny_denoiser_config()),
               ValidationError);
}
