#include <gtest/gtest.h>

#include <fstream>

#include "simcond/errors.hpp"
#include "simcond/fr_trainer.hpp"
#include "simcond/toy_corpus.hpp"
#include "test_support.hpp"

using namespace simcond;

TEST(FRTrainConfig, LearningRateTrace) {
  FRTrainConfig cfg;
  for (int e = 1; e <= 40; ++e) {
    const double expected = e < 26 ? 0.1 : (e < 34 ? 0.01 : 0.001);
    EXPECT_NEAR(fr_learning_rate(cfg, e), expected, 1e-15) << e;
  }
}

TEST(FRTrainConfig, Validation) {
  FRTrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.decay_epochs = {34, 26};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.decay_epochs = {40};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.decay_epochs = {0};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.augment.crop_scale_min = 1.2;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Augment, IdentityConfigReturnsInput) {
  std::mt19937_64 rng(1);
  auto x = torch::rand({3, 16, 16}) * 2 - 1;
  for (int i = 0; i < 20; ++i) EXPECT_TRUE(torch::equal(augment(x, AugmentConfig::identity(), rng), x));
}

TEST(Augment, ShapeRangeAndDeterminism) {
  auto x = torch::rand({3, 24, 24}) * 2 - 1;
  AugmentConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    auto ya = augment(x, cfg, a);
    auto yb = augment(x, cfg, b);
    EXPECT_TRUE(torch::equal(ya, yb));
    EXPECT_EQ(ya.sizes(), x.sizes());
    EXPECT_LE(ya.abs().max().item<double>(), 1.0);
    EXPECT_EQ(augment(x, cfg, a, 16).size(2), 16);
  }
}

TEST(Augment, ErasedRectangleAreaWithinBounds) {
  auto cfg = AugmentConfig::identity();
  cfg.erasing_probability = 1.0;
  cfg.erasing_scale_min = 0.02;
  cfg.erasing_scale_max = 0.1;
  cfg.erasing_ratio_min = 0.3;
  cfg.erasing_ratio_max = 3.3;
  const int H = 64;
  auto x = torch::zeros({3, H, H});
  std::mt19937_64 rng(5);
  int erased_runs = 0;
  for (int i = 0; i < 200; ++i) {
    auto y = augment(x, cfg, rng);
    auto mask = (y != 0).any(0);
    const auto count = mask.sum().item<int64_t>();
    if (count == 0) continue;
    ++erased_runs;
    EXPECT_GE(count, static_cast<int64_t>(std::ceil(0.02 * H * H)));
    EXPECT_LE(count, static_cast<int64_t>(0.1 * H * H));
    auto rows = torch::nonzero(mask.any(1)).view({-1});
    auto cols = torch::nonzero(mask.any(0)).view({-1});
    const auto h = rows.max().item<int64_t>() - rows.min().item<int64_t>() + 1;
    const auto w = cols.max().item<int64_t>() - cols.min().item<int64_t>() + 1;
    EXPECT_EQ(h * w, count) << "erased region is not a rectangle";
  }
  EXPECT_GT(erased_runs, 180);
}

TEST(TrainFR, NeedsTwoSubjects) {
  auto dir = testkit::scratch_dir("fr_one_subject");
  auto m = make_toy_corpus({2, 3, 8, 0, 0}, dir);
  std::erase_if(m.records, [](const ImageRecord& r) { return r.subject_id != 0; });
  FRTrainConfig cfg;
  cfg.backbone = testkit::tiny_encoder_config();
  cfg.epochs = 1;
  cfg.decay_epochs = {};
  EXPECT_THROW(train_fr(m, cfg), ValidationError);
}

TEST(TrainFR, DeterministicAndLearnsToyIdentities) {
  auto dir = testkit::scratch_dir("fr_toy");
  auto m = make_toy_corpus({12, 10, 16, 3, 0}, dir);
  FRTrainConfig cfg;
  cfg.backbone.dim = 32;
  cfg.backbone.resolution = 16;
  cfg.backbone.widths = {16, 32, 32};
  cfg.epochs = 60;
  cfg.decay_epochs = {45, 54};
  cfg.batch_size = 32;
  cfg.seed = 4;
  auto a = train_fr(m, cfg);
  EXPECT_EQ(a.epochs.size(), 60u);
  EXPECT_GE(a.train_accuracy, 0.9);
  EXPECT_EQ(a.head.num_classes(), 12u);
  EXPECT_NEAR(a.epochs.back().learning_rate, 0.001, 1e-15);

  cfg.epochs = 1;
  cfg.decay_epochs = {};
  auto b = train_fr(m, cfg), c = train_fr(m, cfg);
  EXPECT_EQ(b.epochs.front().loss, c.epochs.front().loss);
  EXPECT_EQ(b.epochs.front().loss, a.epochs.front().loss);

  write_metrics_csv(dir / "metrics.csv", a.epochs);
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,loss,lr,train_acc");
}
