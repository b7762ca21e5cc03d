#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "simcond/diffusion_losses.hpp"
#include "simcond/errors.hpp"
#include "test_support.hpp"

using namespace simcond;

TEST(MseLoss, Examples) {
  auto eps = torch::randn({2, 3, 4, 4});
  EXPECT_EQ(simcond::mse_loss(eps, eps), 0.0);
  EXPECT_NEAR(simcond::mse_loss(eps + 1.0, eps), 1.0, 1e-6);
  EXPECT_THROW(simcond::mse_loss(eps, torch::zeros({2, 3, 4, 5})), DimensionError);
}

TEST(SimMat, Endpoints) {
  EXPECT_EQ(simmat_from_similarity(1.0, 0.3, 0, 1000), 0.0);
  EXPECT_EQ(simmat_from_similarity(0.3, 0.3, 1000, 1000), 0.0);
  EXPECT_NEAR(simmat_from_similarity(0.5, 0.0, 500, 1000), 0.25, 1e-12);
  EXPECT_NEAR(simmat_from_similarity(0.5, 0.0, 500, 1000, SimMatNorm::Absolute), 0.5, 1e-12);
}

TEST(SimMat, InterpolatesBetweenTheTwoTargets) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double s = u(rng), m = u(rng);
    EXPECT_NEAR(simmat_from_similarity(s, m, 0, 200), (1 - s) * (1 - s), 1e-12);
    EXPECT_NEAR(simmat_from_similarity(s, m, 200, 200), (m - s) * (m - s), 1e-12);
    const int t = 1 + i % 199;
    const double w = t / 200.0;
    EXPECT_NEAR(simmat_from_similarity(s, m, t, 200), (1 - w) * (1 - s) * (1 - s) + w * (m - s) * (m - s), 1e-12);
    EXPECT_GE(simmat_from_similarity(s, m, t, 200), 0.0);
  }
}

TEST(SimMat, TimestepOutOfRange) {
  EXPECT_THROW(simmat_from_similarity(0.1, 0.1, 201, 200), IndexError);
  EXPECT_THROW(simmat_from_similarity(0.1, 0.1, -1, 200), IndexError);
  auto enc = EncoderCheckpoint::initialise(testkit::tiny_encoder_config(), 2);
  auto x = torch::rand({3, 8, 8}) * 2 - 1;
  EXPECT_THROW(simmat_loss(x, x, 0.0, 201, 200, enc), IndexError);
}

TEST(SimMat, ImageLossVanishesForPerfectReconstructionAtT0) {
  auto enc = EncoderCheckpoint::initialise(testkit::tiny_encoder_config(), 4, torch::kFloat64);
  auto x = torch::rand({3, 8, 8}, torch::kFloat64) * 2 - 1;
  EXPECT_NEAR(simmat_loss(x, x, -0.7, 0, 200, enc), 0.0, 1e-12);
  // Target m = 1 at t = T is the same as asking for identity.
  EXPECT_NEAR(simmat_loss(x, x, 1.0, 200, 200, enc), 0.0, 1e-12);
  EXPECT_NEAR(simmat_loss(x, x, 0.0, 200, 200, enc), 1.0, 1e-12);
}

TEST(SimMat, BatchAgreesWithScalarForm) {
  auto enc = EncoderCheckpoint::initialise(testkit::tiny_encoder_config(), 5, torch::kFloat64);
  auto x = torch::rand({4, 3, 8, 8}, torch::kFloat64) * 2 - 1;
  auto y = torch::rand({4, 3, 8, 8}, torch::kFloat64) * 2 - 1;
  auto ex = enc.embed_batch(x);
  auto m = torch::tensor({-0.5, 0.0, 0.3, 0.9}, torch::kFloat64);
  auto t = torch::tensor({0, 17, 100, 200}, torch::kInt64);
  auto batch = simmat_loss_batch(ex, y, m, t, 200, enc);
  for (int i = 0; i < 4; ++i) {
    const double s = (ex[i] * enc.embed_batch(y[i].unsqueeze(0))[0]).sum().item<double>();
    EXPECT_NEAR(batch[i].item<double>(), simmat_from_similarity(s, m[i].item<double>(), t[i].item<int>(), 200), 1e-10);
  }
}

TEST(SimMat, StraightThroughClampPassesGradient) {
  auto enc = EncoderCheckpoint::initialise(testkit::tiny_encoder_config(), 6, torch::kFloat64);
  auto x = (torch::rand({1, 3, 8, 8}, torch::kFloat64) * 4 - 2).set_requires_grad(true);
  auto view = encoder_view(x, enc, true);
  EXPECT_LE(view.abs().max().item<double>(), 1.0);
  view.sum().backward();
  EXPECT_TRUE(torch::allclose(x.grad(), torch::ones_like(x)));
  EXPECT_EQ(encoder_view(torch::zeros({1, 3, 16, 16}), enc, false).size(2), 8);
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(0.7, 123.0, 0.0), 0.7);
  EXPECT_NEAR(total_loss(1.0, 0.2, 0.05), 1.01, 1e-15);
  EXPECT_THROW(total_loss(1.0, 0.2, -0.05), ValidationError);
  EXPECT_THROW(total_loss(std::nan(""), 0.2, 0.05), ValidationError);
  EXPECT_THROW(total_loss(1.0, std::numeric_limits<double>::infinity(), 0.05), ValidationError);
}

TEST(Objective, GradientMatchesFiniteDifferencesWithClamp) {
  auto r = testkit::gradcheck_objective(11, true, 0.05, 20);
  EXPECT_EQ(r.coordinates, 20);
  EXPECT_LT(r.max_abs_x0_hat, 1.0);
  EXPECT_LE(r.max_rel_error, 1e-3);
  EXPECT_LE(r.denoiser_params, 5000);
  EXPECT_LE(r.encoder_params, 5000);
}

TEST(Objective, GradientMatchesFiniteDifferencesWithoutClamp) {
  auto r = testkit::gradcheck_objective(12, false, 0.5, 20);
  EXPECT_LE(r.max_rel_error, 1e-3);
}
