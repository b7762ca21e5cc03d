#include <gtest/gtest.h>

#include "simcond/denoiser.hpp"
#include "simcond/errors.hpp"
#include "test_support.hpp"

using namespace simcond;

namespace {

DenoiserModel tiny_model(std::uint64_t seed = 1, torch::Dtype dtype = torch::kFloat32) {
  return DenoiserModel::initialise(testkit::tiny_denoiser_config(), seed, dtype);
}

IdentityEmbedding unit8(double phase) {
  std::vector<double> v(8);
  for (int i = 0; i < 8; ++i) v[i] = std::sin(phase + i);
  return IdentityEmbedding::normalized(v);
}

}  // namespace

TEST(Denoiser, TinyConfigsStayUnderFiveThousandParameters) {
  EXPECT_LE(tiny_model().parameter_count(), 5000);
  auto enc = EncoderCheckpoint::initialise(testkit::tiny_encoder_config(), 1);
  EXPECT_LE(testkit::parameter_count(*enc.net()), 5000);
}

TEST(Denoiser, OutputShapeMatchesInputForAllTimesteps) {
  auto model = tiny_model();
  auto bundle = build_conditions(unit8(0.3), 0.2, model);
  for (int t : {0, 1, 50, 199, 200}) {
    bundle.t = t;
    auto out = denoise(torch::randn({3, 8, 8}), bundle, model);
    EXPECT_EQ(out.sizes(), (std::vector<int64_t>{3, 8, 8}));
    EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
  }
}

TEST(Denoiser, ZeroInputDeterministic) {
  auto model = tiny_model();
  auto bundle = build_conditions(unit8(1.0), -0.5, model, 10);
  auto a = denoise(torch::zeros({3, 8, 8}), bundle, model);
  auto b = denoise(torch::zeros({3, 8, 8}), bundle, model);
  EXPECT_TRUE(torch::equal(a, b));
  auto other = tiny_model();
  EXPECT_TRUE(torch::equal(a, denoise(torch::zeros({3, 8, 8}), bundle, other)));
}

TEST(Denoiser, ShapeAndWidthErrors) {
  auto model = tiny_model();
  auto bundle = build_conditions(unit8(0.0), 0.0, model, 5);
  EXPECT_THROW(denoise(torch::zeros({3, 16, 16}), bundle, model), DimensionError);
  bundle.c_att.pop_back();
  EXPECT_THROW(denoise(torch::zeros({3, 8, 8}), bundle, model), DimensionError);
  EXPECT_THROW(build_conditions(IdentityEmbedding::normalized({1.0, 2.0}), 0.0, model), DimensionError);
}

TEST(BuildConditions, DeterministicAndRangeChecked) {
  auto model = tiny_model();
  auto a = build_conditions(unit8(0.7), 0.4, model);
  auto b = build_conditions(unit8(0.7), 0.4, model);
  EXPECT_EQ(a.c_att, b.c_att);
  EXPECT_EQ(a.c_att.size(), static_cast<std::size_t>(model.config().condition_width()));
  EXPECT_THROW(build_conditions(unit8(0.7), 1.5, model), ValidationError);
  EXPECT_THROW(build_conditions(unit8(0.7), -1.01, model), ValidationError);
  EXPECT_NO_THROW(build_conditions(unit8(0.7), 1.0, model));
  EXPECT_NO_THROW(build_conditions(unit8(0.7), -1.0, model));
}

TEST(BuildConditions, DistinctMGiveDistinctConditions) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto model = tiny_model(seed);
    auto a = build_conditions(unit8(0.1), 0.0, model);
    auto b = build_conditions(unit8(0.1), 0.5, model);
    EXPECT_NE(a.c_att, b.c_att) << seed;
  }
}

TEST(Denoiser, OutputRespondsToConditionPerturbation) {
  auto model = tiny_model(3, torch::kFloat64);
  auto bundle = build_conditions(unit8(0.2), 0.1, model, 40);
  auto x = torch::randn({3, 8, 8}, torch::kFloat64);
  auto base = denoise(x, bundle, model);
  double max_change = 0.0;
  for (std::size_t k = 0; k < bundle.c_att.size(); ++k) {
    auto p = bundle;
    p.c_att[k] += 1e-4;
    max_change = std::max(max_change, (denoise(x, p, model) - base).abs().max().item<double>());
  }
  EXPECT_GT(max_change, 1e-9);
}

TEST(Denoiser, CheckpointRoundTripPreservesOutputsAndHeader) {
  auto dir = testkit::scratch_dir("denoiser_ckpt");
  auto model = tiny_model(9);
  model.metadata()["T"] = "200";
  model.metadata()["config_digest"] = "abc";
  model.save(dir / "d.ckpt");
  auto back = DenoiserModel::load(dir / "d.ckpt");
  auto bundle = build_conditions(unit8(0.5), 0.3, model, 17);
  auto x = torch::randn({3, 8, 8});
  EXPECT_TRUE(torch::equal(denoise(x, bundle, model), denoise(x, bundle, back)));
  auto h = read_header(header_path_for(dir / "d.ckpt"));
  EXPECT_EQ(h.at("config_digest"), "abc");
  EXPECT_EQ(h.at("resolution"), "8");
  EXPECT_EQ(h.at("condition_width"), "8");
  EXPECT_TRUE(h.count("tool_version"));
}

TEST(DenoiserConfig, Validation) {
  auto c = testkit::tiny_denoiser_config();
  c.resolution = 7;
  EXPECT_THROW(c.validate(), ValidationError);
  c = testkit::tiny_denoiser_config();
  c.time_dim = 3;
  EXPECT_THROW(c.validate(), ValidationError);
}
