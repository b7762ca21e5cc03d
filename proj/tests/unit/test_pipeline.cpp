#include <gtest/gtest.h>

#include <algorithm>

#include "simcond/errors.hpp"
#include "simcond/pipeline.hpp"
#include "test_support.hpp"

using namespace simcond;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny_config(const fs::path& work) {
  return PipelineConfig::parse(
      "work_dir = " + work.string() +
      "\n"
      "resolution = 8\n"
      "toy.identities = 6\n"
      "toy.per_identity = 4\n"
      "toy.inquiry_pool = 10\n"
      "toy.eval_identities = 4\n"
      "toy.eval_per_identity = 4\n"
      "encoder.dim = 8\n"
      "encoder.widths = 4,8\n"
      "encoder.groups = 2\n"
      "encoder.epochs = 2\n"
      "encoder.batch = 8\n"
      "encoder.decay = 1\n"
      "diffusion.T = 20\n"
      "diffusion.widths = 4,8\n"
      "diffusion.groups = 2\n"
      "diffusion.time_dim = 8\n"
      "diffusion.tokens = 2\n"
      "diffusion.token_width = 4\n"
      "diffusion.epochs = 1\n"
      "diffusion.batch = 8\n"
      "filter.threshold = 1.0\n"
      "generate.subjects = 3\n"
      "generate.per_subject = 2\n"
      "generate.oversample = 1\n"
      "generate.sampling_steps = 3\n"
      "fr.dim = 8\n"
      "fr.widths = 4,8\n"
      "fr.epochs = 2\n"
      "fr.batch = 8\n"
      "fr.decay = 1\n"
      "eval.pairs = 20\n");
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST(PipelineConfig, ParsesAndRejectsUnknownKeys) {
  auto c = PipelineConfig::parse("# comment\nseed = 7\n\nfr.lr=0.05\n");
  EXPECT_EQ(c.get_u64("seed"), 7u);
  EXPECT_EQ(c.get_double("fr.lr"), 0.05);
  EXPECT_EQ(c.get_ints("fr.decay"), (std::vector<int>{13, 17}));
  EXPECT_THROW(PipelineConfig::parse("no_such_key = 1\n"), ValidationError);
  EXPECT_THROW(PipelineConfig::parse("seed 7\n"), ValidationError);
  EXPECT_THROW(c.apply_override("bogus=1"), ValidationError);
  EXPECT_THROW(c.apply_override("seed"), ValidationError);
  c.apply_override("generate.sweep=-0.4,0,0.8");
  EXPECT_EQ(generation_values(c), (std::vector<double>{-0.4, 0.0, 0.8}));
  EXPECT_EQ(PipelineConfig::parse(c.to_text()).values(), c.values());
}

TEST(PipelineConfig, DigestTracksSelectedKeys) {
  PipelineConfig a, b;
  EXPECT_EQ(a.digest(), b.digest());
  b.set("fr.lr", "0.2");
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_EQ(a.digest_of({"encoder.dim", "seed"}), b.digest_of({"encoder.dim", "seed"}));
  EXPECT_NE(a.digest_of({"fr.lr"}), b.digest_of({"fr.lr"}));
}

TEST(Pipeline, StageNamesAndTags) {
  EXPECT_EQ(m_tag(0.4), "m+0.40");
  EXPECT_EQ(m_tag(-0.8), "m-0.80");
  EXPECT_EQ(m_tag(0.0), "m+0.00");
  PipelineConfig c;
  c.set("generate.sweep", "0,0.8");
  auto s = pipeline_stages(c);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_EQ(s[4], "assemble_m+0.00");
  EXPECT_EQ(s.back(), "eval_m+0.80");
  EXPECT_EQ(stage_tag(0.4, 0), "m+0.40");
  EXPECT_EQ(stage_tag(0.4, 2), "m+0.40_r2");
  c.set("replicate", "1");
  EXPECT_EQ(pipeline_stages(c)[4], "assemble_m+0.00_r1");
  EXPECT_EQ(pipeline_stages(c)[3], "filter_inquiries");
}

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman_correlation({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman_correlation({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(spearman_correlation({1, 2, 3, 4}, {1, 4, 9, 16}), 1.0);
  EXPECT_EQ(spearman_correlation({1, 2, 3}, {5, 5, 5}), 0.0);
  // Ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
  EXPECT_NEAR(spearman_correlation({1, 2, 2, 3}, {1, 2, 3, 4}), 0.9486832980505138, 1e-12);
}

TEST(Pipeline, TinyRunCachesAndInvalidatesDownstream) {
  auto work = testkit::scratch_dir("pipeline_tiny");
  auto config = tiny_config(work);
  auto first = run_pipeline(config);
  const auto stages = pipeline_stages(config);
  EXPECT_EQ(first.executed, stages);
  EXPECT_TRUE(first.skipped.empty());
  ASSERT_EQ(first.reports.size(), 1u);
  EXPECT_TRUE(fs::exists(work / "eval_m+0.00" / "report.json"));
  const auto& rep = first.reports[0].report;
  ASSERT_EQ(rep.sets.size(), 1u);
  EXPECT_GE(rep.avg, 0.0);
  EXPECT_LE(rep.avg, 100.0);
  EXPECT_EQ(rep.gap_to_real, gap_to_real(94.26, rep.avg));

  auto second = run_pipeline(config);
  EXPECT_TRUE(second.executed.empty());
  EXPECT_EQ(second.skipped, stages);
  EXPECT_EQ(report_to_json(second.reports[0].report), report_to_json(rep));

  config.set("fr.lr", "0.05");
  auto third = run_pipeline(config);
  EXPECT_EQ(third.executed, (std::vector<std::string>{"train_fr_m+0.00", "eval_m+0.00"}));
  EXPECT_TRUE(contains(third.skipped, "train_diffusion"));
  EXPECT_TRUE(contains(third.skipped, "assemble_m+0.00"));

  config.set("replicate", "1");
  auto replicate = run_pipeline(config);
  EXPECT_EQ(replicate.executed, (std::vector<std::string>{"assemble_m+0.00_r1", "train_fr_m+0.00_r1", "eval_m+0.00_r1"}));
  config.set("replicate", "0");

  auto forced = run_pipeline(config, {true, false});
  EXPECT_EQ(forced.executed, stages);
}

TEST(Pipeline, FailingStageRaisesStageErrorAndKeepsEarlierStages) {
  auto work = testkit::scratch_dir("pipeline_fail");
  auto config = tiny_config(work);
  config.set("filter.threshold", "-0.99");
  try {
    run_pipeline(config);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "filter_inquiries");
  }
  EXPECT_TRUE(fs::exists(work / "train_diffusion" / "denoiser.ckpt"));
  config.set("filter.threshold", "1.0");
  auto res = run_pipeline(config);
  EXPECT_FALSE(contains(res.executed, "train_diffusion"));
  EXPECT_TRUE(contains(res.executed, "filter_inquiries"));
}
