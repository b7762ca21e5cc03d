#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "simcond/errors.hpp"
#include "simcond/similarity_analysis.hpp"
#include "test_support.hpp"

using namespace simcond;

namespace {

std::vector<ScoredImage> random_scores(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ScoredImage> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({static_cast<std::int64_t>(i % 17), "p" + std::to_string(i), u(rng)});
  return out;
}

ClassifierHead axis_head() {
  ClassifierHead head;
  head.weights = torch::eye(4, torch::kFloat64) * 3.0;
  head.class_subjects = {10, 11, 12, 13};
  return head;
}

}  // namespace

TEST(Bucketing, PartitionSizesAndOrder) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {5u, 101u, 257u, 1000u}) {
    for (int g : {1, 2, 5, 7}) {
      if (static_cast<std::size_t>(g) > n) continue;
      auto scored = random_scores(rng, n);
      auto groups = bucket_by_similarity(scored, g);
      ASSERT_EQ(groups.size(), static_cast<std::size_t>(g));

      std::vector<double> expected;
      for (const auto& s : scored) expected.push_back(s.similarity_to_center);
      std::sort(expected.rbegin(), expected.rend());
      std::vector<double> got;
      std::set<std::string> paths;
      std::size_t lo = n, hi = 0;
      for (int k = 0; k < g; ++k) {
        EXPECT_EQ(groups[k].group_id, k);
        lo = std::min(lo, groups[k].members.size());
        hi = std::max(hi, groups[k].members.size());
        if (k > 0) {
          EXPECT_LE(groups[k].members.size(), groups[k - 1].members.size());
          EXPECT_LT(groups[k].mean_similarity, groups[k - 1].mean_similarity);
        }
        double sum = 0;
        for (const auto& m : groups[k].members) {
          got.push_back(m.similarity_to_center);
          paths.insert(m.path);
          sum += m.similarity_to_center;
        }
        EXPECT_NEAR(groups[k].mean_similarity, sum / groups[k].members.size(), 1e-12);
      }
      EXPECT_LE(hi - lo, 1u);
      EXPECT_EQ(got, expected);
      EXPECT_EQ(paths.size(), n);
    }
  }
}

TEST(Bucketing, TiesBrokenBySubjectThenPath) {
  std::vector<ScoredImage> s{{3, "b", 0.5}, {1, "z", 0.5}, {3, "a", 0.5}, {0, "q", 0.9}};
  auto g = bucket_by_similarity(s, 2);
  ASSERT_EQ(g[0].members.size(), 2u);
  EXPECT_EQ(g[0].members[0].path, "q");
  EXPECT_EQ(g[0].members[1].path, "z");
  EXPECT_EQ(g[1].members[0].path, "a");
  EXPECT_EQ(g[1].members[1].path, "b");
}

TEST(Bucketing, Errors) {
  std::mt19937_64 rng(2);
  EXPECT_THROW(bucket_by_similarity(random_scores(rng, 3), 4), ValidationError);
  EXPECT_THROW(bucket_by_similarity(random_scores(rng, 3), 0), ValidationError);
  EXPECT_NO_THROW(bucket_by_similarity(random_scores(rng, 3), 3));
}

TEST(ScoreEmbeddings, Examples) {
  auto head = axis_head();
  std::vector<ImageRecord> records{{10, "a"}, {11, "b"}, {12, "c"}};
  auto emb = torch::tensor({1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.6, 0.0, 0.8, 0.0}, torch::kFloat64).view({3, 4});
  auto s = score_embeddings(records, emb, head);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_NEAR(s[0].similarity_to_center, 1.0, 1e-12);
  EXPECT_NEAR(s[1].similarity_to_center, 0.0, 1e-12);
  EXPECT_NEAR(s[2].similarity_to_center, 0.8, 1e-12);
  EXPECT_EQ(s[2].subject_id, 12);
  EXPECT_EQ(s[2].path, "c");

  std::vector<ImageRecord> unknown{{99, "x"}};
  EXPECT_THROW(score_embeddings(unknown, emb.slice(0, 0, 1), head), MappingError);
  EXPECT_THROW(score_embeddings(records, emb.slice(0, 0, 2), head), DimensionError);
}

TEST(EmbeddingFile, RoundTrip) {
  auto dir = testkit::scratch_dir("embedding_file");
  std::vector<EmbeddingRecord> recs{
      {0, 0.25f, {1.0f, 0.0f, 0.0f, 0.0f}},
      {7, -0.5f, {0.5f, 0.5f, 0.5f, 0.5f}},
      {42, std::numeric_limits<float>::quiet_NaN(), {0.0f, 0.0f, 0.0f, 1.0f}},
  };
  write_embedding_file(dir / "e.bin", recs);
  auto back = read_embedding_file(dir / "e.bin");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].subject_id, recs[i].subject_id);
    EXPECT_EQ(back[i].values, recs[i].values);
  }
  EXPECT_EQ(back[1].similarity, -0.5f);
  EXPECT_TRUE(std::isnan(back[2].similarity));
  const auto header_end = [&] {
    std::ifstream in(dir / "e.bin", std::ios::binary);
    std::string line;
    std::getline(in, line);
    return line.size() + 1;
  }();
  EXPECT_EQ(std::filesystem::file_size(dir / "e.bin"), header_end + 3 * (4 + 4 + 4 * 4));
}

TEST(GroupManifests, WrittenWithGroupIds) {
  auto dir = testkit::scratch_dir("group_manifests");
  DatasetManifest src;
  src.root = dir / "src";
  std::vector<ScoredImage> scored;
  for (int i = 0; i < 6; ++i) {
    src.records.push_back({i % 2, "s/img" + std::to_string(i) + ".png"});
    scored.push_back({i % 2, "s/img" + std::to_string(i) + ".png", 0.1 * i});
  }
  auto groups = bucket_by_similarity(scored, 3);
  auto files = write_group_manifests(groups, src, dir / "out");
  ASSERT_EQ(files.size(), 3u);
  std::size_t total = 0;
  for (int k = 0; k < 3; ++k) {
    auto m = read_manifest(files[k]);
    ASSERT_TRUE(m.header.group_id.has_value());
    EXPECT_EQ(*m.header.group_id, k);
    total += m.records.size();
    for (const auto& r : m.records) {
      EXPECT_EQ(std::filesystem::weakly_canonical(m.resolve(r)).filename(),
                std::filesystem::path(r.path).filename());
    }
  }
  EXPECT_EQ(total, 6u);
}
