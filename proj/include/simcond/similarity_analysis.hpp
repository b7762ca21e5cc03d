#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simcond/identity_embedder.hpp"
#include "simcond/manifest.hpp"

namespace simcond {

struct ScoredImage {
  std::int64_t subject_id = 0;
  std::string path;
  double similarity_to_center = 0.0;
};

struct SimilarityGroup {
  int group_id = 0;
  std::vector<ScoredImage> members;
  double mean_similarity = 0.0;
};

struct ScoreOptions {
  bool exclude_oversampled = false;
};

/// Cosine similarity of every image's embedding to its own subject's
/// normalized classifier row. MappingError when a subject has no row.
std::vector<ScoredImage> score_to_center(const DatasetManifest& manifest, const EncoderCheckpoint& encoder,
                                         const ClassifierHead& head, const ScoreOptions& options = {});

/// Scoring core on precomputed unit embeddings (N, D), one per record.
std::vector<ScoredImage> score_embeddings(const std::vector<ImageRecord>& records, const torch::Tensor& embeddings,
                                          const ClassifierHead& head);

/// Sorts by similarity (descending; ties by subject_id then path) and cuts
/// into n_groups contiguous chunks whose sizes differ by at most one, larger
/// chunks first. ValidationError unless 1 <= n_groups <= |scored|.
std::vector<SimilarityGroup> bucket_by_similarity(std::vector<ScoredImage> scored, int n_groups);

/// One manifest per group at out_dir/group_<k>/manifest.jsonl, carrying the
/// group id in its header. Paths are rewritten relative to each group dir.
std::vector<std::filesystem::path> write_group_manifests(const std::vector<SimilarityGroup>& groups,
                                                         const DatasetManifest& source,
                                                         const std::filesystem::path& out_dir);

struct EmbeddingRecord {
  std::int32_t subject_id = 0;
  float similarity = 0.0f;  // NaN when the image was not scored
  std::vector<float> values;
};

/// Embedding export: one JSON header line {"count", "dim", "layout"} followed
/// by `count` little-endian records of int32 subject_id, float32 similarity
/// and `dim` float32 values.
void export_embeddings(const DatasetManifest& manifest, const EncoderCheckpoint& encoder,
                       const std::filesystem::path& out, const std::vector<ScoredImage>* scores = nullptr);
void write_embedding_file(const std::filesystem::path& out, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& in);

}  // namespace simcond
