#include "simcond/similarity_analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "simcond/errors.hpp"

namespace simcond {

std::vector<ScoredImage> score_embeddings(const std::vector<ImageRecord>& records, const torch::Tensor& embeddings,
                                          const ClassifierHead& head) {
  if (embeddings.size(0) != static_cast<int64_t>(records.size())) {
    throw DimensionError("one embedding per record is required");
  }
  const auto centers = identity_centers(head);
  auto emb = embeddings.detach().to(torch::kFloat64).contiguous();
  std::vector<ScoredImage> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& center = centers[head.class_of(records[i].subject_id)];
    const auto e = IdentityEmbedding::from_tensor(emb[static_cast<int64_t>(i)]);
    out.push_back({records[i].subject_id, records[i].path, cosine_similarity(e, center)});
  }
  return out;
}

std::vector<ScoredImage> score_to_center(const DatasetManifest& manifest, const EncoderCheckpoint& encoder,
                                         const ClassifierHead& head, const ScoreOptions& options) {
  std::vector<ImageRecord> records;
  for (const auto& r : manifest.records) {
    if (options.exclude_oversampled && r.source == ImageSource::OversampledInquiry) continue;
    head.class_of(r.subject_id);
    records.push_back(r);
  }
  std::vector<std::filesystem::path> paths;
  paths.reserve(records.size());
  for (const auto& r : records) paths.push_back(manifest.resolve(r));
  auto images = load_batch(paths, encoder.config().resolution);
  return score_embeddings(records, encoder.embed_all(images), head);
}

std::vector<SimilarityGroup> bucket_by_similarity(std::vector<ScoredImage> scored, int n_groups) {
  if (n_groups < 1) throw ValidationError("n_groups must be >= 1");
  if (static_cast<std::size_t>(n_groups) > scored.size()) {
    throw ValidationError("n_groups " + std::to_string(n_groups) + " exceeds the " + std::to_string(scored.size()) +
                          " scored images");
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredImage& a, const ScoredImage& b) {
    if (a.similarity_to_center != b.similarity_to_center) return a.similarity_to_center > b.similarity_to_center;
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    return a.path < b.path;
  });
  const std::size_t n = scored.size(), g = static_cast<std::size_t>(n_groups);
  std::vector<SimilarityGroup> groups;
  groups.reserve(g);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < g; ++k) {
    const std::size_t size = n / g + (k < n % g ? 1 : 0);
    SimilarityGroup group;
    group.group_id = static_cast<int>(k);
    group.members.assign(scored.begin() + static_cast<std::ptrdiff_t>(pos),
                         scored.begin() + static_cast<std::ptrdiff_t>(pos + size));
    double sum = 0.0;
    for (const auto& m : group.members) sum += m.similarity_to_center;
    group.mean_similarity = sum / static_cast<double>(size);
    groups.push_back(std::move(group));
    pos += size;
  }
  return groups;
}

std::vector<std::filesystem::path> write_group_manifests(const std::vector<SimilarityGroup>& groups,
                                                         const DatasetManifest& source,
                                                         const std::filesystem::path& out_dir) {
  std::map<std::pair<std::int64_t, std::string>, const ImageRecord*> lookup;
  for (const auto& r : source.records) lookup[{r.subject_id, r.path}] = &r;
  std::vector<std::filesystem::path> written;
  for (const auto& g : groups) {
    const auto dir = out_dir / ("group_" + std::to_string(g.group_id));
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    m.root = dir;
    m.header = source.header;
    m.header.group_id = g.group_id;
    m.header.metadata["mean_similarity"] = std::to_string(g.mean_similarity);
    for (const auto& member : g.members) {
      auto it = lookup.find({member.subject_id, member.path});
      if (it == lookup.end()) throw MappingError("group member " + member.path + " not found in source manifest");
      ImageRecord r = *it->second;
      r.path = std::filesystem::relative(std::filesystem::absolute(source.resolve(r)), std::filesystem::absolute(dir))
                   .generic_string();
      m.records.push_back(std::move(r));
    }
    const auto file = dir / "manifest.jsonl";
    write_manifest(file, m);
    written.push_back(file);
  }
  return written;
}

namespace {

static_assert(std::endian::native == std::endian::little, "embedding export assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated embedding file");
  return v;
}

}  // namespace

void write_embedding_file(const std::filesystem::path& out, const std::vector<EmbeddingRecord>& records) {
  const std::size_t dim = records.empty() ? 0 : records.front().values.size();
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + out.string());
  nlohmann::ordered_json head;
  head["count"] = records.size();
  head["dim"] = dim;
  head["layout"] = "int32 subject_id, float32 similarity, float32[dim] values; little-endian";
  f << head.dump() << '\n';
  for (const auto& r : records) {
    if (r.values.size() != dim) throw DimensionError("embedding records differ in dimension");
    put<std::int32_t>(f, r.subject_id);
    put<float>(f, r.similarity);
    f.write(reinterpret_cast<const char*>(r.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
  }
  if (!f) throw IoError("failed writing " + out.string());
}

std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& in) {
  std::ifstream f(in, std::ios::binary);
  if (!f) throw IoError("cannot read " + in.string());
  std::string line;
  std::getline(f, line);
  auto head = nlohmann::json::parse(line);
  const auto count = head.at("count").get<std::size_t>();
  const auto dim = head.at("dim").get<std::size_t>();
  std::vector<EmbeddingRecord> out(count);
  for (auto& r : out) {
    r.subject_id = get<std::int32_t>(f);
    r.similarity = get<float>(f);
    r.values.resize(dim);
    f.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!f) throw IoError("truncated embedding file");
  }
  return out;
}

void export_embeddings(const DatasetManifest& manifest, const EncoderCheckpoint& encoder,
                       const std::filesystem::path& out, const std::vector<ScoredImage>* scores) {
  if (manifest.records.empty()) throw ValidationError("manifest is empty");
  std::map<std::pair<std::int64_t, std::string>, double> score_of;
  if (scores) {
    for (const auto& s : *scores) score_of[{s.subject_id, s.path}] = s.similarity_to_center;
  }
  auto emb = encoder.embed_all(load_batch(manifest.resolved_paths(), encoder.config().resolution))
                 .to(torch::kFloat32)
                 .contiguous();
  std::vector<EmbeddingRecord> records;
  records.reserve(manifest.records.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    EmbeddingRecord rec;
    rec.subject_id = static_cast<std::int32_t>(r.subject_id);
    auto it = score_of.find({r.subject_id, r.path});
    rec.similarity = it == score_of.end() ? std::numeric_limits<float>::quiet_NaN() : static_cast<float>(it->second);
    const float* p = emb[static_cast<int64_t>(i)].data_ptr<float>();
    rec.values.assign(p, p + emb.size(1));
    records.push_back(std::move(rec));
  }
  write_embedding_file(out, records);
}

}  // namespace simcond
