#include "simcond/manifest.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "simcond/errors.hpp"

namespace simcond {

using ordered_json = nlohmann::ordered_json;

std::string to_string(ImageSource s) {
  switch (s) {
    case ImageSource::Corpus: return "corpus";
    case ImageSource::Generated: return "generated";
    case ImageSource::OversampledInquiry: return "oversampled-inquiry";
  }
  return "corpus";
}

ImageSource parse_image_source(const std::string& s) {
  if (s == "corpus") return ImageSource::Corpus;
  if (s == "generated") return ImageSource::Generated;
  if (s == "oversampled-inquiry") return ImageSource::OversampledInquiry;
  throw ValidationError("unknown image source tag '" + s + "'");
}

std::vector<std::int64_t> DatasetManifest::subjects() const {
  std::set<std::int64_t> ids;
  for (const auto& r : records) ids.insert(r.subject_id);
  return {ids.begin(), ids.end()};
}

std::map<std::int64_t, std::size_t> DatasetManifest::counts_by_subject() const {
  std::map<std::int64_t, std::size_t> counts;
  for (const auto& r : records) ++counts[r.subject_id];
  return counts;
}

std::vector<std::filesystem::path> DatasetManifest::resolved_paths() const {
  std::vector<std::filesystem::path> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(resolve(r));
  return out;
}

void DatasetManifest::check_files_exist() const {
  for (const auto& r : records) {
    if (!std::filesystem::exists(resolve(r))) throw ValidationError("manifest references missing file " + r.path);
  }
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  ordered_json head;
  head["type"] = "header";
  head["config_digest"] = manifest.header.config_digest;
  if (manifest.header.group_id) head["group_id"] = *manifest.header.group_id;
  head["partial"] = manifest.header.partial;
  head["count"] = manifest.records.size();
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : manifest.header.metadata) meta[k] = v;
  head["metadata"] = meta;
  out << head.dump() << '\n';
  for (const auto& r : manifest.records) {
    ordered_json j;
    j["subject_id"] = r.subject_id;
    j["path"] = r.path;
    j["source"] = to_string(r.source);
    j["m"] = r.m ? ordered_json(*r.m) : ordered_json(nullptr);
    j["seed"] = r.seed ? ordered_json(*r.seed) : ordered_json(nullptr);
    out << j.dump() << '\n';
  }
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& root) {
  DatasetManifest manifest;
  manifest.root = root;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  std::optional<std::size_t> declared;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!saw_header) {
      if (j.value("type", "") != "header") throw IoError("manifest must start with a header line");
      manifest.header.config_digest = j.value("config_digest", "");
      if (j.contains("group_id") && !j["group_id"].is_null()) manifest.header.group_id = j["group_id"].get<int>();
      manifest.header.partial = j.value("partial", false);
      if (j.contains("count")) declared = j["count"].get<std::size_t>();
      if (j.contains("metadata")) {
        for (auto it = j["metadata"].begin(); it != j["metadata"].end(); ++it) {
          manifest.header.metadata[it.key()] = it.value().get<std::string>();
        }
      }
      saw_header = true;
      continue;
    }
    ImageRecord r;
    try {
      r.subject_id = j.at("subject_id").get<std::int64_t>();
      r.path = j.at("path").get<std::string>();
      r.source = parse_image_source(j.at("source").get<std::string>());
      if (j.contains("m") && !j["m"].is_null()) r.m = j["m"].get<double>();
      if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    manifest.records.push_back(std::move(r));
  }
  if (!saw_header) throw IoError("empty manifest");
  if (declared && *declared != manifest.records.size()) {
    throw IoError("manifest declares " + std::to_string(*declared) + " records but holds " +
                  std::to_string(manifest.records.size()));
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& file, const DatasetManifest& manifest) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + file.string());
  out << serialize_manifest(manifest);
  if (!out) throw IoError("failed writing manifest " + file.string());
}

DatasetManifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read manifest " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto root = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
  return parse_manifest(buf.str(), root);
}

DatasetManifest concat_manifests(const DatasetManifest& first, const DatasetManifest& second,
                                 const std::filesystem::path& new_root) {
  DatasetManifest out;
  out.root = new_root;
  out.header.config_digest = first.header.config_digest + "+" + second.header.config_digest;
  out.header.partial = first.header.partial || second.header.partial;
  out.header.metadata = first.header.metadata;
  std::int64_t offset = 0;
  for (const auto& r : first.records) offset = std::max(offset, r.subject_id + 1);
  auto rebase = [&](const DatasetManifest& m, const ImageRecord& r, std::int64_t shift) {
    ImageRecord c = r;
    c.subject_id += shift;
    c.path = std::filesystem::relative(std::filesystem::absolute(m.resolve(r)), std::filesystem::absolute(new_root))
                 .generic_string();
    return c;
  };
  for (const auto& r : first.records) out.records.push_back(rebase(first, r, 0));
  for (const auto& r : second.records) out.records.push_back(rebase(second, r, offset));
  return out;
}

}  // namespace simcond
