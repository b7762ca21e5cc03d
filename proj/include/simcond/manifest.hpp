#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace simcond {

enum class ImageSource { Corpus, Generated, OversampledInquiry };

std::string to_string(ImageSource s);
ImageSource parse_image_source(const std::string& s);

struct ImageRecord {
  std::int64_t subject_id = 0;
  std::string path;  // relative to the manifest's root directory
  ImageSource source = ImageSource::Corpus;
  std::optional<double> m;
  std::optional<std::uint64_t> seed;

  bool operator==(const ImageRecord&) const = default;
};

struct ManifestHeader {
  std::string config_digest;
  std::optional<int> group_id;
  bool partial = false;
  // Free-form string metadata (e.g. resolution, generator tag). Sorted on disk.
  std::map<std::string, std::string> metadata;

  bool operator==(const ManifestHeader&) const = default;
};

// On-disk description of an image dataset: a JSON-lines file whose first line
// is the header and every further line one image record.
struct DatasetManifest {
  ManifestHeader header;
  std::vector<ImageRecord> records;
  std::filesystem::path root;  // directory that record paths are relative to

  std::vector<std::int64_t> subjects() const;  // sorted, unique
  std::map<std::int64_t, std::size_t> counts_by_subject() const;
  std::filesystem::path resolve(const ImageRecord& r) const { return root / r.path; }
  std::vector<std::filesystem::path> resolved_paths() const;

  // Throws ValidationError when a referenced file is missing.
  void check_files_exist() const;
};

std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& root);

void write_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);
// Record paths are resolved against the manifest file's directory.
DatasetManifest read_manifest(const std::filesystem::path& file);

// Merges two manifests into one rooted at `new_root`. Subject ids of `second`
// are shifted past the largest id of `first` so the populations stay disjoint.
DatasetManifest concat_manifests(const DatasetManifest& first, const DatasetManifest& second,
                                 const std::filesystem::path& new_root);

}  // namespace simcond
