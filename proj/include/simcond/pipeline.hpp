#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "simcond/denoiser.hpp"
#include "simcond/identity_embedder.hpp"
#include "simcond/noise_schedule.hpp"
#include "simcond/verification_eval.hpp"

namespace simcond {

/// Flat key=value configuration. Every key has a default; setting an unknown
/// key is a ValidationError. Lines starting with '#' are comments.
class PipelineConfig {
 public:
  PipelineConfig();

  static PipelineConfig parse(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& file);

  void set(const std::string& key, const std::string& value);
  /// "key=value" form used by --set.
  void apply_override(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  std::string to_text() const;
  /// Digest over every key.
  std::string digest() const;
  /// Digest over the listed keys only.
  std::string digest_of(const std::vector<std::string>& keys) const;

 private:
  std::map<std::string, std::string> values_;
};

struct PipelineOptions {
  bool force = false;  // ignore cached stages
  bool verbose = false;
};

struct SweepReport {
  double m = 0.0;
  EvalReport report;
};

struct PipelineResult {
  std::vector<SweepReport> reports;
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
  std::filesystem::path work_dir;
};

/// toy data -> encoder -> diffusion -> inquiries -> (assemble -> train FR ->
/// eval) per generation m. Each stage writes into work_dir/<stage>/ and
/// records a key derived from its config keys and upstream keys; a stage whose
/// recorded key matches is skipped. Failures raise StageError and leave the
/// finished stages in place.
PipelineResult run_pipeline(const PipelineConfig& config, const PipelineOptions& options = {});

/// Names of the stages run_pipeline would execute, in order.
std::vector<std::string> pipeline_stages(const PipelineConfig& config);

/// Generation values: generate.sweep when set, else generate.m.
std::vector<double> generation_values(const PipelineConfig& config);

/// One row per inquiry: the inquiry followed by one sample per m value, all
/// with the same seed. Returned as a single (C, rows*R, (1+|m|)*R) image.
Image render_sample_grid(const DenoiserModel& model, const NoiseSchedule& schedule, const EncoderCheckpoint& encoder,
                         const std::vector<Image>& inquiries, const std::vector<double>& m_values, std::uint64_t seed,
                         int num_steps = 20);

struct ConditioningProbe {
  std::vector<double> m_values;
  std::vector<double> mean_similarity;  // to the inquiry, per m
  double spearman = 0.0;
};

/// For each m, samples `per_inquiry` images for every inquiry and averages
/// the cosine similarity between generated and inquiry embeddings.
ConditioningProbe probe_conditioning(const DenoiserModel& model, const NoiseSchedule& schedule,
                                     const EncoderCheckpoint& encoder, const std::vector<Image>& inquiries,
                                     const std::vector<double>& m_values, int per_inquiry, std::uint64_t seed,
                                     int num_steps = 20);

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

/// Tag used for per-m stage directories, e.g. "m+0.40", "m-0.80".
std::string m_tag(double m);
/// Per-m stage suffix; replicates other than 0 append "_r<k>". Replicates
/// share data, encoder and diffusion stages and reseed generation and FR.
std::string stage_tag(double m, int replicate);

}  // namespace simcond
