#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simcond/identity_embedder.hpp"
#include "simcond/manifest.hpp"

namespace simcond {

struct VerificationPair {
  std::string path_a;
  std::string path_b;
  bool same = false;
};

struct PairList {
  std::string name;
  std::vector<VerificationPair> pairs;
  std::filesystem::path root;  // relative paths resolve against this

  std::filesystem::path resolve(const std::string& p) const;
};

/// Tab-separated `path_a  path_b  0|1`, one pair per line. The list is named
/// after the file stem and rooted at the file's directory.
PairList read_pair_list(const std::filesystem::path& file);
void write_pair_list(const std::filesystem::path& file, const PairList& pairs);

/// Half-open index range [begin, end) of fold k among 10 contiguous folds.
std::pair<std::size_t, std::size_t> fold_range(std::size_t n, int k);

/// Ten-fold accuracy over precomputed similarities. For each fold the
/// threshold is picked from {-inf, +inf, midpoints of the sorted training
/// similarities} to maximise training accuracy (lowest threshold on ties);
/// a pair is predicted "same" iff its similarity exceeds the threshold.
double tenfold_accuracy(const std::vector<double>& similarities, const std::vector<bool>& same);

std::vector<double> pair_similarities(const PairList& pairs, const EncoderCheckpoint& encoder);
double tenfold_accuracy(const PairList& pairs, const EncoderCheckpoint& encoder);

struct SetAccuracy {
  std::string name;
  double accuracy = 0.0;  // percent
};

struct EvalReport {
  std::vector<SetAccuracy> sets;
  double avg = 0.0;
  double baseline_avg = 0.0;
  double gap_to_real = 0.0;
  std::string config_digest;
};

/// baseline - avg, reported at 1e-10 resolution so that two-decimal inputs
/// give two-decimal gaps.
double gap_to_real(double baseline_avg, double avg);

EvalReport make_report(std::vector<SetAccuracy> sets, double baseline_avg);
EvalReport evaluate_suite(const std::vector<PairList>& lists, const EncoderCheckpoint& encoder, double baseline_avg);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void write_report(const std::filesystem::path& file, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& file);

/// Balanced pair list over a labelled manifest: even indices are same-subject
/// pairs, odd indices different-subject pairs. Paths stay relative to the
/// manifest root.
PairList make_pair_list(const DatasetManifest& manifest, std::size_t num_pairs, std::uint64_t seed,
                        const std::string& name = "toy");

}  // namespace simcond
