#include "simcond/verification_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "simcond/digest.hpp"
#include "simcond/errors.hpp"

namespace simcond {

std::filesystem::path PairList::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : root / path;
}

PairList read_pair_list(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read pair list " + file.string());
  PairList list;
  list.name = file.stem().string();
  list.root = file.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 3 || (cols[2] != "0" && cols[2] != "1")) {
      throw ValidationError(file.string() + ":" + std::to_string(lineno) + ": expected path_a<TAB>path_b<TAB>0|1");
    }
    list.pairs.push_back({cols[0], cols[1], cols[2] == "1"});
  }
  if (list.pairs.empty()) throw ValidationError("pair list " + file.string() + " is empty");
  return list;
}

void write_pair_list(const std::filesystem::path& file, const PairList& pairs) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& p : pairs.pairs) out << p.path_a << '\t' << p.path_b << '\t' << (p.same ? 1 : 0) << '\n';
}

std::pair<std::size_t, std::size_t> fold_range(std::size_t n, int k) {
  if (k < 0 || k >= 10) throw IndexError("fold index out of range");
  const auto kk = static_cast<std::size_t>(k);
  return {kk * n / 10, (kk + 1) * n / 10};
}

namespace {

double best_threshold(std::vector<std::pair<double, bool>> train) {
  std::sort(train.begin(), train.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t n = train.size();
  std::vector<double> candidates;
  candidates.reserve(n + 1);
  candidates.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i + 1 < n; ++i) candidates.push_back((train[i].first + train[i + 1].first) / 2.0);
  candidates.push_back(std::numeric_limits<double>::infinity());

  const std::size_t total_same = static_cast<std::size_t>(
      std::count_if(train.begin(), train.end(), [](const auto& p) { return p.second; }));
  // below = items with sim <= threshold; candidates are non-decreasing, so the
  // boundary only moves forward.
  std::size_t below = 0, same_below = 0;
  std::size_t best_correct = 0;
  double best = candidates.front();
  bool have = false;
  for (double thr : candidates) {
    while (below < n && train[below].first <= thr) {
      if (train[below].second) ++same_below;
      ++below;
    }
    const std::size_t diff_below = below - same_below;
    const std::size_t correct = (total_same - same_below) + diff_below;
    if (!have || correct > best_correct) {
      best_correct = correct;
      best = thr;
      have = true;
    }
  }
  return best;
}

}  // namespace

double tenfold_accuracy(const std::vector<double>& similarities, const std::vector<bool>& same) {
  if (similarities.size() != same.size()) throw DimensionError("similarity and label counts differ");
  const std::size_t n = similarities.size();
  if (n < 10) throw ValidationError("ten-fold evaluation needs at least 10 pairs");
  for (double s : similarities) {
    if (!std::isfinite(s)) throw ValidationError("non-finite similarity");
  }
  double total = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto [lo, hi] = fold_range(n, k);
    std::vector<std::pair<double, bool>> train;
    train.reserve(n - (hi - lo));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < lo || i >= hi) train.emplace_back(similarities[i], same[i]);
    }
    const double thr = best_threshold(std::move(train));
    std::size_t correct = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      if ((similarities[i] > thr) == same[i]) ++correct;
    }
    total += static_cast<double>(correct) / static_cast<double>(hi - lo);
  }
  return total / 10.0;
}

std::vector<double> pair_similarities(const PairList& pairs, const EncoderCheckpoint& encoder) {
  // Each distinct file is embedded once.
  std::map<std::string, std::size_t> index;
  std::vector<std::filesystem::path> files;
  auto slot = [&](const std::string& p) {
    auto path = pairs.resolve(p).lexically_normal().string();
    auto [it, inserted] = index.emplace(path, files.size());
    if (inserted) files.emplace_back(path);
    return it->second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> ids;
  ids.reserve(pairs.pairs.size());
  for (const auto& p : pairs.pairs) {
    const auto a = slot(p.path_a);
    ids.emplace_back(a, slot(p.path_b));
  }
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) throw ValidationError("pair image not found: " + f.string());
  }
  auto batch = load_batch(files, encoder.config().resolution).to(encoder.dtype());
  auto emb = encoder.embed_all(batch).to(torch::kFloat64).contiguous();
  std::vector<IdentityEmbedding> e;
  e.reserve(files.size());
  for (int64_t i = 0; i < emb.size(0); ++i) e.push_back(IdentityEmbedding::normalized(
      std::vector<double>(emb[i].data_ptr<double>(), emb[i].data_ptr<double>() + emb.size(1))));
  std::vector<double> sims;
  sims.reserve(ids.size());
  for (const auto& [a, b] : ids) sims.push_back(cosine_similarity(e[a], e[b]));
  return sims;
}

double tenfold_accuracy(const PairList& pairs, const EncoderCheckpoint& encoder) {
  if (pairs.pairs.size() < 10) throw ValidationError("ten-fold evaluation needs at least 10 pairs");
  std::vector<bool> same;
  same.reserve(pairs.pairs.size());
  for (const auto& p : pairs.pairs) same.push_back(p.same);
  return tenfold_accuracy(pair_similarities(pairs, encoder), same);
}

double gap_to_real(double baseline_avg, double avg) {
  return std::round((baseline_avg - avg) * 1e10) / 1e10;
}

EvalReport make_report(std::vector<SetAccuracy> sets, double baseline_avg) {
  if (sets.empty()) throw ValidationError("evaluation needs at least one pair list");
  EvalReport r;
  double sum = 0.0;
  for (const auto& s : sets) sum += s.accuracy;
  r.avg = sum / static_cast<double>(sets.size());
  r.sets = std::move(sets);
  r.baseline_avg = baseline_avg;
  r.gap_to_real = gap_to_real(baseline_avg, r.avg);
  return r;
}

EvalReport evaluate_suite(const std::vector<PairList>& lists, const EncoderCheckpoint& encoder, double baseline_avg) {
  if (lists.empty()) throw ValidationError("evaluation needs at least one pair list");
  std::vector<SetAccuracy> sets;
  for (const auto& l : lists) sets.push_back({l.name, 100.0 * tenfold_accuracy(l, encoder)});
  return make_report(std::move(sets), baseline_avg);
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["sets"] = nlohmann::ordered_json::array();
  for (const auto& s : report.sets) j["sets"].push_back({{"name", s.name}, {"accuracy", s.accuracy}});
  j["avg"] = report.avg;
  j["baseline_avg"] = report.baseline_avg;
  j["gap_to_real"] = report.gap_to_real;
  j["config_digest"] = report.config_digest;
  j["tool_version"] = std::string(kToolVersion);
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& s : j.at("sets")) r.sets.push_back({s.at("name").get<std::string>(), s.at("accuracy").get<double>()});
    r.avg = j.at("avg").get<double>();
    r.baseline_avg = j.at("baseline_avg").get<double>();
    r.gap_to_real = j.at("gap_to_real").get<double>();
    r.config_digest = j.value("config_digest", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed eval report: ") + e.what());
  }
  return r;
}

void write_report(const std::filesystem::path& file, const EvalReport& report) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << report_to_json(report);
}

EvalReport read_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

PairList make_pair_list(const DatasetManifest& manifest, std::size_t num_pairs, std::uint64_t seed,
                        const std::string& name) {
  std::map<std::int64_t, std::vector<std::string>> by_subject;
  for (const auto& r : manifest.records) by_subject[r.subject_id].push_back(r.path);
  std::vector<std::int64_t> subjects;
  std::vector<std::int64_t> multi;
  for (const auto& [s, paths] : by_subject) {
    subjects.push_back(s);
    if (paths.size() >= 2) multi.push_back(s);
  }
  if (subjects.size() < 2 || multi.empty()) {
    throw ValidationError("pair generation needs >= 2 subjects and one subject with >= 2 images");
  }
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  PairList list;
  list.name = name;
  list.root = manifest.root;
  for (std::size_t i = 0; i < num_pairs; ++i) {
    if (i % 2 == 0) {
      const auto& paths = by_subject[multi[pick(multi.size())]];
      const std::size_t a = pick(paths.size());
      std::size_t b = pick(paths.size() - 1);
      if (b >= a) ++b;
      list.pairs.push_back({paths[a], paths[b], true});
    } else {
      const std::size_t sa = pick(subjects.size());
      std::size_t sb = pick(subjects.size() - 1);
      if (sb >= sa) ++sb;
      const auto& pa = by_subject[subjects[sa]];
      const auto& pb = by_subject[subjects[sb]];
      list.pairs.push_back({pa[pick(pa.size())], pb[pick(pb.size())], false});
    }
  }
  return list;
}

}  // namespace simcond
