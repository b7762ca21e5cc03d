#include "simcond/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "simcond/ddim_sampler.hpp"
#include "simcond/dataset_generator.hpp"
#include "simcond/diffusion_training.hpp"
#include "simcond/digest.hpp"
#include "simcond/errors.hpp"
#include "simcond/fr_trainer.hpp"
#include "simcond/manifest.hpp"
#include "simcond/toy_corpus.hpp"

namespace simcond {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> d = {
      {"work_dir", "simcond_run"},
      {"seed", "0"},
      {"replicate", "0"},
      {"resolution", "32"},
      {"toy.identities", "100"},
      {"toy.per_identity", "30"},
      {"toy.inquiry_pool", "60"},
      {"toy.eval_identities", "40"},
      {"toy.eval_per_identity", "8"},
      {"encoder.dim", "64"},
      {"encoder.widths", "16,32,64"},
      {"encoder.groups", "4"},
      {"encoder.epochs", "30"},
      {"encoder.batch", "64"},
      {"encoder.lr", "0.1"},
      {"encoder.decay", "20,26"},
      {"diffusion.T", "200"},
      {"diffusion.beta_start", "auto"},
      {"diffusion.beta_end", "auto"},
      {"diffusion.widths", "32,64,64"},
      {"diffusion.groups", "8"},
      {"diffusion.time_dim", "64"},
      {"diffusion.tokens", "4"},
      {"diffusion.token_width", "32"},
      {"diffusion.lambda", "0.05"},
      {"diffusion.m_low", "-1"},
      {"diffusion.m_high", "1"},
      {"diffusion.m_interval", "0.02"},
      {"diffusion.epochs", "10"},
      {"diffusion.max_steps", "0"},
      {"diffusion.batch", "32"},
      {"diffusion.lr", "1e-4"},
      {"filter.threshold", "0.3"},
      {"generate.m", "0"},
      {"generate.sweep", ""},
      {"generate.subjects", "20"},
      {"generate.per_subject", "10"},
      {"generate.oversample", "2"},
      {"generate.sampling_steps", "20"},
      {"fr.dim", "64"},
      {"fr.widths", "16,32,64"},
      {"fr.epochs", "20"},
      {"fr.batch", "64"},
      {"fr.lr", "0.1"},
      {"fr.decay", "13,17"},
      {"fr.margin", "0.4"},
      {"fr.scale", "64"},
      {"eval.pairs", "400"},
      {"eval.baseline", "94.26"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

}  // namespace

PipelineConfig::PipelineConfig() : values_(default_values()) {}

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig c;
  std::stringstream ss(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(ss, line);) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  it->second = value;
}

void PipelineConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("override must look like key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& PipelineConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

double PipelineConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not a number: '" + v + "'");
  }
}

int PipelineConfig::get_int(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not an integer: '" + v + "'");
  }
}

std::uint64_t PipelineConfig::get_u64(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t pos = 0;
    auto i = std::stoull(v, &pos);
    if (pos != v.size() || v[0] == '-') throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not an unsigned integer: '" + v + "'");
  }
}

std::vector<double> PipelineConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : split_list(get(key))) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ValidationError("config key '" + key + "' has a non-numeric entry '" + tok + "'");
    }
  }
  return out;
}

std::vector<int> PipelineConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& tok : split_list(get(key))) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ValidationError("config key '" + key + "' has a non-integer entry '" + tok + "'");
    }
  }
  return out;
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string PipelineConfig::digest() const { return digest_hex(to_text()); }

std::string PipelineConfig::digest_of(const std::vector<std::string>& keys) const {
  Fnv1a d;
  for (const auto& k : keys) d.update(k).update("=").update(get(k)).update("\n");
  return d.hex();
}

std::string m_tag(double m) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "m%+.2f", m);
  return buf;
}

std::vector<double> generation_values(const PipelineConfig& config) {
  auto sweep = config.get_doubles("generate.sweep");
  if (!sweep.empty()) return sweep;
  return {config.get_double("generate.m")};
}

std::string stage_tag(double m, int replicate) {
  return replicate == 0 ? m_tag(m) : m_tag(m) + "_r" + std::to_string(replicate);
}

std::vector<std::string> pipeline_stages(const PipelineConfig& config) {
  std::vector<std::string> s{"toy_data", "train_encoder", "train_diffusion", "filter_inquiries"};
  for (double m : generation_values(config)) {
    for (const char* base : {"assemble", "train_fr", "eval"}) {
      s.push_back(std::string(base) + "_" + stage_tag(m, config.get_int("replicate")));
    }
  }
  return s;
}

namespace {

std::vector<std::string> keys_with_prefix(const PipelineConfig& c, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& [k, v] : c.values()) {
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  }
  return out;
}

class StageRunner {
 public:
  StageRunner(fs::path work, const PipelineOptions& options, PipelineResult& result)
      : work_(std::move(work)), options_(options), result_(result) {}

  // Runs `body` unless work/<name>/stage.key already holds `key`.
  template <typename Body>
  void run(const std::string& name, const std::string& key, Body&& body) {
    const fs::path dir = work_ / name;
    const fs::path key_file = dir / "stage.key";
    if (!options_.force && fs::exists(key_file)) {
      std::ifstream in(key_file);
      std::string recorded;
      std::getline(in, recorded);
      if (recorded == key) {
        result_.skipped.push_back(name);
        if (options_.verbose) std::cerr << "[pipeline] " << name << ": cached\n";
        return;
      }
    }
    if (options_.verbose) std::cerr << "[pipeline] " << name << ": running\n";
    try {
      if (fs::exists(key_file)) fs::remove(key_file);
      fs::create_directories(dir);
      body(dir);
      std::ofstream out(key_file, std::ios::trunc);
      out << key << '\n';
      if (!out) throw IoError("cannot write " + key_file.string());
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    result_.executed.push_back(name);
  }

 private:
  fs::path work_;
  const PipelineOptions& options_;
  PipelineResult& result_;
};

std::string chain(const std::string& a, const std::string& b) { return digest_hex(a + "|" + b); }

EncoderConfig encoder_config(const PipelineConfig& c, const std::string& prefix) {
  EncoderConfig e;
  e.dim = c.get_int(prefix + ".dim");
  e.resolution = c.get_int("resolution");
  e.widths = c.get_ints(prefix + ".widths");
  if (c.values().count(prefix + ".groups")) e.groups = c.get_int(prefix + ".groups");
  e.validate();
  return e;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const PipelineOptions& options) {
  torch::set_num_threads(1);
  PipelineResult result;
  const fs::path work = config.get("work_dir");
  result.work_dir = work;
  fs::create_directories(work);
  {
    std::ofstream out(work / "config.txt", std::ios::trunc);
    out << config.to_text();
  }
  StageRunner runner(work, options, result);
  const std::uint64_t seed = config.get_u64("seed");
  const int resolution = config.get_int("resolution");
  const auto m_values = generation_values(config);
  for (double m : m_values) {
    if (!(m >= -1.0 && m <= 1.0)) throw ValidationError("generation m must lie in [-1, 1]");
  }

  // toy_data: training corpus, inquiry pool and evaluation identities, drawn
  // from disjoint identity ranges.
  auto data_keys = keys_with_prefix(config, "toy.");
  data_keys.insert(data_keys.end(), {"seed", "resolution", "eval.pairs"});
  const std::string data_key = config.digest_of(data_keys);
  const fs::path data_dir = work / "toy_data";
  runner.run("toy_data", data_key, [&](const fs::path& dir) {
    ToyCorpusConfig train{config.get_int("toy.identities"), config.get_int("toy.per_identity"), resolution, seed, 0};
    ToyCorpusConfig pool{config.get_int("toy.inquiry_pool"), 1, resolution, seed, 100000};
    ToyCorpusConfig eval{config.get_int("toy.eval_identities"), config.get_int("toy.eval_per_identity"), resolution,
                         seed, 200000};
    make_toy_corpus(train, dir / "train");
    make_toy_corpus(pool, dir / "inquiry_pool");
    auto eval_manifest = make_toy_corpus(eval, dir / "eval");
    auto pairs = make_pair_list(eval_manifest, static_cast<std::size_t>(config.get_int("eval.pairs")), seed + 17,
                                "toy_eval");
    write_pair_list(dir / "eval" / "toy_eval.txt", pairs);
  });

  // train_encoder
  auto enc_keys = keys_with_prefix(config, "encoder.");
  const std::string enc_key = chain(data_key, config.digest_of(enc_keys));
  const fs::path enc_dir = work / "train_encoder";
  runner.run("train_encoder", enc_key, [&](const fs::path& dir) {
    EncoderTrainConfig tc;
    tc.epochs = config.get_int("encoder.epochs");
    tc.batch_size = config.get_int("encoder.batch");
    tc.learning_rate = config.get_double("encoder.lr");
    tc.decay_epochs = config.get_ints("encoder.decay");
    tc.seed = seed + 1;
    tc.verbose = options.verbose;
    auto res = train_encoder(read_manifest(data_dir / "train" / "manifest.jsonl"), encoder_config(config, "encoder"), tc);
    res.encoder.provenance()["config_digest"] = enc_key;
    res.encoder.provenance()["seed"] = std::to_string(tc.seed);
    res.encoder.save(dir / "encoder.ckpt");
    res.head.save(dir / "head.ckpt", {{"config_digest", enc_key}});
    write_metrics_csv(dir / "metrics.csv", res.epochs);
    std::ofstream(dir / "train_accuracy.txt") << format_real(res.train_accuracy) << '\n';
  });

  // train_diffusion
  auto diff_keys = keys_with_prefix(config, "diffusion.");
  const std::string diff_key = chain(enc_key, config.digest_of(diff_keys));
  const fs::path diff_dir = work / "train_diffusion";
  runner.run("train_diffusion", diff_key, [&](const fs::path& dir) {
    const int T = config.get_int("diffusion.T");
    auto [bs, be] = scaled_linear_betas(T);
    if (config.get("diffusion.beta_start") != "auto") bs = config.get_double("diffusion.beta_start");
    if (config.get("diffusion.beta_end") != "auto") be = config.get_double("diffusion.beta_end");
    auto schedule = make_noise_schedule(T, bs, be);
    auto encoder = EncoderCheckpoint::load(enc_dir / "encoder.ckpt");
    DenoiserConfig mc;
    mc.resolution = resolution;
    mc.widths = config.get_ints("diffusion.widths");
    mc.groups = config.get_int("diffusion.groups");
    mc.time_dim = config.get_int("diffusion.time_dim");
    mc.id_dim = encoder.config().dim;
    mc.cond_tokens = config.get_int("diffusion.tokens");
    mc.cond_token_width = config.get_int("diffusion.token_width");
    DiffusionTrainConfig tc;
    tc.lambda = config.get_double("diffusion.lambda");
    tc.m_low = config.get_double("diffusion.m_low");
    tc.m_high = config.get_double("diffusion.m_high");
    tc.m_interval = config.get_double("diffusion.m_interval");
    tc.epochs = config.get_int("diffusion.epochs");
    tc.max_steps = config.get_int("diffusion.max_steps");
    tc.batch_size = config.get_int("diffusion.batch");
    tc.learning_rate = config.get_double("diffusion.lr");
    tc.seed = seed + 2;
    tc.verbose = options.verbose;
    auto res = train_diffusion(read_manifest(data_dir / "train" / "manifest.jsonl"), encoder, tc, schedule, mc);
    res.model.metadata()["config_digest"] = diff_key;
    res.model.save(dir / "denoiser.ckpt");
    std::ofstream log(dir / "loss.csv", std::ios::trunc);
    log << "epoch,steps,mse,simmat,total\n";
    for (const auto& e : res.epochs) log << e.epoch << ',' << e.steps << ',' << e.mse << ',' << e.simmat << ',' << e.total << '\n';
  });

  // filter_inquiries: greedy dissimilar subset of the held-out pool.
  const std::string inq_key =
      chain(enc_key, chain(data_key, config.digest_of({"filter.threshold", "generate.subjects"})));
  const fs::path inq_dir = work / "filter_inquiries";
  runner.run("filter_inquiries", inq_key, [&](const fs::path& dir) {
    auto encoder = EncoderCheckpoint::load(enc_dir / "encoder.ckpt");
    auto pool = read_manifest(data_dir / "inquiry_pool" / "manifest.jsonl");
    std::vector<Image> images;
    for (const auto& p : pool.resolved_paths()) images.push_back(read_png(p));
    auto kept = select_inquiries(images, encoder, config.get_double("filter.threshold"));
    const auto wanted = static_cast<std::size_t>(config.get_int("generate.subjects"));
    if (kept.size() < wanted) {
      throw ValidationError("only " + std::to_string(kept.size()) + " inquiries pass the filter, " +
                            std::to_string(wanted) + " requested");
    }
    DatasetManifest out;
    out.root = dir;
    out.header.config_digest = inq_key;
    out.header.metadata["tool_version"] = std::string(kToolVersion);
    out.header.metadata["threshold"] = config.get("filter.threshold");
    for (std::size_t i = 0; i < wanted; ++i) {
      const auto& rec = pool.records[kept[i]];
      const std::string rel = "inquiry_" + std::to_string(i) + ".png";
      fs::copy_file(pool.resolve(rec), dir / rel, fs::copy_options::overwrite_existing);
      out.records.push_back({rec.subject_id, rel, ImageSource::Corpus, std::nullopt, std::nullopt});
    }
    write_manifest(dir / "manifest.jsonl", out);
  });

  auto gen_keys = keys_with_prefix(config, "generate.");
  gen_keys.erase(std::remove_if(gen_keys.begin(), gen_keys.end(),
                                [](const std::string& k) { return k == "generate.m" || k == "generate.sweep"; }),
                 gen_keys.end());
  const std::string gen_common = chain(diff_key, chain(inq_key, config.digest_of(gen_keys)));
  const auto fr_keys = keys_with_prefix(config, "fr.");

  const int replicate = config.get_int("replicate");
  if (replicate < 0) throw ValidationError("replicate must be >= 0");
  for (double m : m_values) {
    const std::string tag = stage_tag(m, replicate);
    const std::string asm_key = chain(gen_common, format_real(m) + "/" + std::to_string(replicate));
    const fs::path asm_dir = work / ("assemble_" + tag);
    runner.run("assemble_" + tag, asm_key, [&](const fs::path& dir) {
      auto encoder = EncoderCheckpoint::load(enc_dir / "encoder.ckpt");
      auto model = DenoiserModel::load(diff_dir / "denoiser.ckpt");
      auto inquiries_manifest = read_manifest(inq_dir / "manifest.jsonl");
      std::vector<Image> inquiries;
      for (const auto& p : inquiries_manifest.resolved_paths()) inquiries.push_back(read_png(p));
      AssembleConfig ac;
      ac.per_subject = config.get_int("generate.per_subject");
      ac.oversample = config.get_int("generate.oversample");
      ac.seed = seed * 1000003ULL + 5 + static_cast<std::uint64_t>(replicate) * 7919ULL;
      fs::remove_all(dir / "images");
      auto manifest = assemble_dataset(inquiries, model, encoder, MixSchedule::from_values({m}), ac, dir / "images",
                                       config.get_int("generate.sampling_steps"));
      if (manifest.header.partial) throw Error("dataset assembly lost subjects");
      manifest.header.config_digest = asm_key;
      write_manifest(dir / "images" / "manifest.jsonl", manifest);
    });

    const std::string fr_key = chain(asm_key, config.digest_of(fr_keys));
    const fs::path fr_dir = work / ("train_fr_" + tag);
    runner.run("train_fr_" + tag, fr_key, [&](const fs::path& dir) {
      FRTrainConfig fc;
      fc.margin = config.get_double("fr.margin");
      fc.scale = config.get_double("fr.scale");
      fc.learning_rate = config.get_double("fr.lr");
      fc.epochs = config.get_int("fr.epochs");
      fc.decay_epochs = config.get_ints("fr.decay");
      fc.batch_size = config.get_int("fr.batch");
      fc.backbone = encoder_config(config, "fr");
      fc.seed = seed + 3 + static_cast<std::uint64_t>(replicate) * 101ULL;
      fc.verbose = options.verbose;
      auto res = train_fr(read_manifest(asm_dir / "images" / "manifest.jsonl"), fc);
      res.encoder.provenance()["config_digest"] = fr_key;
      res.encoder.save(dir / "encoder.ckpt");
      res.head.save(dir / "head.ckpt", {{"config_digest", fr_key}});
      write_metrics_csv(dir / "metrics.csv", res.epochs);
    });

    const std::string eval_key = chain(fr_key, chain(data_key, config.get("eval.baseline")));
    runner.run("eval_" + tag, eval_key, [&](const fs::path& dir) {
      auto encoder = EncoderCheckpoint::load(fr_dir / "encoder.ckpt");
      auto pairs = read_pair_list(data_dir / "eval" / "toy_eval.txt");
      auto report = evaluate_suite({pairs}, encoder, config.get_double("eval.baseline"));
      report.config_digest = eval_key;
      write_report(dir / "report.json", report);
    });
    result.reports.push_back({m, read_report(work / ("eval_" + tag) / "report.json")});
  }
  return result;
}

Image render_sample_grid(const DenoiserModel& model, const NoiseSchedule& schedule, const EncoderCheckpoint& encoder,
                         const std::vector<Image>& inquiries, const std::vector<double>& m_values, std::uint64_t seed,
                         int num_steps) {
  if (inquiries.empty() || m_values.empty()) throw ValidationError("sample grid needs inquiries and m values");
  const int R = model.config().resolution;
  std::vector<torch::Tensor> rows;
  for (const auto& inquiry : inquiries) {
    std::vector<torch::Tensor> cols{resize_batch(inquiry.unsqueeze(0).to(torch::kFloat32), R, R)[0]};
    for (double m : m_values) {
      auto img = generate_group(model, schedule, inquiry, encoder, m, 1, seed, num_steps)[0];
      cols.push_back(img.to(torch::kFloat32));
    }
    rows.push_back(torch::cat(cols, 2));
  }
  return torch::cat(rows, 1);
}

ConditioningProbe probe_conditioning(const DenoiserModel& model, const NoiseSchedule& schedule,
                                     const EncoderCheckpoint& encoder, const std::vector<Image>& inquiries,
                                     const std::vector<double>& m_values, int per_inquiry, std::uint64_t seed,
                                     int num_steps) {
  if (inquiries.empty() || m_values.empty() || per_inquiry < 1) throw ValidationError("empty conditioning probe");
  ConditioningProbe probe;
  probe.m_values = m_values;
  const int R = encoder.config().resolution;
  std::vector<torch::Tensor> inquiry_batch;
  for (const auto& q : inquiries) inquiry_batch.push_back(q.to(torch::kFloat32));
  auto e_inq = encoder.embed_all(resize_batch(torch::stack(inquiry_batch), R, R)).to(torch::kFloat64);
  for (double m : m_values) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < inquiries.size(); ++i) {
      auto imgs = generate_group(model, schedule, inquiries[i], encoder, m, per_inquiry,
                                 seed + static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(per_inquiry), num_steps);
      auto e = encoder.embed_all(resize_batch(torch::stack(imgs).to(torch::kFloat32), R, R)).to(torch::kFloat64);
      sum += torch::matmul(e, e_inq[static_cast<int64_t>(i)]).sum().item<double>();
      count += imgs.size();
    }
    probe.mean_similarity.push_back(sum / static_cast<double>(count));
  }
  probe.spearman = spearman_correlation(m_values, probe.mean_similarity);
  return probe;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("spearman inputs differ in length");
  if (a.size() < 2) throw ValidationError("spearman needs at least two points");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace simcond
