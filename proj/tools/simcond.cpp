// simcond command-line front end. Each subcommand wraps one library stage and
// reads/writes the on-disk artifact formats; run-pipeline chains them.

#include <CLI11.hpp>

#include <iostream>

#include "simcond/ddim_sampler.hpp"
#include "simcond/dataset_generator.hpp"
#include "simcond/diffusion_training.hpp"
#include "simcond/digest.hpp"
#include "simcond/errors.hpp"
#include "simcond/fr_trainer.hpp"
#include "simcond/identity_embedder.hpp"
#include "simcond/manifest.hpp"
#include "simcond/pipeline.hpp"
#include "simcond/similarity_analysis.hpp"
#include "simcond/toy_corpus.hpp"
#include "simcond/verification_eval.hpp"

namespace fs = std::filesystem;
using namespace simcond;

namespace {

std::string args_digest(int argc, char** argv) {
  Fnv1a d;
  for (int i = 1; i < argc; ++i) d.update(argv[i]).update("\0");
  return d.hex();
}

std::vector<Image> load_images(const fs::path& source) {
  std::vector<Image> out;
  if (fs::is_directory(source)) {
    if (fs::exists(source / "manifest.jsonl")) {
      for (const auto& p : read_manifest(source / "manifest.jsonl").resolved_paths()) out.push_back(read_png(p));
    } else {
      for (const auto& p : list_png_files(source)) out.push_back(read_png(p));
    }
  } else if (source.extension() == ".jsonl") {
    for (const auto& p : read_manifest(source).resolved_paths()) out.push_back(read_png(p));
  } else {
    out.push_back(read_png(source));
  }
  if (out.empty()) throw ValidationError("no images found at " + source.string());
  return out;
}

EncoderCheckpoint encoder_for(const DenoiserModel& model, const std::string& explicit_path) {
  if (!explicit_path.empty()) return EncoderCheckpoint::load(explicit_path);
  auto it = model.metadata().find("encoder_path");
  if (it == model.metadata().end()) throw ValidationError("model header names no encoder; pass --encoder");
  return EncoderCheckpoint::load(it->second);
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Similarity-conditioned diffusion for synthetic face-recognition data"};
  app.require_subcommand(1);
  const std::string digest = args_digest(argc, argv);

  // make-toy-data
  auto* toy = app.add_subcommand("make-toy-data", "Render a procedural identity corpus");
  ToyCorpusConfig toy_cfg;
  std::string toy_out;
  int toy_pairs = 0;
  toy->add_option("--identities", toy_cfg.n_identities)->default_val(100);
  toy->add_option("--per-identity", toy_cfg.per_identity)->default_val(30);
  toy->add_option("--resolution", toy_cfg.resolution)->default_val(32);
  toy->add_option("--seed", toy_cfg.seed)->default_val(0);
  toy->add_option("--identity-offset", toy_cfg.identity_offset)->default_val(0);
  toy->add_option("--pairs", toy_pairs, "also write <out>/pairs.txt with this many pairs");
  toy->add_option("--out", toy_out)->required();
  toy->callback([&] {
    auto m = make_toy_corpus(toy_cfg, toy_out);
    if (toy_pairs > 0) {
      write_pair_list(fs::path(toy_out) / "pairs.txt",
                      make_pair_list(m, static_cast<std::size_t>(toy_pairs), toy_cfg.seed + 17, "pairs"));
    }
    std::cout << m.records.size() << " images, " << m.subjects().size() << " subjects -> " << toy_out << "\n";
  });

  // train-encoder
  auto* te = app.add_subcommand("train-encoder", "Train the identity encoder with a CosFace head");
  std::string te_corpus, te_out, te_head, te_metrics;
  EncoderConfig te_enc;
  EncoderTrainConfig te_cfg;
  te->add_option("--corpus", te_corpus)->required();
  te->add_option("--out", te_out)->required();
  te->add_option("--head", te_head, "head checkpoint (default <out>.head)");
  te->add_option("--metrics", te_metrics, "CSV log");
  te->add_option("--dim", te_enc.dim)->default_val(128);
  te->add_option("--resolution", te_enc.resolution)->default_val(32);
  te->add_option("--widths", te_enc.widths)->delimiter(',')->default_str("16,32,64,96");
  te->add_option("--epochs", te_cfg.epochs)->default_val(12);
  te->add_option("--batch", te_cfg.batch_size)->default_val(64);
  te->add_option("--lr", te_cfg.learning_rate)->default_val(0.1);
  te->add_option("--decay", te_cfg.decay_epochs)->default_str("8 11");
  te->add_option("--margin", te_cfg.margin)->default_val(0.4);
  te->add_option("--scale", te_cfg.scale)->default_val(64.0);
  te->add_option("--seed", te_cfg.seed)->default_val(0);
  te->add_flag("--verbose", te_cfg.verbose);
  te->callback([&] {
    auto res = train_encoder(read_manifest(te_corpus), te_enc, te_cfg);
    res.encoder.provenance()["config_digest"] = digest;
    res.encoder.provenance()["seed"] = std::to_string(te_cfg.seed);
    res.encoder.save(te_out);
    res.head.save(te_head.empty() ? te_out + ".head" : te_head, {{"config_digest", digest}});
    if (!te_metrics.empty()) write_metrics_csv(te_metrics, res.epochs);
    std::cout << "train accuracy " << res.train_accuracy << "\n";
  });

  // train-diffusion
  auto* td = app.add_subcommand("train-diffusion", "Train the similarity-conditioned denoiser");
  std::string td_corpus, td_encoder, td_out;
  int td_T = 200;
  std::vector<double> td_range{-1.0, 1.0};
  double td_beta_start = -1.0, td_beta_end = -1.0;
  DiffusionTrainConfig td_cfg;
  DenoiserConfig td_model;
  bool td_abs = false;
  td->add_option("--corpus", td_corpus)->required();
  td->add_option("--encoder", td_encoder)->required();
  td->add_option("--out", td_out)->required();
  td->add_option("--T", td_T)->default_val(200);
  td->add_option("--beta-start", td_beta_start, "default scales 1e-4 by 1000/T");
  td->add_option("--beta-end", td_beta_end, "default scales 0.02 by 1000/T");
  td->add_option("--lambda", td_cfg.lambda)->default_val(0.05);
  td->add_option("--m-range", td_range)->expected(2)->default_str("-1 1");
  td->add_option("--m-interval", td_cfg.m_interval)->default_val(0.02);
  td->add_option("--epochs", td_cfg.epochs)->default_val(10);
  td->add_option("--max-steps", td_cfg.max_steps)->default_val(0);
  td->add_option("--batch", td_cfg.batch_size)->default_val(32);
  td->add_option("--lr", td_cfg.learning_rate)->default_val(1e-4);
  td->add_option("--widths", td_model.widths)->delimiter(',')->default_str("32,64,64");
  td->add_flag("--absolute-simmat", td_abs, "use |s - target| instead of the squared form");
  td->add_option("--seed", td_cfg.seed)->default_val(0);
  td->add_flag("--verbose", td_cfg.verbose);
  td->callback([&] {
    auto encoder = EncoderCheckpoint::load(td_encoder);
    auto [bs, be] = scaled_linear_betas(td_T);
    if (td_beta_start >= 0) bs = td_beta_start;
    if (td_beta_end >= 0) be = td_beta_end;
    td_cfg.m_low = td_range[0];
    td_cfg.m_high = td_range[1];
    if (td_abs) td_cfg.simmat.norm = SimMatNorm::Absolute;
    td_model.id_dim = encoder.config().dim;
    td_model.resolution = encoder.config().resolution;
    auto res = train_diffusion(read_manifest(td_corpus), encoder, td_cfg, make_noise_schedule(td_T, bs, be), td_model);
    res.model.metadata()["config_digest"] = digest;
    res.model.metadata()["encoder_path"] = fs::absolute(td_encoder).string();
    res.model.save(td_out);
    if (!res.epochs.empty()) std::cout << "final mse " << res.epochs.back().mse << " simmat " << res.epochs.back().simmat << "\n";
  });

  // filter-inquiries
  auto* fi = app.add_subcommand("filter-inquiries", "Keep a mutually dissimilar subset of candidate inquiries");
  std::string fi_pool, fi_encoder, fi_out;
  double fi_threshold = 0.3;
  std::size_t fi_count = 0;
  fi->add_option("--pool", fi_pool, "directory, manifest or image")->required();
  fi->add_option("--encoder", fi_encoder)->required();
  fi->add_option("--threshold", fi_threshold)->default_val(0.3);
  fi->add_option("--count", fi_count, "keep at most this many (0 = all)");
  fi->add_option("--out", fi_out, "output directory")->required();
  fi->callback([&] {
    auto images = load_images(fi_pool);
    auto kept = select_inquiries(images, EncoderCheckpoint::load(fi_encoder), fi_threshold);
    if (fi_count > 0 && kept.size() > fi_count) kept.resize(fi_count);
    fs::create_directories(fi_out);
    DatasetManifest m;
    m.root = fi_out;
    m.header.config_digest = digest;
    m.header.metadata["tool_version"] = std::string(kToolVersion);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const std::string rel = "inquiry_" + std::to_string(i) + ".png";
      write_png(fs::path(fi_out) / rel, images[kept[i]]);
      m.records.push_back({static_cast<std::int64_t>(i), rel, ImageSource::Corpus, std::nullopt, std::nullopt});
    }
    write_manifest(fs::path(fi_out) / "manifest.jsonl", m);
    std::cout << kept.size() << " of " << images.size() << " inquiries kept\n";
  });

  // generate
  auto* ge = app.add_subcommand("generate", "Sample images at similarity m to each inquiry");
  std::string ge_model, ge_encoder, ge_inquiry, ge_out;
  double ge_m = 0.0, ge_eta = 0.0;
  int ge_n = 50, ge_steps = 20;
  std::uint64_t ge_seed = 0;
  ge->add_option("--model", ge_model)->required();
  ge->add_option("--encoder", ge_encoder, "default: encoder named in the model header");
  ge->add_option("--inquiry", ge_inquiry, "image, directory or manifest")->required();
  ge->add_option("--m", ge_m)->default_val(0.0);
  ge->add_option("--per-subject", ge_n)->default_val(50);
  ge->add_option("--steps", ge_steps)->default_val(20);
  ge->add_option("--eta", ge_eta)->default_val(0.0);
  ge->add_option("--seed", ge_seed)->default_val(0);
  ge->add_option("--out", ge_out)->required();
  ge->callback([&] {
    auto model = DenoiserModel::load(ge_model);
    auto encoder = encoder_for(model, ge_encoder);
    auto schedule = schedule_from_metadata(model);
    auto inquiries = load_images(ge_inquiry);
    for (std::size_t i = 0; i < inquiries.size(); ++i) {
      const fs::path dir = fs::path(ge_out) / subject_directory(i);
      fs::create_directories(dir);
      auto imgs = generate_group(model, schedule, inquiries[i], encoder, ge_m, ge_n,
                                 ge_seed + static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(ge_n), ge_steps,
                                 ge_eta);
      for (std::size_t j = 0; j < imgs.size(); ++j) write_png(dir / image_filename(j), imgs[j]);
    }
  });

  // assemble
  auto* as = app.add_subcommand("assemble", "Build a synthetic dataset with manifest");
  std::string as_inquiries, as_model, as_encoder, as_out;
  double as_m = 0.0;
  std::vector<double> as_mix;
  AssembleConfig as_cfg;
  int as_steps = 20;
  as->add_option("--inquiries", as_inquiries, "directory or manifest of inquiry images")->required();
  as->add_option("--model", as_model)->required();
  as->add_option("--encoder", as_encoder, "default: encoder named in the model header");
  as->add_option("--m", as_m)->default_val(0.0);
  as->add_option("--m-mix", as_mix, "low high interval")->expected(3);
  as->add_option("--per-subject", as_cfg.per_subject)->default_val(50);
  as->add_option("--oversample", as_cfg.oversample)->default_val(5);
  as->add_option("--steps", as_steps)->default_val(20);
  as->add_option("--seed", as_cfg.seed)->default_val(0);
  as->add_option("--out", as_out)->required();
  as->callback([&] {
    auto model = DenoiserModel::load(as_model);
    auto encoder = encoder_for(model, as_encoder);
    auto schedule = as_mix.empty() ? MixSchedule::from_values({as_m}) : mix_m_schedule(as_mix[0], as_mix[1], as_mix[2]);
    auto m = assemble_dataset(load_images(as_inquiries), model, encoder, schedule, as_cfg, as_out, as_steps);
    std::cout << m.records.size() << " records" << (m.header.partial ? " (partial)" : "") << "\n";
  });

  // split-sim
  auto* ss = app.add_subcommand("split-sim", "Bucket a dataset by similarity to identity centers");
  std::string ss_manifest, ss_encoder, ss_head, ss_out, ss_export;
  int ss_groups = 5;
  bool ss_exclude = false;
  ss->add_option("--manifest", ss_manifest)->required();
  ss->add_option("--encoder", ss_encoder)->required();
  ss->add_option("--head", ss_head)->required();
  ss->add_option("--groups", ss_groups)->default_val(5);
  ss->add_flag("--exclude-oversampled", ss_exclude);
  ss->add_option("--export-embeddings", ss_export, "binary embedding dump");
  ss->add_option("--out", ss_out)->required();
  ss->callback([&] {
    auto manifest = read_manifest(ss_manifest);
    auto encoder = EncoderCheckpoint::load(ss_encoder);
    auto scored = score_to_center(manifest, encoder, ClassifierHead::load(ss_head), {ss_exclude});
    if (!ss_export.empty()) export_embeddings(manifest, encoder, ss_export, &scored);
    auto groups = bucket_by_similarity(scored, ss_groups);
    write_group_manifests(groups, manifest, ss_out);
    for (const auto& g : groups) {
      std::cout << "group " << g.group_id << ": " << g.members.size() << " images, mean " << g.mean_similarity << "\n";
    }
  });

  // train-fr
  auto* tf = app.add_subcommand("train-fr", "Train a recognition model on a manifest");
  std::string tf_manifest, tf_out, tf_head, tf_metrics;
  FRTrainConfig tf_cfg;
  tf->add_option("--manifest", tf_manifest)->required();
  tf->add_option("--out", tf_out)->required();
  tf->add_option("--head", tf_head, "head checkpoint (default <out>.head)");
  tf->add_option("--metrics", tf_metrics, "CSV log (default <out>.metrics.csv)");
  tf->add_option("--margin", tf_cfg.margin)->default_val(0.4);
  tf->add_option("--scale", tf_cfg.scale)->default_val(64.0);
  tf->add_option("--lr", tf_cfg.learning_rate)->default_val(0.1);
  tf->add_option("--epochs", tf_cfg.epochs)->default_val(40);
  tf->add_option("--decay", tf_cfg.decay_epochs)->default_str("26 34");
  tf->add_option("--batch", tf_cfg.batch_size)->default_val(128);
  tf->add_option("--dim", tf_cfg.backbone.dim)->default_val(128);
  tf->add_option("--resolution", tf_cfg.backbone.resolution)->default_val(32);
  tf->add_option("--widths", tf_cfg.backbone.widths)->delimiter(',')->default_str("16,32,64,96");
  tf->add_option("--seed", tf_cfg.seed)->default_val(0);
  tf->add_flag("--verbose", tf_cfg.verbose);
  tf->callback([&] {
    auto res = train_fr(read_manifest(tf_manifest), tf_cfg);
    res.encoder.provenance()["config_digest"] = digest;
    res.encoder.save(tf_out);
    res.head.save(tf_head.empty() ? tf_out + ".head" : tf_head, {{"config_digest", digest}});
    write_metrics_csv(tf_metrics.empty() ? tf_out + ".metrics.csv" : tf_metrics, res.epochs);
    std::cout << "train accuracy " << res.train_accuracy << "\n";
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Ten-fold verification accuracy over pair lists");
  std::string ev_encoder, ev_report;
  std::vector<std::string> ev_pairs;
  double ev_baseline = 0.0;
  ev->add_option("--encoder", ev_encoder)->required();
  ev->add_option("--pairs", ev_pairs)->required();
  ev->add_option("--baseline", ev_baseline, "AVG of the real-data baseline, in percent")->required();
  ev->add_option("--report", ev_report);
  ev->callback([&] {
    std::vector<PairList> lists;
    for (const auto& p : ev_pairs) lists.push_back(read_pair_list(p));
    auto report = evaluate_suite(lists, EncoderCheckpoint::load(ev_encoder), ev_baseline);
    report.config_digest = digest;
    if (!ev_report.empty()) write_report(ev_report, report);
    std::cout << report_to_json(report);
  });

  // run-pipeline
  auto* rp = app.add_subcommand("run-pipeline", "Run every stage on the toy corpus");
  std::string rp_config;
  std::vector<std::string> rp_sets;
  PipelineOptions rp_opts;
  rp->add_option("--config", rp_config, "key = value file");
  rp->add_option("--set", rp_sets, "key=value override")->take_all();
  rp->add_flag("--force", rp_opts.force, "ignore cached stages");
  rp->add_flag("--verbose", rp_opts.verbose);
  rp->callback([&] {
    auto config = rp_config.empty() ? PipelineConfig() : PipelineConfig::load(rp_config);
    for (const auto& s : rp_sets) config.apply_override(s);
    auto result = run_pipeline(config, rp_opts);
    for (const auto& s : result.executed) std::cout << "ran     " << s << "\n";
    for (const auto& s : result.skipped) std::cout << "cached  " << s << "\n";
    for (const auto& r : result.reports) std::cout << m_tag(r.m) << " avg " << r.report.avg << " gap " << r.report.gap_to_real << "\n";
  });

  // report
  auto* re = app.add_subcommand("report", "Render a sample grid: rows are inquiries, columns m values");
  std::string re_model, re_encoder, re_inquiries, re_out;
  std::vector<double> re_m{-0.8, -0.4, 0.0, 0.4, 0.8};
  std::uint64_t re_seed = 0;
  std::size_t re_rows = 8;
  int re_steps = 20;
  int re_probe = 0;
  re->add_option("--model", re_model)->required();
  re->add_option("--encoder", re_encoder, "default: encoder named in the model header");
  re->add_option("--inquiries", re_inquiries)->required();
  re->add_option("--m", re_m)->default_str("-0.8 -0.4 0 0.4 0.8");
  re->add_option("--rows", re_rows)->default_val(8);
  re->add_option("--steps", re_steps)->default_val(20);
  re->add_option("--seed", re_seed)->default_val(0);
  re->add_option("--probe", re_probe, "also print mean realized similarity per m over this many samples per inquiry");
  re->add_option("--out", re_out)->required();
  re->callback([&] {
    auto model = DenoiserModel::load(re_model);
    auto inquiries = load_images(re_inquiries);
    if (inquiries.size() > re_rows) inquiries.resize(re_rows);
    auto encoder = encoder_for(model, re_encoder);
    auto schedule = schedule_from_metadata(model);
    write_png(re_out, render_sample_grid(model, schedule, encoder, inquiries, re_m, re_seed, re_steps));
    if (re_probe > 0) {
      auto probe = probe_conditioning(model, schedule, encoder, inquiries, re_m, re_probe, re_seed + 1, re_steps);
      for (std::size_t i = 0; i < re_m.size(); ++i) {
        std::cout << "m " << re_m[i] << " realized " << probe.mean_similarity[i] << "\n";
      }
      std::cout << "spearman " << probe.spearman << "\n";
    }
  });

  // concat-manifests
  auto* cm = app.add_subcommand("concat-manifests", "Merge two datasets with disjoint subject ids");
  std::string cm_first, cm_second, cm_out;
  cm->add_option("first", cm_first)->required();
  cm->add_option("second", cm_second)->required();
  cm->add_option("--out", cm_out, "output manifest path")->required();
  cm->callback([&] {
    const fs::path out = fs::absolute(cm_out);
    auto a = read_manifest(cm_first);
    auto b = read_manifest(cm_second);
    a.root = fs::absolute(a.root);
    b.root = fs::absolute(b.root);
    auto merged = concat_manifests(a, b, out.parent_path());
    write_manifest(out, merged);
    std::cout << merged.records.size() << " records\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const simcond::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << "\n";
    return 2;
  }
  return 0;
}
