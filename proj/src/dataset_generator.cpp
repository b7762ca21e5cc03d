#include "simcond/dataset_generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "simcond/checkpoint_io.hpp"
#include "simcond/diffusion_training.hpp"
#include "simcond/digest.hpp"
#include "simcond/errors.hpp"

namespace simcond {

MixSchedule MixSchedule::from_values(std::vector<double> values) {
  if (values.empty()) throw ValidationError("m schedule must not be empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= -1.0 && values[i] <= 1.0)) throw ValidationError("m schedule values must lie in [-1, 1]");
    for (std::size_t j = 0; j < i; ++j) {
      if (values[j] == values[i]) throw ValidationError("m schedule contains duplicates");
    }
  }
  MixSchedule s;
  s.values_ = std::move(values);
  return s;
}

std::string MixSchedule::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < values_.size(); ++i) out += (i ? "," : "") + format_real(values_[i]);
  return out;
}

MixSchedule mix_m_schedule(double low, double high, double interval) {
  if (low < -1.0 || high > 1.0) throw ValidationError("m schedule bounds must lie in [-1, 1]");
  if (low == high) return MixSchedule::from_values({low});
  return MixSchedule::from_values(arithmetic_grid(low, high, interval));
}

std::vector<std::size_t> select_inquiries(const std::vector<IdentityEmbedding>& pool, double threshold) {
  if (pool.empty()) throw ValidationError("inquiry pool is empty");
  if (!(threshold > -1.0 && threshold <= 1.0)) throw ValidationError("threshold must lie in (-1, 1]");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    bool accept = true;
    for (std::size_t k : kept) {
      if (cosine_similarity(pool[i], pool[k]) > threshold) {
        accept = false;
        break;
      }
    }
    if (accept) kept.push_back(i);
  }
  return kept;
}

std::vector<std::size_t> select_inquiries(const std::vector<Image>& pool, const EncoderCheckpoint& encoder,
                                          double threshold) {
  if (pool.empty()) throw ValidationError("inquiry pool is empty");
  std::vector<IdentityEmbedding> emb;
  emb.reserve(pool.size());
  const int r = encoder.config().resolution;
  for (const auto& img : pool) emb.push_back(embed(resize_batch(img.unsqueeze(0), r, r)[0], encoder));
  return select_inquiries(emb, threshold);
}

DiffusionSampleGenerator::DiffusionSampleGenerator(DenoiserModel model, NoiseSchedule schedule,
                                                   EncoderCheckpoint encoder, int num_steps, double eta, int batch)
    : model_(std::move(model)),
      schedule_(std::move(schedule)),
      encoder_(std::move(encoder)),
      num_steps_(num_steps),
      eta_(eta),
      batch_(batch) {}

std::vector<Image> DiffusionSampleGenerator::generate(const Image& inquiry, double m,
                                                      const std::vector<std::uint64_t>& seeds) {
  const int er = encoder_.config().resolution;
  const auto c_id = embed(resize_batch(inquiry.unsqueeze(0), er, er)[0], encoder_);
  auto dtype = model_.dtype();
  auto row = c_id.to_tensor(dtype).unsqueeze(0);
  std::vector<Image> out;
  for (std::size_t start = 0; start < seeds.size(); start += batch_) {
    const auto end = std::min(seeds.size(), start + static_cast<std::size_t>(batch_));
    std::vector<std::uint64_t> chunk(seeds.begin() + start, seeds.begin() + end);
    const auto b = static_cast<int64_t>(chunk.size());
    auto imgs = ddim_sample_batch(model_, schedule_, row.expand({b, row.size(1)}), torch::full({b}, m, dtype), chunk,
                                  num_steps_, eta_);
    for (int64_t i = 0; i < b; ++i) out.push_back(imgs[i]);
  }
  return out;
}

std::string DiffusionSampleGenerator::tag() const {
  return "ddim:steps=" + std::to_string(num_steps_) + ":eta=" + format_real(eta_) + ":T=" +
         std::to_string(schedule_.T());
}

PngDirectorySink::PngDirectorySink(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec || !std::filesystem::is_directory(root_)) throw IoError("cannot create output directory " + root_.string());
  const auto probe = root_ / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory is not writable: " + root_.string());
  }
  std::filesystem::remove(probe, ec);
}

void PngDirectorySink::put(const std::string& relative_path, const Image& image) {
  const auto path = root_ / relative_path;
  std::filesystem::create_directories(path.parent_path());
  write_png(path, image);
}

std::string subject_directory(std::size_t subject) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "subject_%05zu", subject);
  return buf;
}

std::string image_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%04zu.png", index);
  return buf;
}

DatasetManifest assemble_dataset(const std::vector<Image>& inquiries, SampleGenerator& generator,
                                 const MixSchedule& schedule_m, const AssembleConfig& config, ImageSink& sink,
                                 const std::filesystem::path& root) {
  if (config.per_subject < 1) throw ValidationError("per_subject must be >= 1");
  if (config.oversample < 0) throw ValidationError("oversample must be >= 0");

  DatasetManifest manifest;
  manifest.root = root;
  auto& meta = manifest.header.metadata;
  meta["per_subject"] = std::to_string(config.per_subject);
  meta["oversample"] = std::to_string(config.oversample);
  meta["seed"] = std::to_string(config.seed);
  meta["m_schedule"] = schedule_m.to_string();
  meta["generator"] = generator.tag();
  meta["subjects"] = std::to_string(inquiries.size());
  meta["tool_version"] = std::string(kToolVersion);
  Fnv1a digest;
  for (const auto& [k, v] : meta) digest.update(k).update("=").update(v).update("\n");
  manifest.header.config_digest = digest.hex();

  const std::size_t per = static_cast<std::size_t>(config.per_subject);
  manifest.records.reserve(inquiries.size() * (per + static_cast<std::size_t>(config.oversample)));

  for (std::size_t i = 0; i < inquiries.size(); ++i) {
    const std::string dir = subject_directory(i);
    const std::uint64_t base = config.seed + static_cast<std::uint64_t>(i) * per;
    try {
      // Round-robin m assignment, generated per distinct m so the sampler can
      // batch.
      std::vector<Image> images(per);
      for (std::size_t k = 0; k < schedule_m.size() && k < per; ++k) {
        std::vector<std::uint64_t> seeds;
        std::vector<std::size_t> slots;
        for (std::size_t j = k; j < per; j += schedule_m.size()) {
          seeds.push_back(base + j);
          slots.push_back(j);
        }
        auto generated = generator.generate(inquiries[i], schedule_m[k], seeds);
        if (generated.size() != seeds.size()) throw Error("generator returned the wrong number of images");
        for (std::size_t s = 0; s < slots.size(); ++s) images[slots[s]] = generated[s];
      }
      std::vector<ImageRecord> subject_records;
      for (std::size_t j = 0; j < per; ++j) {
        const std::string rel = dir + "/" + image_filename(j);
        sink.put(rel, images[j]);
        subject_records.push_back({static_cast<std::int64_t>(i), rel, ImageSource::Generated,
                                   schedule_m[j % schedule_m.size()], base + j});
      }
      for (int o = 0; o < config.oversample; ++o) {
        const std::string rel = dir + "/" + image_filename(per + static_cast<std::size_t>(o));
        sink.put(rel, inquiries[i].clamp(-1.0, 1.0));
        subject_records.push_back(
            {static_cast<std::int64_t>(i), rel, ImageSource::OversampledInquiry, std::nullopt, std::nullopt});
      }
      manifest.records.insert(manifest.records.end(), subject_records.begin(), subject_records.end());
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      std::cerr << "assemble: subject " << i << " aborted: " << e.what() << '\n';
      manifest.header.partial = true;
    }
  }
  return manifest;
}

DatasetManifest assemble_dataset(const std::vector<Image>& inquiries, const DenoiserModel& model,
                                 const EncoderCheckpoint& encoder, const MixSchedule& schedule_m,
                                 const AssembleConfig& config, const std::filesystem::path& out_dir, int num_steps) {
  PngDirectorySink sink(out_dir);
  DiffusionSampleGenerator generator(model, schedule_from_metadata(model), encoder, num_steps);
  auto manifest = assemble_dataset(inquiries, generator, schedule_m, config, sink, out_dir);
  write_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

}  // namespace simcond
