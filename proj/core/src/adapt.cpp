// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/adapt.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace nastar::adapt {

namespace {

std::string hex_u64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::vector<audio::Waveform> load_waveforms(
    const std::vector<audio::ManifestEntry>& manifest, const char* what) {
  if (manifest.empty()) {
    throw std::invalid_argument(std::string("empty ") + what + " manifest");
  }
  std::vector<audio::Waveform> out;
  out.reserve(manifest.size());
  for (const auto& entry : manifest) {
    out.push_back(audio::load_wav(entry.path));
  }
  return out;
}

void check_schedule(const std::vector<double>& snr_levels, std::size_t batch,
                    double learning_rate, const char* what) {
  if (snr_levels.empty()) {
    throw std::invalid_argument(std::string(what) + ": empty snr_levels");
  }
  if (batch == 0) {
    throw std::invalid_argument(std::string(what) + ": batch must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument(std::string(what) +
                                ": learning_rate must be > 0");
  }
}

}  // namespace

dsp::MultiResConfig default_train_loss() {
  dsp::MultiResConfig cfg;
  cfg.log_floor = 1e-3;
  return cfg;
}

void validate_sampler(const CollaborativeSampler& s) {
  if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) {
    throw std::invalid_argument("sampler: alpha must be in [0, 1]");
  }
  if (s.alpha < 1.0 && s.pseudo_noise.empty()) {
    throw std::invalid_argument("sampler: pseudo_noise required when alpha < 1");
  }
  if (s.alpha > 0.0 && s.cohort_ids.empty()) {
    throw std::invalid_argument("sampler: cohort required when alpha > 0");
  }
}

NoisePool::NoisePool(const std::vector<audio::ManifestEntry>& entries) {
  ids_.reserve(entries.size());
  for (const auto& entry : entries) {
    if (entry.id.empty()) {
      throw std::invalid_argument("noise pool: empty id");
    }
    if (!paths_.emplace(entry.id, entry.path).second) {
      throw std::invalid_argument("noise pool: duplicate id " + entry.id);
    }
    ids_.push_back(entry.id);
  }
}

const audio::Waveform& NoisePool::get(const std::string& id) const {
  auto cached = cache_.find(id);
  if (cached != cache_.end()) {
    return cached->second;
  }
  auto path = paths_.find(id);
  if (path == paths_.end()) {
    throw std::runtime_error("noise pool: unknown id " + id);
  }
  return cache_.emplace(id, audio::load_wav(path->second)).first->second;
}

bool NoisePool::has(const std::string& id) const {
  return paths_.count(id) != 0;
}

const audio::Waveform& sample_noise(const CollaborativeSampler& s,
                                    const NoisePool& pool, Rng& rng) {
  validate_sampler(s);
  if (rng.uniform() < 1.0 - s.alpha) {
    return s.pseudo_noise;
  }
  const auto pick = rng.uniform_int(s.cohort_ids.size());
  return pool.get(s.cohort_ids[pick]);
}

MixedExample mix_training_example(const audio::Waveform& speech,
                                  const audio::Waveform& noise, double snr_db,
                                  std::size_t max_train_len, Rng& rng) {
  MixedExample ex;
  ex.snr_db = snr_db;
  if (max_train_len > 0 && speech.size() > max_train_len) {
    ex.speech = audio::random_segment(speech, max_train_len, max_train_len, rng);
  } else {
    ex.speech = speech;
  }

  // The mixer's only draw is the fit offset, so a pre-mix copy of the
  // generator replays the exact fitted segment the mixture contains.
  Rng fit_rng = rng;
  auto mix = audio::mix_at_snr(ex.speech, noise, snr_db, rng);
  audio::Waveform fitted = audio::fit_length(noise, ex.speech.size(), fit_rng);

  ex.noisy = std::move(mix.noisy);
  ex.scaled_noise.sample_rate_hz = fitted.sample_rate_hz;
  ex.scaled_noise.samples.resize(fitted.size());
  for (std::size_t i = 0; i < fitted.size(); ++i) {
    ex.scaled_noise.samples[i] = mix.gain * fitted.samples[i];
  }
  return ex;
}

PretrainResult pretrain(const std::vector<audio::ManifestEntry>& speech_manifest,
                        const std::vector<audio::ManifestEntry>& noise_manifest,
                        const models::ExtractorConfig& extractor_cfg,
                        const models::ExtractorConfig& se_cfg,
                        const PretrainConfig& cfg, std::uint64_t seed) {
  check_schedule(cfg.snr_levels, cfg.batch, cfg.learning_rate, "pretrain");
  const auto speech = load_waveforms(speech_manifest, "speech");
  const auto noises = load_waveforms(noise_manifest, "noise");

  Rng root(seed);
  PretrainResult result;
  result.extractor = models::init_extractor(extractor_cfg, root.next_u64());
  result.se = models::init_extractor(se_cfg, root.next_u64());

  auto extractor_state = models::make_adam_state(result.extractor,
                                                 cfg.learning_rate);
  auto se_state = models::make_adam_state(result.se, cfg.learning_rate);
  models::ParamSet grad = models::zeros_like(result.extractor);
  models::ParamSet se_grad = models::zeros_like(result.se);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Rng srng = root.fork(step);
    std::vector<models::TrainItem> extractor_batch;
    std::vector<models::TrainItem> se_batch;
    extractor_batch.reserve(cfg.batch);
    se_batch.reserve(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& sp = speech[srng.uniform_int(speech.size())];
      const auto& nz = noises[srng.uniform_int(noises.size())];
      const double snr = cfg.snr_levels[srng.uniform_int(cfg.snr_levels.size())];
      auto ex = mix_training_example(sp, nz, snr, cfg.max_train_len, srng);
      extractor_batch.push_back({ex.noisy, std::move(ex.scaled_noise)});
      se_batch.push_back({std::move(ex.noisy), std::move(ex.speech)});
    }

    models::DenoiserObjective extractor_obj(std::move(extractor_batch),
                                            extractor_cfg, cfg.loss);
    result.extractor_loss.push_back(
        extractor_obj.value_and_grad(result.extractor, grad));
    models::adam_step(result.extractor, grad, extractor_state);

    models::DenoiserObjective se_obj(std::move(se_batch), se_cfg, cfg.loss);
    result.se_loss.push_back(se_obj.value_and_grad(result.se, se_grad));
    models::adam_step(result.se, se_grad, se_state);
  }
  return result;
}

AdaptResult adapt(const models::ParamSet& se_init,
                  const models::ExtractorConfig& se_cfg,
                  const CollaborativeSampler& sampler, const NoisePool& pool,
                  const std::vector<audio::ManifestEntry>& speech_manifest,
                  const AdaptConfig& cfg, std::uint64_t seed) {
  check_schedule(cfg.snr_levels, cfg.batch, cfg.learning_rate, "adapt");
  validate_sampler(sampler);
  const auto speech = load_waveforms(speech_manifest, "speech");

  Rng root(seed);
  AdaptResult result;
  result.params = se_init;

  auto state = models::make_adam_state(result.params, cfg.learning_rate);
  models::ParamSet grad = models::zeros_like(result.params);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Rng srng = root.fork(step);
    std::vector<models::TrainItem> batch;
    batch.reserve(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& sp = speech[srng.uniform_int(speech.size())];
      const auto& nz = sample_noise(sampler, pool, srng);
      const double snr = cfg.snr_levels[srng.uniform_int(cfg.snr_levels.size())];
      auto ex = mix_training_example(sp, nz, snr, cfg.max_train_len, srng);
      batch.push_back({std::move(ex.noisy), std::move(ex.speech)});
    }

    models::DenoiserObjective obj(std::move(batch), se_cfg, cfg.loss);
    result.loss.push_back(obj.value_and_grad(result.params, grad));
    models::adam_step(result.params, grad, state);
  }
  return result;
}

audio::Waveform extract_pseudo_noise(const models::ParamSet& extractor,
                                     const models::ExtractorConfig& cfg,
                                     const audio::Waveform& query_noisy) {
  return models::extractor_forward(extractor, cfg, query_noisy);
}

std::string_view mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::kNastar: return "nastar";
    case AblationMode::kExtr: return "extr";
    case AblationMode::kGt: return "gt";
    case AblationMode::kAll: return "all";
    case AblationMode::kRetv: return "retv";
    case AblationMode::kOpt: return "opt";
  }
  throw std::invalid_argument("mode_name: unknown mode");
}

AblationMode mode_from_name(std::string_view name) {
  if (name == "nastar") return AblationMode::kNastar;
  if (name == "extr") return AblationMode::kExtr;
  if (name == "gt") return AblationMode::kGt;
  if (name == "all") return AblationMode::kAll;
  if (name == "retv") return AblationMode::kRetv;
  if (name == "opt") return AblationMode::kOpt;
  throw std::invalid_argument("unknown ablation mode: " + std::string(name));
}

std::uint64_t hash_waveform(const audio::Waveform& w) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix_byte = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  auto mix_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      mix_byte(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
  };
  mix_u64(static_cast<std::uint64_t>(w.sample_rate_hz));
  for (double s : w.samples) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &s, sizeof(bits));
    mix_u64(bits);
  }
  return h;
}

PipelineResult run_pipeline(const PipelineInputs& in, const PipelineConfig& cfg,
                            std::uint64_t seed) {
  if (in.query_noisy.empty()) {
    throw std::invalid_argument("run_pipeline: empty query");
  }
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw std::invalid_argument("run_pipeline: alpha must be in [0, 1]");
  }
  const bool retrieves =
      cfg.mode == AblationMode::kNastar || cfg.mode == AblationMode::kRetv;
  if (retrieves) {
    if (cfg.cohort_k == 0 || cfg.cohort_k > in.index.size()) {
      throw std::invalid_argument(
          "run_pipeline: cohort_k must be in [1, index size]");
    }
    if (models::checkpoint_fingerprint(in.encoder) != in.index.encoder_fingerprint) {
      throw std::invalid_argument(
          "run_pipeline: index was built with a different encoder");
    }
  }
  if (cfg.mode == AblationMode::kGt && in.gt_noise.empty()) {
    throw std::invalid_argument("run_pipeline: gt mode requires gt_noise");
  }
  if (cfg.mode == AblationMode::kOpt && in.oracle_noise.empty()) {
    throw std::invalid_argument(
        "run_pipeline: opt mode requires an oracle noise manifest");
  }

  auto pool_entries = in.noise_manifest;
  if (cfg.mode == AblationMode::kOpt) {
    pool_entries.insert(pool_entries.end(), in.oracle_noise.begin(),
                        in.oracle_noise.end());
  }
  NoisePool pool(pool_entries);

  PipelineResult result;
  CollaborativeSampler sampler;
  switch (cfg.mode) {
    case AblationMode::kNastar: {
      sampler.alpha = cfg.alpha;
      sampler.pseudo_noise =
          extract_pseudo_noise(in.extractor, in.extractor_cfg, in.query_noisy);
      const auto query_embedding =
          retrieval::embed_signal(in.encoder, in.encoder_cfg, in.query_noisy);
      result.cohort = retrieval::top_k(in.index, query_embedding, cfg.cohort_k);
      for (const auto& entry : result.cohort.entries) {
        sampler.cohort_ids.push_back(entry.noise_id);
      }
      break;
    }
    case AblationMode::kExtr: {
      sampler.alpha = 0.0;
      sampler.pseudo_noise =
          extract_pseudo_noise(in.extractor, in.extractor_cfg, in.query_noisy);
      break;
    }
    case AblationMode::kGt: {
      sampler.alpha = 0.0;
      sampler.pseudo_noise = in.gt_noise;
      break;
    }
    case AblationMode::kAll: {
      sampler.alpha = cfg.alpha;
      sampler.pseudo_noise =
          extract_pseudo_noise(in.extractor, in.extractor_cfg, in.query_noisy);
      for (const auto& entry : in.noise_manifest) {
        sampler.cohort_ids.push_back(entry.id);
      }
      break;
    }
    case AblationMode::kRetv: {
      sampler.alpha = 1.0;
      const auto query_embedding =
          retrieval::embed_signal(in.encoder, in.encoder_cfg, in.query_noisy);
      result.cohort = retrieval::top_k(in.index, query_embedding, cfg.cohort_k);
      for (const auto& entry : result.cohort.entries) {
        sampler.cohort_ids.push_back(entry.noise_id);
      }
      break;
    }
    case AblationMode::kOpt: {
      sampler.alpha = 1.0;
      for (const auto& entry : in.oracle_noise) {
        sampler.cohort_ids.push_back(entry.id);
      }
      break;
    }
  }
  validate_sampler(sampler);
  for (const auto& id : sampler.cohort_ids) {
    if (!pool.has(id)) {
      throw std::invalid_argument("run_pipeline: cohort id missing from pool: " +
                                  id);
    }
  }

  auto adapted = adapt(in.se_init, in.se_cfg, sampler, pool, in.speech_manifest,
                       cfg.adapt, seed);
  result.adapted = std::move(adapted.params);
  result.loss = std::move(adapted.loss);
  result.pseudo_noise = sampler.pseudo_noise;
  if (!cfg.out_dir.empty()) {
    result.checkpoint_path =
        (std::filesystem::path(cfg.out_dir) / "adapted.ckpt").string();
  }

  nlohmann::json manifest;
  manifest["mode"] = std::string(mode_name(cfg.mode));
  manifest["seed"] = seed;
  manifest["alpha"] = sampler.alpha;
  manifest["cohort_k"] = cfg.cohort_k;
  manifest["adapt"] = {
      {"snr_levels", cfg.adapt.snr_levels},
      {"steps", cfg.adapt.steps},
      {"batch", cfg.adapt.batch},
      {"learning_rate", cfg.adapt.learning_rate},
      {"max_train_len", cfg.adapt.max_train_len},
  };
  manifest["inputs"] = {
      {"extractor_fingerprint", hex_u64(models::checkpoint_fingerprint(in.extractor))},
      {"encoder_fingerprint", hex_u64(models::checkpoint_fingerprint(in.encoder))},
      {"se_init_fingerprint", hex_u64(models::checkpoint_fingerprint(in.se_init))},
      {"index_fingerprint", hex_u64(in.index.encoder_fingerprint)},
      {"index_size", in.index.size()},
      {"noise_pool_size", pool.size()},
      {"speech_count", in.speech_manifest.size()},
      {"query_hash", hex_u64(hash_waveform(in.query_noisy))},
  };
  manifest["pseudo_noise_hash"] = hex_u64(hash_waveform(sampler.pseudo_noise));
  manifest["sampler_ids"] = sampler.cohort_ids;
  manifest["cohort"] = nlohmann::json::array();
  for (const auto& entry : result.cohort.entries) {
    manifest["cohort"].push_back(
        {{"id", entry.noise_id}, {"similarity", entry.similarity}});
  }
  manifest["outputs"] = {
      {"checkpoint_path", result.checkpoint_path},
      {"adapted_fingerprint",
       hex_u64(models::checkpoint_fingerprint(result.adapted))},
  };
  result.run_manifest_json = manifest.dump(2) + "\n";

  if (!cfg.out_dir.empty()) {
    const auto manifest_path =
        (std::filesystem::path(cfg.out_dir) / "run.json").string();
    try {
      std::filesystem::create_directories(cfg.out_dir);
      models::save_checkpoint(result.adapted, result.checkpoint_path);
      std::ofstream out(manifest_path, std::ios::binary);
      out << result.run_manifest_json;
      if (!out) {
        throw std::runtime_error("run_pipeline: cannot write " + manifest_path);
      }
    } catch (...) {
      // Half-written outputs are worse than none: a rerun must either find
      // a complete pair of artifacts or a clean directory.
      std::error_code ec;
      std::filesystem::remove(result.checkpoint_path, ec);
      std::filesystem::remove(manifest_path, ec);
      throw;
    }
  }
  return result;
}

}  // namespace nastar::adapt
