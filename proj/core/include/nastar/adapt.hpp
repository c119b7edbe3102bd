// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/dsp.hpp"
#include "nastar/models.hpp"
#include "nastar/retrieval.hpp"
#include "nastar/rng.hpp"

namespace nastar::adapt {

// Adaptation-time noise source: one fixed pseudo-noise waveform plus a
// cohort of pool noise ids. A draw returns the pseudo-noise with
// probability 1 - alpha and a uniformly chosen cohort id otherwise, so
// each cohort id carries probability alpha / cohort size.
struct CollaborativeSampler {
  audio::Waveform pseudo_noise;
  std::vector<std::string> cohort_ids;
  double alpha = 0.9;
};

// Rejects alpha outside [0, 1], an empty pseudo-noise when alpha < 1, and
// an empty cohort when alpha > 0.
void validate_sampler(const CollaborativeSampler& s);

// Lazily loaded id -> waveform view of a noise manifest. Entries load from
// disk on first access and stay cached, so repeated draws of one id return
// the same object. Paths are used as stored; callers resolve manifest-
// relative paths before constructing the pool.
class NoisePool {
 public:
  explicit NoisePool(const std::vector<audio::ManifestEntry>& entries);

  const audio::Waveform& get(const std::string& id) const;
  bool has(const std::string& id) const;
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }

 private:
  std::vector<std::string> ids_;
  std::map<std::string, std::string> paths_;
  mutable std::map<std::string, audio::Waveform> cache_;
};

// Draws one noise source from the sampler. Consumes one uniform for the
// branch decision and, on the cohort branch, one more for the id choice.
// Pool files load lazily, so an unreadable cohort file surfaces here.
const audio::Waveform& sample_noise(const CollaborativeSampler& s,
                                    const NoisePool& pool, Rng& rng);

// One synthetic training mixture. noisy comes from mixing the (possibly
// cropped) speech with fitted noise at snr_db; scaled_noise is the same
// fitted segment times the mixing gain, which makes it the extraction
// target while speech is the enhancement target.
struct MixedExample {
  audio::Waveform noisy;
  audio::Waveform speech;
  audio::Waveform scaled_noise;
  double snr_db = 0.0;
};

// Crops speech to max_train_len samples at a uniform offset when it is
// longer (no draw otherwise; max_train_len 0 never crops), then fits the
// noise to the crop length and mixes at snr_db. Draw order: crop offset,
// then the fit offset consumed by the mixer.
MixedExample mix_training_example(const audio::Waveform& speech,
                                  const audio::Waveform& noise, double snr_db,
                                  std::size_t max_train_len, Rng& rng);

// Loss settings for training runs. The raised log floor caps the
// log-magnitude gradient, which scales with 1/(|X| + floor), on near-silent
// spectral bins; at the analysis default of 1e-7 a single unlucky batch can
// derail an otherwise converging run.
dsp::MultiResConfig default_train_loss();

// Schedule for training the extractor and the enhancer from scratch on
// synthetic mixtures. Defaults are the desk-scale run configuration;
// max_train_len 0 disables cropping.
struct PretrainConfig {
  std::vector<double> snr_levels{-5.0, 0.0, 5.0, 10.0};
  std::size_t steps = 4000;
  std::size_t batch = 8;
  double learning_rate = 1e-3;
  std::size_t max_train_len = 2048;
  dsp::MultiResConfig loss = default_train_loss();
};

// Schedule for one-shot fine-tuning. The loss is identical to the
// pretraining objective; only the noise source and SNR grid change.
struct AdaptConfig {
  std::vector<double> snr_levels{-5.0, 0.0, 5.0, 10.0};
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double learning_rate = 1e-3;
  std::size_t max_train_len = 2048;
  dsp::MultiResConfig loss = default_train_loss();
};

struct PretrainResult {
  models::ParamSet extractor;
  models::ParamSet se;
  std::vector<double> extractor_loss;
  std::vector<double> se_loss;
};

// Trains the noise extractor and the enhancer on mixtures of the given
// speech and noise corpora. Per step, each of the cfg.batch examples draws
// a speech id, a noise id and an SNR level, then the offsets inside
// mix_training_example; the same drawn batch feeds both branches, with the
// scaled noise as the extractor target and the clean crop as the enhancer
// target. Parameters initialize from the first two draws of Rng(seed)
// (extractor first) and step s consumes the Rng(seed).fork(s) stream, so
// results are bit-reproducible for a given seed.
PretrainResult pretrain(const std::vector<audio::ManifestEntry>& speech_manifest,
                        const std::vector<audio::ManifestEntry>& noise_manifest,
                        const models::ExtractorConfig& extractor_cfg,
                        const models::ExtractorConfig& se_cfg,
                        const PretrainConfig& cfg, std::uint64_t seed);

struct AdaptResult {
  models::ParamSet params;
  std::vector<double> loss;
};

// Fine-tunes enhancer parameters with noise drawn from the collaborative
// sampler. The loop shape, example draw order and objective match
// pretrain's enhancer branch; steps = 0 returns se_init unchanged. Step s
// consumes the Rng(seed).fork(s) stream.
AdaptResult adapt(const models::ParamSet& se_init,
                  const models::ExtractorConfig& se_cfg,
                  const CollaborativeSampler& sampler, const NoisePool& pool,
                  const std::vector<audio::ManifestEntry>& speech_manifest,
                  const AdaptConfig& cfg, std::uint64_t seed);

// Runs the trained extractor on a noisy query and returns its noise
// estimate, the sampler's pseudo-noise. Output length equals input length.
audio::Waveform extract_pseudo_noise(const models::ParamSet& extractor,
                                     const models::ExtractorConfig& cfg,
                                     const audio::Waveform& query_noisy);

// Adaptation data recipes. Each value selects what the sampler draws from:
//   kNastar  pseudo-noise plus retrieved cohort (alpha as configured)
//   kExtr    pseudo-noise only (alpha forced to 0)
//   kGt      true target noise only, no extraction (alpha forced to 0)
//   kAll     pseudo-noise plus the entire noise pool as cohort
//   kRetv    retrieved cohort only (alpha forced to 1)
//   kOpt     oracle target-noise recordings only (alpha forced to 1)
enum class AblationMode { kNastar, kExtr, kGt, kAll, kRetv, kOpt };

// Lower-case stable names used by the CLI and the run manifest.
std::string_view mode_name(AblationMode m);
AblationMode mode_from_name(std::string_view name);

// Everything a one-shot adaptation run consumes. gt_noise is read only in
// kGt mode and oracle_noise only in kOpt mode; both may be empty otherwise.
// Manifest paths must be loadable as stored.
struct PipelineInputs {
  audio::Waveform query_noisy;
  models::ParamSet extractor;
  models::ExtractorConfig extractor_cfg;
  models::ParamSet encoder;
  models::EncoderConfig encoder_cfg;
  retrieval::EmbeddingIndex index;
  std::vector<audio::ManifestEntry> noise_manifest;
  std::vector<audio::ManifestEntry> speech_manifest;
  audio::Waveform gt_noise;
  std::vector<audio::ManifestEntry> oracle_noise;
  models::ParamSet se_init;
  models::ExtractorConfig se_cfg;
};

// cohort_k applies to the retrieval-based modes and alpha to the modes that
// mix pseudo-noise with a cohort; the other modes force alpha as documented
// on AblationMode. An empty out_dir keeps all results in memory; otherwise
// the adapted checkpoint (adapted.ckpt) and run manifest (run.json) are
// written there, and a failure anywhere leaves no files behind.
struct PipelineConfig {
  AblationMode mode = AblationMode::kNastar;
  std::size_t cohort_k = 250;
  double alpha = 0.9;
  AdaptConfig adapt;
  std::string out_dir;
};

// run_manifest_json records the seed, a config echo, fingerprints of every
// input parameter set, hashes of the query and the sampler's pseudo-noise,
// the sampler id listing, the retrieved cohort and the output checkpoint.
// cohort is empty for modes that do not retrieve.
struct PipelineResult {
  models::ParamSet adapted;
  retrieval::RelevantCohort cohort;
  audio::Waveform pseudo_noise;
  std::vector<double> loss;
  std::string run_manifest_json;
  std::string checkpoint_path;
};

// One-shot adaptation: estimate pseudo-noise from the query, embed the
// query and retrieve the cohort, assemble the mode's sampler, fine-tune the
// enhancer. Validation (cohort_k within the index, encoder fingerprint
// matching the index, mode-specific inputs present) happens before any
// training starts. Reruns with identical inputs and seed produce
// byte-identical manifests and checkpoints.
PipelineResult run_pipeline(const PipelineInputs& in, const PipelineConfig& cfg,
                            std::uint64_t seed);

// FNV-1a over the sample-rate tag and the raw sample bits; stable across
// runs and platforms for identical contents.
std::uint64_t hash_waveform(const audio::Waveform& w);

}  // namespace nastar::adapt
