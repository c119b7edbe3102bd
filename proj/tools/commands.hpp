// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "experiment.hpp"
#include "nastar/audio.hpp"
#include "nastar/metrics.hpp"
#include "nastar/synthdata.hpp"

namespace nastar::cli {

// Subcommand handlers. Each validates its inputs, holds a lock on the
// output location for the duration of the run, and finishes by writing
// run.json (config echo, input hashes, output hashes, seed); a missing
// run.json therefore marks an incomplete run. Handlers throw on any
// contract violation and never modify their inputs.

struct SynthDataOptions {
  synthdata::CorpusConfig corpus;
  std::string out_dir;
};
// Writes the synthetic corpus plus run.json.
void run_synth_data(const SynthDataOptions& opt);

struct PretrainOptions {
  ExperimentConfig exp;
  std::string speech_manifest;
  std::string noise_manifest;
  std::vector<std::string> exclude_families;  // each must match an entry
  std::uint64_t seed = 0;
  std::string out_dir;
};
// Writes extractor.ckpt, se.ckpt, losses.csv, run.json.
void run_pretrain(const PretrainOptions& opt);

struct TrainRetrievalOptions {
  ExperimentConfig exp;
  std::string noise_manifest;
  std::string speech_manifest;
  std::uint64_t seed = 0;
  std::string out_dir;
};
// Writes encoder.ckpt, losses.csv, run.json.
void run_train_retrieval(const TrainRetrievalOptions& opt);

struct BuildIndexOptions {
  ExperimentConfig exp;
  std::string noise_manifest;
  std::string encoder_ckpt;
  std::string out_dir;
};
// Writes noise.idx, run.json.
void run_build_index(const BuildIndexOptions& opt);

struct ExtractNoiseOptions {
  ExperimentConfig exp;
  std::string query_wav;
  std::string extractor_ckpt;
  std::string out_dir;
};
// Writes pseudo_noise.wav (16-bit PCM, so samples are quantized), run.json.
void run_extract_noise(const ExtractNoiseOptions& opt);

struct RetrieveOptions {
  ExperimentConfig exp;
  std::string query_wav;
  std::string index_path;
  std::string encoder_ckpt;
  std::size_t k = 0;  // 0: use exp.cohort_k
  std::string out_file;
};
// Writes the ranked cohort JSON to out_file plus <out_file>.run.json.
// Rejects an index whose fingerprint does not match the encoder.
void run_retrieve(const RetrieveOptions& opt);

struct AdaptOptions {
  ExperimentConfig exp;  // mode, alpha, cohort_k and the adapt schedule
  std::string query_wav;
  std::string se_ckpt;
  std::string speech_manifest;
  std::string noise_manifest;
  std::string extractor_ckpt;    // modes that extract pseudo-noise
  std::string encoder_ckpt;      // modes that retrieve
  std::string index_path;        // modes that retrieve
  std::string gt_noise_wav;      // mode gt
  std::string oracle_noise_wav;  // mode opt
  std::uint64_t seed = 0;
  std::string out_dir;
};
// Runs the one-shot pipeline; the pipeline itself writes adapted.ckpt and
// run.json into out_dir.
void run_adapt(const AdaptOptions& opt);

// Deterministic evaluation mixtures: every test utterance crossed with
// every SNR level, noise fitted per mixture. Item for utterance i at SNR
// index j draws from Rng(seed).fork(i * snr_levels.size() + j), so the same
// (manifest, noise, grid, seed) always yields bitwise-equal mixtures no
// matter which model is under test.
std::vector<metrics::EvalItem> build_eval_set(
    const std::vector<audio::ManifestEntry>& speech_test,
    const audio::Waveform& noise, const std::vector<double>& snr_levels,
    const std::string& condition, std::uint64_t seed);

struct EvaluateOptions {
  ExperimentConfig exp;
  std::string speech_test_manifest;
  std::string noise_wav;
  std::string se_ckpt;    // exactly one of se_ckpt / baseline
  bool baseline = false;  // score the unprocessed mixtures
  std::string condition;  // group label, required
  std::uint64_t seed = 0;
  std::string out_dir;
};
// Writes report.json, report.csv, report.txt, run.json.
void run_evaluate(const EvaluateOptions& opt);

struct ReportOptions {
  std::vector<std::string> run_dirs;  // evaluate outputs, one condition each
  bool ttest = false;
  std::string ttest_ref;  // default: ptn_name when present, else first
  std::string noisy_name = "NOISY";
  std::string ptn_name = "PTN";
  std::string out_dir;  // optional; table also goes to the return value
};
// Cross-condition summary: per-condition means, relative improvement rates
// against the named baselines when both are present, per-group table, and
// an optional paired t-test block. All conditions must score the same
// mixture grid. Returns the rendered table; writes report.json and
// report.txt plus run.json when out_dir is set.
std::string run_report(const ReportOptions& opt);

}  // namespace nastar::cli
