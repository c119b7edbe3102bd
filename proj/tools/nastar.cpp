// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command-line driver for the noise-adaptation pipeline. Each subcommand
// reads an optional experiment config JSON (--config); explicitly passed
// flags override the corresponding config fields. Outputs default under
// $NASTAR_OUT when set, else the working directory.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli_util.hpp"
#include "commands.hpp"
#include "experiment.hpp"

namespace {

using nastar::cli::ExperimentConfig;

// Flag holders shared by the subcommands. Values only apply when the flag
// was actually passed, so config-file settings survive untouched defaults.
struct Flags {
  std::string config;
  std::string out;
  std::string speech;
  std::string noise;
  std::string speech_test;
  std::string query;
  std::string index;
  std::string encoder;
  std::string extractor;
  std::string se;
  std::string gt_noise;
  std::string oracle_noise;
  std::string noise_file;
  std::string condition;
  std::string mode;
  std::vector<std::string> exclude_families;
  std::vector<double> snr;
  std::vector<std::string> runs;
  std::string ttest_ref;
  std::string noisy_name;
  std::string ptn_name;
  bool baseline = false;
  bool ttest = false;
  double alpha = 0.0;
  double lr = 0.0;
  double log_floor = 0.0;
  std::size_t k = 0;
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::size_t max_train_len = 0;
  std::uint64_t seed = 0;
  int families = 0;
  int variants = 0;
  int speech_count = 0;
  int speech_test_count = 0;
};

ExperimentConfig load_config(const Flags& f) {
  return f.config.empty() ? ExperimentConfig{}
                          : nastar::cli::load_experiment_config(f.config);
}

// Schedule overrides shared by pretrain and adapt subcommands.
template <typename Schedule>
void apply_schedule_flags(const CLI::App* cmd, const Flags& f, Schedule& s) {
  if (cmd->count("--steps")) s.steps = f.steps;
  if (cmd->count("--batch")) s.batch = f.batch;
  if (cmd->count("--lr")) s.learning_rate = f.lr;
  if (cmd->count("--snr")) s.snr_levels = f.snr;
  if (cmd->count("--max-train-len")) s.max_train_len = f.max_train_len;
  if (cmd->count("--log-floor")) s.loss.log_floor = f.log_floor;
}

std::string pick(const std::string& flag, const std::string& config_value) {
  return flag.empty() ? config_value : flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NASTAR: one-shot noise adaptation for speech enhancement"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand(
      "synth-data", "Generate the synthetic noise and speech corpus");
  synth->add_option("--out", f.out, "Corpus output directory");
  synth->add_option("--families", f.families, "Noise families to generate");
  synth->add_option("--variants", f.variants, "Variants per family");
  synth->add_option("--speech", f.speech_count, "Training utterances");
  synth->add_option("--speech-test", f.speech_test_count, "Test utterances");
  synth->add_option("--seed", f.seed, "Corpus seed");
  synth->callback([&] {
    nastar::cli::SynthDataOptions opt;
    if (synth->count("--families")) opt.corpus.families = f.families;
    if (synth->count("--variants")) opt.corpus.variants_per_family = f.variants;
    if (synth->count("--speech")) opt.corpus.speech_count = f.speech_count;
    if (synth->count("--speech-test"))
      opt.corpus.speech_test_count = f.speech_test_count;
    if (synth->count("--seed")) opt.corpus.seed = f.seed;
    opt.out_dir = f.out.empty() ? nastar::cli::default_out("corpus") : f.out;
    nastar::cli::run_synth_data(opt);
  });

  auto* pretrain = app.add_subcommand(
      "pretrain", "Train the noise extractor and the enhancer from scratch");
  pretrain->add_option("--config", f.config, "Experiment config JSON");
  pretrain->add_option("--speech", f.speech, "Training speech manifest");
  pretrain->add_option("--noise", f.noise, "Noise pool manifest");
  pretrain->add_option("--exclude-family", f.exclude_families,
                       "Drop a noise family from the pool (repeatable)");
  pretrain->add_option("--steps", f.steps, "Training steps");
  pretrain->add_option("--batch", f.batch, "Batch size");
  pretrain->add_option("--lr", f.lr, "Learning rate");
  pretrain->add_option("--snr", f.snr, "Training SNR levels in dB")
      ->delimiter(',');
  pretrain->add_option("--max-train-len", f.max_train_len,
                       "Crop length in samples (0: no crop)");
  pretrain->add_option("--log-floor", f.log_floor,
                       "Log-magnitude loss floor");
  pretrain->add_option("--seed", f.seed, "Training seed");
  pretrain->add_option("--out", f.out, "Output directory");
  pretrain->callback([&] {
    nastar::cli::PretrainOptions opt;
    opt.exp = load_config(f);
    apply_schedule_flags(pretrain, f, opt.exp.pretrain);
    opt.speech_manifest = pick(f.speech, opt.exp.paths.speech_manifest);
    opt.noise_manifest = pick(f.noise, opt.exp.paths.noise_manifest);
    opt.exclude_families = f.exclude_families;
    opt.seed = pretrain->count("--seed") ? f.seed : opt.exp.seeds.pretrain;
    opt.out_dir = f.out.empty() ? nastar::cli::default_out("pretrain") : f.out;
    nastar::cli::run_pretrain(opt);
  });

  auto* trainret = app.add_subcommand(
      "train-retrieval", "Train the contrastive retrieval encoder");
  trainret->add_option("--config", f.config, "Experiment config JSON");
  trainret->add_option("--noise", f.noise, "Noise pool manifest");
  trainret->add_option("--speech", f.speech, "Speech manifest for mixing");
  trainret->add_option("--steps", f.steps, "Training steps");
  trainret->add_option("--batch", f.batch, "Batch size");
  trainret->add_option("--lr", f.lr, "Learning rate");
  trainret->add_option("--seed", f.seed, "Training seed");
  trainret->add_option("--out", f.out, "Output directory");
  trainret->callback([&] {
    nastar::cli::TrainRetrievalOptions opt;
    opt.exp = load_config(f);
    if (trainret->count("--steps"))
      opt.exp.contrastive.steps = static_cast<long long>(f.steps);
    if (trainret->count("--batch"))
      opt.exp.contrastive.batch = static_cast<int>(f.batch);
    if (trainret->count("--lr")) opt.exp.contrastive.learning_rate = f.lr;
    opt.noise_manifest = pick(f.noise, opt.exp.paths.noise_manifest);
    opt.speech_manifest = pick(f.speech, opt.exp.paths.speech_manifest);
    opt.seed = trainret->count("--seed") ? f.seed : opt.exp.seeds.contrastive;
    opt.out_dir =
        f.out.empty() ? nastar::cli::default_out("retrieval") : f.out;
    nastar::cli::run_train_retrieval(opt);
  });

  auto* buildidx = app.add_subcommand(
      "build-index", "Embed the noise pool into a retrieval index");
  buildidx->add_option("--config", f.config, "Experiment config JSON");
  buildidx->add_option("--noise", f.noise, "Noise pool manifest");
  buildidx->add_option("--encoder", f.encoder, "Retrieval encoder checkpoint");
  buildidx->add_option("--out", f.out, "Output directory");
  buildidx->callback([&] {
    nastar::cli::BuildIndexOptions opt;
    opt.exp = load_config(f);
    opt.noise_manifest = pick(f.noise, opt.exp.paths.noise_manifest);
    opt.encoder_ckpt = f.encoder;
    opt.out_dir = f.out.empty() ? nastar::cli::default_out("index") : f.out;
    nastar::cli::run_build_index(opt);
  });

  auto* extract = app.add_subcommand(
      "extract-noise", "Estimate the noise inside a noisy utterance");
  extract->add_option("--config", f.config, "Experiment config JSON");
  extract->add_option("--query", f.query, "Noisy query WAV");
  extract->add_option("--extractor", f.extractor,
                      "Noise extractor checkpoint");
  extract->add_option("--out", f.out, "Output directory");
  extract->callback([&] {
    nastar::cli::ExtractNoiseOptions opt;
    opt.exp = load_config(f);
    opt.query_wav = f.query;
    opt.extractor_ckpt = f.extractor;
    opt.out_dir = f.out.empty() ? nastar::cli::default_out("extract") : f.out;
    nastar::cli::run_extract_noise(opt);
  });

  auto* retrieve = app.add_subcommand(
      "retrieve", "Rank the noise pool against a noisy query");
  retrieve->add_option("--config", f.config, "Experiment config JSON");
  retrieve->add_option("--query", f.query, "Noisy query WAV");
  retrieve->add_option("--index", f.index, "Noise index file");
  retrieve->add_option("--encoder", f.encoder,
                       "Retrieval encoder checkpoint");
  retrieve->add_option("--k", f.k, "Cohort size");
  retrieve->add_option("--out", f.out, "Cohort JSON output path");
  retrieve->callback([&] {
    nastar::cli::RetrieveOptions opt;
    opt.exp = load_config(f);
    opt.query_wav = f.query;
    opt.index_path = f.index;
    opt.encoder_ckpt = f.encoder;
    opt.k = retrieve->count("--k") ? f.k : 0;
    opt.out_file =
        f.out.empty() ? nastar::cli::default_out("cohort.json") : f.out;
    nastar::cli::run_retrieve(opt);
  });

  auto* adaptcmd = app.add_subcommand(
      "adapt", "One-shot adaptation of the enhancer to a noisy query");
  adaptcmd->add_option("--config", f.config, "Experiment config JSON");
  adaptcmd->add_option("--mode", f.mode,
                       "nastar | extr | gt | all | retv | opt");
  adaptcmd->add_option("--query", f.query, "Noisy query WAV");
  adaptcmd->add_option("--se", f.se, "Pretrained enhancer checkpoint");
  adaptcmd->add_option("--speech", f.speech, "Training speech manifest");
  adaptcmd->add_option("--noise", f.noise, "Noise pool manifest");
  adaptcmd->add_option("--extractor", f.extractor,
                       "Noise extractor checkpoint");
  adaptcmd->add_option("--encoder", f.encoder,
                       "Retrieval encoder checkpoint");
  adaptcmd->add_option("--index", f.index, "Noise index file");
  adaptcmd->add_option("--gt-noise", f.gt_noise,
                       "True noise WAV (mode gt)");
  adaptcmd->add_option("--oracle-noise", f.oracle_noise,
                       "Target-domain noise WAV (mode opt)");
  adaptcmd->add_option("--alpha", f.alpha, "Cohort sampling weight");
  adaptcmd->add_option("--k", f.k, "Cohort size");
  adaptcmd->add_option("--steps", f.steps, "Fine-tuning steps");
  adaptcmd->add_option("--batch", f.batch, "Batch size");
  adaptcmd->add_option("--lr", f.lr, "Learning rate");
  adaptcmd->add_option("--snr", f.snr, "Fine-tuning SNR levels in dB")
      ->delimiter(',');
  adaptcmd->add_option("--max-train-len", f.max_train_len,
                       "Crop length in samples (0: no crop)");
  adaptcmd->add_option("--log-floor", f.log_floor,
                       "Log-magnitude loss floor");
  adaptcmd->add_option("--seed", f.seed, "Fine-tuning seed");
  adaptcmd->add_option("--out", f.out, "Output directory");
  adaptcmd->callback([&] {
    nastar::cli::AdaptOptions opt;
    opt.exp = load_config(f);
    apply_schedule_flags(adaptcmd, f, opt.exp.adapt);
    if (adaptcmd->count("--mode")) opt.exp.mode = f.mode;
    if (adaptcmd->count("--alpha")) opt.exp.alpha = f.alpha;
    if (adaptcmd->count("--k")) opt.exp.cohort_k = f.k;
    opt.query_wav = f.query;
    opt.se_ckpt = f.se;
    opt.speech_manifest = pick(f.speech, opt.exp.paths.speech_manifest);
    opt.noise_manifest = pick(f.noise, opt.exp.paths.noise_manifest);
    opt.extractor_ckpt = f.extractor;
    opt.encoder_ckpt = f.encoder;
    opt.index_path = f.index;
    opt.gt_noise_wav = f.gt_noise;
    opt.oracle_noise_wav = f.oracle_noise;
    opt.seed = adaptcmd->count("--seed") ? f.seed : opt.exp.seeds.adapt;
    opt.out_dir = f.out.empty() ? nastar::cli::default_out("adapt") : f.out;
    nastar::cli::run_adapt(opt);
  });

  auto* evaluate = app.add_subcommand(
      "evaluate", "Score a model (or the unprocessed mixtures) on a test set");
  evaluate->add_option("--config", f.config, "Experiment config JSON");
  evaluate->add_option("--speech-test", f.speech_test,
                       "Test speech manifest");
  evaluate->add_option("--noise-file", f.noise_file,
                       "Noise WAV mixed into every test utterance");
  evaluate->add_option("--se", f.se, "Enhancer checkpoint to score");
  evaluate->add_flag("--baseline", f.baseline,
                     "Score the unprocessed noisy mixtures instead");
  evaluate->add_option("--condition", f.condition,
                       "Condition label for the report");
  evaluate->add_option("--snr", f.snr, "Evaluation SNR levels in dB")
      ->delimiter(',');
  evaluate->add_option("--seed", f.seed, "Mixture seed");
  evaluate->add_option("--out", f.out, "Output directory");
  evaluate->callback([&] {
    nastar::cli::EvaluateOptions opt;
    opt.exp = load_config(f);
    if (evaluate->count("--snr")) opt.exp.eval.snr_levels = f.snr;
    opt.speech_test_manifest =
        pick(f.speech_test, opt.exp.paths.speech_test_manifest);
    opt.noise_wav = f.noise_file;
    opt.se_ckpt = f.se;
    opt.baseline = f.baseline;
    opt.condition = f.condition;
    opt.seed = evaluate->count("--seed") ? f.seed : opt.exp.seeds.eval;
    opt.out_dir = f.out.empty() ? nastar::cli::default_out("eval") : f.out;
    nastar::cli::run_evaluate(opt);
  });

  auto* report = app.add_subcommand(
      "report", "Summarize evaluation runs side by side");
  report->add_option("--runs", f.runs, "Evaluation output directories")
      ->delimiter(',');
  report->add_flag("--ttest", f.ttest,
                   "Paired t-test of each condition against the reference");
  report->add_option("--ttest-ref", f.ttest_ref,
                     "Reference condition for the t-test");
  report->add_option("--noisy-name", f.noisy_name,
                     "Condition treated as the unprocessed baseline");
  report->add_option("--ptn-name", f.ptn_name,
                     "Condition treated as the pretrained baseline");
  report->add_option("--out", f.out, "Output directory (optional)");
  report->callback([&] {
    nastar::cli::ReportOptions opt;
    opt.run_dirs = f.runs;
    opt.ttest = f.ttest;
    opt.ttest_ref = f.ttest_ref;
    if (report->count("--noisy-name")) opt.noisy_name = f.noisy_name;
    if (report->count("--ptn-name")) opt.ptn_name = f.ptn_name;
    opt.out_dir = f.out;
    std::fputs(nastar::cli::run_report(opt).c_str(), stdout);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nastar: %s\n", e.what());
    return 1;
  }
  return 0;
}
