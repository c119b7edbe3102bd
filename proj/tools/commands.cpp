// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cli_util.hpp"
#include "nastar/adapt.hpp"
#include "nastar/contrastive.hpp"
#include "nastar/retrieval.hpp"
#include "nastar/rng.hpp"

namespace nastar::cli {

namespace {

using nlohmann::json;

std::string join(const std::string& dir, const std::string& leaf) {
  return (std::filesystem::path(dir) / leaf).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
  out << text;
}

// {"path": ..., "hash": ...} for any input or output file.
json file_ref(const std::string& path) {
  return {{"path", path}, {"hash", hex_u64(hash_file(path))}};
}

// run.json goes last, so its presence marks a complete run.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        json config, json inputs, json outputs) {
  const json j = {{"command", command},
                  {"config", std::move(config)},
                  {"inputs", std::move(inputs)},
                  {"outputs", std::move(outputs)}};
  write_text(join(out_dir, "run.json"), j.dump(2) + "\n");
}

std::string require(const std::string& value, const char* what) {
  if (value.empty()) {
    throw std::invalid_argument(std::string(what) + " is required");
  }
  return value;
}

std::string fingerprint_hex(const models::ParamSet& params) {
  return hex_u64(models::checkpoint_fingerprint(params));
}

}  // namespace

void run_synth_data(const SynthDataOptions& opt) {
  const std::string out = require(opt.out_dir, "synth-data: --out");
  LockFile lock(join(out, "nastar.lock"));

  const auto paths = synthdata::gen_corpus(out, opt.corpus);

  const json config = {{"families", opt.corpus.families},
                       {"variants_per_family", opt.corpus.variants_per_family},
                       {"speech_count", opt.corpus.speech_count},
                       {"speech_test_count", opt.corpus.speech_test_count},
                       {"seed", opt.corpus.seed}};
  const json outputs = {{"noise_manifest", file_ref(paths.noise_manifest)},
                        {"targets_manifest", file_ref(paths.targets_manifest)},
                        {"speech_manifest", file_ref(paths.speech_manifest)},
                        {"speech_test_manifest",
                         file_ref(paths.speech_test_manifest)}};
  write_run_manifest(out, "synth-data", config, json::object(), outputs);
}

void run_pretrain(const PretrainOptions& opt) {
  const std::string out = require(opt.out_dir, "pretrain: --out");
  const std::string speech_path =
      require(opt.speech_manifest, "pretrain: --speech");
  const std::string noise_path =
      require(opt.noise_manifest, "pretrain: --noise");
  LockFile lock(join(out, "nastar.lock"));

  const auto speech = audio::read_manifest(speech_path);
  auto noise = audio::read_manifest(noise_path);
  for (const auto& family : opt.exclude_families) {
    const auto matches = [&family](const audio::ManifestEntry& e) {
      return e.family == family;
    };
    if (std::none_of(noise.begin(), noise.end(), matches)) {
      throw std::invalid_argument("pretrain: --exclude-family '" + family +
                                  "' matched no noise entries");
    }
    noise.erase(std::remove_if(noise.begin(), noise.end(), matches),
                noise.end());
  }

  const auto result = adapt::pretrain(speech, noise, opt.exp.extractor,
                                      opt.exp.se, opt.exp.pretrain, opt.seed);

  const std::string extractor_path = join(out, "extractor.ckpt");
  const std::string se_path = join(out, "se.ckpt");
  models::save_checkpoint(result.extractor, extractor_path);
  models::save_checkpoint(result.se, se_path);

  std::string csv = "step,extractor_loss,se_loss\n";
  char line[96];
  for (std::size_t i = 0; i < result.extractor_loss.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", i,
                  result.extractor_loss[i], result.se_loss[i]);
    csv += line;
  }
  const std::string losses_path = join(out, "losses.csv");
  write_text(losses_path, csv);

  json config = experiment_to_json(opt.exp);
  config["seed"] = opt.seed;
  config["exclude_families"] = opt.exclude_families;
  const json inputs = {{"speech_manifest", file_ref(speech_path)},
                       {"noise_manifest", file_ref(noise_path)},
                       {"noise_entries_used", noise.size()}};
  json outputs = {{"extractor_ckpt", file_ref(extractor_path)},
                  {"se_ckpt", file_ref(se_path)},
                  {"losses_csv", file_ref(losses_path)}};
  outputs["extractor_ckpt"]["fingerprint"] = fingerprint_hex(result.extractor);
  outputs["se_ckpt"]["fingerprint"] = fingerprint_hex(result.se);
  write_run_manifest(out, "pretrain", config, inputs, outputs);
}

void run_train_retrieval(const TrainRetrievalOptions& opt) {
  const std::string out = require(opt.out_dir, "train-retrieval: --out");
  const std::string noise_path =
      require(opt.noise_manifest, "train-retrieval: --noise");
  const std::string speech_path =
      require(opt.speech_manifest, "train-retrieval: --speech");
  LockFile lock(join(out, "nastar.lock"));

  const auto noise = audio::read_manifest(noise_path);
  const auto speech = audio::read_manifest(speech_path);
  const auto result = contrastive::train_retrieval(
      noise, speech, opt.exp.encoder, opt.exp.contrastive, opt.seed);

  const std::string encoder_path = join(out, "encoder.ckpt");
  models::save_checkpoint(result.params, encoder_path);

  std::string csv = "step,loss,queue_size\n";
  char line[96];
  for (const auto& entry : result.log) {
    std::snprintf(line, sizeof(line), "%lld,%.17g,%zu\n", entry.step,
                  entry.loss, entry.queue_size);
    csv += line;
  }
  const std::string losses_path = join(out, "losses.csv");
  write_text(losses_path, csv);

  json config = experiment_to_json(opt.exp);
  config["seed"] = opt.seed;
  const json inputs = {{"noise_manifest", file_ref(noise_path)},
                       {"speech_manifest", file_ref(speech_path)}};
  json outputs = {{"encoder_ckpt", file_ref(encoder_path)},
                  {"losses_csv", file_ref(losses_path)}};
  outputs["encoder_ckpt"]["fingerprint"] = fingerprint_hex(result.params);
  write_run_manifest(out, "train-retrieval", config, inputs, outputs);
}

void run_build_index(const BuildIndexOptions& opt) {
  const std::string out = require(opt.out_dir, "build-index: --out");
  const std::string noise_path =
      require(opt.noise_manifest, "build-index: --noise");
  const std::string encoder_path =
      require(opt.encoder_ckpt, "build-index: --encoder");
  LockFile lock(join(out, "nastar.lock"));

  const auto noise = audio::read_manifest(noise_path);
  const auto encoder = models::load_checkpoint(encoder_path);
  const auto index = retrieval::build_index(noise, encoder, opt.exp.encoder);

  const std::string index_path = join(out, "noise.idx");
  retrieval::save_index(index, index_path);

  json config = experiment_to_json(opt.exp);
  json inputs = {{"noise_manifest", file_ref(noise_path)},
                 {"encoder_ckpt", file_ref(encoder_path)}};
  inputs["encoder_ckpt"]["fingerprint"] = fingerprint_hex(encoder);
  json outputs = {{"index", file_ref(index_path)}};
  outputs["index"]["rows"] = index.size();
  outputs["index"]["dim"] = index.dim();
  outputs["index"]["encoder_fingerprint"] = hex_u64(index.encoder_fingerprint);
  write_run_manifest(out, "build-index", config, inputs, outputs);
}

void run_extract_noise(const ExtractNoiseOptions& opt) {
  const std::string out = require(opt.out_dir, "extract-noise: --out");
  const std::string query_path =
      require(opt.query_wav, "extract-noise: --query");
  const std::string extractor_path =
      require(opt.extractor_ckpt, "extract-noise: --extractor");
  LockFile lock(join(out, "nastar.lock"));

  const auto query = audio::load_wav(query_path);
  const auto extractor = models::load_checkpoint(extractor_path);
  const auto pseudo =
      adapt::extract_pseudo_noise(extractor, opt.exp.extractor, query);

  const std::string pseudo_path = join(out, "pseudo_noise.wav");
  audio::save_wav(pseudo, pseudo_path);

  json config = experiment_to_json(opt.exp);
  json inputs = {{"query", file_ref(query_path)},
                 {"extractor_ckpt", file_ref(extractor_path)}};
  inputs["extractor_ckpt"]["fingerprint"] = fingerprint_hex(extractor);
  const json outputs = {{"pseudo_noise", file_ref(pseudo_path)}};
  write_run_manifest(out, "extract-noise", config, inputs, outputs);
}

void run_retrieve(const RetrieveOptions& opt) {
  const std::string out = require(opt.out_file, "retrieve: --out");
  const std::string query_path = require(opt.query_wav, "retrieve: --query");
  const std::string index_path = require(opt.index_path, "retrieve: --index");
  const std::string encoder_path =
      require(opt.encoder_ckpt, "retrieve: --encoder");
  LockFile lock(out + ".lock");

  const auto index = retrieval::load_index(index_path);
  const auto encoder = models::load_checkpoint(encoder_path);
  if (models::checkpoint_fingerprint(encoder) != index.encoder_fingerprint) {
    throw std::runtime_error(
        "retrieve: index was built with a different encoder");
  }

  const std::size_t k = opt.k != 0 ? opt.k : opt.exp.cohort_k;
  const auto query = audio::load_wav(query_path);
  const auto embedding =
      retrieval::embed_signal(encoder, opt.exp.encoder, query);
  const auto cohort = retrieval::top_k(index, embedding, k);
  retrieval::save_cohort(cohort, out);

  json config = experiment_to_json(opt.exp);
  config["k"] = k;
  json inputs = {{"query", file_ref(query_path)},
                 {"index", file_ref(index_path)},
                 {"encoder_ckpt", file_ref(encoder_path)}};
  inputs["encoder_ckpt"]["fingerprint"] = fingerprint_hex(encoder);
  const json outputs = {{"cohort", file_ref(out)}};
  const json manifest = {{"command", "retrieve"},
                         {"config", config},
                         {"inputs", inputs},
                         {"outputs", outputs}};
  write_text(out + ".run.json", manifest.dump(2) + "\n");
}

void run_adapt(const AdaptOptions& opt) {
  const std::string out = require(opt.out_dir, "adapt: --out");
  LockFile lock(join(out, "nastar.lock"));

  const auto mode = adapt::mode_from_name(opt.exp.mode);
  using adapt::AblationMode;
  const bool extracts = mode == AblationMode::kNastar ||
                        mode == AblationMode::kExtr ||
                        mode == AblationMode::kAll;
  const bool retrieves =
      mode == AblationMode::kNastar || mode == AblationMode::kRetv;

  adapt::PipelineInputs in;
  in.query_noisy = audio::load_wav(require(opt.query_wav, "adapt: --query"));
  in.se_init =
      models::load_checkpoint(require(opt.se_ckpt, "adapt: --se"));
  in.se_cfg = opt.exp.se;
  in.speech_manifest =
      audio::read_manifest(require(opt.speech_manifest, "adapt: --speech"));
  in.noise_manifest =
      audio::read_manifest(require(opt.noise_manifest, "adapt: --noise"));

  if (extracts) {
    in.extractor = models::load_checkpoint(
        require(opt.extractor_ckpt, "adapt: --extractor"));
    in.extractor_cfg = opt.exp.extractor;
  }
  if (retrieves) {
    in.encoder = models::load_checkpoint(
        require(opt.encoder_ckpt, "adapt: --encoder"));
    in.encoder_cfg = opt.exp.encoder;
    in.index =
        retrieval::load_index(require(opt.index_path, "adapt: --index"));
  }
  if (mode == AblationMode::kGt) {
    in.gt_noise =
        audio::load_wav(require(opt.gt_noise_wav, "adapt: --gt-noise"));
  }
  if (mode == AblationMode::kOpt) {
    const std::string path =
        require(opt.oracle_noise_wav, "adapt: --oracle-noise");
    const auto wave = audio::load_wav(path);
    in.oracle_noise.push_back(
        {"oracle", path, "noise", wave.duration_s(), ""});
  }

  adapt::PipelineConfig cfg;
  cfg.mode = mode;
  cfg.cohort_k = opt.exp.cohort_k;
  cfg.alpha = opt.exp.alpha;
  cfg.adapt = opt.exp.adapt;
  cfg.out_dir = out;
  adapt::run_pipeline(in, cfg, opt.seed);
}

std::vector<metrics::EvalItem> build_eval_set(
    const std::vector<audio::ManifestEntry>& speech_test,
    const audio::Waveform& noise, const std::vector<double>& snr_levels,
    const std::string& condition, std::uint64_t seed) {
  if (speech_test.empty()) {
    throw std::invalid_argument("evaluate: empty test-speech manifest");
  }
  if (snr_levels.empty()) {
    throw std::invalid_argument("evaluate: snr_levels must be non-empty");
  }
  Rng root(seed);
  std::vector<metrics::EvalItem> items;
  items.reserve(speech_test.size() * snr_levels.size());
  for (std::size_t i = 0; i < speech_test.size(); ++i) {
    const auto clean = audio::load_wav(speech_test[i].path);
    for (std::size_t j = 0; j < snr_levels.size(); ++j) {
      Rng rng = root.fork(i * snr_levels.size() + j);
      auto mix = audio::mix_at_snr(clean, noise, snr_levels[j], rng);
      metrics::EvalItem item;
      item.noisy = std::move(mix.noisy);
      item.clean = clean;
      item.condition = condition;
      item.snr_db = snr_levels[j];
      items.push_back(std::move(item));
    }
  }
  return items;
}

void run_evaluate(const EvaluateOptions& opt) {
  const std::string out = require(opt.out_dir, "evaluate: --out");
  const std::string speech_path =
      require(opt.speech_test_manifest, "evaluate: --speech-test");
  const std::string noise_path = require(opt.noise_wav, "evaluate: --noise-file");
  const std::string condition = require(opt.condition, "evaluate: --condition");
  if (opt.baseline == !opt.se_ckpt.empty()) {
    throw std::invalid_argument(
        "evaluate: pass exactly one of --se and --baseline");
  }
  LockFile lock(join(out, "nastar.lock"));

  const auto speech_test = audio::read_manifest(speech_path);
  const auto noise = audio::load_wav(noise_path);
  const auto testset = build_eval_set(speech_test, noise,
                                      opt.exp.eval.snr_levels, condition,
                                      opt.seed);

  metrics::MetricReport report;
  std::string se_fingerprint;
  if (opt.baseline) {
    report = metrics::evaluate(
        [](const audio::Waveform& w) { return w; }, testset);
  } else {
    const auto se = models::load_checkpoint(opt.se_ckpt);
    se_fingerprint = fingerprint_hex(se);
    report = metrics::evaluate(se, opt.exp.se, testset);
  }

  const std::string json_path = join(out, "report.json");
  const std::string csv_path = join(out, "report.csv");
  const std::string table_path = join(out, "report.txt");
  write_text(json_path, metrics::report_to_json(report));
  write_text(csv_path, metrics::report_to_csv(report));
  write_text(table_path, metrics::report_to_table(report));

  json config = experiment_to_json(opt.exp);
  config["seed"] = opt.seed;
  config["condition"] = condition;
  config["baseline"] = opt.baseline;
  json inputs = {{"speech_test_manifest", file_ref(speech_path)},
                 {"noise", file_ref(noise_path)}};
  if (!opt.baseline) {
    inputs["se_ckpt"] = file_ref(opt.se_ckpt);
    inputs["se_ckpt"]["fingerprint"] = se_fingerprint;
  }
  const json outputs = {{"report_json", file_ref(json_path)},
                        {"report_csv", file_ref(csv_path)},
                        {"report_table", file_ref(table_path)},
                        {"mixtures", testset.size()}};
  write_run_manifest(out, "evaluate", config, inputs, outputs);
}

namespace {

struct ConditionScores {
  std::string name;
  std::vector<metrics::UtteranceScore> utterances;
  double mean_si_sdr = 0.0;
  double mean_stoi = 0.0;
};

// Group means over (snr) within one condition, in utterance order of first
// appearance (the evaluation grid order).
struct SnrGroup {
  double snr_db = 0.0;
  std::size_t count = 0;
  double si_sdr_db = 0.0;
  double stoi = 0.0;
};

std::vector<SnrGroup> snr_groups(const ConditionScores& c) {
  std::vector<SnrGroup> groups;
  for (const auto& u : c.utterances) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const SnrGroup& g) {
      return g.snr_db == u.snr_db;
    });
    if (it == groups.end()) {
      groups.push_back({u.snr_db, 0, 0.0, 0.0});
      it = groups.end() - 1;
    }
    it->count += 1;
    it->si_sdr_db += u.si_sdr_db;
    it->stoi += u.stoi;
  }
  for (auto& g : groups) {
    g.si_sdr_db /= static_cast<double>(g.count);
    g.stoi /= static_cast<double>(g.count);
  }
  return groups;
}

}  // namespace

std::string run_report(const ReportOptions& opt) {
  if (opt.run_dirs.empty()) {
    throw std::invalid_argument("report: --runs is required");
  }

  // One ConditionScores per condition, in --runs order. A condition may not
  // span runs: the same label twice almost always means two different
  // models were evaluated under one name.
  std::vector<ConditionScores> conditions;
  std::map<std::string, std::string> condition_origin;
  json inputs = json::object();
  for (const auto& dir : opt.run_dirs) {
    const std::string path = join(dir, "report.json");
    const std::string text = slurp(path);
    inputs[dir] = {{"path", path},
                   {"hash", hex_u64(hash_bytes(text.data(), text.size()))}};
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw std::runtime_error("report: " + path + ": " + e.what());
    }
    for (const auto& u : j.at("utterances")) {
      const std::string name = u.at("condition").get<std::string>();
      const auto origin = condition_origin.emplace(name, dir);
      if (!origin.second && origin.first->second != dir) {
        throw std::runtime_error("report: condition '" + name +
                                 "' appears in both " + origin.first->second +
                                 " and " + dir);
      }
      auto it = std::find_if(
          conditions.begin(), conditions.end(),
          [&](const ConditionScores& c) { return c.name == name; });
      if (it == conditions.end()) {
        conditions.push_back({name, {}, 0.0, 0.0});
        it = conditions.end() - 1;
      }
      metrics::UtteranceScore score;
      score.condition = name;
      score.snr_db = u.at("snr_db").get<double>();
      score.si_sdr_db = u.at("si_sdr_db").get<double>();
      score.stoi = u.at("stoi").get<double>();
      it->utterances.push_back(score);
    }
  }
  if (conditions.empty()) {
    throw std::runtime_error("report: no utterance scores in the given runs");
  }

  // Alignment: every condition must score the same mixtures in the same
  // order, or per-utterance pairing below would compare unrelated signals.
  const auto grid_of = [](const ConditionScores& c) {
    std::vector<double> grid;
    for (const auto& u : c.utterances) grid.push_back(u.snr_db);
    return grid;
  };
  const auto reference_grid = grid_of(conditions.front());
  for (const auto& c : conditions) {
    if (grid_of(c) != reference_grid) {
      throw std::runtime_error("report: condition '" + c.name +
                               "' does not align with '" +
                               conditions.front().name +
                               "' (different evaluation grids)");
    }
  }

  for (auto& c : conditions) {
    double si = 0.0;
    double st = 0.0;
    for (const auto& u : c.utterances) {
      si += u.si_sdr_db;
      st += u.stoi;
    }
    c.mean_si_sdr = si / static_cast<double>(c.utterances.size());
    c.mean_stoi = st / static_cast<double>(c.utterances.size());
  }

  const auto find_condition =
      [&conditions](const std::string& name) -> const ConditionScores* {
    const auto it = std::find_if(
        conditions.begin(), conditions.end(),
        [&](const ConditionScores& c) { return c.name == name; });
    return it == conditions.end() ? nullptr : &*it;
  };

  const ConditionScores* noisy = find_condition(opt.noisy_name);
  const ConditionScores* ptn = find_condition(opt.ptn_name);
  const bool rates = noisy != nullptr && ptn != nullptr;

  json report;
  report["conditions"] = json::array();
  std::string table;
  char line[160];

  std::snprintf(line, sizeof(line), "%-16s %6s %10s %8s", "condition", "n",
                "si_sdr_db", "stoi");
  table += line;
  if (rates) {
    std::snprintf(line, sizeof(line), " %12s %12s", "rate_si_sdr",
                  "rate_stoi");
    table += line;
  }
  table += "\n";

  for (const auto& c : conditions) {
    json jc = {{"name", c.name},
               {"count", c.utterances.size()},
               {"mean_si_sdr_db", c.mean_si_sdr},
               {"mean_stoi", c.mean_stoi}};
    std::snprintf(line, sizeof(line), "%-16s %6zu %10.4f %8.4f",
                  c.name.c_str(), c.utterances.size(), c.mean_si_sdr,
                  c.mean_stoi);
    table += line;
    if (rates && c.name != opt.noisy_name && c.name != opt.ptn_name) {
      const double rate_si = metrics::relative_improvement_rate(
          c.mean_si_sdr, noisy->mean_si_sdr, ptn->mean_si_sdr);
      const double rate_st = metrics::relative_improvement_rate(
          c.mean_stoi, noisy->mean_stoi, ptn->mean_stoi);
      jc["rate_si_sdr"] = rate_si;
      jc["rate_stoi"] = rate_st;
      std::snprintf(line, sizeof(line), " %12.5f %12.5f", rate_si, rate_st);
      table += line;
    }
    table += "\n";

    jc["groups"] = json::array();
    for (const auto& g : snr_groups(c)) {
      jc["groups"].push_back({{"snr_db", g.snr_db},
                              {"count", g.count},
                              {"si_sdr_db", g.si_sdr_db},
                              {"stoi", g.stoi}});
    }
    report["conditions"].push_back(std::move(jc));
  }

  table += "\n";
  std::snprintf(line, sizeof(line), "%-16s %8s %6s %10s %8s\n", "condition",
                "snr_db", "n", "si_sdr_db", "stoi");
  table += line;
  for (const auto& c : conditions) {
    for (const auto& g : snr_groups(c)) {
      std::snprintf(line, sizeof(line), "%-16s %8.1f %6zu %10.4f %8.4f\n",
                    c.name.c_str(), g.snr_db, g.count, g.si_sdr_db, g.stoi);
      table += line;
    }
  }

  if (opt.ttest) {
    std::string ref = opt.ttest_ref;
    if (ref.empty()) {
      ref = ptn != nullptr ? opt.ptn_name : conditions.front().name;
    }
    const ConditionScores* ref_cond = find_condition(ref);
    if (ref_cond == nullptr) {
      throw std::invalid_argument("report: t-test reference '" + ref +
                                  "' is not among the conditions");
    }
    report["ttest"] = {{"reference", ref}, {"rows", json::array()}};
    table += "\npaired t-test vs " + ref + "\n";
    std::snprintf(line, sizeof(line), "%-16s %8s %10s %12s %6s\n",
                  "condition", "metric", "t", "p", "n");
    table += line;
    for (const auto& c : conditions) {
      if (c.name == ref) {
        continue;
      }
      const std::size_t n = c.utterances.size();
      for (const char* metric : {"si_sdr", "stoi"}) {
        metrics::PairedScores pair;
        for (std::size_t i = 0; i < n; ++i) {
          const bool si = std::string(metric) == "si_sdr";
          pair.a.push_back(si ? c.utterances[i].si_sdr_db
                              : c.utterances[i].stoi);
          pair.b.push_back(si ? ref_cond->utterances[i].si_sdr_db
                              : ref_cond->utterances[i].stoi);
        }
        json row = {{"condition", c.name}, {"metric", metric}, {"n", n}};
        try {
          const auto tt = metrics::paired_t_test(pair);
          row["t"] = tt.t;
          row["p"] = tt.p_two_sided;
          std::snprintf(line, sizeof(line), "%-16s %8s %10.4f %12.4e %6zu\n",
                        c.name.c_str(), metric, tt.t, tt.p_two_sided, n);
        } catch (const std::invalid_argument& e) {
          row["error"] = e.what();
          std::snprintf(line, sizeof(line), "%-16s %8s %10s %12s %6zu\n",
                        c.name.c_str(), metric, "-", "degenerate", n);
        }
        table += line;
        report["ttest"]["rows"].push_back(std::move(row));
      }
    }
  }

  if (!opt.out_dir.empty()) {
    LockFile lock(join(opt.out_dir, "nastar.lock"));
    const std::string json_path = join(opt.out_dir, "report.json");
    const std::string table_path = join(opt.out_dir, "report.txt");
    write_text(json_path, report.dump(2) + "\n");
    write_text(table_path, table);
    const json config = {{"runs", opt.run_dirs},
                         {"ttest", opt.ttest},
                         {"noisy_name", opt.noisy_name},
                         {"ptn_name", opt.ptn_name}};
    const json outputs = {{"report_json", file_ref(json_path)},
                          {"report_table", file_ref(table_path)}};
    write_run_manifest(opt.out_dir, "report", config, inputs, outputs);
  }
  return table;
}

}  // namespace nastar::cli
