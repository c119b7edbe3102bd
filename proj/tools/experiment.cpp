// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nastar::cli {

namespace {

using nlohmann::json;

// Tracks which keys of one JSON object were consumed, so anything left over
// can be reported as unknown instead of silently ignored.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) {
      throw std::invalid_argument("experiment config: " + where_ +
                                  " must be an object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) {
      return;
    }
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("experiment config: " + where_ + "." + key +
                                  ": " + e.what());
    }
  }

  bool take(const char* key, json& out) {
    if (!j_.contains(key)) {
      return false;
    }
    seen_.insert(key);
    out = j_.at(key);
    return true;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!seen_.count(key)) {
        throw std::invalid_argument("experiment config: unknown key " +
                                    where_ + "." + key);
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void parse_net(const json& j, const std::string& where,
               models::ExtractorConfig& out) {
  Fields f(j, where);
  f.get("depth", out.depth);
  f.get("base_channels", out.base_channels);
  f.get("kernel", out.kernel);
  f.get("stride", out.stride);
  f.finish();
}

void parse_encoder(const json& j, models::EncoderConfig& out) {
  Fields f(j, "encoder");
  f.get("recurrent_layers", out.recurrent_layers);
  f.get("hidden", out.hidden);
  f.get("embed_dim", out.embed_dim);
  f.get("feature_fft", out.feature_fft);
  f.get("feature_hop", out.feature_hop);
  f.get("log_floor", out.log_floor);
  f.finish();
}

void parse_loss(const json& j, const std::string& where,
                dsp::MultiResConfig& out) {
  Fields f(j, where);
  json res;
  if (f.take("resolutions", res)) {
    std::vector<std::vector<std::size_t>> pairs;
    try {
      pairs = res.get<std::vector<std::vector<std::size_t>>>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("experiment config: " + where +
                                  ".resolutions: " + e.what());
    }
    out.resolutions.clear();
    for (const auto& p : pairs) {
      if (p.size() != 2) {
        throw std::invalid_argument("experiment config: " + where +
                                    ".resolutions entries must be [fft, hop]");
      }
      out.resolutions.push_back({p[0], p[1]});
    }
  }
  f.get("log_floor", out.log_floor);
  f.finish();
}

template <typename Schedule>
void parse_schedule(const json& j, const std::string& where, Schedule& out) {
  Fields f(j, where);
  f.get("snr_levels", out.snr_levels);
  f.get("steps", out.steps);
  f.get("batch", out.batch);
  f.get("learning_rate", out.learning_rate);
  f.get("max_train_len", out.max_train_len);
  json loss;
  if (f.take("loss", loss)) {
    parse_loss(loss, where + ".loss", out.loss);
  }
  f.finish();
}

void parse_contrastive(const json& j, contrastive::ContrastiveConfig& out) {
  Fields f(j, "contrastive");
  f.get("temperature", out.temperature);
  f.get("momentum", out.momentum);
  f.get("queue_capacity", out.queue_capacity);
  f.get("queue_start_step", out.queue_start_step);
  f.get("batch", out.batch);
  f.get("steps", out.steps);
  f.get("learning_rate", out.learning_rate);
  f.get("speech_mix_prob", out.speech_mix_prob);
  f.get("mix_snr_levels", out.mix_snr_levels);
  f.get("segment_min", out.segment_min);
  f.get("segment_max", out.segment_max);
  f.finish();
}

json loss_to_json(const dsp::MultiResConfig& loss) {
  json res = json::array();
  for (const auto& r : loss.resolutions) {
    res.push_back({r.fft_size, r.hop});
  }
  return {{"resolutions", res}, {"log_floor", loss.log_floor}};
}

template <typename Schedule>
json schedule_to_json(const Schedule& s) {
  return {{"snr_levels", s.snr_levels},
          {"steps", s.steps},
          {"batch", s.batch},
          {"learning_rate", s.learning_rate},
          {"max_train_len", s.max_train_len},
          {"loss", loss_to_json(s.loss)}};
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }

  ExperimentConfig cfg;
  Fields f(j, "$");
  json section;
  if (f.take("extractor", section)) parse_net(section, "extractor", cfg.extractor);
  if (f.take("se", section)) parse_net(section, "se", cfg.se);
  if (f.take("encoder", section)) parse_encoder(section, cfg.encoder);
  if (f.take("pretrain", section)) parse_schedule(section, "pretrain", cfg.pretrain);
  if (f.take("contrastive", section)) parse_contrastive(section, cfg.contrastive);
  if (f.take("adapt", section)) parse_schedule(section, "adapt", cfg.adapt);
  if (f.take("eval", section)) {
    Fields e(section, "eval");
    e.get("snr_levels", cfg.eval.snr_levels);
    e.finish();
  }
  f.get("mode", cfg.mode);
  f.get("alpha", cfg.alpha);
  f.get("cohort_k", cfg.cohort_k);
  if (f.take("seeds", section)) {
    Fields s(section, "seeds");
    s.get("synth", cfg.seeds.synth);
    s.get("pretrain", cfg.seeds.pretrain);
    s.get("contrastive", cfg.seeds.contrastive);
    s.get("adapt", cfg.seeds.adapt);
    s.get("eval", cfg.seeds.eval);
    s.finish();
  }
  if (f.take("paths", section)) {
    Fields p(section, "paths");
    p.get("noise_manifest", cfg.paths.noise_manifest);
    p.get("speech_manifest", cfg.paths.speech_manifest);
    p.get("speech_test_manifest", cfg.paths.speech_test_manifest);
    p.finish();
  }
  f.finish();

  adapt::mode_from_name(cfg.mode);  // rejects unknown modes at parse time
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("experiment config: cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  const auto net = [](const models::ExtractorConfig& n) {
    return json{{"depth", n.depth},
                {"base_channels", n.base_channels},
                {"kernel", n.kernel},
                {"stride", n.stride}};
  };
  return {
      {"extractor", net(cfg.extractor)},
      {"se", net(cfg.se)},
      {"encoder",
       {{"recurrent_layers", cfg.encoder.recurrent_layers},
        {"hidden", cfg.encoder.hidden},
        {"embed_dim", cfg.encoder.embed_dim},
        {"feature_fft", cfg.encoder.feature_fft},
        {"feature_hop", cfg.encoder.feature_hop},
        {"log_floor", cfg.encoder.log_floor}}},
      {"pretrain", schedule_to_json(cfg.pretrain)},
      {"contrastive",
       {{"temperature", cfg.contrastive.temperature},
        {"momentum", cfg.contrastive.momentum},
        {"queue_capacity", cfg.contrastive.queue_capacity},
        {"queue_start_step", cfg.contrastive.queue_start_step},
        {"batch", cfg.contrastive.batch},
        {"steps", cfg.contrastive.steps},
        {"learning_rate", cfg.contrastive.learning_rate},
        {"speech_mix_prob", cfg.contrastive.speech_mix_prob},
        {"mix_snr_levels", cfg.contrastive.mix_snr_levels},
        {"segment_min", cfg.contrastive.segment_min},
        {"segment_max", cfg.contrastive.segment_max}}},
      {"adapt", schedule_to_json(cfg.adapt)},
      {"eval", {{"snr_levels", cfg.eval.snr_levels}}},
      {"mode", cfg.mode},
      {"alpha", cfg.alpha},
      {"cohort_k", cfg.cohort_k},
      {"seeds",
       {{"synth", cfg.seeds.synth},
        {"pretrain", cfg.seeds.pretrain},
        {"contrastive", cfg.seeds.contrastive},
        {"adapt", cfg.seeds.adapt},
        {"eval", cfg.seeds.eval}}},
      {"paths",
       {{"noise_manifest", cfg.paths.noise_manifest},
        {"speech_manifest", cfg.paths.speech_manifest},
        {"speech_test_manifest", cfg.paths.speech_test_manifest}}},
  };
}

}  // namespace nastar::cli
