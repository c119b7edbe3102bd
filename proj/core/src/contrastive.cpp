// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nastar::contrastive {

namespace {

constexpr double kUnitNormTol = 1e-6;

void check_unit_norm(const models::Embedding& e, const char* where) {
  double s = 0.0;
  for (double v : e.vector) s += v * v;
  if (std::abs(std::sqrt(s) - 1.0) > kUnitNormTol) {
    throw std::invalid_argument(std::string(where) +
                                ": embedding is not unit-norm");
  }
}

double dot(const models::Embedding& a, const models::Embedding& b) {
  if (a.vector.size() != b.vector.size()) {
    throw std::invalid_argument("embedding dimensions differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.vector.size(); ++i) {
    s += a.vector[i] * b.vector[i];
  }
  return s;
}

// loss = log(exp(lp) + sum exp(ln)) - lp, computed against the running max.
// Writes softmax probabilities (positive first) when probs is non-null.
double stable_softmax_loss(double lp, const std::vector<double>& ln,
                           std::vector<double>* probs) {
  double m = lp;
  for (double v : ln) m = std::max(m, v);
  double sum = std::exp(lp - m);
  for (double v : ln) sum += std::exp(v - m);
  if (probs != nullptr) {
    probs->resize(ln.size() + 1);
    (*probs)[0] = std::exp(lp - m) / sum;
    for (std::size_t i = 0; i < ln.size(); ++i) {
      (*probs)[i + 1] = std::exp(ln[i] - m) / sum;
    }
  }
  return m + std::log(sum) - lp;
}

// One pair side: a segment of the noise source, optionally buried under
// speech with the segment in the noise role.
audio::Waveform make_side(const audio::Waveform& noise,
                          const std::vector<audio::Waveform>& speech,
                          const ContrastiveConfig& cfg, Rng& rng) {
  audio::Waveform seg;
  if (noise.size() < cfg.segment_min) {
    seg = audio::fit_length(noise, cfg.segment_min, rng);
  } else {
    seg = audio::random_segment(noise, cfg.segment_min, cfg.segment_max, rng);
  }
  if (rng.uniform() < cfg.speech_mix_prob) {
    if (speech.empty()) {
      throw std::runtime_error(
          "make_pair: a speech mix was drawn but the speech corpus is empty");
    }
    const audio::Waveform& sp = speech[rng.uniform_int(speech.size())];
    const double snr =
        cfg.mix_snr_levels[rng.uniform_int(cfg.mix_snr_levels.size())];
    const audio::Waveform excerpt = audio::fit_length(sp, seg.size(), rng);
    return audio::mix_at_snr(excerpt, seg, snr, rng).noisy;
  }
  return seg;
}

}  // namespace

NegativeQueue::NegativeQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw std::invalid_argument("NegativeQueue capacity must be positive");
  }
}

void NegativeQueue::push(const models::Embedding& e) {
  check_unit_norm(e, "NegativeQueue::push");
  if (!items_.empty() && items_.front().vector.size() != e.vector.size()) {
    throw std::invalid_argument(
        "NegativeQueue::push: embedding dimension differs from queue contents");
  }
  items_.push_back(e);
  if (items_.size() > capacity_) items_.pop_front();
}

ContrastiveConfig desk_contrastive_config() {
  ContrastiveConfig cfg;
  cfg.batch = 32;
  cfg.steps = 2000;
  cfg.queue_capacity = 1024;
  cfg.queue_start_step = 200;
  return cfg;
}

void validate_contrastive_config(const ContrastiveConfig& cfg) {
  if (!(cfg.temperature > 0.0)) {
    throw std::invalid_argument("contrastive temperature must be positive");
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum <= 1.0)) {
    throw std::invalid_argument("contrastive momentum must be in [0, 1]");
  }
  if (!(cfg.speech_mix_prob >= 0.0 && cfg.speech_mix_prob <= 1.0)) {
    throw std::invalid_argument("speech_mix_prob must be in [0, 1]");
  }
  if (cfg.batch < 1 || cfg.steps < 0 || cfg.queue_start_step < 0) {
    throw std::invalid_argument("contrastive counts must be non-negative");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("contrastive learning rate must be positive");
  }
  if (cfg.speech_mix_prob > 0.0 && cfg.mix_snr_levels.empty()) {
    throw std::invalid_argument(
        "mix_snr_levels must be non-empty when mixing is enabled");
  }
  if (cfg.segment_min < 24000 || cfg.segment_max > 80000 ||
      cfg.segment_min > cfg.segment_max) {
    throw std::invalid_argument(
        "segment lengths must satisfy 24000 <= min <= max <= 80000");
  }
}

PretextPair make_pair(const audio::Waveform& noise,
                      const std::string& source_id,
                      const std::vector<audio::Waveform>& speech,
                      const ContrastiveConfig& cfg, Rng& rng) {
  validate_contrastive_config(cfg);
  if (noise.empty()) {
    throw std::invalid_argument("make_pair: noise is empty");
  }
  PretextPair pair;
  pair.x_q = make_side(noise, speech, cfg, rng);
  pair.x_k = make_side(noise, speech, cfg, rng);
  pair.source_id = source_id;
  return pair;
}

double info_nce(const models::Embedding& q, const models::Embedding& k_plus,
                const std::vector<models::Embedding>& negatives, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("info_nce: temperature must be positive");
  }
  if (negatives.empty()) {
    throw std::invalid_argument("info_nce: empty negative set");
  }
  check_unit_norm(q, "info_nce");
  check_unit_norm(k_plus, "info_nce");
  const double lp = dot(q, k_plus) / tau;
  std::vector<double> ln;
  ln.reserve(negatives.size());
  for (const auto& n : negatives) {
    check_unit_norm(n, "info_nce");
    ln.push_back(dot(q, n) / tau);
  }
  return stable_softmax_loss(lp, ln, nullptr);
}

std::vector<models::Embedding> gather_negatives(
    long long step, const std::vector<models::Embedding>& batch_q,
    const std::vector<models::Embedding>& batch_k, const NegativeQueue& queue,
    std::size_t self_index, long long queue_start_step) {
  if (batch_q.size() != batch_k.size()) {
    throw std::invalid_argument(
        "gather_negatives: query and key batch sizes differ");
  }
  if (self_index >= batch_q.size()) {
    throw std::invalid_argument("gather_negatives: self_index out of range");
  }
  std::vector<models::Embedding> out;
  const bool queue_active = step > queue_start_step;
  out.reserve(2 * batch_q.size() + (queue_active ? queue.size() : 0));
  for (std::size_t j = 0; j < batch_q.size(); ++j) {
    if (j != self_index) out.push_back(batch_q[j]);
  }
  for (std::size_t j = 0; j < batch_k.size(); ++j) {
    if (j != self_index) out.push_back(batch_k[j]);
  }
  if (queue_active) {
    for (const auto& e : queue.items()) out.push_back(e);
  }
  if (out.empty()) {
    throw std::runtime_error(
        "gather_negatives: no negatives available (batch of one before queue "
        "activation)");
  }
  return out;
}

RetrievalTrainResult train_retrieval(
    const std::vector<audio::ManifestEntry>& noise_manifest,
    const std::vector<audio::ManifestEntry>& speech_manifest,
    const models::EncoderConfig& enc_cfg, const ContrastiveConfig& cfg,
    std::uint64_t seed) {
  validate_contrastive_config(cfg);

  std::vector<audio::Waveform> noises;
  std::vector<std::string> noise_ids;
  noises.reserve(noise_manifest.size());
  for (const auto& entry : noise_manifest) {
    noises.push_back(audio::load_wav(entry.path));
    noise_ids.push_back(entry.id);
  }
  if (noises.size() < 2) {
    throw std::invalid_argument(
        "train_retrieval requires at least 2 noise signals");
  }
  if (static_cast<std::size_t>(cfg.batch) > noises.size()) {
    throw std::invalid_argument(
        "train_retrieval: batch exceeds the number of distinct noise sources");
  }
  std::vector<audio::Waveform> speech;
  speech.reserve(speech_manifest.size());
  for (const auto& entry : speech_manifest) {
    speech.push_back(audio::load_wav(entry.path));
  }

  Rng root(seed);
  const std::uint64_t init_seed = root.next_u64();
  models::ParamSet theta_q = models::init_encoder(enc_cfg, init_seed);
  models::ParamSet theta_k = theta_q;
  models::AdamState adam = models::make_adam_state(theta_q, cfg.learning_rate);
  NegativeQueue queue(cfg.queue_capacity);

  const auto batch = static_cast<std::size_t>(cfg.batch);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const double inv_tau = 1.0 / cfg.temperature;

  RetrievalTrainResult result;
  result.log.reserve(static_cast<std::size_t>(cfg.steps));

  std::vector<std::size_t> order(noises.size());
  std::iota(order.begin(), order.end(), 0);

  for (long long step = 1; step <= cfg.steps; ++step) {
    Rng srng = root.fork(static_cast<std::uint64_t>(step));

    // Distinct sources within the batch: partial Fisher-Yates.
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t pick = b + srng.uniform_int(order.size() - b);
      std::swap(order[b], order[pick]);
    }

    std::vector<models::EncoderTrace> traces(batch);
    std::vector<models::Embedding> q(batch);
    std::vector<models::Embedding> k(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t src = order[b];
      const PretextPair pair =
          make_pair(noises[src], noise_ids[src], speech, cfg, srng);
      q[b] = models::retrieval_embed(theta_q, enc_cfg, pair.x_q, &traces[b]);
      k[b] = models::retrieval_embed(theta_k, enc_cfg, pair.x_k);
    }

    const bool queue_active = step > cfg.queue_start_step;

    // Per anchor: logits for [own key, other queries, other keys, queue],
    // shared with info_nce through stable_softmax_loss. Gradients flow to
    // the query encoder only, including through query-side negatives.
    double loss_sum = 0.0;
    std::vector<std::vector<double>> dq(
        batch, std::vector<double>(q[0].vector.size(), 0.0));
    std::vector<double> ln;
    std::vector<double> probs;
    for (std::size_t i = 0; i < batch; ++i) {
      const double lp = dot(q[i], k[i]) * inv_tau;
      ln.clear();
      for (std::size_t j = 0; j < batch; ++j) {
        if (j != i) ln.push_back(dot(q[i], q[j]) * inv_tau);
      }
      for (std::size_t j = 0; j < batch; ++j) {
        if (j != i) ln.push_back(dot(q[i], k[j]) * inv_tau);
      }
      if (queue_active) {
        for (const auto& e : queue.items()) {
          ln.push_back(dot(q[i], e) * inv_tau);
        }
      }
      loss_sum += stable_softmax_loss(lp, ln, &probs);

      // d loss / d logit: positive gets p0 - 1, negatives get p.
      const double scale = inv_batch * inv_tau;
      const std::size_t dim = q[i].vector.size();
      const double w_pos = (probs[0] - 1.0) * scale;
      for (std::size_t d = 0; d < dim; ++d) {
        dq[i][d] += w_pos * k[i].vector[d];
      }
      std::size_t idx = 1;
      for (std::size_t j = 0; j < batch; ++j) {
        if (j == i) continue;
        const double w = probs[idx++] * scale;
        for (std::size_t d = 0; d < dim; ++d) {
          dq[i][d] += w * q[j].vector[d];
          dq[j][d] += w * q[i].vector[d];
        }
      }
      for (std::size_t j = 0; j < batch; ++j) {
        if (j == i) continue;
        const double w = probs[idx++] * scale;
        for (std::size_t d = 0; d < dim; ++d) {
          dq[i][d] += w * k[j].vector[d];
        }
      }
      if (queue_active) {
        for (const auto& e : queue.items()) {
          const double w = probs[idx++] * scale;
          for (std::size_t d = 0; d < dim; ++d) {
            dq[i][d] += w * e.vector[d];
          }
        }
      }
    }

    models::ParamSet grad = models::zeros_like(theta_q);
    for (std::size_t b = 0; b < batch; ++b) {
      models::encoder_backward(theta_q, enc_cfg, traces[b], dq[b], grad);
    }
    models::adam_step(theta_q, grad, adam);
    theta_k = models::momentum_update(theta_k, theta_q, cfg.momentum);

    if (queue_active) {
      for (std::size_t b = 0; b < batch; ++b) queue.push(k[b]);
    }

    result.log.push_back({step, loss_sum * inv_batch, queue.size()});
  }

  result.params = std::move(theta_q);
  result.key_params = std::move(theta_k);
  return result;
}

}  // namespace nastar::contrastive
