// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/models.hpp"
#include "nastar/rng.hpp"

namespace nastar::contrastive {

// Two segments excerpted from the same noise source, each independently and
// optionally buried under speech. The pretext task treats them as a
// positive pair.
struct PretextPair {
  audio::Waveform x_q;
  audio::Waveform x_k;
  std::string source_id;
};

// FIFO ring of unit-norm embeddings serving as extra negatives.
class NegativeQueue {
 public:
  explicit NegativeQueue(std::size_t capacity);

  // Validates unit norm, evicts the oldest entry beyond capacity.
  void push(const models::Embedding& e);

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<models::Embedding>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<models::Embedding> items_;
};

struct ContrastiveConfig {
  double temperature = 0.1;
  double momentum = 0.9;
  std::size_t queue_capacity = 32768;
  long long queue_start_step = 5000;
  int batch = 256;
  long long steps = 100000;
  double learning_rate = 2.5e-4;
  double speech_mix_prob = 0.5;
  std::vector<double> mix_snr_levels = {-8, -6, -4, -2, 0, 2, 4, 6, 8};
  // Segment lengths stay within [24000, 80000] samples.
  std::size_t segment_min = 24000;
  std::size_t segment_max = 80000;
};

// Full-scale defaults shrunk to a single-core desk run.
ContrastiveConfig desk_contrastive_config();

void validate_contrastive_config(const ContrastiveConfig& cfg);

// Draws one positive pair. Consumes rng in a fixed order per side: segment
// draw (tiling noise shorter than segment_min to segment_min first), the
// mix decision, speech index, SNR index, speech excerpt fit, then the mix
// itself. The segment plays the noise role in the mix, so the pair stays a
// noise-identity pair even when buried under speech.
PretextPair make_pair(const audio::Waveform& noise,
                      const std::string& source_id,
                      const std::vector<audio::Waveform>& speech,
                      const ContrastiveConfig& cfg, Rng& rng);

// -log of the softmax probability of the positive among the negatives at
// temperature tau. All embeddings must be unit-norm; the positive term is
// part of the denominator so the loss is non-negative.
double info_nce(const models::Embedding& q, const models::Embedding& k_plus,
                const std::vector<models::Embedding>& negatives, double tau);

// Negatives for anchor `self_index`: every batch embedding from both
// encoders except the anchor's own query and its own positive key, in batch
// order (queries first), followed by the queue contents oldest-first once
// step > queue_start_step. Errors when the result would be empty.
std::vector<models::Embedding> gather_negatives(
    long long step, const std::vector<models::Embedding>& batch_q,
    const std::vector<models::Embedding>& batch_k, const NegativeQueue& queue,
    std::size_t self_index, long long queue_start_step);

struct TrainLogEntry {
  long long step = 0;
  double loss = 0.0;
  std::size_t queue_size = 0;
};

struct RetrievalTrainResult {
  models::ParamSet params;      // query encoder, the retrieval encoder
  models::ParamSet key_params;  // momentum encoder at the final step
  std::vector<TrainLogEntry> log;
};

// Trains the retrieval encoder on noise-identity pairs. Per step: a batch
// of pairs from distinct noise sources, query embeddings through the query
// encoder (with gradients), key embeddings through the momentum encoder
// (detached), mean InfoNCE with batch + queue negatives, one Adam step on
// the query encoder, a momentum update of the key encoder, then the batch
// keys are enqueued once step > queue_start_step. Deterministic in seed.
RetrievalTrainResult train_retrieval(
    const std::vector<audio::ManifestEntry>& noise_manifest,
    const std::vector<audio::ManifestEntry>& speech_manifest,
    const models::EncoderConfig& enc_cfg, const ContrastiveConfig& cfg,
    std::uint64_t seed);

}  // namespace nastar::contrastive
