// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/models.hpp"

namespace nastar::retrieval {

// Embedding index over a source noise pool. Immutable after build, so
// concurrent queries need no synchronization. encoder_fingerprint records
// which encoder produced the rows, for staleness detection when an index
// file outlives a retraining.
struct EmbeddingIndex {
  std::vector<std::string> ids;
  std::vector<models::Embedding> rows;  // unit-norm, one per id
  std::uint64_t encoder_fingerprint = 0;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return rows.empty() ? 0 : rows[0].vector.size(); }
};

struct CohortEntry {
  std::string noise_id;
  double similarity = 0.0;
};

// Top-k query result: similarities non-increasing, ids unique.
struct RelevantCohort {
  std::vector<CohortEntry> entries;
  std::size_t k = 0;
};

// Dot product of unit-norm embeddings, clamped to [-1, 1] so downstream
// consumers can rely on the cosine range even under rounding.
// Throws std::invalid_argument on dimension mismatch.
double cosine(const models::Embedding& a, const models::Embedding& b);

// Whole-signal embedding. Signals longer than 80000 samples are split into
// consecutive non-overlapping 80000-sample chunks (a final shorter chunk is
// kept when it is at least one analysis window long) and the chunk
// embeddings are averaged and re-normalized. Shorter signals embed directly.
models::Embedding embed_signal(const models::ParamSet& params,
                               const models::EncoderConfig& cfg,
                               const audio::Waveform& w);

// One embedding row per manifest entry, in manifest order. Deterministic in
// (manifest, params). Throws std::invalid_argument on an empty manifest or
// duplicate ids, std::runtime_error on unreadable files.
EmbeddingIndex build_index(const std::vector<audio::ManifestEntry>& manifest,
                           const models::ParamSet& encoder_params,
                           const models::EncoderConfig& cfg);

// Exact k-largest cosine similarities, descending; ties broken by
// lexicographic id, which makes the result invariant to index row order.
// Requires 1 <= k <= index.size().
RelevantCohort top_k(const EmbeddingIndex& index,
                     const models::Embedding& query, std::size_t k);

// Index file: 8-byte magic, u32 version, u32 dim, u64 row count,
// u64 encoder fingerprint, id table (u32 length + UTF-8 bytes each), then
// the row-major little-endian float32 matrix. Load validates unit norms
// within 1e-6 but keeps the stored values, so save(load(f)) == f bitwise.
void save_index(const EmbeddingIndex& index, const std::string& path);
EmbeddingIndex load_index(const std::string& path);

// Cohort JSON: a list of {"id": ..., "similarity": ...} objects, in rank
// order. Doubles round-trip exactly.
std::string cohort_to_json(const RelevantCohort& cohort);
RelevantCohort cohort_from_json(const std::string& text);
void save_cohort(const RelevantCohort& cohort, const std::string& path);
RelevantCohort load_cohort(const std::string& path);

}  // namespace nastar::retrieval
