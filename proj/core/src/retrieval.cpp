// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace nastar::retrieval {

namespace {

constexpr char kIndexMagic[8] = {'N', 'A', 'S', 'T', 'A', 'R', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::size_t kChunkSamples = 80000;

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size)
      : data_(data), size_(size) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > size_) {
      throw std::runtime_error("corrupt index: truncated data");
    }
    std::memcpy(dst, data_ + pos_, n);
    pos_ += n;
  }

  std::uint32_t read_u32() {
    std::uint8_t b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
    return v;
  }

  std::uint64_t read_u64() {
    std::uint8_t b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
  }

  float read_f32() {
    const std::uint32_t bits = read_u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  bool exhausted() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void check_row_norm(const models::Embedding& row, const char* where) {
  double s = 0.0;
  for (double v : row.vector) s += v * v;
  if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
    throw std::runtime_error(std::string(where) + ": row is not unit-norm");
  }
}

}  // namespace

double cosine(const models::Embedding& a, const models::Embedding& b) {
  if (a.vector.size() != b.vector.size()) {
    throw std::invalid_argument("cosine: embedding dimensions differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.vector.size(); ++i) {
    s += a.vector[i] * b.vector[i];
  }
  return std::clamp(s, -1.0, 1.0);
}

models::Embedding embed_signal(const models::ParamSet& params,
                               const models::EncoderConfig& cfg,
                               const audio::Waveform& w) {
  if (w.size() <= kChunkSamples) {
    return models::retrieval_embed(params, cfg, w);
  }
  std::vector<double> mean;
  std::size_t chunks = 0;
  for (std::size_t start = 0; start < w.size(); start += kChunkSamples) {
    const std::size_t len = std::min(kChunkSamples, w.size() - start);
    // A tail shorter than one analysis window carries no frame of its own.
    if (len < static_cast<std::size_t>(cfg.feature_fft)) break;
    audio::Waveform chunk;
    chunk.sample_rate_hz = w.sample_rate_hz;
    chunk.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         w.samples.begin() +
                             static_cast<std::ptrdiff_t>(start + len));
    const models::Embedding e = models::retrieval_embed(params, cfg, chunk);
    if (mean.empty()) mean.assign(e.vector.size(), 0.0);
    for (std::size_t i = 0; i < e.vector.size(); ++i) mean[i] += e.vector[i];
    ++chunks;
  }
  double norm = 0.0;
  for (double& v : mean) {
    v /= static_cast<double>(chunks);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (!(norm > 1e-12)) {
    throw std::runtime_error("embed_signal: degenerate chunk-mean embedding");
  }
  models::Embedding out;
  out.vector.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) out.vector[i] = mean[i] / norm;
  return out;
}

EmbeddingIndex build_index(const std::vector<audio::ManifestEntry>& manifest,
                           const models::ParamSet& encoder_params,
                           const models::EncoderConfig& cfg) {
  if (manifest.empty()) {
    throw std::invalid_argument("build_index: empty noise manifest");
  }
  std::set<std::string> seen;
  for (const auto& entry : manifest) {
    if (!seen.insert(entry.id).second) {
      throw std::invalid_argument("build_index: duplicate noise id " +
                                  entry.id);
    }
  }
  EmbeddingIndex index;
  index.ids.reserve(manifest.size());
  index.rows.reserve(manifest.size());
  index.encoder_fingerprint = models::checkpoint_fingerprint(encoder_params);
  for (const auto& entry : manifest) {
    const audio::Waveform w = audio::load_wav(entry.path);
    index.ids.push_back(entry.id);
    index.rows.push_back(embed_signal(encoder_params, cfg, w));
  }
  return index;
}

RelevantCohort top_k(const EmbeddingIndex& index,
                     const models::Embedding& query, std::size_t k) {
  if (k < 1 || k > index.size()) {
    throw std::invalid_argument("top_k: k must be in [1, index size]");
  }
  std::vector<std::size_t> order(index.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> sims(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    sims[i] = cosine(query, index.rows[i]);
  }
  const auto better = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return index.ids[a] < index.ids[b];
  };
  std::partial_sort(order.begin(),
                    order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), better);
  RelevantCohort cohort;
  cohort.k = k;
  cohort.entries.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    cohort.entries.push_back({index.ids[order[r]], sims[order[r]]});
  }
  return cohort;
}

void save_index(const EmbeddingIndex& index, const std::string& path) {
  if (index.ids.size() != index.rows.size()) {
    throw std::invalid_argument("save_index: id and row counts differ");
  }
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kIndexMagic, kIndexMagic + 8);
  append_u32(out, kIndexVersion);
  append_u32(out, static_cast<std::uint32_t>(index.dim()));
  append_u64(out, index.size());
  append_u64(out, index.encoder_fingerprint);
  for (const auto& id : index.ids) {
    append_u32(out, static_cast<std::uint32_t>(id.size()));
    out.insert(out.end(), id.begin(), id.end());
  }
  for (const auto& row : index.rows) {
    if (row.vector.size() != index.dim()) {
      throw std::invalid_argument("save_index: inconsistent row dimensions");
    }
    for (double v : row.vector) append_f32(out, static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("cannot write index: " + path);
  }
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) {
    throw std::runtime_error("cannot write index: " + path);
  }
}

EmbeddingIndex load_index(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot open index: " + path);
  }
  const std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r(bytes.data(), bytes.size());

  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, kIndexMagic, 8) != 0) {
    throw std::runtime_error("corrupt index: bad magic");
  }
  if (r.read_u32() != kIndexVersion) {
    throw std::runtime_error("corrupt index: unsupported version");
  }
  const std::uint32_t dim = r.read_u32();
  const std::uint64_t count = r.read_u64();
  if (dim == 0 || count == 0) {
    throw std::runtime_error("corrupt index: empty dimensions");
  }

  EmbeddingIndex index;
  index.encoder_fingerprint = r.read_u64();
  index.ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.read_u32();
    if (len > (1u << 20)) {
      throw std::runtime_error("corrupt index: bad id length");
    }
    std::string id(len, '\0');
    r.read(id.data(), len);
    index.ids.push_back(std::move(id));
  }
  index.rows.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    index.rows[i].vector.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) {
      const float v = r.read_f32();
      if (!std::isfinite(v)) {
        throw std::runtime_error("corrupt index: non-finite value");
      }
      index.rows[i].vector[d] = v;
    }
    check_row_norm(index.rows[i], "corrupt index");
  }
  if (!r.exhausted()) {
    throw std::runtime_error("corrupt index: trailing bytes");
  }
  std::set<std::string> seen(index.ids.begin(), index.ids.end());
  if (seen.size() != index.ids.size()) {
    throw std::runtime_error("corrupt index: duplicate ids");
  }
  return index;
}

std::string cohort_to_json(const RelevantCohort& cohort) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& entry : cohort.entries) {
    arr.push_back({{"id", entry.noise_id}, {"similarity", entry.similarity}});
  }
  return arr.dump(2) + "\n";
}

RelevantCohort cohort_from_json(const std::string& text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt cohort: ") + e.what());
  }
  if (!arr.is_array()) {
    throw std::runtime_error("corrupt cohort: expected a JSON array");
  }
  RelevantCohort cohort;
  cohort.k = arr.size();
  cohort.entries.reserve(arr.size());
  for (const auto& item : arr) {
    if (!item.is_object() || !item.contains("id") ||
        !item.contains("similarity")) {
      throw std::runtime_error("corrupt cohort: entry missing id/similarity");
    }
    cohort.entries.push_back(
        {item["id"].get<std::string>(), item["similarity"].get<double>()});
  }
  return cohort;
}

void save_cohort(const RelevantCohort& cohort, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("cannot write cohort: " + path);
  }
  const std::string text = cohort_to_json(cohort);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) {
    throw std::runtime_error("cannot write cohort: " + path);
  }
}

RelevantCohort load_cohort(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot open cohort: " + path);
  }
  const std::string text((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
  return cohort_from_json(text);
}

}  // namespace nastar::retrieval
