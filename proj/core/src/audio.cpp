// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace nastar::audio {

namespace {

constexpr double kInt16Scale = 32768.0;
constexpr double kMaxSample = 32767.0 / 32768.0;

std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void append_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

[[noreturn]] void wav_error(const std::string& path, const std::string& what) {
  throw std::runtime_error("load_wav: " + path + ": " + what);
}

}  // namespace

Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    wav_error(path, "cannot open file");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0) {
    wav_error(path, "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;

  // Walk chunks; sizes are padded to even offsets per RIFF.
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* id = data + pos;
    const std::uint32_t chunk_size = read_u32le(data + pos + 4);
    pos += 8;
    if (pos + chunk_size > size) {
      wav_error(path, "truncated chunk");
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        wav_error(path, "fmt chunk too small");
      }
      format = read_u16le(data + pos);
      channels = read_u16le(data + pos + 2);
      sample_rate = read_u32le(data + pos + 4);
      bits = read_u16le(data + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      pcm = data + pos;
      pcm_bytes = chunk_size;
    }
    pos += chunk_size + (chunk_size & 1);
  }

  if (!have_fmt) {
    wav_error(path, "missing fmt chunk");
  }
  if (pcm == nullptr) {
    wav_error(path, "missing data chunk");
  }
  if (format != 1) {
    wav_error(path, "unsupported format tag " + std::to_string(format) +
                        " (only PCM is supported)");
  }
  if (channels != 1) {
    wav_error(path, "unsupported channel count " + std::to_string(channels) +
                        " (only mono is supported)");
  }
  if (bits != 16) {
    wav_error(path, "unsupported bit depth " + std::to_string(bits) +
                        " (only 16-bit is supported)");
  }
  if (sample_rate == 0) {
    wav_error(path, "zero sample rate");
  }

  Waveform w;
  w.sample_rate_hz = static_cast<int>(sample_rate);
  const std::size_t count = pcm_bytes / 2;
  w.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        static_cast<std::uint16_t>(pcm[2 * i] | pcm[2 * i + 1] << 8));
    w.samples[i] = static_cast<double>(s) / kInt16Scale;
  }
  return w;
}

void save_wav(const Waveform& w, const std::string& path) {
  if (w.sample_rate_hz <= 0) {
    throw std::invalid_argument("save_wav: sample rate must be positive");
  }
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  append_u32le(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  append_u32le(out, 16);
  append_u16le(out, 1);  // PCM
  append_u16le(out, 1);  // mono
  append_u32le(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  append_u32le(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  append_u16le(out, 2);   // block align
  append_u16le(out, 16);  // bits per sample
  out.append("data");
  append_u32le(out, data_bytes);

  for (const double v : w.samples) {
    const double clipped = std::clamp(v, -1.0, kMaxSample);
    const long q = std::lround(clipped * kInt16Scale);
    const auto s = static_cast<std::int16_t>(
        std::clamp(q, long{-32768}, long{32767}));
    append_u16le(out, static_cast<std::uint16_t>(s));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw std::runtime_error("save_wav: cannot open " + path);
  }
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) {
    throw std::runtime_error("save_wav: write failed for " + path);
  }
}

double mean_power(const Waveform& w) {
  if (w.empty()) {
    return 0.0;
  }
  double acc = 0.0;
  for (const double v : w.samples) {
    acc += v * v;
  }
  return acc / static_cast<double>(w.size());
}

Waveform fit_length(const Waveform& noise, std::size_t target_len, Rng& rng) {
  if (noise.empty()) {
    throw std::invalid_argument("fit_length: noise is empty");
  }
  if (target_len == 0) {
    throw std::invalid_argument("fit_length: target_len must be positive");
  }
  const std::size_t n = noise.size();
  // Tiled length: smallest whole number of copies covering target_len.
  const std::size_t tiled_len =
      n >= target_len ? n : ((target_len + n - 1) / n) * n;
  const std::size_t offset = rng.uniform_int(tiled_len - target_len + 1);

  Waveform out;
  out.sample_rate_hz = noise.sample_rate_hz;
  out.samples.resize(target_len);
  for (std::size_t i = 0; i < target_len; ++i) {
    out.samples[i] = noise.samples[(offset + i) % n];
  }
  return out;
}

MixResult mix_at_snr(const Waveform& speech, const Waveform& noise,
                     double snr_db, Rng& rng) {
  if (speech.sample_rate_hz != noise.sample_rate_hz) {
    throw std::invalid_argument("mix_at_snr: sample rate mismatch");
  }
  if (speech.empty() || noise.empty()) {
    throw std::invalid_argument("mix_at_snr: empty input");
  }
  const double p_speech = mean_power(speech);
  if (p_speech == 0.0) {
    throw std::invalid_argument("mix_at_snr: speech is silent");
  }
  if (mean_power(noise) == 0.0) {
    throw std::invalid_argument("mix_at_snr: noise is silent");
  }

  Waveform fitted = fit_length(noise, speech.size(), rng);
  const double p_noise = mean_power(fitted);
  if (p_noise == 0.0) {
    throw std::runtime_error("mix_at_snr: fitted noise segment is silent");
  }

  const double gain =
      std::sqrt(p_speech / (p_noise * std::pow(10.0, snr_db / 10.0)));

  MixResult result;
  result.gain = gain;
  result.noisy.sample_rate_hz = speech.sample_rate_hz;
  result.noisy.samples.resize(speech.size());
  for (std::size_t i = 0; i < speech.size(); ++i) {
    result.noisy.samples[i] = speech.samples[i] + gain * fitted.samples[i];
  }
  return result;
}

Waveform random_segment(const Waveform& w, std::size_t min_len,
                        std::size_t max_len, Rng& rng) {
  if (min_len == 0 || min_len > max_len) {
    throw std::invalid_argument(
        "random_segment: requires 0 < min_len <= max_len");
  }
  if (w.size() < min_len) {
    throw std::invalid_argument("random_segment: waveform shorter than min_len");
  }
  const std::size_t hi = std::min(max_len, w.size());
  const std::size_t len = min_len + rng.uniform_int(hi - min_len + 1);
  const std::size_t offset = rng.uniform_int(w.size() - len + 1);

  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(offset + len));
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("read_manifest: cannot open " + path);
  }
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("read_manifest: " + path + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    ManifestEntry entry;
    try {
      entry.id = obj.at("id").get<std::string>();
      entry.path = obj.at("path").get<std::string>();
      entry.kind = obj.at("kind").get<std::string>();
      entry.duration_s = obj.at("duration_s").get<double>();
      if (obj.contains("family")) {
        entry.family = obj.at("family").get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("read_manifest: " + path + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    if (entry.kind != "noise" && entry.kind != "speech") {
      throw std::runtime_error("read_manifest: " + path + " line " +
                               std::to_string(line_no) + ": bad kind '" +
                               entry.kind + "'");
    }
    if (!(entry.duration_s > 0.0)) {
      throw std::runtime_error("read_manifest: " + path + " line " +
                               std::to_string(line_no) +
                               ": duration_s must be positive");
    }
    // Relative paths are resolved against the manifest's directory.
    std::filesystem::path p(entry.path);
    if (p.is_relative() && !base.empty()) {
      entry.path = (base / p).string();
    }
    entries.push_back(std::move(entry));
  }

  std::unordered_set<std::string> seen;
  for (const auto& entry : entries) {
    if (!seen.insert(entry.id).second) {
      throw std::runtime_error("read_manifest: " + path + ": duplicate id '" +
                               entry.id + "'");
    }
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("write_manifest: cannot open " + path);
  }
  for (const auto& entry : entries) {
    nlohmann::json obj;
    obj["id"] = entry.id;
    obj["path"] = entry.path;
    obj["kind"] = entry.kind;
    obj["duration_s"] = entry.duration_s;
    if (!entry.family.empty()) {
      obj["family"] = entry.family;
    }
    out << obj.dump() << '\n';
  }
  if (!out) {
    throw std::runtime_error("write_manifest: write failed for " + path);
  }
}

}  // namespace nastar::audio
