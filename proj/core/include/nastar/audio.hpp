// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nastar/rng.hpp"

namespace nastar::audio {

inline constexpr int kDefaultSampleRateHz = 16000;

// Mono waveform. Samples are nominally in [-1, 1] but intermediate
// processing may exceed that range; only the WAV writer clips.
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kDefaultSampleRateHz;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// One corpus item. `kind` is "noise" or "speech"; `family` is an optional
// free-form label (used by the synthetic corpus to tag noise types).
struct ManifestEntry {
  std::string id;
  std::string path;
  std::string kind;
  double duration_s = 0.0;
  std::string family;
};

// Reads a 16-bit PCM mono WAV file. int16 samples map to sample/32768,
// so the value range is [-1.0, 32767.0/32768.0]. Throws std::runtime_error
// on missing or malformed files and on unsupported formats (non-PCM,
// non-mono, bit depths other than 16).
Waveform load_wav(const std::string& path);

// Writes a 16-bit PCM mono WAV file. Values are clipped to
// [-1.0, 32767.0/32768.0] and rounded half away from zero.
void save_wav(const Waveform& w, const std::string& path);

// Mean of squared samples. Zero for an empty waveform.
double mean_power(const Waveform& w);

// Fits `noise` to exactly `target_len` samples: tiles it end to end when
// shorter, then crops a uniformly random window. Every valid start offset
// of the tiled signal is equally likely. Requires a non-empty noise and
// target_len > 0.
Waveform fit_length(const Waveform& noise, std::size_t target_len, Rng& rng);

struct MixResult {
  Waveform noisy;
  double gain;  // scale applied to the fitted noise
};

// Mixes noise into speech at the requested SNR: the noise is fitted to the
// speech length, scaled by g = sqrt(P_speech / (P_noise * 10^(snr_db/10))),
// and added. Neither input is renormalized, so measuring the SNR of the
// returned components recovers snr_db exactly. Requires non-silent inputs
// and matching sample rates.
MixResult mix_at_snr(const Waveform& speech, const Waveform& noise,
                     double snr_db, Rng& rng);

// Uniformly random contiguous segment with length drawn uniformly from
// [min_len, min(max_len, w.size())] and then a uniformly random offset.
// Requires 0 < min_len <= max_len and w.size() >= min_len.
Waveform random_segment(const Waveform& w, std::size_t min_len,
                        std::size_t max_len, Rng& rng);

// JSON-lines manifest: one object per line with fields id, path, kind,
// duration_s and optional family. Readers validate that ids are unique,
// kind is "noise" or "speech", and duration_s is positive.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path);

}  // namespace nastar::audio
