// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nastar/audio.hpp"

namespace nastar::synthdata {

// Noise families span the stationarity axis: steady spectral tilts on one
// end, impulsive click trains on the other.
enum class NoiseFamily {
  kLowpassRumble,
  kHighpassHiss,
  kTonalHum,
  kAmBurst,
  kImpulsiveClicks,
};

inline constexpr int kFamilyCount = 5;

const char* family_name(NoiseFamily family);
NoiseFamily family_from_name(const std::string& name);

struct NoiseFamilySpec {
  NoiseFamily family = NoiseFamily::kLowpassRumble;
  std::uint64_t variant_seed = 0;
  double duration_s = 2.0;
  double level_dbfs = -20.0;
};

// Family-characteristic noise at 16 kHz, deterministic in
// (family, variant_seed). RMS is normalized to 10^(level_dbfs/20) and all
// samples stay within [-1, 1]. Requires duration_s > 0.
audio::Waveform gen_noise(const NoiseFamilySpec& spec);

// Speech stand-in at 16 kHz: a harmonic source with a wandering fundamental
// (90-300 Hz), slowly moving formant-like shaping, and a syllabic on/off
// envelope in the 3-5 Hz range. Deterministic in seed. Requires
// duration_s >= 0.5.
audio::Waveform gen_speech_proxy(std::uint64_t seed, double duration_s);

struct CorpusConfig {
  int families = kFamilyCount;  // uses the first `families` of the enum
  int variants_per_family = 40;
  int speech_count = 48;
  int speech_test_count = 16;
  std::uint64_t seed = 0;
};

struct CorpusPaths {
  std::string noise_manifest;
  std::string targets_manifest;
  std::string speech_manifest;
  std::string speech_test_manifest;
};

// Writes a complete synthetic corpus under out_dir:
//   noise/   pool variants, one manifest entry per variant (family-labeled)
//   targets/ one designated target per family, stored as the full signal
//            plus its first and second half as separate files
//   speech/  training and held-out test utterances
// Manifests are JSONL with paths relative to out_dir. Regeneration with the
// same config reproduces every byte.
CorpusPaths gen_corpus(const std::string& out_dir, const CorpusConfig& cfg);

}  // namespace nastar::synthdata
