// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/dsp.hpp"
#include "nastar/synthdata.hpp"
#include "support/tempdir.hpp"

using namespace nastar;
using synthdata::NoiseFamily;
using test_support::TempDir;

namespace {

std::vector<double> padded_magnitude_spectrum(const std::vector<double>& x) {
  std::size_t m = 1;
  while (m < x.size()) m <<= 1;
  std::vector<double> padded(x);
  padded.resize(m, 0.0);
  const auto bins = dsp::rfft(padded);
  std::vector<double> mag(bins.size());
  for (std::size_t i = 0; i < bins.size(); ++i) {
    mag[i] = std::abs(bins[i]);
  }
  return mag;
}

// Power-weighted mean frequency in Hz.
double spectral_centroid_hz(const audio::Waveform& w) {
  const auto mag = padded_magnitude_spectrum(w.samples);
  const double bin_hz = static_cast<double>(w.sample_rate_hz) /
                        (2.0 * static_cast<double>(mag.size() - 1));
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 1; k < mag.size(); ++k) {
    const double p = mag[k] * mag[k];
    num += static_cast<double>(k) * bin_hz * p;
    den += p;
  }
  return num / den;
}

double band_energy_ratio_below_hz(const audio::Waveform& w, double split_hz) {
  const auto mag = padded_magnitude_spectrum(w.samples);
  const double bin_hz = static_cast<double>(w.sample_rate_hz) /
                        (2.0 * static_cast<double>(mag.size() - 1));
  double below = 0.0;
  double above = 0.0;
  for (std::size_t k = 1; k < mag.size(); ++k) {
    const double p = mag[k] * mag[k];
    if (static_cast<double>(k) * bin_hz < split_hz) {
      below += p;
    } else {
      above += p;
    }
  }
  return below / (above + 1e-300);
}

// Peak of the envelope modulation spectrum, searched in (0.5, 20] Hz. The
// envelope is block RMS at 100 Hz.
double modulation_peak_hz(const audio::Waveform& w) {
  const std::size_t block = 160;
  std::vector<double> env;
  for (std::size_t start = 0; start + block <= w.size(); start += block) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + block; ++i) {
      acc += w.samples[i] * w.samples[i];
    }
    env.push_back(std::sqrt(acc / static_cast<double>(block)));
  }
  double mean = 0.0;
  for (const double v : env) mean += v;
  mean /= static_cast<double>(env.size());
  for (auto& v : env) v -= mean;

  const auto mag = padded_magnitude_spectrum(env);
  const double bin_hz = 100.0 / (2.0 * static_cast<double>(mag.size() - 1));
  double best = -1.0;
  double best_hz = 0.0;
  for (std::size_t k = 1; k < mag.size(); ++k) {
    const double hz = static_cast<double>(k) * bin_hz;
    if (hz <= 0.5 || hz > 20.0) continue;
    if (mag[k] > best) {
      best = mag[k];
      best_hz = hz;
    }
  }
  return best_hz;
}

double rms(const audio::Waveform& w) {
  return std::sqrt(audio::mean_power(w));
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const NoiseFamily kAllFamilies[] = {
    NoiseFamily::kLowpassRumble, NoiseFamily::kHighpassHiss,
    NoiseFamily::kTonalHum, NoiseFamily::kAmBurst,
    NoiseFamily::kImpulsiveClicks};

}  // namespace

TEST_CASE("gen_noise is deterministic in its spec") {
  for (const auto family : kAllFamilies) {
    synthdata::NoiseFamilySpec spec;
    spec.family = family;
    spec.variant_seed = 42;
    const auto a = synthdata::gen_noise(spec);
    const auto b = synthdata::gen_noise(spec);
    CHECK(a.samples == b.samples);
  }
}

TEST_CASE("variant seed and family both change the output") {
  synthdata::NoiseFamilySpec spec;
  spec.family = NoiseFamily::kTonalHum;
  spec.variant_seed = 1;
  const auto a = synthdata::gen_noise(spec);
  spec.variant_seed = 2;
  const auto b = synthdata::gen_noise(spec);
  CHECK(a.samples != b.samples);

  spec.variant_seed = 1;
  spec.family = NoiseFamily::kAmBurst;
  const auto c = synthdata::gen_noise(spec);
  CHECK(a.samples != c.samples);
}

TEST_CASE("gen_noise hits the requested RMS level") {
  for (const auto family : kAllFamilies) {
    for (const std::uint64_t seed : {7ULL, 19ULL, 101ULL}) {
      synthdata::NoiseFamilySpec spec;
      spec.family = family;
      spec.variant_seed = seed;
      spec.level_dbfs = -20.0;
      const auto w = synthdata::gen_noise(spec);
      CHECK(std::abs(rms(w) - 0.1) < 1e-4);
    }
  }
}

TEST_CASE("generated noise is finite and within [-1, 1]") {
  for (const auto family : kAllFamilies) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      synthdata::NoiseFamilySpec spec;
      spec.family = family;
      spec.variant_seed = seed * 7919 + 13;
      const auto w = synthdata::gen_noise(spec);
      for (const double v : w.samples) {
        REQUIRE(std::isfinite(v));
        REQUIRE(std::abs(v) <= 1.0);
      }
    }
  }
}

TEST_CASE("spectral centroids order rumble < hum < hiss") {
  for (const std::uint64_t seed : {3ULL, 55ULL, 200ULL}) {
    synthdata::NoiseFamilySpec spec;
    spec.variant_seed = seed;
    spec.duration_s = 2.0;

    spec.family = NoiseFamily::kLowpassRumble;
    const double rumble = spectral_centroid_hz(synthdata::gen_noise(spec));
    spec.family = NoiseFamily::kTonalHum;
    const double hum = spectral_centroid_hz(synthdata::gen_noise(spec));
    spec.family = NoiseFamily::kHighpassHiss;
    const double hiss = spectral_centroid_hz(synthdata::gen_noise(spec));

    CHECK(rumble < hum);
    CHECK(hum < hiss);
    CHECK(rumble < 500.0);
    CHECK(hiss > 2500.0);
  }
}

TEST_CASE("gen_noise validates duration") {
  synthdata::NoiseFamilySpec spec;
  spec.duration_s = 0.0;
  CHECK_THROWS_AS(synthdata::gen_noise(spec), std::invalid_argument);
  spec.duration_s = -1.0;
  CHECK_THROWS_AS(synthdata::gen_noise(spec), std::invalid_argument);
}

TEST_CASE("family names round-trip") {
  for (const auto family : kAllFamilies) {
    CHECK(synthdata::family_from_name(synthdata::family_name(family)) ==
          family);
  }
  CHECK_THROWS_AS(synthdata::family_from_name("kazoo"), std::invalid_argument);
}

TEST_CASE("speech proxy is deterministic and validates duration") {
  const auto a = synthdata::gen_speech_proxy(5, 1.0);
  const auto b = synthdata::gen_speech_proxy(5, 1.0);
  CHECK(a.samples == b.samples);
  CHECK(a.size() == 16000);

  const auto c = synthdata::gen_speech_proxy(6, 1.0);
  CHECK(a.samples != c.samples);

  CHECK_THROWS_AS(synthdata::gen_speech_proxy(5, 0.4), std::invalid_argument);
}

TEST_CASE("speech proxy concentrates energy below 4 kHz") {
  for (const std::uint64_t seed : {1ULL, 22ULL, 333ULL}) {
    const auto w = synthdata::gen_speech_proxy(seed, 3.0);
    CHECK(band_energy_ratio_below_hz(w, 4000.0) > 1.0);
  }
}

TEST_CASE("speech proxy envelope modulates in the syllabic range") {
  for (const std::uint64_t seed : {2ULL, 47ULL, 1234ULL}) {
    const auto w = synthdata::gen_speech_proxy(seed, 4.0);
    const double peak = modulation_peak_hz(w);
    CHECK(peak >= 2.0);
    CHECK(peak <= 8.0);
  }
}

TEST_CASE("speech proxy stays in range with a stable level") {
  const auto w = synthdata::gen_speech_proxy(9, 3.0);
  for (const double v : w.samples) {
    REQUIRE(std::isfinite(v));
    REQUIRE(std::abs(v) <= 1.0);
  }
  CHECK(std::abs(rms(w) - std::pow(10.0, -22.0 / 20.0)) < 1e-6);
}

TEST_CASE("gen_corpus writes labeled manifests with the right counts") {
  TempDir dir("corpus");
  synthdata::CorpusConfig cfg;
  cfg.families = 2;
  cfg.variants_per_family = 3;
  cfg.speech_count = 2;
  cfg.speech_test_count = 1;
  cfg.seed = 77;

  const auto paths = synthdata::gen_corpus(dir.path().string(), cfg);

  const auto noise = audio::read_manifest(paths.noise_manifest);
  REQUIRE(noise.size() == 6);
  for (const auto& entry : noise) {
    CHECK(entry.kind == "noise");
    CHECK(!entry.family.empty());
    const auto w = audio::load_wav(entry.path);
    CHECK(w.duration_s() == doctest::Approx(entry.duration_s).epsilon(1e-9));
  }

  const auto targets = audio::read_manifest(paths.targets_manifest);
  REQUIRE(targets.size() == 6);  // full + two halves per family

  const auto speech = audio::read_manifest(paths.speech_manifest);
  REQUIRE(speech.size() == 2);
  CHECK(speech[0].kind == "speech");

  const auto speech_test = audio::read_manifest(paths.speech_test_manifest);
  REQUIRE(speech_test.size() == 1);
}

TEST_CASE("target halves concatenate to the full target") {
  TempDir dir("corpus_halves");
  synthdata::CorpusConfig cfg;
  cfg.families = 1;
  cfg.variants_per_family = 1;
  cfg.speech_count = 1;
  cfg.speech_test_count = 1;
  cfg.seed = 3;

  const auto paths = synthdata::gen_corpus(dir.path().string(), cfg);
  const auto targets = audio::read_manifest(paths.targets_manifest);
  REQUIRE(targets.size() == 3);

  const auto find = [&](const std::string& suffix) {
    for (const auto& entry : targets) {
      if (entry.id.ends_with(suffix)) return audio::load_wav(entry.path);
    }
    FAIL("missing target entry ", suffix);
    return audio::Waveform{};
  };
  const auto full = find("__target");
  const auto h1 = find("__target_h1");
  const auto h2 = find("__target_h2");

  REQUIRE(h1.size() + h2.size() == full.size());
  for (std::size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1.samples[i] == full.samples[i]);
  }
  for (std::size_t i = 0; i < h2.size(); ++i) {
    CHECK(h2.samples[i] == full.samples[h1.size() + i]);
  }
}

TEST_CASE("regenerating a corpus reproduces every byte") {
  TempDir dir_a("corpus_rep_a");
  TempDir dir_b("corpus_rep_b");
  synthdata::CorpusConfig cfg;
  cfg.families = 2;
  cfg.variants_per_family = 2;
  cfg.speech_count = 1;
  cfg.speech_test_count = 1;
  cfg.seed = 99;

  const auto pa = synthdata::gen_corpus(dir_a.path().string(), cfg);
  const auto pb = synthdata::gen_corpus(dir_b.path().string(), cfg);

  CHECK(file_bytes(pa.noise_manifest) == file_bytes(pb.noise_manifest));
  CHECK(file_bytes(pa.targets_manifest) == file_bytes(pb.targets_manifest));
  CHECK(file_bytes(pa.speech_manifest) == file_bytes(pb.speech_manifest));

  const auto noise_a = audio::read_manifest(pa.noise_manifest);
  const auto noise_b = audio::read_manifest(pb.noise_manifest);
  for (std::size_t i = 0; i < noise_a.size(); ++i) {
    CHECK(file_bytes(noise_a[i].path) == file_bytes(noise_b[i].path));
  }
}

TEST_CASE("gen_corpus validates its configuration") {
  TempDir dir("corpus_bad");
  synthdata::CorpusConfig cfg;
  cfg.families = 6;
  CHECK_THROWS_AS(synthdata::gen_corpus(dir.path().string(), cfg),
                  std::invalid_argument);
  cfg.families = 2;
  cfg.variants_per_family = 0;
  CHECK_THROWS_AS(synthdata::gen_corpus(dir.path().string(), cfg),
                  std::invalid_argument);
}
