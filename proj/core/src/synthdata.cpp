// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

namespace nastar::synthdata {

namespace {

constexpr int kRate = audio::kDefaultSampleRateHz;
constexpr double kHumF0 = 150.0;  // family-fixed fundamental
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// One-pole lowpass; fc in Hz. Applied in place.
void lowpass(std::vector<double>& x, double fc) {
  const double a = 1.0 - std::exp(-kTwoPi * fc / kRate);
  double state = 0.0;
  for (auto& v : x) {
    state += a * (v - state);
    v = state;
  }
}

// One-pole highpass via complementary lowpass.
void highpass(std::vector<double>& x, double fc) {
  const double a = 1.0 - std::exp(-kTwoPi * fc / kRate);
  double state = 0.0;
  for (auto& v : x) {
    state += a * (v - state);
    v -= state;
  }
}

std::vector<double> white(std::size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) {
    v = rng.normal();
  }
  return x;
}

void normalize_rms(std::vector<double>& x, double target_rms) {
  double acc = 0.0;
  for (const double v : x) {
    acc += v * v;
  }
  const double rms = std::sqrt(acc / static_cast<double>(x.size()));
  if (rms == 0.0) {
    throw std::runtime_error("normalize_rms: silent signal");
  }
  const double scale = target_rms / rms;
  for (auto& v : x) {
    v *= scale;
  }
}

std::vector<double> gen_lowpass_rumble(std::size_t n, Rng& rng) {
  auto x = white(n, rng);
  const double fc = rng.uniform(70.0, 160.0);
  lowpass(x, fc);
  lowpass(x, fc);
  lowpass(x, 1.6 * fc);
  highpass(x, 25.0);
  // Slow level drift gives each variant a distinct envelope texture.
  const double lfo_hz = rng.uniform(0.2, 0.5);
  const double lfo_phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] *= 1.0 + 0.2 * std::sin(kTwoPi * lfo_hz * i / kRate + lfo_phase);
  }
  return x;
}

std::vector<double> gen_highpass_hiss(std::size_t n, Rng& rng) {
  auto x = white(n, rng);
  const double fc = rng.uniform(2500.0, 4000.0);
  highpass(x, fc);
  highpass(x, 0.8 * fc);
  return x;
}

std::vector<double> gen_tonal_hum(std::size_t n, Rng& rng) {
  constexpr int kPartials = 12;
  double amp[kPartials];
  double phase[kPartials];
  const double rolloff = rng.uniform(0.8, 1.5);
  for (int k = 0; k < kPartials; ++k) {
    amp[k] = std::pow(static_cast<double>(k + 1), -rolloff) *
             rng.uniform(0.6, 1.0);
    phase[k] = rng.uniform(0.0, kTwoPi);
  }
  const double lfo_hz = rng.uniform(0.2, 0.6);
  const double lfo_phase = rng.uniform(0.0, kTwoPi);

  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kRate;
    double s = 0.0;
    for (int k = 0; k < kPartials; ++k) {
      s += amp[k] * std::sin(kTwoPi * kHumF0 * (k + 1) * t + phase[k]);
    }
    x[i] = s * (1.0 + 0.1 * std::sin(kTwoPi * lfo_hz * t + lfo_phase));
  }
  // Faint broadband floor keeps the signal from being exactly periodic.
  auto floor_noise = white(n, rng);
  lowpass(floor_noise, 1000.0);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] += 0.01 * floor_noise[i];
  }
  return x;
}

std::vector<double> gen_am_burst(std::size_t n, Rng& rng) {
  auto band = white(n, rng);
  auto low = band;
  lowpass(band, 2200.0);
  lowpass(low, 700.0);
  for (std::size_t i = 0; i < n; ++i) {
    band[i] -= low[i];
  }
  // Soft-limit at three sigma so rare gaussian tails cannot dominate the
  // peak once the on/off envelope lowers the RMS.
  double acc = 0.0;
  for (const double v : band) {
    acc += v * v;
  }
  const double limit = 3.0 * std::sqrt(acc / static_cast<double>(n));
  for (auto& v : band) {
    v = limit * std::tanh(v / limit);
  }

  const double am_hz = rng.uniform(1.5, 3.5);
  const double am_phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double gate =
        std::max(0.0, std::sin(kTwoPi * am_hz * i / kRate + am_phase));
    band[i] *= 0.12 + 0.88 * std::pow(gate, 1.5);
  }
  return band;
}

std::vector<double> gen_impulsive_clicks(std::size_t n, Rng& rng) {
  std::vector<double> x(n, 0.0);
  const double rate_hz = rng.uniform(22.0, 30.0);
  const auto clicks = static_cast<std::size_t>(std::max(
      8.0, std::round(rate_hz * static_cast<double>(n) / kRate)));
  const double ring_hz = rng.uniform(2200.0, 3400.0);
  const double tau_s = rng.uniform(0.004, 0.006);
  const auto ring_len = static_cast<std::size_t>(6.0 * tau_s * kRate);

  // One click per time slot with jitter confined to the slot head, so
  // rings decay before the next click and peaks never stack.
  const std::size_t slot = n / clicks;
  for (std::size_t c = 0; c < clicks; ++c) {
    const std::size_t jitter = std::max<std::size_t>(1, (slot * 3) / 5);
    const std::size_t pos = c * slot + rng.uniform_int(jitter);
    const double amp =
        rng.uniform(0.7, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    for (std::size_t i = 0; i < ring_len && pos + i < n; ++i) {
      const double t = static_cast<double>(i) / kRate;
      x[pos + i] += amp * std::exp(-t / tau_s) * std::sin(kTwoPi * ring_hz * t);
    }
  }
  // Low floor so arbitrary crops of the signal are never silent.
  auto floor_noise = white(n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] += 0.006 * floor_noise[i];
  }
  return x;
}

}  // namespace

const char* family_name(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::kLowpassRumble:
      return "lowpass_rumble";
    case NoiseFamily::kHighpassHiss:
      return "highpass_hiss";
    case NoiseFamily::kTonalHum:
      return "tonal_hum";
    case NoiseFamily::kAmBurst:
      return "am_burst";
    case NoiseFamily::kImpulsiveClicks:
      return "impulsive_clicks";
  }
  throw std::invalid_argument("family_name: unknown family");
}

NoiseFamily family_from_name(const std::string& name) {
  for (int i = 0; i < kFamilyCount; ++i) {
    const auto family = static_cast<NoiseFamily>(i);
    if (name == family_name(family)) {
      return family;
    }
  }
  throw std::invalid_argument("family_from_name: unknown family '" + name +
                              "'");
}

audio::Waveform gen_noise(const NoiseFamilySpec& spec) {
  if (!(spec.duration_s > 0.0)) {
    throw std::invalid_argument("gen_noise: duration_s must be positive");
  }
  const auto n =
      static_cast<std::size_t>(std::llround(spec.duration_s * kRate));
  if (n == 0) {
    throw std::invalid_argument("gen_noise: duration too short");
  }
  // Folding the family into the stream id makes equal variant seeds
  // independent across families.
  Rng rng = Rng(spec.variant_seed)
                .fork(static_cast<std::uint64_t>(spec.family) + 1);

  std::vector<double> x;
  switch (spec.family) {
    case NoiseFamily::kLowpassRumble:
      x = gen_lowpass_rumble(n, rng);
      break;
    case NoiseFamily::kHighpassHiss:
      x = gen_highpass_hiss(n, rng);
      break;
    case NoiseFamily::kTonalHum:
      x = gen_tonal_hum(n, rng);
      break;
    case NoiseFamily::kAmBurst:
      x = gen_am_burst(n, rng);
      break;
    case NoiseFamily::kImpulsiveClicks:
      x = gen_impulsive_clicks(n, rng);
      break;
  }

  normalize_rms(x, std::pow(10.0, spec.level_dbfs / 20.0));

  audio::Waveform w;
  w.sample_rate_hz = kRate;
  w.samples = std::move(x);
  return w;
}

audio::Waveform gen_speech_proxy(std::uint64_t seed, double duration_s) {
  if (!(duration_s >= 0.5)) {
    throw std::invalid_argument("gen_speech_proxy: duration_s must be >= 0.5");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kRate));
  Rng rng = Rng(seed).fork(777);

  constexpr int kHarmonics = 40;
  constexpr std::size_t kBlock = 160;  // 10 ms control rate
  constexpr double kMaxHarmonicHz = 3800.0;

  double f0 = rng.uniform(110.0, 220.0);
  double formant1 = rng.uniform(350.0, 900.0);
  double formant2 = rng.uniform(1000.0, 2400.0);
  const double syllable_hz = rng.uniform(3.0, 5.0);
  const double syllable_phase = rng.uniform(0.0, kTwoPi);

  auto breath = white(n, rng);
  lowpass(breath, 3000.0);

  std::vector<double> x(n, 0.0);
  std::vector<double> phase(kHarmonics, 0.0);
  std::vector<double> gain(kHarmonics, 0.0);
  for (int k = 0; k < kHarmonics; ++k) {
    phase[k] = rng.uniform(0.0, kTwoPi);
  }

  for (std::size_t start = 0; start < n; start += kBlock) {
    // Slow random walks for the source and the spectral envelope.
    f0 = std::clamp(f0 + 4.0 * rng.normal(), 90.0, 300.0);
    formant1 = std::clamp(formant1 + 15.0 * rng.normal(), 300.0, 950.0);
    formant2 = std::clamp(formant2 + 30.0 * rng.normal(), 950.0, 2500.0);

    for (int k = 0; k < kHarmonics; ++k) {
      const double freq = f0 * (k + 1);
      if (freq >= kMaxHarmonicHz) {
        gain[k] = 0.0;
        continue;
      }
      const double d1 = (freq - formant1) / 120.0;
      const double d2 = (freq - formant2) / 180.0;
      const double envelope = 0.15 + std::exp(-0.5 * d1 * d1) +
                              0.8 * std::exp(-0.5 * d2 * d2);
      gain[k] = envelope / (k + 1);
    }

    const std::size_t stop = std::min(n, start + kBlock);
    for (std::size_t i = start; i < stop; ++i) {
      double s = 0.0;
      for (int k = 0; k < kHarmonics; ++k) {
        if (gain[k] == 0.0) {
          continue;
        }
        s += gain[k] * std::sin(phase[k]);
        phase[k] += kTwoPi * f0 * (k + 1) / kRate;
      }
      const double t = static_cast<double>(i) / kRate;
      const double gate =
          0.5 + 0.5 * std::sin(kTwoPi * syllable_hz * t + syllable_phase);
      const double env = 0.05 + 0.95 * gate * gate;
      x[i] = s * env + 0.02 * breath[i] * env;
    }
  }

  normalize_rms(x, std::pow(10.0, -22.0 / 20.0));

  audio::Waveform w;
  w.sample_rate_hz = kRate;
  w.samples = std::move(x);
  return w;
}

CorpusPaths gen_corpus(const std::string& out_dir, const CorpusConfig& cfg) {
  if (cfg.families < 1 || cfg.families > kFamilyCount) {
    throw std::invalid_argument("gen_corpus: families must be in [1, 5]");
  }
  if (cfg.variants_per_family < 1 || cfg.speech_count < 1 ||
      cfg.speech_test_count < 1) {
    throw std::invalid_argument("gen_corpus: counts must be positive");
  }

  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "noise");
  fs::create_directories(root / "targets");
  fs::create_directories(root / "speech");

  Rng corpus_rng(cfg.seed);

  const auto two_digits = [](int v) {
    return (v < 10 ? "0" : "") + std::to_string(v);
  };

  std::vector<audio::ManifestEntry> noise_entries;
  std::vector<audio::ManifestEntry> target_entries;
  for (int f = 0; f < cfg.families; ++f) {
    const auto family = static_cast<NoiseFamily>(f);
    const std::string fname = family_name(family);
    Rng family_rng = corpus_rng.fork(1000 + static_cast<std::uint64_t>(f));

    for (int v = 0; v < cfg.variants_per_family; ++v) {
      NoiseFamilySpec spec;
      spec.family = family;
      spec.variant_seed = family_rng.next_u64();
      spec.duration_s = 1.5 + family_rng.uniform() * 1.0;
      const auto wave = gen_noise(spec);

      const std::string rel = "noise/" + fname + "_v" + two_digits(v) + ".wav";
      audio::save_wav(wave, (root / rel).string());
      noise_entries.push_back({fname + "__v" + two_digits(v), rel, "noise",
                               wave.duration_s(), fname});
    }

    // The designated target: one long signal per family, stored whole and
    // as two halves. The first half contaminates queries; the second half
    // contaminates evaluation mixtures.
    NoiseFamilySpec target_spec;
    target_spec.family = family;
    target_spec.variant_seed = family_rng.next_u64();
    target_spec.duration_s = 4.0;
    const auto target = gen_noise(target_spec);
    const std::size_t half = target.size() / 2;

    audio::Waveform h1;
    h1.sample_rate_hz = target.sample_rate_hz;
    h1.samples.assign(target.samples.begin(),
                      target.samples.begin() + static_cast<std::ptrdiff_t>(half));
    audio::Waveform h2;
    h2.sample_rate_hz = target.sample_rate_hz;
    h2.samples.assign(target.samples.begin() + static_cast<std::ptrdiff_t>(half),
                      target.samples.end());

    const std::string rel_full = "targets/" + fname + "_target.wav";
    const std::string rel_h1 = "targets/" + fname + "_target_h1.wav";
    const std::string rel_h2 = "targets/" + fname + "_target_h2.wav";
    audio::save_wav(target, (root / rel_full).string());
    audio::save_wav(h1, (root / rel_h1).string());
    audio::save_wav(h2, (root / rel_h2).string());
    target_entries.push_back(
        {fname + "__target", rel_full, "noise", target.duration_s(), fname});
    target_entries.push_back(
        {fname + "__target_h1", rel_h1, "noise", h1.duration_s(), fname});
    target_entries.push_back(
        {fname + "__target_h2", rel_h2, "noise", h2.duration_s(), fname});
  }

  std::vector<audio::ManifestEntry> speech_entries;
  Rng speech_rng = corpus_rng.fork(2000);
  for (int i = 0; i < cfg.speech_count; ++i) {
    const double dur = 3.0 + speech_rng.uniform() * 2.0;
    const auto wave = gen_speech_proxy(speech_rng.next_u64(), dur);
    const std::string rel = "speech/train_" + two_digits(i) + ".wav";
    audio::save_wav(wave, (root / rel).string());
    speech_entries.push_back(
        {"speech__train" + two_digits(i), rel, "speech", wave.duration_s(), ""});
  }

  std::vector<audio::ManifestEntry> speech_test_entries;
  Rng test_rng = corpus_rng.fork(3000);
  for (int i = 0; i < cfg.speech_test_count; ++i) {
    const double dur = 3.5 + test_rng.uniform() * 1.0;
    const auto wave = gen_speech_proxy(test_rng.next_u64(), dur);
    const std::string rel = "speech/test_" + two_digits(i) + ".wav";
    audio::save_wav(wave, (root / rel).string());
    speech_test_entries.push_back(
        {"speech__test" + two_digits(i), rel, "speech", wave.duration_s(), ""});
  }

  CorpusPaths paths;
  paths.noise_manifest = (root / "noise.jsonl").string();
  paths.targets_manifest = (root / "targets.jsonl").string();
  paths.speech_manifest = (root / "speech.jsonl").string();
  paths.speech_test_manifest = (root / "speech_test.jsonl").string();
  audio::write_manifest(noise_entries, paths.noise_manifest);
  audio::write_manifest(target_entries, paths.targets_manifest);
  audio::write_manifest(speech_entries, paths.speech_manifest);
  audio::write_manifest(speech_test_entries, paths.speech_test_manifest);
  return paths;
}

}  // namespace nastar::synthdata
