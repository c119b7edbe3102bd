// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/rng.hpp"
#include "support/stats.hpp"
#include "support/tempdir.hpp"

using namespace nastar;
using test_support::TempDir;

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

// Builds a minimal WAV file byte string from raw int16 samples.
std::string raw_wav(const std::vector<std::int16_t>& samples,
                    std::uint16_t channels = 1, std::uint32_t rate = 16000,
                    std::uint16_t bits = 16, std::uint16_t format = 1) {
  std::string s;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(samples.size() * 2);
  s.append("RIFF");
  put_u32(s, 36 + data_bytes);
  s.append("WAVE");
  s.append("fmt ");
  put_u32(s, 16);
  put_u16(s, format);
  put_u16(s, channels);
  put_u32(s, rate);
  put_u32(s, rate * channels * (bits / 8));
  put_u16(s, static_cast<std::uint16_t>(channels * (bits / 8)));
  put_u16(s, bits);
  s.append("data");
  put_u32(s, data_bytes);
  for (const auto v : samples) {
    put_u16(s, static_cast<std::uint16_t>(v));
  }
  return s;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(out.good());
}

audio::Waveform sine(std::size_t n, double amp, double freq_hz,
                     int rate = 16000) {
  audio::Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz *
                                  static_cast<double>(i) / rate);
  }
  return w;
}

audio::Waveform noise_burst(std::size_t n, double amp, std::uint64_t seed) {
  Rng rng(seed);
  audio::Waveform w;
  w.samples.resize(n);
  for (auto& v : w.samples) {
    v = amp * rng.uniform(-1.0, 1.0);
  }
  return w;
}

double measured_snr_db(const std::vector<double>& speech,
                       const std::vector<double>& scaled_noise) {
  double ps = 0.0;
  double pn = 0.0;
  for (const double v : speech) ps += v * v;
  for (const double v : scaled_noise) pn += v * v;
  return 10.0 * std::log10(ps / pn);
}

}  // namespace

TEST_CASE("int16 samples map onto the [-1, 1) grid") {
  TempDir dir("wav_scale");
  const auto path = dir.file("scale.wav");
  write_file(path, raw_wav({16384, -16384, 0, 32767}));

  const auto w = audio::load_wav(path);
  REQUIRE(w.size() == 4);
  CHECK(w.sample_rate_hz == 16000);
  CHECK(w.samples[0] == 0.5);
  CHECK(w.samples[1] == -0.5);
  CHECK(w.samples[2] == 0.0);
  CHECK(w.samples[3] == 32767.0 / 32768.0);
}

TEST_CASE("save then load round-trips grid values bitwise") {
  TempDir dir("wav_roundtrip");
  const auto path = dir.file("rt.wav");

  audio::Waveform w;
  Rng rng(5);
  w.samples.resize(2000);
  for (auto& v : w.samples) {
    // Values already on the int16 grid survive the round trip exactly.
    v = static_cast<double>(static_cast<std::int32_t>(rng.uniform_int(65536)) -
                            32768) /
        32768.0;
  }
  audio::save_wav(w, path);
  const auto r = audio::load_wav(path);
  REQUIRE(r.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(r.samples[i] == w.samples[i]);
  }
}

TEST_CASE("writer rounds half away from zero and clips out-of-range values") {
  TempDir dir("wav_round");
  const auto path = dir.file("round.wav");

  audio::Waveform w;
  w.samples = {0.5 / 32768.0, -0.5 / 32768.0, 1.5, -1.5, 1.0, -1.0};
  audio::save_wav(w, path);
  const auto r = audio::load_wav(path);
  CHECK(r.samples[0] == 1.0 / 32768.0);
  CHECK(r.samples[1] == -1.0 / 32768.0);
  CHECK(r.samples[2] == 32767.0 / 32768.0);
  CHECK(r.samples[3] == -1.0);
  CHECK(r.samples[4] == 32767.0 / 32768.0);  // +1.0 clips to the grid max
  CHECK(r.samples[5] == -1.0);
}

TEST_CASE("loader rejects unsupported files with distinct messages") {
  TempDir dir("wav_reject");

  SUBCASE("missing file") {
    CHECK_THROWS_AS(audio::load_wav(dir.file("absent.wav")),
                    std::runtime_error);
  }
  SUBCASE("stereo") {
    const auto path = dir.file("stereo.wav");
    write_file(path, raw_wav({0, 0, 0, 0}, 2));
    CHECK_THROWS_WITH_AS(audio::load_wav(path),
                         doctest::Contains("only mono"), std::runtime_error);
  }
  SUBCASE("non-PCM") {
    const auto path = dir.file("float.wav");
    write_file(path, raw_wav({0, 0}, 1, 16000, 16, 3));
    CHECK_THROWS_WITH_AS(audio::load_wav(path),
                         doctest::Contains("only PCM"), std::runtime_error);
  }
  SUBCASE("wrong bit depth") {
    const auto path = dir.file("bits.wav");
    write_file(path, raw_wav({0, 0}, 1, 16000, 8));
    CHECK_THROWS_WITH_AS(audio::load_wav(path),
                         doctest::Contains("only 16-bit"), std::runtime_error);
  }
  SUBCASE("not a wav at all") {
    const auto path = dir.file("garbage.wav");
    write_file(path, "this is not audio");
    CHECK_THROWS_AS(audio::load_wav(path), std::runtime_error);
  }
}

TEST_CASE("loader skips unknown chunks") {
  TempDir dir("wav_chunks");
  const auto path = dir.file("extra.wav");

  // LIST chunk between fmt and data.
  std::string s;
  s.append("RIFF");
  put_u32(s, 4 + 24 + 14 + 12);
  s.append("WAVE");
  s.append("fmt ");
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, 1);
  put_u32(s, 16000);
  put_u32(s, 32000);
  put_u16(s, 2);
  put_u16(s, 16);
  s.append("LIST");
  put_u32(s, 5);
  s.append("INFOX");
  s.push_back('\0');  // pad byte for odd chunk size
  s.append("data");
  put_u32(s, 4);
  put_u16(s, 16384);
  put_u16(s, static_cast<std::uint16_t>(-16384));
  write_file(path, s);

  const auto w = audio::load_wav(path);
  REQUIRE(w.size() == 2);
  CHECK(w.samples[0] == 0.5);
  CHECK(w.samples[1] == -0.5);
}

TEST_CASE("mean_power basics") {
  audio::Waveform w;
  CHECK(audio::mean_power(w) == 0.0);

  w.samples = {0.5, -0.5};
  CHECK(audio::mean_power(w) == 0.25);

  const auto s = sine(16000, 0.8, 440.0);
  CHECK(audio::mean_power(s) == doctest::Approx(0.32).epsilon(1e-3));
}

TEST_CASE("fit_length tiles short noise and crops at a uniform offset") {
  audio::Waveform abc;
  abc.samples = {1.0, 2.0, 3.0};

  Rng rng(11);
  std::set<std::size_t> offsets_seen;
  std::vector<std::size_t> counts(3, 0);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto out = audio::fit_length(abc, 7, rng);
    REQUIRE(out.size() == 7);
    // Output must read the period-3 cycle starting at some offset.
    const auto offset = static_cast<std::size_t>(out.samples[0] - 1.0);
    REQUIRE(offset < 3);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(out.samples[i] == abc.samples[(offset + i) % 3]);
    }
    offsets_seen.insert(offset);
    ++counts[offset];
  }
  CHECK(offsets_seen.size() == 3);
  const std::vector<double> probs(3, 1.0 / 3.0);
  CHECK(test_support::chi2_uniformity_pvalue(counts, probs) > 0.001);
}

TEST_CASE("fit_length with equal length copies the input") {
  const auto w = noise_burst(1000, 0.3, 17);
  Rng rng(1);
  const auto out = audio::fit_length(w, 1000, rng);
  CHECK(out.samples == w.samples);
}

TEST_CASE("fit_length crops long noise at any valid offset") {
  audio::Waveform ramp;
  ramp.samples.resize(10);
  for (std::size_t i = 0; i < 10; ++i) ramp.samples[i] = static_cast<double>(i);

  Rng rng(23);
  std::set<std::size_t> offsets;
  for (int trial = 0; trial < 500; ++trial) {
    const auto out = audio::fit_length(ramp, 4, rng);
    REQUIRE(out.size() == 4);
    const auto offset = static_cast<std::size_t>(out.samples[0]);
    REQUIRE(offset <= 6);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(out.samples[i] == ramp.samples[offset + i]);
    }
    offsets.insert(offset);
  }
  CHECK(offsets.size() == 7);
}

TEST_CASE("fit_length rejects empty noise and zero target") {
  audio::Waveform empty;
  audio::Waveform ok;
  ok.samples = {0.1};
  Rng rng(0);
  CHECK_THROWS_AS(audio::fit_length(empty, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(audio::fit_length(ok, 0, rng), std::invalid_argument);
}

TEST_CASE("mixing equal-power signals at 0 dB uses unit gain") {
  const auto speech = sine(8000, 0.5, 200.0);
  Rng rng(2);
  const auto mix = audio::mix_at_snr(speech, speech, 0.0, rng);
  CHECK(mix.gain == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < speech.size(); ++i) {
    CHECK(mix.noisy.samples[i] ==
          doctest::Approx(2.0 * speech.samples[i]).epsilon(1e-9));
  }
}

TEST_CASE("20 dB SNR scales equal-power noise by 0.1") {
  const auto speech = sine(8000, 0.5, 200.0);
  const auto noise = sine(8000, 0.5, 700.0);
  Rng rng(2);
  const auto mix = audio::mix_at_snr(speech, noise, 20.0, rng);
  CHECK(mix.gain == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("measured SNR of the mixed components recovers the request") {
  const auto speech = noise_burst(12000, 0.4, 31);
  const auto noise = noise_burst(5000, 0.2, 32);

  for (const double snr : {-10.0, -5.0, 0.0, 5.0, 10.0, 20.0}) {
    Rng rng(static_cast<std::uint64_t>(snr + 100.0));
    const auto mix = audio::mix_at_snr(speech, noise, snr, rng);
    REQUIRE(mix.noisy.size() == speech.size());

    // Recover the scaled-noise component by subtraction.
    std::vector<double> scaled(speech.size());
    for (std::size_t i = 0; i < speech.size(); ++i) {
      scaled[i] = mix.noisy.samples[i] - speech.samples[i];
    }
    CHECK(std::abs(measured_snr_db(speech.samples, scaled) - snr) < 1e-9);
  }
}

TEST_CASE("lower SNR means larger noise gain") {
  const auto speech = noise_burst(8000, 0.4, 41);
  const auto noise = noise_burst(8000, 0.3, 42);
  double prev = 0.0;
  bool first = true;
  for (const double snr : {10.0, 5.0, 0.0, -5.0, -10.0}) {
    Rng rng(9);
    const auto mix = audio::mix_at_snr(speech, noise, snr, rng);
    if (!first) {
      CHECK(mix.gain > prev);
    }
    prev = mix.gain;
    first = false;
  }
}

TEST_CASE("mix_at_snr rejects silent or mismatched inputs") {
  const auto speech = sine(4000, 0.5, 150.0);
  audio::Waveform silent;
  silent.samples.assign(4000, 0.0);
  Rng rng(1);

  CHECK_THROWS_AS(audio::mix_at_snr(silent, speech, 0.0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(audio::mix_at_snr(speech, silent, 0.0, rng),
                  std::invalid_argument);

  auto other_rate = speech;
  other_rate.sample_rate_hz = 8000;
  CHECK_THROWS_AS(audio::mix_at_snr(speech, other_rate, 0.0, rng),
                  std::invalid_argument);

  audio::Waveform empty;
  CHECK_THROWS_AS(audio::mix_at_snr(speech, empty, 0.0, rng),
                  std::invalid_argument);
}

TEST_CASE("random_segment draws valid slices across the length range") {
  audio::Waveform ramp;
  ramp.samples.resize(100);
  for (std::size_t i = 0; i < 100; ++i) ramp.samples[i] = static_cast<double>(i);

  Rng rng(77);
  std::set<std::size_t> lengths;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto seg = audio::random_segment(ramp, 10, 20, rng);
    REQUIRE(seg.size() >= 10);
    REQUIRE(seg.size() <= 20);
    const auto offset = static_cast<std::size_t>(seg.samples[0]);
    REQUIRE(offset + seg.size() <= 100);
    for (std::size_t i = 0; i < seg.size(); ++i) {
      CHECK(seg.samples[i] == ramp.samples[offset + i]);
    }
    lengths.insert(seg.size());
  }
  CHECK(lengths.size() == 11);
}

TEST_CASE("random_segment clamps max_len to the waveform length") {
  const auto w = noise_burst(50, 0.2, 3);
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto seg = audio::random_segment(w, 30, 500, rng);
    CHECK(seg.size() >= 30);
    CHECK(seg.size() <= 50);
  }
}

TEST_CASE("random_segment rejects bad ranges") {
  const auto w = noise_burst(50, 0.2, 3);
  Rng rng(4);
  CHECK_THROWS_AS(audio::random_segment(w, 0, 10, rng), std::invalid_argument);
  CHECK_THROWS_AS(audio::random_segment(w, 20, 10, rng), std::invalid_argument);
  CHECK_THROWS_AS(audio::random_segment(w, 51, 60, rng), std::invalid_argument);
}

TEST_CASE("manifest writes and reads back the same entries") {
  TempDir dir("manifest_rt");
  const auto path = dir.file("corpus.jsonl");

  std::vector<audio::ManifestEntry> entries = {
      {"n1", dir.file("n1.wav"), "noise", 2.0, "hum"},
      {"s1", dir.file("s1.wav"), "speech", 3.5, ""},
  };
  audio::write_manifest(entries, path);
  const auto back = audio::read_manifest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "n1");
  CHECK(back[0].path == entries[0].path);
  CHECK(back[0].kind == "noise");
  CHECK(back[0].duration_s == 2.0);
  CHECK(back[0].family == "hum");
  CHECK(back[1].id == "s1");
  CHECK(back[1].family.empty());
}

TEST_CASE("manifest resolves relative paths against its directory") {
  TempDir dir("manifest_rel");
  const auto path = dir.file("corpus.jsonl");
  audio::write_manifest({{"a", "clips/a.wav", "noise", 1.0, ""}}, path);
  const auto back = audio::read_manifest(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].path == (dir.path() / "clips/a.wav").string());
}

TEST_CASE("manifest validation failures") {
  TempDir dir("manifest_bad");

  SUBCASE("duplicate ids") {
    const auto path = dir.file("dup.jsonl");
    audio::write_manifest({{"x", "a.wav", "noise", 1.0, ""},
                           {"x", "b.wav", "noise", 1.0, ""}},
                          path);
    CHECK_THROWS_WITH_AS(audio::read_manifest(path),
                         doctest::Contains("duplicate id"),
                         std::runtime_error);
  }
  SUBCASE("bad kind") {
    const auto path = dir.file("kind.jsonl");
    audio::write_manifest({{"x", "a.wav", "music", 1.0, ""}}, path);
    CHECK_THROWS_WITH_AS(audio::read_manifest(path),
                         doctest::Contains("bad kind"), std::runtime_error);
  }
  SUBCASE("nonpositive duration") {
    const auto path = dir.file("dur.jsonl");
    audio::write_manifest({{"x", "a.wav", "noise", 0.0, ""}}, path);
    CHECK_THROWS_WITH_AS(audio::read_manifest(path),
                         doctest::Contains("duration_s"), std::runtime_error);
  }
  SUBCASE("malformed json line") {
    const auto path = dir.file("broken.jsonl");
    write_file(path, "{\"id\": \"x\", \n");
    CHECK_THROWS_WITH_AS(audio::read_manifest(path),
                         doctest::Contains("line 1"), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(audio::read_manifest(dir.file("absent.jsonl")),
                    std::runtime_error);
  }
}

TEST_CASE("blank lines in manifests are skipped") {
  TempDir dir("manifest_blank");
  const auto path = dir.file("blank.jsonl");
  write_file(path,
             "\n{\"id\":\"a\",\"path\":\"a.wav\",\"kind\":\"noise\","
             "\"duration_s\":1.0}\n\n");
  const auto back = audio::read_manifest(path);
  CHECK(back.size() == 1);
}
