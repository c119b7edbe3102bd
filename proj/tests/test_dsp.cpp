// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/dsp.hpp"
#include "nastar/rng.hpp"

using namespace nastar;

namespace {

// O(N^2) reference transform used as the oracle for the fast paths.
std::vector<std::complex<double>> naive_dft(
    const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double angle = -2.0 * std::numbers::pi *
                           static_cast<double>(i * k) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

audio::Waveform random_wave(std::size_t n, std::uint64_t seed,
                            double amp = 0.5) {
  Rng rng(seed);
  audio::Waveform w;
  w.samples.resize(n);
  for (auto& v : w.samples) {
    v = amp * rng.uniform(-1.0, 1.0);
  }
  return w;
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

}  // namespace

TEST_CASE("fft matches the naive DFT on random inputs") {
  for (const std::size_t n : {std::size_t{16}, std::size_t{256},
                              std::size_t{2048}}) {
    Rng rng(n);
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) {
      v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    }
    const auto expected = naive_dft(x);
    auto got = x;
    dsp::fft(got, false);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(std::abs(got[k] - expected[k]) < 1e-9);
    }
  }
}

TEST_CASE("inverse fft undoes the forward transform") {
  Rng rng(3);
  std::vector<std::complex<double>> x(512);
  for (auto& v : x) {
    v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  }
  auto y = x;
  dsp::fft(y, false);
  dsp::fft(y, true);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(y[i] - x[i]) < 1e-12);
  }
}

TEST_CASE("fft preserves energy (Parseval)") {
  Rng rng(9);
  std::vector<std::complex<double>> x(1024);
  double time_energy = 0.0;
  for (auto& v : x) {
    v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    time_energy += std::norm(v);
  }
  auto y = x;
  dsp::fft(y, false);
  double freq_energy = 0.0;
  for (const auto& v : y) {
    freq_energy += std::norm(v);
  }
  CHECK(freq_energy / static_cast<double>(x.size()) ==
        doctest::Approx(time_energy).epsilon(1e-12));
}

TEST_CASE("fft rejects non-power-of-two sizes") {
  std::vector<std::complex<double>> x(48);
  CHECK_THROWS_AS(dsp::fft(x, false), std::invalid_argument);
}

TEST_CASE("rfft matches the naive DFT half spectrum") {
  for (const std::size_t n : {std::size_t{2}, std::size_t{16}, std::size_t{512},
                              std::size_t{2048}}) {
    Rng rng(n + 1);
    std::vector<double> x(n);
    std::vector<std::complex<double>> xc(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-1.0, 1.0);
      xc[i] = {x[i], 0.0};
    }
    const auto expected = naive_dft(xc);
    const auto got = dsp::rfft(x);
    REQUIRE(got.size() == n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
      CHECK(std::abs(got[k] - expected[k]) < 1e-9);
    }
  }
}

TEST_CASE("hann window is periodic with unit peak") {
  const auto w = dsp::hann_window(512);
  CHECK(w[0] == 0.0);
  CHECK(w[256] == doctest::Approx(1.0).epsilon(1e-15));
  for (std::size_t i = 1; i < 512; ++i) {
    CHECK(w[i] == doctest::Approx(w[512 - i]).epsilon(1e-12));
    CHECK(w[i] >= 0.0);
    CHECK(w[i] <= 1.0);
  }
}

TEST_CASE("stft produces the documented frame count and bin count") {
  const auto w = random_wave(16000, 5);
  const dsp::Spectrogram spec = dsp::stft(w, {512, 128});
  CHECK(spec.frames == 122);  // (16000 - 512) / 128 + 1
  CHECK(spec.bins == 257);

  const auto short_w = random_wave(400, 6);
  const dsp::Spectrogram padded = dsp::stft(short_w, {512, 128});
  CHECK(padded.frames == 1);
  CHECK(padded.bins == 257);
}

TEST_CASE("stft frame zero matches a windowed rfft of the head") {
  const auto w = random_wave(2000, 7);
  const dsp::StftConfig cfg{256, 64};
  const auto spec = dsp::stft(w, cfg);

  const auto window = dsp::hann_window(256);
  std::vector<double> frame(256);
  for (std::size_t i = 0; i < 256; ++i) {
    frame[i] = w.samples[i] * window[i];
  }
  const auto expected = dsp::rfft(frame);
  for (std::size_t b = 0; b < spec.bins; ++b) {
    CHECK(std::abs(spec.at(0, b) - expected[b]) < 1e-12);
  }
}

TEST_CASE("a zero-padded short signal keeps its energy in frame zero") {
  const auto w = random_wave(300, 8);
  const dsp::StftConfig cfg{512, 128};
  const auto spec = dsp::stft(w, cfg);

  const auto window = dsp::hann_window(512);
  std::vector<double> frame(512, 0.0);
  for (std::size_t i = 0; i < 300; ++i) {
    frame[i] = w.samples[i] * window[i];
  }
  const auto expected = dsp::rfft(frame);
  for (std::size_t b = 0; b < spec.bins; ++b) {
    CHECK(std::abs(spec.at(0, b) - expected[b]) < 1e-12);
  }
}

TEST_CASE("a pure tone peaks at its own bin") {
  // 1000 Hz at 16 kHz with a 512 FFT lands exactly on bin 32.
  const auto w = sine(16000, 0.7, 1000.0);
  const auto spec = dsp::stft(w, {512, 128});
  const std::size_t mid = spec.frames / 2;
  std::size_t peak = 0;
  double best = -1.0;
  for (std::size_t b = 0; b < spec.bins; ++b) {
    if (spec.magnitude(mid, b) > best) {
      best = spec.magnitude(mid, b);
      peak = b;
    }
  }
  CHECK(peak == 32);
}

TEST_CASE("stft validates its configuration") {
  const auto w = random_wave(1000, 9);
  CHECK_THROWS_AS(dsp::stft(w, {500, 128}), std::invalid_argument);  // not pow2
  CHECK_THROWS_AS(dsp::stft(w, {512, 0}), std::invalid_argument);
  CHECK_THROWS_AS(dsp::stft(w, {512, 640}), std::invalid_argument);
  audio::Waveform empty;
  CHECK_THROWS_AS(dsp::stft(empty, {512, 128}), std::invalid_argument);
}

TEST_CASE("spectral convergence hits its landmark values") {
  const auto y = random_wave(4000, 10);
  const auto ref = dsp::stft(y, {512, 128});

  SUBCASE("identical estimate gives zero") {
    CHECK(dsp::spectral_convergence(ref, ref) == 0.0);
  }
  SUBCASE("silent estimate gives exactly one") {
    audio::Waveform zero;
    zero.samples.assign(4000, 0.0);
    const auto est = dsp::stft(zero, {512, 128});
    CHECK(dsp::spectral_convergence(ref, est) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("zero reference is an error") {
    audio::Waveform zero;
    zero.samples.assign(4000, 0.0);
    const auto zref = dsp::stft(zero, {512, 128});
    CHECK_THROWS_AS(dsp::spectral_convergence(zref, ref),
                    std::invalid_argument);
  }
  SUBCASE("mismatched configs are an error") {
    const auto other = dsp::stft(y, {1024, 256});
    CHECK_THROWS_AS(dsp::spectral_convergence(ref, other),
                    std::invalid_argument);
  }
}

TEST_CASE("log magnitude loss is zero on identical inputs and finite on silence") {
  const auto y = random_wave(4000, 11);
  const auto ref = dsp::stft(y, {512, 128});
  CHECK(dsp::log_magnitude_loss(ref, ref, 1e-7) == 0.0);

  audio::Waveform zero;
  zero.samples.assign(4000, 0.0);
  const auto est = dsp::stft(zero, {512, 128});
  const double loss = dsp::log_magnitude_loss(ref, est, 1e-7);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);

  CHECK_THROWS_AS(dsp::log_magnitude_loss(ref, est, 0.0),
                  std::invalid_argument);
}

TEST_CASE("mean absolute error of a constant offset is the offset") {
  auto y = random_wave(3000, 12);
  auto yh = y;
  for (auto& v : yh.samples) {
    v += 0.25;
  }
  CHECK(dsp::mean_abs_error(y, yh) == doctest::Approx(0.25).epsilon(1e-15));

  auto shorter = y;
  shorter.samples.pop_back();
  CHECK_THROWS_AS(dsp::mean_abs_error(y, shorter), std::invalid_argument);
}

TEST_CASE("multi-resolution loss decomposes into its per-resolution terms") {
  const auto y = random_wave(6000, 13);
  const auto yh = random_wave(6000, 14);
  const dsp::MultiResConfig cfg;  // three default resolutions

  double manual = 0.0;
  for (const auto& res : cfg.resolutions) {
    const auto ref = dsp::stft(y, res);
    const auto est = dsp::stft(yh, res);
    manual += dsp::spectral_convergence(ref, est);
    manual += dsp::log_magnitude_loss(ref, est, cfg.log_floor);
  }
  CHECK(std::abs(dsp::multi_res_stft_loss(y, yh, cfg) - manual) < 1e-12);
}

TEST_CASE("objective of a signal against itself is exactly zero") {
  const auto y = random_wave(6000, 15);
  const dsp::MultiResConfig cfg;
  CHECK(dsp::extractor_objective(y, y, cfg) == 0.0);
}

TEST_CASE("objective equals time term plus spectral term") {
  const auto y = random_wave(5000, 16);
  const auto yh = random_wave(5000, 17);
  const dsp::MultiResConfig cfg;
  const double expected =
      dsp::mean_abs_error(y, yh) + dsp::multi_res_stft_loss(y, yh, cfg);
  CHECK(std::abs(dsp::extractor_objective(y, yh, cfg) - expected) < 1e-12);
}

TEST_CASE("gradient-bearing objective returns the same value") {
  const auto y = random_wave(3000, 18);
  const auto yh = random_wave(3000, 19);
  dsp::MultiResConfig cfg;
  cfg.resolutions = {{256, 64}, {512, 128}};
  std::vector<double> grad;
  const double v = dsp::extractor_objective_with_grad(y, yh, cfg, grad);
  CHECK(std::abs(v - dsp::extractor_objective(y, yh, cfg)) < 1e-12);
  CHECK(grad.size() == 3000);
}

TEST_CASE("analytic sample gradient matches central finite differences") {
  dsp::MultiResConfig cfg;
  cfg.resolutions = {{64, 16}, {128, 32}};

  const auto run_check = [&cfg](std::size_t len, std::uint64_t seed) {
    const auto y = random_wave(len, seed);
    auto yh = random_wave(len, seed + 1);

    std::vector<double> grad;
    dsp::extractor_objective_with_grad(y, yh, cfg, grad);

    Rng pick(seed + 2);
    const double h = 1e-6;
    for (int trial = 0; trial < 40; ++trial) {
      const auto t = static_cast<std::size_t>(pick.uniform_int(len));
      const double saved = yh.samples[t];
      yh.samples[t] = saved + h;
      const double up = dsp::extractor_objective(y, yh, cfg);
      yh.samples[t] = saved - h;
      const double down = dsp::extractor_objective(y, yh, cfg);
      yh.samples[t] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double err = std::abs(grad[t] - fd) /
                         std::max(1e-8, std::abs(fd));
      CHECK(err < 1e-4);
    }
  };

  SUBCASE("plain length") { run_check(700, 21); }
  SUBCASE("length shorter than the largest fft (padding path)") {
    run_check(100, 23);
  }
}
