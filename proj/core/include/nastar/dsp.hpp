// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "nastar/audio.hpp"

namespace nastar::dsp {

// Analysis configuration for one STFT resolution. The window is a periodic
// Hann of length fft_size; frames shorter than fft_size are zero-padded on
// the right. fft_size must be a power of two >= 2 and 1 <= hop <= fft_size.
struct StftConfig {
  std::size_t fft_size = 1024;
  std::size_t hop = 256;

  bool operator==(const StftConfig&) const = default;
};

// Complex one-sided spectrogram, row-major frames x bins with
// bins = fft_size/2 + 1.
struct Spectrogram {
  StftConfig config;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& at(std::size_t frame, std::size_t bin) {
    return data[frame * bins + bin];
  }
  const std::complex<double>& at(std::size_t frame, std::size_t bin) const {
    return data[frame * bins + bin];
  }
  double magnitude(std::size_t frame, std::size_t bin) const {
    return std::abs(at(frame, bin));
  }
};

// Resolutions used by the spectral reconstruction objective, plus the
// additive floor inside the log-magnitude term.
struct MultiResConfig {
  std::vector<StftConfig> resolutions{{512, 128}, {1024, 256}, {2048, 512}};
  double log_floor = 1e-7;
};

// Periodic Hann window: w[i] = 0.5 - 0.5 cos(2 pi i / n).
std::vector<double> hann_window(std::size_t n);

// In-place radix-2 FFT. Size must be a power of two. The inverse transform
// includes the 1/N scale, so fft(fft(x), inverse=true) recovers x.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Forward FFT of a real signal (length a power of two), returning the
// one-sided half spectrum of size N/2 + 1.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Short-time Fourier transform. Frame f covers samples [f*hop, f*hop+fft).
// frames = floor((size - fft)/hop) + 1 for size >= fft, else a single
// zero-padded frame. Requires a non-empty input.
Spectrogram stft(const audio::Waveform& w, const StftConfig& cfg);

// || |est| - |ref| ||_F / || |ref| ||_F over all TF bins. Errors when the
// reference is identically zero or when shapes/configs differ.
double spectral_convergence(const Spectrogram& ref, const Spectrogram& est);

// Mean over all TF bins of | log(|ref| + floor) - log(|est| + floor) |.
double log_magnitude_loss(const Spectrogram& ref, const Spectrogram& est,
                          double log_floor);

// (1/T) * sum_t |target[t] - estimate[t]|. Requires equal lengths.
double mean_abs_error(const audio::Waveform& target,
                      const audio::Waveform& estimate);

// Sum over resolutions of spectral convergence plus log-magnitude loss.
double multi_res_stft_loss(const audio::Waveform& target,
                           const audio::Waveform& estimate,
                           const MultiResConfig& cfg);

// Time-domain mean absolute error plus the multi-resolution spectral loss.
// This is the training objective for waveform reconstruction models.
double extractor_objective(const audio::Waveform& target,
                           const audio::Waveform& estimate,
                           const MultiResConfig& cfg);

// Same value as extractor_objective; additionally writes the exact gradient
// of the objective with respect to each estimate sample into `grad`
// (resized to the signal length).
double extractor_objective_with_grad(const audio::Waveform& target,
                                     const audio::Waveform& estimate,
                                     const MultiResConfig& cfg,
                                     std::vector<double>& grad);

}  // namespace nastar::dsp
