// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace nastar::dsp {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void validate_config(const StftConfig& cfg) {
  if (!is_pow2(cfg.fft_size) || cfg.fft_size < 2) {
    throw std::invalid_argument("StftConfig: fft_size must be a power of two >= 2");
  }
  if (cfg.hop == 0 || cfg.hop > cfg.fft_size) {
    throw std::invalid_argument("StftConfig: hop must be in [1, fft_size]");
  }
}

// Unit roots e^{-2 pi i j / n} for j < n/2, cached per size. The cache is
// guarded so concurrent callers stay safe; map nodes never move, so the
// returned reference stays valid after the lock is released.
const std::vector<std::complex<double>>& twiddles(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::vector<std::complex<double>>> cache;
  std::scoped_lock lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::vector<std::complex<double>> tw(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
      const double angle =
          -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      tw[j] = {std::cos(angle), std::sin(angle)};
    }
    it = cache.emplace(n, std::move(tw)).first;
  }
  return it->second;
}

// Radix-2 Cooley-Tukey without scaling. sign = -1 forward, +1 inverse.
void fft_dir(std::complex<double>* a, std::size_t n, int sign) {
  if (n < 2) {
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j ^= bit;
    if (i < j) {
      std::swap(a[i], a[j]);
    }
  }
  const auto& tw = twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len >> 1;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        std::complex<double> w = tw[j * step];
        if (sign > 0) {
          w = std::conj(w);
        }
        const std::complex<double> u = a[start + j];
        const std::complex<double> v = a[start + j + half] * w;
        a[start + j] = u + v;
        a[start + j + half] = u - v;
      }
    }
  }
}

double sign_of(double x) {
  if (x > 0.0) return 1.0;
  if (x < 0.0) return -1.0;
  return 0.0;
}

void check_same_shape(const Spectrogram& ref, const Spectrogram& est,
                      const char* where) {
  if (ref.config != est.config || ref.frames != est.frames ||
      ref.bins != est.bins) {
    throw std::invalid_argument(std::string(where) +
                                ": spectrogram shapes/configs differ");
  }
  if (ref.frames == 0 || ref.bins == 0) {
    throw std::invalid_argument(std::string(where) + ": empty spectrogram");
  }
}

void check_same_signal_shape(const audio::Waveform& a, const audio::Waveform& b,
                             const char* where) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(where) + ": length mismatch");
  }
  if (a.sample_rate_hz != b.sample_rate_hz) {
    throw std::invalid_argument(std::string(where) + ": sample rate mismatch");
  }
  if (a.empty()) {
    throw std::invalid_argument(std::string(where) + ": empty signal");
  }
}

void validate_multi_res(const MultiResConfig& cfg) {
  if (cfg.resolutions.empty()) {
    throw std::invalid_argument("MultiResConfig: needs at least one resolution");
  }
  for (const auto& res : cfg.resolutions) {
    validate_config(res);
  }
  if (!(cfg.log_floor > 0.0)) {
    throw std::invalid_argument("MultiResConfig: log_floor must be positive");
  }
}

}  // namespace

std::vector<double> hann_window(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("hann_window: size must be positive");
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  if (!is_pow2(a.size())) {
    throw std::invalid_argument("fft: size must be a power of two");
  }
  fft_dir(a.data(), a.size(), inverse ? +1 : -1);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) {
      v *= scale;
    }
  }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (!is_pow2(n) || n < 2) {
    throw std::invalid_argument("rfft: size must be a power of two >= 2");
  }
  if (n == 2) {
    return {{x[0] + x[1], 0.0}, {x[0] - x[1], 0.0}};
  }
  const std::size_t m = n / 2;
  // Pack adjacent reals into complex pairs and take a half-size FFT.
  std::vector<std::complex<double>> z(m);
  for (std::size_t i = 0; i < m; ++i) {
    z[i] = {x[2 * i], x[2 * i + 1]};
  }
  fft_dir(z.data(), m, -1);

  const auto& tw = twiddles(n);
  std::vector<std::complex<double>> out(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    const std::complex<double> zk = (k == m) ? z[0] : z[k];
    const std::size_t mirror = (m - (k % m)) % m;
    const std::complex<double> zc = std::conj(z[mirror]);
    const std::complex<double> even = 0.5 * (zk + zc);
    const std::complex<double> odd =
        std::complex<double>(0.0, -0.5) * (zk - zc);
    const std::complex<double> wk = (k == m) ? std::complex<double>(-1.0, 0.0)
                                             : tw[k];
    out[k] = even + wk * odd;
  }
  return out;
}

Spectrogram stft(const audio::Waveform& w, const StftConfig& cfg) {
  validate_config(cfg);
  if (w.empty()) {
    throw std::invalid_argument("stft: empty input");
  }
  const std::size_t n = cfg.fft_size;
  Spectrogram spec;
  spec.config = cfg;
  spec.bins = n / 2 + 1;
  spec.frames = w.size() < n ? 1 : (w.size() - n) / cfg.hop + 1;
  spec.data.resize(spec.frames * spec.bins);

  const std::vector<double> window = hann_window(n);
  std::vector<double> frame(n);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const std::size_t start = f * cfg.hop;
    const std::size_t avail = std::min(n, w.size() - start);
    for (std::size_t i = 0; i < avail; ++i) {
      frame[i] = w.samples[start + i] * window[i];
    }
    std::fill(frame.begin() + static_cast<std::ptrdiff_t>(avail), frame.end(),
              0.0);
    const auto bins = rfft(frame);
    std::copy(bins.begin(), bins.end(), spec.data.begin() + static_cast<std::ptrdiff_t>(f * spec.bins));
  }
  return spec;
}

double spectral_convergence(const Spectrogram& ref, const Spectrogram& est) {
  check_same_shape(ref, est, "spectral_convergence");
  double diff_sq = 0.0;
  double ref_sq = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const double r = std::abs(ref.data[i]);
    const double e = std::abs(est.data[i]);
    diff_sq += (e - r) * (e - r);
    ref_sq += r * r;
  }
  if (ref_sq == 0.0) {
    throw std::invalid_argument("spectral_convergence: zero reference");
  }
  return std::sqrt(diff_sq) / std::sqrt(ref_sq);
}

double log_magnitude_loss(const Spectrogram& ref, const Spectrogram& est,
                          double log_floor) {
  check_same_shape(ref, est, "log_magnitude_loss");
  if (!(log_floor > 0.0)) {
    throw std::invalid_argument("log_magnitude_loss: log_floor must be positive");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    acc += std::abs(std::log(std::abs(ref.data[i]) + log_floor) -
                    std::log(std::abs(est.data[i]) + log_floor));
  }
  return acc / static_cast<double>(ref.data.size());
}

double mean_abs_error(const audio::Waveform& target,
                      const audio::Waveform& estimate) {
  check_same_signal_shape(target, estimate, "mean_abs_error");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    acc += std::abs(target.samples[i] - estimate.samples[i]);
  }
  return acc / static_cast<double>(target.size());
}

double multi_res_stft_loss(const audio::Waveform& target,
                           const audio::Waveform& estimate,
                           const MultiResConfig& cfg) {
  check_same_signal_shape(target, estimate, "multi_res_stft_loss");
  validate_multi_res(cfg);
  double total = 0.0;
  for (const auto& res : cfg.resolutions) {
    const Spectrogram ref = stft(target, res);
    const Spectrogram est = stft(estimate, res);
    total += spectral_convergence(ref, est);
    total += log_magnitude_loss(ref, est, cfg.log_floor);
  }
  return total;
}

double extractor_objective(const audio::Waveform& target,
                           const audio::Waveform& estimate,
                           const MultiResConfig& cfg) {
  return mean_abs_error(target, estimate) +
         multi_res_stft_loss(target, estimate, cfg);
}

double extractor_objective_with_grad(const audio::Waveform& target,
                                     const audio::Waveform& estimate,
                                     const MultiResConfig& cfg,
                                     std::vector<double>& grad) {
  check_same_signal_shape(target, estimate, "extractor_objective_with_grad");
  validate_multi_res(cfg);

  const std::size_t t_len = target.size();
  grad.assign(t_len, 0.0);

  double mae = 0.0;
  for (std::size_t i = 0; i < t_len; ++i) {
    const double diff = estimate.samples[i] - target.samples[i];
    mae += std::abs(diff);
    grad[i] = sign_of(diff) / static_cast<double>(t_len);
  }
  mae /= static_cast<double>(t_len);

  double spectral = 0.0;
  for (const auto& res : cfg.resolutions) {
    const Spectrogram ref = stft(target, res);
    const Spectrogram est = stft(estimate, res);
    const std::size_t cells = ref.data.size();

    std::vector<double> mag_ref(cells);
    std::vector<double> mag_est(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      mag_ref[i] = std::abs(ref.data[i]);
      mag_est[i] = std::abs(est.data[i]);
    }

    double diff_sq = 0.0;
    double ref_sq = 0.0;
    double log_acc = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      const double d = mag_est[i] - mag_ref[i];
      diff_sq += d * d;
      ref_sq += mag_ref[i] * mag_ref[i];
      log_acc += std::abs(std::log(mag_ref[i] + cfg.log_floor) -
                          std::log(mag_est[i] + cfg.log_floor));
    }
    if (ref_sq == 0.0) {
      throw std::invalid_argument("extractor_objective_with_grad: zero reference");
    }
    const double diff_norm = std::sqrt(diff_sq);
    const double ref_norm = std::sqrt(ref_sq);
    spectral += diff_norm / ref_norm;
    spectral += log_acc / static_cast<double>(cells);

    // dLoss/d|est| per cell, combining both spectral terms. The spectral
    // convergence term vanishes at its minimum (diff_norm == 0).
    const double n_cells = static_cast<double>(cells);
    const std::vector<double> window = hann_window(res.fft_size);
    std::vector<std::complex<double>> g(res.fft_size);
    for (std::size_t f = 0; f < est.frames; ++f) {
      for (std::size_t b = 0; b < est.bins; ++b) {
        const std::size_t i = f * est.bins + b;
        double dmag = 0.0;
        if (diff_norm > 0.0) {
          dmag += (mag_est[i] - mag_ref[i]) / (diff_norm * ref_norm);
        }
        dmag -= sign_of(std::log(mag_ref[i] + cfg.log_floor) -
                        std::log(mag_est[i] + cfg.log_floor)) /
                (n_cells * (mag_est[i] + cfg.log_floor));
        // Through |X| = sqrt(Re^2 + Im^2); zero magnitude has zero
        // subgradient.
        if (mag_est[i] > 0.0) {
          g[b] = dmag / mag_est[i] * est.data[i];
        } else {
          g[b] = 0.0;
        }
      }
      std::fill(g.begin() + static_cast<std::ptrdiff_t>(est.bins), g.end(),
                std::complex<double>(0.0, 0.0));
      // Adjoint of the windowed one-sided DFT: unscaled inverse transform of
      // the bin gradients, real part, times the window.
      fft_dir(g.data(), res.fft_size, +1);
      const std::size_t start = f * res.hop;
      const std::size_t avail = std::min(res.fft_size, t_len - start);
      for (std::size_t iSample = 0; iSample < avail; ++iSample) {
        grad[start + iSample] += window[iSample] * g[iSample].real();
      }
    }
  }
  return mae + spectral;
}

}  // namespace nastar::dsp
