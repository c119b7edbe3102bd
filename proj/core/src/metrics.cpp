// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "nastar/dsp.hpp"

namespace nastar::metrics {

namespace {

constexpr double kSiSdrCapDb = 100.0;

// STOI analysis constants (published standard values).
constexpr int kStoiRateHz = 10000;
constexpr std::size_t kStoiFrame = 256;
constexpr std::size_t kStoiHop = 128;
constexpr std::size_t kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiBandStartHz = 150.0;
constexpr std::size_t kStoiSegment = 30;
constexpr double kStoiDynRangeDb = 40.0;
constexpr double kStoiClipDb = -15.0;

double kaiser_i0(double x) {
  // Series for the zeroth-order modified Bessel function; converges fast
  // for the argument range used by window design.
  double sum = 1.0;
  double term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Low-pass prototype for a rational up/down resampler: Kaiser(beta 5.0)
// windowed sinc with cutoff at the tighter of the two Nyquist limits,
// normalized to unit DC gain and scaled by `up` to compensate the
// zero-insertion loss.
std::vector<double> design_resample_filter(int up, int down) {
  const int max_rate = std::max(up, down);
  const int half = 10 * max_rate;
  const double fc = 1.0 / max_rate;  // fraction of intermediate Nyquist
  const double beta = 5.0;
  const double i0_beta = kaiser_i0(beta);
  std::vector<double> h(2 * half + 1);
  double sum = 0.0;
  for (int n = 0; n < static_cast<int>(h.size()); ++n) {
    const double t = n - half;
    const double r = t / half;
    const double window = kaiser_i0(beta * std::sqrt(1.0 - r * r)) / i0_beta;
    h[static_cast<std::size_t>(n)] = fc * sinc(fc * t) * window;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v *= static_cast<double>(up) / sum;
  return h;
}

struct Frames {
  std::vector<std::vector<double>> rows;  // windowed frames
};

// Hann-windowed 50%-overlap frames; the final partial frame is dropped.
Frames frame_signal(const std::vector<double>& x) {
  static const std::vector<double> window = dsp::hann_window(kStoiFrame);
  Frames out;
  if (x.size() < kStoiFrame) return out;
  for (std::size_t start = 0; start + kStoiFrame <= x.size();
       start += kStoiHop) {
    std::vector<double> frame(kStoiFrame);
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
      frame[i] = x[start + i] * window[i];
    }
    out.rows.push_back(std::move(frame));
  }
  return out;
}

std::vector<double> overlap_add(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  std::vector<double> x((rows.size() - 1) * kStoiHop + kStoiFrame, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
      x[r * kStoiHop + i] += rows[r][i];
    }
  }
  return x;
}

// One-third-octave band energies per frame: rows = frames, cols = bands.
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  static const std::vector<double> window = dsp::hann_window(kStoiFrame);
  // Band edges cf * 2^(+-1/6) tile the axis exactly.
  std::vector<std::pair<double, double>> edges(kStoiBands);
  for (int j = 0; j < kStoiBands; ++j) {
    const double cf = kStoiBandStartHz * std::pow(2.0, j / 3.0);
    edges[static_cast<std::size_t>(j)] = {cf * std::pow(2.0, -1.0 / 6.0),
                                          cf * std::pow(2.0, 1.0 / 6.0)};
  }
  std::vector<std::vector<double>> env;
  std::vector<double> padded(kStoiFft);
  for (std::size_t start = 0; start + kStoiFrame <= x.size();
       start += kStoiHop) {
    std::fill(padded.begin(), padded.end(), 0.0);
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
      padded[i] = x[start + i] * window[i];
    }
    const std::vector<std::complex<double>> spec = dsp::rfft(padded);
    std::vector<double> bands(kStoiBands, 0.0);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double f = static_cast<double>(k) * kStoiRateHz / kStoiFft;
      for (int j = 0; j < kStoiBands; ++j) {
        const auto& e = edges[static_cast<std::size_t>(j)];
        if (f >= e.first && f < e.second) {
          bands[static_cast<std::size_t>(j)] += std::norm(spec[k]);
          break;
        }
      }
    }
    for (double& b : bands) b = std::sqrt(b);
    env.push_back(std::move(bands));
  }
  return env;
}

double segment_correlation(const std::vector<double>& x,
                           const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  // Constant envelopes carry no short-time modulation to correlate;
  // identical constants count as a match, a one-sided constant does not.
  if (sxx == 0.0 || syy == 0.0) {
    return (sxx == 0.0 && syy == 0.0) ? 1.0 : 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

// Regularized incomplete beta via the Lentz continued fraction.
double incbeta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-14) break;
  }
  return h;
}

double incbeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                          (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * incbeta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) -
                        (std::lgamma(a) + std::lgamma(b) -
                         std::lgamma(a + b))) *
                   incbeta_cf(b, a, 1.0 - x) / b;
}

}  // namespace

double si_sdr(const audio::Waveform& reference,
              const audio::Waveform& estimate) {
  if (reference.size() != estimate.size()) {
    throw std::invalid_argument("si_sdr: length mismatch");
  }
  if (reference.empty()) {
    throw std::invalid_argument("si_sdr: empty reference");
  }
  double dot = 0.0;
  double ref2 = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate.samples[i] * reference.samples[i];
    ref2 += reference.samples[i] * reference.samples[i];
  }
  if (ref2 == 0.0) {
    throw std::invalid_argument("si_sdr: reference is all-zero");
  }
  const double a = dot / ref2;
  const double target2 = a * a * ref2;
  double error2 = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double e = estimate.samples[i] - a * reference.samples[i];
    error2 += e * e;
  }
  if (target2 == 0.0) return -kSiSdrCapDb;
  if (error2 == 0.0) return kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target2 / error2), -kSiSdrCapDb,
                    kSiSdrCapDb);
}

audio::Waveform resample(const audio::Waveform& w, int target_hz) {
  if (target_hz <= 0) {
    throw std::invalid_argument("resample: target rate must be positive");
  }
  if (w.empty()) {
    throw std::invalid_argument("resample: empty input");
  }
  if (w.sample_rate_hz == target_hz) return w;

  const int g = std::gcd(w.sample_rate_hz, target_hz);
  const int up = target_hz / g;
  const int down = w.sample_rate_hz / g;
  const std::vector<double> h = design_resample_filter(up, down);
  const int half = (static_cast<int>(h.size()) - 1) / 2;

  const std::size_t out_len =
      (w.size() * static_cast<std::size_t>(up) +
       static_cast<std::size_t>(down) - 1) /
      static_cast<std::size_t>(down);
  audio::Waveform out;
  out.sample_rate_hz = target_hz;
  out.samples.resize(out_len);
  // y[m] = sum_j h[j] * u[m*down - j + half] where u is the zero-stuffed
  // upsampled input: u[i] = x[i/up] when up divides i.
  for (std::size_t m = 0; m < out_len; ++m) {
    const long long center = static_cast<long long>(m) * down + half;
    double acc = 0.0;
    // Only indices with (center - j) divisible by `up` contribute.
    long long j0 = center % up;
    for (long long j = j0; j < static_cast<long long>(h.size()); j += up) {
      const long long i = (center - j) / up;
      if (i < 0) break;
      if (i >= static_cast<long long>(w.size())) continue;
      acc += h[static_cast<std::size_t>(j)] *
             w.samples[static_cast<std::size_t>(i)];
    }
    out.samples[m] = acc;
  }
  return out;
}

double stoi(const audio::Waveform& reference, const audio::Waveform& estimate) {
  if (reference.size() != estimate.size()) {
    throw std::invalid_argument("stoi: length mismatch");
  }
  if (reference.sample_rate_hz != estimate.sample_rate_hz) {
    throw std::invalid_argument("stoi: sample rate mismatch");
  }
  if (reference.empty()) {
    throw std::invalid_argument("stoi: empty input");
  }

  const audio::Waveform ref10 = resample(reference, kStoiRateHz);
  const audio::Waveform est10 = resample(estimate, kStoiRateHz);

  // Remove frames more than 40 dB below the loudest reference frame, then
  // rebuild both signals from the retained frames laid out contiguously.
  const Frames ref_frames = frame_signal(ref10.samples);
  const Frames est_frames = frame_signal(est10.samples);
  if (ref_frames.rows.empty()) {
    throw std::runtime_error("stoi: signal too short");
  }
  std::vector<double> energy_db(ref_frames.rows.size());
  double max_db = -1e300;
  for (std::size_t r = 0; r < ref_frames.rows.size(); ++r) {
    double e = 0.0;
    for (double v : ref_frames.rows[r]) e += v * v;
    energy_db[r] = 10.0 * std::log10(e + 1e-300);
    max_db = std::max(max_db, energy_db[r]);
  }
  if (max_db <= 10.0 * std::log10(1e-300) + 1.0) {
    throw std::runtime_error("stoi: reference is silent");
  }
  std::vector<std::vector<double>> ref_kept;
  std::vector<std::vector<double>> est_kept;
  for (std::size_t r = 0; r < ref_frames.rows.size(); ++r) {
    if (energy_db[r] > max_db - kStoiDynRangeDb) {
      ref_kept.push_back(ref_frames.rows[r]);
      est_kept.push_back(est_frames.rows[r]);
    }
  }
  const std::vector<double> x = overlap_add(ref_kept);
  const std::vector<double> y = overlap_add(est_kept);

  const std::vector<std::vector<double>> ex = band_envelopes(x);
  const std::vector<std::vector<double>> ey = band_envelopes(y);
  if (ex.size() < kStoiSegment) {
    throw std::runtime_error("stoi: signal too short");
  }

  // Overshoot bound 1 + 10^(-beta/20) with beta = -15 dB: the normalized
  // estimate may exceed the clean envelope by at most ~6.6x, which bounds
  // the per-sample SDR at beta.
  const double clip = std::pow(10.0, -kStoiClipDb / 20.0);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xs(kStoiSegment);
  std::vector<double> ys(kStoiSegment);
  for (std::size_t m = kStoiSegment; m <= ex.size(); ++m) {
    for (int j = 0; j < kStoiBands; ++j) {
      double nx = 0.0;
      double ny = 0.0;
      for (std::size_t i = 0; i < kStoiSegment; ++i) {
        xs[i] = ex[m - kStoiSegment + i][static_cast<std::size_t>(j)];
        ys[i] = ey[m - kStoiSegment + i][static_cast<std::size_t>(j)];
        nx += xs[i] * xs[i];
        ny += ys[i] * ys[i];
      }
      const double alpha = std::sqrt(nx) / std::max(std::sqrt(ny), 1e-300);
      for (std::size_t i = 0; i < kStoiSegment; ++i) {
        ys[i] = std::min(alpha * ys[i], xs[i] * (1.0 + clip));
      }
      total += segment_correlation(xs, ys);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double relative_improvement_rate(double s, double s_noisy, double s_ptn) {
  if (s_ptn == s_noisy) {
    throw std::invalid_argument(
        "relative_improvement_rate: s_ptn equals s_noisy");
  }
  return (s - s_noisy) / (s_ptn - s_noisy);
}

TTestResult paired_t_test(const PairedScores& scores) {
  const std::size_t n = scores.a.size();
  if (n != scores.b.size()) {
    throw std::invalid_argument("paired_t_test: length mismatch");
  }
  if (n < 2) {
    throw std::invalid_argument("paired_t_test: needs at least 2 pairs");
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += scores.a[i] - scores.b[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = scores.a[i] - scores.b[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  if (var == 0.0) {
    throw std::invalid_argument("paired_t_test: zero-variance differences");
  }
  TTestResult result;
  result.t = mean / std::sqrt(var / static_cast<double>(n));
  const double df = static_cast<double>(n - 1);
  result.p_two_sided =
      incbeta(df / 2.0, 0.5, df / (df + result.t * result.t));
  return result;
}

MetricReport evaluate(const EnhanceFn& enhance,
                      const std::vector<EvalItem>& testset) {
  if (testset.empty()) {
    throw std::invalid_argument("evaluate: empty testset");
  }
  MetricReport report;
  report.utterances.reserve(testset.size());
  for (const auto& item : testset) {
    if (item.condition.empty()) {
      throw std::invalid_argument("evaluate: empty condition key");
    }
    const audio::Waveform est = enhance(item.noisy);
    UtteranceScore score;
    score.condition = item.condition;
    score.snr_db = item.snr_db;
    score.si_sdr_db = si_sdr(item.clean, est);
    score.stoi = stoi(item.clean, est);
    report.utterances.push_back(std::move(score));
  }

  std::map<std::pair<std::string, double>, GroupScore> groups;
  for (const auto& u : report.utterances) {
    GroupScore& g = groups[{u.condition, u.snr_db}];
    g.condition = u.condition;
    g.snr_db = u.snr_db;
    g.count += 1;
    g.si_sdr_db += u.si_sdr_db;
    g.stoi += u.stoi;
    report.mean_si_sdr_db += u.si_sdr_db;
    report.mean_stoi += u.stoi;
  }
  for (auto& [key, g] : groups) {
    g.si_sdr_db /= static_cast<double>(g.count);
    g.stoi /= static_cast<double>(g.count);
    report.groups.push_back(g);
  }
  report.mean_si_sdr_db /= static_cast<double>(report.utterances.size());
  report.mean_stoi /= static_cast<double>(report.utterances.size());
  return report;
}

MetricReport evaluate(const models::ParamSet& se_params,
                      const models::ExtractorConfig& se_cfg,
                      const std::vector<EvalItem>& testset) {
  return evaluate(
      [&](const audio::Waveform& noisy) {
        return models::se_forward(se_params, se_cfg, noisy);
      },
      testset);
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["mean"] = {{"si_sdr_db", report.mean_si_sdr_db},
               {"stoi", report.mean_stoi}};
  j["groups"] = nlohmann::json::array();
  for (const auto& g : report.groups) {
    j["groups"].push_back({{"condition", g.condition},
                           {"snr_db", g.snr_db},
                           {"count", g.count},
                           {"si_sdr_db", g.si_sdr_db},
                           {"stoi", g.stoi}});
  }
  j["utterances"] = nlohmann::json::array();
  for (const auto& u : report.utterances) {
    j["utterances"].push_back({{"condition", u.condition},
                               {"snr_db", u.snr_db},
                               {"si_sdr_db", u.si_sdr_db},
                               {"stoi", u.stoi}});
  }
  return j.dump(2) + "\n";
}

std::string report_to_table(const MetricReport& report) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-20s %8s %6s %12s %8s\n", "condition",
                "snr_db", "n", "si_sdr_db", "stoi");
  out += line;
  for (const auto& g : report.groups) {
    std::snprintf(line, sizeof(line), "%-20s %8.1f %6zu %12.4f %8.4f\n",
                  g.condition.c_str(), g.snr_db, g.count, g.si_sdr_db, g.stoi);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-20s %8s %6zu %12.4f %8.4f\n", "mean",
                "", report.utterances.size(), report.mean_si_sdr_db,
                report.mean_stoi);
  out += line;
  return out;
}

std::string report_to_csv(const MetricReport& report) {
  std::string out = "condition,snr_db,si_sdr_db,stoi\n";
  char line[160];
  for (const auto& u : report.utterances) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g\n",
                  u.condition.c_str(), u.snr_db, u.si_sdr_db, u.stoi);
    out += line;
  }
  return out;
}

}  // namespace nastar::metrics
