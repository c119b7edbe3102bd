// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/models.hpp"

namespace nastar::metrics {

// Scale-invariant signal-to-distortion ratio in dB. The estimate is
// decomposed against the scaled reference a*ref with a = <est,ref>/||ref||^2;
// the return value is 10*log10(||a*ref||^2 / ||est - a*ref||^2), clamped to
// [-100, 100] so perfect reconstructions and silent estimates stay finite
// and sortable. Throws std::invalid_argument on length mismatch or an
// all-zero reference.
double si_sdr(const audio::Waveform& reference, const audio::Waveform& estimate);

// Rational-ratio polyphase resampler (Kaiser-windowed sinc low-pass).
// Output length is ceil(len * target_hz / source_hz). Returns a copy when
// the rates already match.
audio::Waveform resample(const audio::Waveform& w, int target_hz);

// Short-time objective intelligibility. Both signals are resampled to
// 10 kHz; frames more than 40 dB below the loudest reference frame are
// removed from both; one-third-octave band envelopes (15 bands from 150 Hz,
// 256-sample Hann frames, 512-point FFT, 50% overlap) are compared over
// 30-frame segments with per-segment normalization and -15 dB clipping of
// the estimate; the score is the mean correlation coefficient over all
// bands and segments. Throws std::invalid_argument on length/rate mismatch,
// std::runtime_error when fewer than 30 analysis frames survive or the
// reference is silent.
double stoi(const audio::Waveform& reference, const audio::Waveform& estimate);

// (s - s_noisy) / (s_ptn - s_noisy): adaptation gain normalized by the
// pretrained model's gain over the unprocessed score. Throws
// std::invalid_argument when s_ptn == s_noisy.
double relative_improvement_rate(double s, double s_noisy, double s_ptn);

// Aligned method-A / method-B scores over the same test groups.
struct PairedScores {
  std::vector<double> a;
  std::vector<double> b;
};

struct TTestResult {
  double t = 0.0;
  double p_two_sided = 1.0;
};

// Dependent t-test on the paired differences d = a - b: t = mean(d) /
// (sd(d)/sqrt(n)) with the n-1 sample deviation; the two-sided p-value
// comes from the Student-t distribution with n-1 degrees of freedom
// (regularized incomplete beta). Throws std::invalid_argument on size
// mismatch, n < 2, or zero-variance differences.
TTestResult paired_t_test(const PairedScores& scores);

// One evaluation utterance: the degraded input, its clean reference, and
// the grouping keys for the report.
struct EvalItem {
  audio::Waveform noisy;
  audio::Waveform clean;
  std::string condition;
  double snr_db = 0.0;
};

struct UtteranceScore {
  std::string condition;
  double snr_db = 0.0;
  double si_sdr_db = 0.0;
  double stoi = 0.0;
};

struct GroupScore {
  std::string condition;
  double snr_db = 0.0;
  std::size_t count = 0;
  double si_sdr_db = 0.0;  // mean over the group's utterances
  double stoi = 0.0;
};

// Per-utterance scores plus (condition, snr) group means, groups sorted by
// key. mean_* average the utterances directly, not the group means.
struct MetricReport {
  std::vector<UtteranceScore> utterances;
  std::vector<GroupScore> groups;
  double mean_si_sdr_db = 0.0;
  double mean_stoi = 0.0;
};

using EnhanceFn = std::function<audio::Waveform(const audio::Waveform&)>;

// Scores enhance(noisy) against clean for every item, in testset order.
// Throws std::invalid_argument on an empty testset or an empty condition
// key. The identity function scores the unprocessed noisy signals (the
// NOISY baseline).
MetricReport evaluate(const EnhanceFn& enhance,
                      const std::vector<EvalItem>& testset);

// Convenience wrapper scoring the speech enhancement model's outputs.
MetricReport evaluate(const models::ParamSet& se_params,
                      const models::ExtractorConfig& se_cfg,
                      const std::vector<EvalItem>& testset);

// Deterministic serializations: JSON (full report), aligned text table
// (group and overall means), CSV (per-utterance scores).
std::string report_to_json(const MetricReport& report);
std::string report_to_table(const MetricReport& report);
std::string report_to_csv(const MetricReport& report);

}  // namespace nastar::metrics
