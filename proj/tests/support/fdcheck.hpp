// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "doctest.h"
#include "nastar/models.hpp"
#include "nastar/rng.hpp"

namespace test_support {

// Central-difference slope of the loss along one parameter coordinate.
inline double fd_slope(const nastar::models::ParamLoss& loss,
                       nastar::models::ParamSet& p, std::size_t tensor,
                       std::size_t index, double h) {
  double& v = p.tensors[tensor].data[index];
  const double orig = v;
  v = orig + h;
  const double up = loss.value(p);
  v = orig - h;
  const double down = loss.value(p);
  v = orig;
  return (up - down) / (2.0 * h);
}

struct FdReport {
  int checked = 0;   // coordinates that passed the agreement test
  int refined = 0;   // needed the smaller step to resolve truncation error
  int skipped = 0;   // probe interval crossed a non-differentiable point
};

// Validates an analytic gradient against central finite differences at
// `count` random coordinates. The loss contract requires differentiability
// at p; a coordinate whose probe interval straddles a relu or
// absolute-value kink breaks that precondition for the numerical oracle
// itself, so such coordinates are detected (the two one-sided slopes
// disagree) and resampled. Coordinates that are merely curvature-limited at
// the base step pass at a 10x smaller step; a genuinely wrong gradient
// fails at every step size and is reported as a failure.
inline FdReport check_gradient_fd(const nastar::models::ParamLoss& loss,
                                  const nastar::models::ParamSet& params,
                                  double h, double rel_tol, int count,
                                  std::uint64_t seed) {
  const nastar::models::ParamSet g = nastar::models::gradient(params, loss);
  nastar::models::ParamSet p = params;
  nastar::Rng rng(seed);
  const std::size_t total = p.total_count();
  FdReport report;
  const int max_attempts = count * 3;

  for (int attempt = 0; attempt < max_attempts && report.checked < count;
       ++attempt) {
    std::size_t flat = rng.uniform_int(total);
    std::size_t tensor = 0;
    while (flat >= p.tensors[tensor].data.size()) {
      flat -= p.tensors[tensor].data.size();
      ++tensor;
    }
    const double analytic = g.tensors[tensor].data[flat];

    const auto agrees = [&](double numeric) {
      const double scale = std::max(std::abs(analytic), std::abs(numeric));
      return scale < 1e-8 || std::abs(analytic - numeric) / scale <= rel_tol;
    };

    if (agrees(fd_slope(loss, p, tensor, flat, h))) {
      ++report.checked;
      continue;
    }
    if (agrees(fd_slope(loss, p, tensor, flat, h / 10.0))) {
      ++report.checked;
      ++report.refined;
      continue;
    }

    // One-sided slopes around p; a kink inside the probe interval makes
    // them disagree far beyond the curvature scale.
    double& v = p.tensors[tensor].data[flat];
    const double orig = v;
    const double mid = loss.value(p);
    v = orig + h;
    const double up = loss.value(p);
    v = orig - h;
    const double down = loss.value(p);
    v = orig;
    const double s_plus = (up - mid) / h;
    const double s_minus = (mid - down) / h;
    const double disagree = std::abs(s_plus - s_minus);
    if (disagree > 0.02 * std::max(std::abs(s_plus), std::abs(s_minus))) {
      ++report.skipped;
      continue;
    }

    INFO("tensor ", p.tensors[tensor].name, " index ", flat, " analytic ",
         analytic, " numeric(h) ", fd_slope(loss, p, tensor, flat, h));
    CHECK(false);
    ++report.checked;
  }

  // The check is vacuous if kinks swallow most samples.
  CHECK(report.checked >= count);
  CHECK(report.skipped <= count / 2);
  return report;
}

}  // namespace test_support
