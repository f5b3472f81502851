#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fuseformer/tensor.hpp"

namespace ff {

// Central finite-difference verification of reverse-mode gradients.
// The loss closure must rebuild the whole forward computation from the
// current parameter values on every call.

struct GradCheckOptions {
  double eps = 1e-5;
  // Cap on probed coordinates per parameter; evenly spaced subsample when a
  // tensor is larger. 0 means all coordinates.
  size_t max_coords = 0;
};

// Error is normalized per target, over all of its checked parameters:
// max_i |analytic_i - numeric_i| / max(||analytic||_inf, ||numeric||_inf).
// Per-parameter normalization would blow up on directions with an exactly
// zero true gradient (e.g. the key-projection bias, which softmax's shift
// invariance cancels).
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
};

template <typename T>
GradCheckReport finite_diff_check(
    const std::function<Tensor<T>()>& loss_fn,
    std::vector<std::pair<std::string, Tensor<T>>> params,
    GradCheckOptions opts = {}) {
  if (opts.eps <= 0) throw ConfigError("gradcheck eps must be > 0");

  for (auto& [name, p] : params) p.zero_grad();
  Tensor<T> loss = loss_fn();
  loss.backward();

  GradCheckReport report;
  double max_abs_diff = 0.0, max_a = 0.0, max_num = 0.0;
  for (auto& [name, p] : params) {
    const std::vector<T> analytic = p.has_grad()
                                        ? p.grad()
                                        : std::vector<T>(p.numel(), T(0));
    auto& values = p.mutable_data();

    size_t n = values.size();
    size_t count = (opts.max_coords == 0) ? n : std::min(n, opts.max_coords);
    size_t stride = n / count + (n % count ? 1 : 0);

    for (size_t i = 0; i < n; i += stride) {
      T saved = values[i];
      values[i] = saved + T(opts.eps);
      double f_plus;
      {
        NoGradGuard ng;
        f_plus = double(loss_fn().item());
      }
      values[i] = saved - T(opts.eps);
      double f_minus;
      {
        NoGradGuard ng;
        f_minus = double(loss_fn().item());
      }
      values[i] = saved;
      double numeric = (f_plus - f_minus) / (2.0 * opts.eps);
      double diff = std::abs(double(analytic[i]) - numeric);
      if (diff > max_abs_diff) {
        max_abs_diff = diff;
        report.worst_param = name;
      }
      max_a = std::max(max_a, std::abs(double(analytic[i])));
      max_num = std::max(max_num, std::abs(numeric));
    }
  }
  report.max_rel_err = max_abs_diff / std::max({max_a, max_num, 1e-12});
  return report;
}

// A named gradient-check target with its pass threshold; the CLI and the
// test suites both iterate registries of these. `run` takes the
// finite-difference step.
struct GradCheckCase {
  std::string name;
  double threshold;
  std::function<GradCheckReport(double)> run;
};

}  // namespace ff
