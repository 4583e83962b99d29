#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "traffic/tensor.hpp"

namespace traffic {

struct GradCheckReport {
  double max_rel_error = 0.0;
  int64_t worst_index = -1;
  bool pass = false;
};

// Central finite differences against an analytic gradient, double precision.
// Relative error per element is |analytic - numeric| / max(1, |analytic|).
// Reports disagreement instead of throwing.
inline GradCheckReport gradient_check(const std::function<double(const TensorD&)>& f,
                                      const TensorD& analytic, const TensorD& probe,
                                      double step, double tolerance) {
  GradCheckReport report;
  TensorD x = probe;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double saved = x.data[static_cast<size_t>(i)];
    x.data[static_cast<size_t>(i)] = saved + step;
    double fp = f(x);
    x.data[static_cast<size_t>(i)] = saved - step;
    double fm = f(x);
    x.data[static_cast<size_t>(i)] = saved;
    double numeric = (fp - fm) / (2.0 * step);
    double a = analytic.data[static_cast<size_t>(i)];
    double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace traffic
