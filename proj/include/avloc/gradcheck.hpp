#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avloc/params.hpp"

namespace avloc {

/// A scalar loss over a ParamVector. When `grad` is non-null the callee must
/// fill it (same structure as `at`) with the exact gradient.
using Objective = std::function<double(const ParamVector& at, ParamVector* grad)>;

/// Exact gradient of `loss` at `at`. Throws GradientError if the loss or any
/// gradient coordinate is non-finite.
ParamVector grad(const Objective& loss, const ParamVector& at);

struct SegmentCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // offset inside the segment
  std::size_t flagged = 0;      // coordinates above tolerance
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<SegmentCheck> segments;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// Compares grad() against central differences (f(x+h e) - f(x-h e)) / 2h per
/// coordinate. Relative error uses max(|analytic|, |numeric|, 1e-12) as the
/// denominator.
GradCheckReport finite_diff_check(const Objective& loss, const ParamVector& at, double step,
                                  double tol);

}  // namespace avloc
