#include "avloc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "avloc/error.hpp"

namespace avloc {

ParamVector grad(const Objective& loss, const ParamVector& at) {
  ParamVector g = at.zeros_like();
  const double value = loss(at, &g);
  if (!std::isfinite(value)) {
    throw GradientError("loss evaluated to a non-finite value (" + std::to_string(value) + ")");
  }
  if (!g.same_structure(at)) throw GradientError("gradient structure differs from parameters");
  if (!g.all_finite()) throw GradientError("gradient contains non-finite coordinates");
  return g;
}

GradCheckReport finite_diff_check(const Objective& loss, const ParamVector& at, double step,
                                  double tol) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_check: step must be positive");
  const ParamVector analytic = grad(loss, at);
  ParamVector probe = at;
  GradCheckReport report;
  std::size_t flat = 0;
  for (const auto& seg : analytic.segments()) {
    SegmentCheck sc{seg.name};
    for (std::size_t j = 0; j < seg.value.size(); ++j, ++flat) {
      const double orig = probe.flat(flat);
      probe.flat(flat) = orig + step;
      const double up = loss(probe, nullptr);
      probe.flat(flat) = orig - step;
      const double down = loss(probe, nullptr);
      probe.flat(flat) = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = seg.value[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      const double rel = std::abs(a - numeric) / denom;
      if (!(rel <= tol)) ++sc.flagged;
      if (rel > sc.max_rel_error || std::isnan(rel)) {
        sc.max_rel_error = rel;
        sc.worst_index = j;
        sc.worst_analytic = a;
        sc.worst_numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, sc.max_rel_error);
    if (sc.flagged) report.passed = false;
    report.segments.push_back(std::move(sc));
  }
  return report;
}

}  // namespace avloc
