#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avloc/gradcheck.hpp"

namespace avloc {

struct GradcheckComponent {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = true;
  // worst coordinate seen
  std::size_t seed = 0;
  std::string segment;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckSuiteReport {
  std::vector<GradcheckComponent> components;  // worst case over all seeds
  std::size_t seeds = 0;
  double tolerance = 0.0;
  bool passed = true;
};

struct GradcheckSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t num_seeds = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Doubles the largest analytic gradient coordinate (fault injection).
  bool corrupt = false;
};

/// Central-difference checks on small random instances of: the contrastive
/// loss, the iterative loss in each ablation shape (including instances
/// without v- and a non-identity relation matrix), and both encoders.
GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options);

}  // namespace avloc
