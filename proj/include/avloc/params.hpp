#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "avloc/tensor.hpp"

namespace avloc {

/// Named parameter segments with a flat view over all coordinates. Segment
/// order is insertion order; the flat index walks segments in that order.
class ParamVector {
 public:
  struct Segment {
    std::string name;
    Tensor value;
  };

  ParamVector() = default;

  void add(std::string name, Tensor value);

  std::size_t num_segments() const noexcept { return segments_.size(); }
  std::size_t total_size() const noexcept { return total_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  /// Flat coordinate access.
  double flat(std::size_t i) const;
  double& flat(std::size_t i);
  std::vector<double> flatten() const;
  void assign_flat(const std::vector<double>& values);

  /// Same segment names and shapes, all zeros.
  ParamVector zeros_like() const;
  bool same_structure(const ParamVector& other) const;

  /// this += alpha * other (structures must match).
  void axpy(double alpha, const ParamVector& other);

  bool all_finite() const;

  friend bool operator==(const ParamVector& a, const ParamVector& b);

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t flat_index) const;

  std::vector<Segment> segments_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

}  // namespace avloc
