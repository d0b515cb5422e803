#include "avloc/params.hpp"

#include <algorithm>

#include "avloc/error.hpp"

namespace avloc {

void ParamVector::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter segment '" + name + "'");
  offsets_.push_back(total_);
  total_ += value.size();
  segments_.push_back({std::move(name), std::move(value)});
}

bool ParamVector::contains(std::string_view name) const {
  return std::any_of(segments_.begin(), segments_.end(),
                     [&](const Segment& s) { return s.name == name; });
}

const Tensor& ParamVector::at(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s.value;
  }
  throw ConfigError("unknown parameter segment '" + std::string(name) + "'");
}

Tensor& ParamVector::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::pair<std::size_t, std::size_t> ParamVector::locate(std::size_t flat_index) const {
  if (flat_index >= total_) throw ShapeError("flat parameter index out of range");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat_index);
  std::size_t seg = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return {seg, flat_index - offsets_[seg]};
}

double ParamVector::flat(std::size_t i) const {
  auto [seg, off] = locate(i);
  return segments_[seg].value[off];
}

double& ParamVector::flat(std::size_t i) {
  auto [seg, off] = locate(i);
  return segments_[seg].value[off];
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& s : segments_) out.insert(out.end(), s.value.values().begin(), s.value.values().end());
  return out;
}

void ParamVector::assign_flat(const std::vector<double>& values) {
  if (values.size() != total_) {
    throw ShapeError("assign_flat: expected " + std::to_string(total_) + " values, got " +
                     std::to_string(values.size()));
  }
  std::size_t k = 0;
  for (auto& s : segments_) {
    for (auto& v : s.value.data()) v = values[k++];
  }
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  for (const auto& s : segments_) out.add(s.name, Tensor(s.value.shape(), 0.0));
  return out;
}

bool ParamVector::same_structure(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name != other.segments_[i].name ||
        segments_[i].value.shape() != other.segments_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

void ParamVector::axpy(double alpha, const ParamVector& other) {
  if (!same_structure(other)) throw ShapeError("axpy: parameter structures differ");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    auto dst = segments_[i].value.data();
    auto src = other.segments_[i].value.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += alpha * src[j];
  }
}

bool ParamVector::all_finite() const {
  return std::all_of(segments_.begin(), segments_.end(),
                     [](const Segment& s) { return s.value.all_finite(); });
}

bool operator==(const ParamVector& a, const ParamVector& b) {
  if (!a.same_structure(b)) return false;
  for (std::size_t i = 0; i < a.segments_.size(); ++i) {
    if (!(a.segments_[i].value == b.segments_[i].value)) return false;
  }
  return true;
}

}  // namespace avloc
