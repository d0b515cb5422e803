#pragma once

// Differentiable primitives. Each forward function has a matching backward
// that maps the gradient of a scalar w.r.t. the output to the gradient w.r.t.
// the inputs. Losses in this library are composed only from these.

#include <span>
#include <vector>

#include "avloc/tensor.hpp"

namespace avloc::ops {

/// y = x * w^T + b for x (n x in), w (out x in), b (out).
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

/// Accumulates into grad_w / grad_b; writes grad_x when non-null.
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y,
                     Tensor* grad_x, Tensor& grad_w, Tensor& grad_b);

Tensor tanh(const Tensor& x);
/// Takes the forward output y = tanh(x).
Tensor tanh_backward(const Tensor& y, const Tensor& grad_y);

struct Normalized {
  std::vector<double> unit;
  double norm = 0.0;
  bool degenerate = false;  // zero input, mapped to the zero vector
};

/// x / ||x||; the zero vector maps to zero with the degenerate flag set.
Normalized l2_normalize(std::span<const double> x);
/// Gradient through l2_normalize; zero for degenerate inputs.
std::vector<double> l2_normalize_backward(const Normalized& fwd, std::span<const double> grad_y);

/// Mean of the selected rows of a rank-2 tensor.
std::vector<double> mean_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Adds grad_y / |rows| to each selected row of grad_x.
void mean_rows_backward(std::span<const std::size_t> rows, std::span<const double> grad_y,
                        Tensor& grad_x);

/// log(sum(exp(x))) with the max shift. Empty input is an error.
double log_sum_exp(std::span<const double> x);
/// d log_sum_exp / dx, i.e. the softmax.
std::vector<double> softmax(std::span<const double> x);

}  // namespace avloc::ops
