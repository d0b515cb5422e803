#include "avloc/ops.hpp"

#include <algorithm>
#include <cmath>

#include "avloc/error.hpp"

namespace avloc::ops {

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.extent(1) != w.extent(1) ||
      b.extent(0) != w.extent(0)) {
    throw ShapeError("affine: incompatible shapes x" + shape_to_string(x.shape()) + " w" +
                     shape_to_string(w.shape()) + " b" + shape_to_string(b.shape()));
  }
  const std::size_t n = x.extent(0), in = x.extent(1), out = w.extent(0);
  Tensor y({n, out});
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  double* yd = y.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = xd + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = wd + o * in;
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * wo[i];
      yd[r * out + o] = s;
    }
  }
  return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, Tensor* grad_x,
                     Tensor& grad_w, Tensor& grad_b) {
  const std::size_t n = x.extent(0), in = x.extent(1), out = w.extent(0);
  if (grad_y.shape() != Shape{n, out} || grad_w.shape() != w.shape() ||
      grad_b.shape() != Shape{out}) {
    throw ShapeError("affine_backward: incompatible gradient shapes");
  }
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* gyd = grad_y.data().data();
  double* gwd = grad_w.data().data();
  if (grad_x) *grad_x = Tensor({n, in}, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = xd + r * in;
    double* gxr = grad_x ? grad_x->data().data() + r * in : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gyd[r * out + o];
      if (g == 0.0) continue;
      grad_b[o] += g;
      double* gwo = gwd + o * in;
      for (std::size_t i = 0; i < in; ++i) gwo[i] += g * xr[i];
      if (gxr) {
        const double* wo = wd + o * in;
        for (std::size_t i = 0; i < in; ++i) gxr[i] += g * wo[i];
      }
    }
  }
}

Tensor tanh(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = std::tanh(v);
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& grad_y) {
  require_same_shape(y, grad_y, "tanh_backward");
  Tensor g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
  return g;
}

Normalized l2_normalize(std::span<const double> x) {
  Normalized out;
  out.norm = l2_norm(x);
  out.unit.assign(x.begin(), x.end());
  if (out.norm == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (auto& v : out.unit) v /= out.norm;
  return out;
}

std::vector<double> l2_normalize_backward(const Normalized& fwd, std::span<const double> grad_y) {
  if (grad_y.size() != fwd.unit.size()) throw ShapeError("l2_normalize_backward: length mismatch");
  std::vector<double> g(grad_y.size(), 0.0);
  if (fwd.degenerate) return g;
  // (I - u u^T) grad / ||x||
  const double proj = dot(fwd.unit, grad_y);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (grad_y[i] - fwd.unit[i] * proj) / fwd.norm;
  return g;
}

std::vector<double> mean_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() != 2) throw ShapeError("mean_rows: rank-2 input required");
  if (rows.empty()) throw ShapeError("mean_rows: empty row set");
  const std::size_t d = x.extent(1);
  std::vector<double> m(d, 0.0);
  for (auto r : rows) {
    auto xr = x.row(r);
    for (std::size_t c = 0; c < d; ++c) m[c] += xr[c];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto& v : m) v *= inv;
  return m;
}

void mean_rows_backward(std::span<const std::size_t> rows, std::span<const double> grad_y,
                        Tensor& grad_x) {
  if (grad_x.rank() != 2 || grad_y.size() != grad_x.extent(1)) {
    throw ShapeError("mean_rows_backward: shape mismatch");
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto r : rows) {
    auto gr = grad_x.row(r);
    for (std::size_t c = 0; c < gr.size(); ++c) gr[c] += grad_y[c] * inv;
  }
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw ShapeError("log_sum_exp: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> x) {
  const double lse = log_sum_exp(x);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = std::exp(x[i] - lse);
  return p;
}

}  // namespace avloc::ops
