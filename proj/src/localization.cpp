#include "avloc/localization.hpp"

#include <cmath>
#include <string>

#include "avloc/avic_io.hpp"
#include "avloc/error.hpp"
#include "avloc/ops.hpp"

namespace avloc::loc {

std::vector<std::size_t> SoundingRegion::flat(std::size_t grid_h) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto [r, c] : indices) out.push_back(r * grid_h + c);
  return out;
}

ResponseMap response_map(const enc::VisualFeatureMap& v, const enc::AudioEmbedding& a) {
  if (a.values.rank() != 1 || a.values.size() != v.dim()) {
    throw ShapeError("response_map: audio dim " + std::to_string(a.values.size()) +
                     " vs visual dim " + std::to_string(v.dim()));
  }
  ResponseMap r;
  r.values = Tensor({v.grid_w(), v.grid_h()});
  for (std::size_t p = 0; p < v.num_patches(); ++p) {
    r.values[p] = dot(ops::l2_normalize(v.patch(p)).unit, a.values.data());
  }
  return r;
}

ResponseMap minmax_normalize(const ResponseMap& r) {
  if (!r.values.all_finite()) throw ConfigError("minmax_normalize: non-finite response map");
  ResponseMap out;
  out.normalized = true;
  out.values = r.values;
  const double lo = r.values.min(), hi = r.values.max();
  if (!(hi > lo)) {
    for (auto& v : out.values.data()) v = 0.0;
    out.degenerate = true;
    return out;
  }
  const double range = hi - lo;
  for (auto& v : out.values.data()) v = (v - lo) / range;
  return out;
}

SoundingRegion threshold_region(const ResponseMap& r, double delta_v) {
  if (r.values.rank() != 2) throw ShapeError("threshold_region: rank-2 map required");
  SoundingRegion s;
  s.threshold = delta_v;
  for (std::size_t i = 0; i < r.values.extent(0); ++i) {
    for (std::size_t j = 0; j < r.values.extent(1); ++j) {
      if (r.values(i, j) > delta_v) s.indices.emplace_back(i, j);
    }
  }
  return s;
}

Tensor upsample_bilinear(const Tensor& map, std::size_t width, std::size_t height) {
  if (map.rank() != 2) throw ShapeError("upsample_bilinear: rank-2 map required");
  const std::size_t w = map.extent(0), h = map.extent(1);
  if (width < w || height < h) {
    throw ShapeError("upsample_bilinear: target " + std::to_string(width) + "x" +
                     std::to_string(height) + " smaller than the map");
  }
  // Source coordinate of each target index along one axis.
  auto axis = [](std::size_t src, std::size_t dst) {
    std::vector<std::pair<std::size_t, double>> out(dst);
    for (std::size_t t = 0; t < dst; ++t) {
      if (src == 1 || dst == 1) {
        out[t] = {0, 0.0};
        continue;
      }
      const double pos = static_cast<double>(t) * static_cast<double>(src - 1) /
                         static_cast<double>(dst - 1);
      std::size_t i0 = static_cast<std::size_t>(std::floor(pos));
      if (i0 >= src - 1) i0 = src - 2;
      out[t] = {i0, pos - static_cast<double>(i0)};
    }
    return out;
  };
  const auto ax = axis(w, width), ay = axis(h, height);
  Tensor out({width, height});
  for (std::size_t x = 0; x < width; ++x) {
    const auto [i0, fx] = ax[x];
    const std::size_t i1 = w == 1 ? 0 : i0 + 1;
    for (std::size_t y = 0; y < height; ++y) {
      const auto [j0, fy] = ay[y];
      const std::size_t j1 = h == 1 ? 0 : j0 + 1;
      const double top = map(i0, j0) + fy * (map(i0, j1) - map(i0, j0));
      const double bottom = map(i1, j0) + fy * (map(i1, j1) - map(i1, j0));
      out(x, y) = top + fx * (bottom - top);
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("encode_pgm: rank-2 map required");
  const std::size_t W = map.extent(0), H = map.extent(1);
  const std::string header = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + W * H);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double v = map(x, y);
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("heatmap values must lie in [0, 1]");
      out.push_back(static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5)));
    }
  }
  return out;
}

void export_heatmap(const Tensor& map, const std::filesystem::path& path) {
  write_bytes(path, encode_pgm(map));
}

}  // namespace avloc::loc
