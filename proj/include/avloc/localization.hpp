#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "avloc/encoders.hpp"
#include "avloc/tensor.hpp"

namespace avloc::loc {

/// Per-patch audio-visual correlation on the (grid_w x grid_h) patch grid.
struct ResponseMap {
  Tensor values;  // (w, h)
  bool normalized = false;
  bool degenerate = false;  // constant input to minmax_normalize
};

/// Patch coordinates (row = grid x index, col = grid y index).
using PatchIndex = std::pair<std::size_t, std::size_t>;

struct SoundingRegion {
  std::vector<PatchIndex> indices;  // row-major order
  double threshold = 0.0;

  /// Flat patch indices row * h + col.
  std::vector<std::size_t> flat(std::size_t grid_h) const;
};

/// R[i, j] = <unit(V[i, j]), a>.
ResponseMap response_map(const enc::VisualFeatureMap& v, const enc::AudioEmbedding& a);

/// (R - min R) / (max R - min R). A constant map becomes all zeros with the
/// degenerate flag set. Non-finite input throws.
ResponseMap minmax_normalize(const ResponseMap& r);

/// Patches whose normalised response is strictly greater than delta_v.
SoundingRegion threshold_region(const ResponseMap& r, double delta_v);

/// Align-corners bilinear interpolation of a (w, h) map to (W, H): output
/// pixel x samples the source at x * (w - 1) / (W - 1).
Tensor upsample_bilinear(const Tensor& map, std::size_t width, std::size_t height);

/// Binary PGM ("P5", maxval 255), pixel = floor(255 * value + 0.5). The map is
/// (W, H) with the first axis as image x (PGM column).
std::vector<std::uint8_t> encode_pgm(const Tensor& map);
void export_heatmap(const Tensor& map, const std::filesystem::path& path);

}  // namespace avloc::loc
