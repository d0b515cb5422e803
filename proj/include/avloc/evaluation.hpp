#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "avloc/corpus.hpp"
#include "avloc/dataset.hpp"
#include "avloc/encoders.hpp"
#include "avloc/localization.hpp"
#include "avloc/tensor.hpp"

namespace avloc::eval {

struct EvalConfig {
  double pixel_threshold = 0.5;  // on the normalised, up-sampled response map
  std::size_t consensus = 1;
};

/// g = min(sum_i b_i / consensus, 1) over binary box masks, shape (W, H).
Tensor consensus_map(const std::vector<corpus::BoundingBox>& boxes, std::size_t width,
                     std::size_t height, std::size_t consensus);

/// With A = {p : pred[p] > pixel_threshold}:
///   sum_{p in A} g[p] / (sum_p g[p] + |{p in A : g[p] = 0}|).
/// Empty A scores 0 unless g is empty too, which scores 1.
double ciou(const Tensor& pred, const Tensor& g, double pixel_threshold);

/// Success ratio on the threshold grid {0.00, 0.05, ..., 1.00}.
struct SuccessCurve {
  std::vector<double> thresholds;
  std::vector<double> ratios;
  double auc = 0.0;  // trapezoidal integral over [0, 1]
  std::vector<double> scores;

  /// Fraction of scores strictly above tau, times 100.
  double ciou_at(double tau) const;
};

SuccessCurve success_curve(std::span<const double> scores);

struct EvalResult {
  std::vector<std::size_t> instance_ids;
  std::vector<double> scores;
  SuccessCurve curve;
  double ciou_at_03 = 0.0;
  double ciou_at_05 = 0.0;
  double auc = 0.0;
  std::size_t degenerate_maps = 0;
};

struct Localization {
  loc::ResponseMap response;  // normalised, patch grid
  Tensor heatmap;             // normalised, up-sampled to (W, H)
};

/// Encode, correlate, min-max normalise and up-sample one image/audio pair.
Localization localize(const ParamVector& params, const enc::EncoderConfig& cfg, const Tensor& image,
                      const dsp::Spectrogram& lms);

/// Scores every example against its sounding boxes. When heatmap_dir is set a
/// PGM named by instance id is written per example.
EvalResult evaluate_examples(const ParamVector& params, const enc::EncoderConfig& cfg,
                             const std::vector<Example>& examples, const EvalConfig& eval_cfg,
                             std::size_t threads = 1,
                             const std::optional<std::filesystem::path>& heatmap_dir = std::nullopt);

nlohmann::json eval_result_to_json(const EvalResult& r);
/// "threshold,success_ratio" header plus one row per grid point.
std::string curve_csv(const SuccessCurve& c);

/// Other examples ranked by <a_query, a_other>, ties broken by instance id.
std::vector<std::size_t> audio_retrieval(const ParamVector& params, const enc::EncoderConfig& cfg,
                                         const std::vector<Example>& examples, std::size_t query_id,
                                         std::size_t top_n);

}  // namespace avloc::eval
