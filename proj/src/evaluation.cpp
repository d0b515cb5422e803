#include "avloc/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "avloc/error.hpp"
#include "avloc/parallel.hpp"

namespace avloc::eval {

Tensor consensus_map(const std::vector<corpus::BoundingBox>& boxes, std::size_t width,
                     std::size_t height, std::size_t consensus) {
  if (consensus < 1) throw ConfigError("consensus must be at least 1");
  Tensor counts({width, height}, 0.0);
  for (const auto& b : boxes) {
    b.validate(width, height);
    for (int x = b.x0; x < b.x1; ++x) {
      for (int y = b.y0; y < b.y1; ++y) counts(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) += 1.0;
    }
  }
  for (auto& v : counts.data()) v = std::min(v / static_cast<double>(consensus), 1.0);
  return counts;
}

double ciou(const Tensor& pred, const Tensor& g, double pixel_threshold) {
  require_same_shape(pred, g, "ciou");
  double inter = 0.0, mass = 0.0;
  std::size_t false_pos = 0, selected = 0;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    mass += g[p];
    if (pred[p] > pixel_threshold) {
      ++selected;
      inter += g[p];
      if (g[p] == 0.0) ++false_pos;
    }
  }
  if (selected == 0) return mass > 0.0 ? 0.0 : 1.0;
  const double denom = mass + static_cast<double>(false_pos);
  return denom > 0.0 ? inter / denom : 0.0;
}

double SuccessCurve::ciou_at(double tau) const {
  if (scores.empty()) return 0.0;
  const auto n = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > tau; });
  return 100.0 * static_cast<double>(n) / static_cast<double>(scores.size());
}

SuccessCurve success_curve(std::span<const double> scores) {
  if (scores.empty()) throw ConfigError("success_curve: no scores");
  SuccessCurve c;
  c.scores.assign(scores.begin(), scores.end());
  constexpr int kSteps = 20;
  const double n = static_cast<double>(scores.size());
  for (int i = 0; i <= kSteps; ++i) {
    const double t = static_cast<double>(i) / kSteps;
    const auto above = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > t; });
    c.thresholds.push_back(t);
    c.ratios.push_back(static_cast<double>(above) / n);
  }
  for (int i = 0; i < kSteps; ++i) {
    c.auc += 0.5 * (c.ratios[i] + c.ratios[i + 1]) * (c.thresholds[i + 1] - c.thresholds[i]);
  }
  return c;
}

Localization localize(const ParamVector& params, const enc::EncoderConfig& cfg, const Tensor& image,
                      const dsp::Spectrogram& lms) {
  const auto v = enc::visual_encode(params, cfg, image);
  const auto a = enc::audio_encode(params, cfg, lms);
  Localization out;
  out.response = loc::minmax_normalize(loc::response_map(v, a));
  out.heatmap = loc::upsample_bilinear(out.response.values, cfg.image_width, cfg.image_height);
  return out;
}

EvalResult evaluate_examples(const ParamVector& params, const enc::EncoderConfig& cfg,
                             const std::vector<Example>& examples, const EvalConfig& eval_cfg,
                             std::size_t threads,
                             const std::optional<std::filesystem::path>& heatmap_dir) {
  if (examples.empty()) throw ConfigError("evaluation set is empty");
  EvalResult r;
  r.scores.resize(examples.size());
  std::vector<char> degenerate(examples.size(), 0);
  if (heatmap_dir) std::filesystem::create_directories(*heatmap_dir);
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto& ex = examples[i];
    if (ex.sounding_boxes.empty()) {
      throw ConfigError("instance " + std::to_string(ex.id) + " has no ground-truth box");
    }
    const auto l = localize(params, cfg, ex.image, ex.lms);
    const Tensor g = consensus_map(ex.sounding_boxes, cfg.image_width, cfg.image_height, eval_cfg.consensus);
    r.scores[i] = ciou(l.heatmap, g, eval_cfg.pixel_threshold);
    degenerate[i] = l.response.degenerate ? 1 : 0;
    if (heatmap_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "%06zu.pgm", ex.id);
      loc::export_heatmap(l.heatmap, *heatmap_dir / name);
    }
  });
  for (const auto& ex : examples) r.instance_ids.push_back(ex.id);
  r.degenerate_maps = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
  r.curve = success_curve(r.scores);
  r.ciou_at_03 = r.curve.ciou_at(0.3);
  r.ciou_at_05 = r.curve.ciou_at(0.5);
  r.auc = r.curve.auc;
  return r;
}

nlohmann::json eval_result_to_json(const EvalResult& r) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    per.push_back({{"instance_id", r.instance_ids[i]}, {"ciou", r.scores[i]}});
  }
  nlohmann::json curve = nlohmann::json::array();
  for (std::size_t i = 0; i < r.curve.thresholds.size(); ++i) {
    curve.push_back({{"threshold", r.curve.thresholds[i]}, {"success_ratio", r.curve.ratios[i]}});
  }
  return {{"num_instances", r.scores.size()},
          {"ciou_at_0.3", r.ciou_at_03},
          {"ciou_at_0.5", r.ciou_at_05},
          {"auc", r.auc},
          {"degenerate_maps", r.degenerate_maps},
          {"curve", curve},
          {"per_instance", per}};
}

std::string curve_csv(const SuccessCurve& c) {
  std::ostringstream os;
  os << "threshold,success_ratio\n";
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.17g\n", c.thresholds[i], c.ratios[i]);
    os << buf;
  }
  return os.str();
}

std::vector<std::size_t> audio_retrieval(const ParamVector& params, const enc::EncoderConfig& cfg,
                                         const std::vector<Example>& examples, std::size_t query_id,
                                         std::size_t top_n) {
  auto q = std::find_if(examples.begin(), examples.end(), [&](const Example& e) { return e.id == query_id; });
  if (q == examples.end()) throw ConfigError("unknown query instance id " + std::to_string(query_id));
  const auto qa = enc::audio_encode(params, cfg, q->lms);
  std::vector<std::pair<double, std::size_t>> ranked;
  for (const auto& e : examples) {
    if (e.id == query_id) continue;
    const auto a = enc::audio_encode(params, cfg, e.lms);
    ranked.emplace_back(dot(qa.values.data(), a.values.data()), e.id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(top_n, ranked.size()); ++i) out.push_back(ranked[i].second);
  return out;
}

}  // namespace avloc::eval
