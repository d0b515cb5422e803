#include "avloc/icl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avloc/error.hpp"
#include "avloc/ops.hpp"
#include "avloc/parallel.hpp"

namespace avloc::icl {

using nlohmann::json;

void TrainConfig::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
  // delta_v / delta_a outside [0, 1] are accepted: they force the
  // all-sounding / identity-relation reductions.
  if (!std::isfinite(delta_v) || !std::isfinite(delta_a)) {
    throw ConfigError("delta_v and delta_a must be finite");
  }
  if (initial_epochs > total_epochs) throw ConfigError("initial_epochs cannot exceed total_epochs");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (sample_count < 1) throw ConfigError("sample_count must be at least 1");
}

#define AVLOC_TRAIN_FIELDS(X)                                                                 \
  X(k) X(tau) X(delta_v) X(delta_a) X(total_epochs) X(initial_epochs) X(learning_rate)       \
  X(sample_count) X(seed) X(renorm_pooled)

void to_json(json& j, const TrainConfig& c) {
  j = json::object();
#define X(f) j[#f] = c.f;
  AVLOC_TRAIN_FIELDS(X)
#undef X
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
#define X(f) known = known || it.key() == #f;
    AVLOC_TRAIN_FIELDS(X)
#undef X
    if (!known) throw ConfigError("unknown train config key '" + it.key() + "'");
  }
  try {
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    AVLOC_TRAIN_FIELDS(X)
#undef X
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config value: ") + e.what());
  }
}

#undef AVLOC_TRAIN_FIELDS

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::initial: return "initial";
    case Variant::itr: return "itr";
    case Variant::itr_intra: return "itr-intra";
    case Variant::itr_inter: return "itr-inter";
    case Variant::full: return "full";
  }
  return "full";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::initial, Variant::itr, Variant::itr_intra, Variant::itr_inter, Variant::full}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "' (expected initial|itr|itr-intra|itr-inter|full)");
}

VariantConfig make_variant(const TrainConfig& base, Variant v) {
  VariantConfig out{v, variant_name(v), base, {}};
  switch (v) {
    case Variant::initial:
      out.train.initial_epochs = out.train.total_epochs;
      out.components = {false, false, false};
      break;
    case Variant::itr: out.components = {true, false, false}; break;
    case Variant::itr_intra: out.components = {true, true, false}; break;
    case Variant::itr_inter: out.components = {true, false, true}; break;
    case Variant::full: out.components = {true, true, true}; break;
  }
  return out;
}

std::vector<VariantConfig> ablation_variants(const TrainConfig& base) {
  std::vector<VariantConfig> out;
  for (auto v : {Variant::initial, Variant::itr, Variant::itr_intra, Variant::itr_inter, Variant::full}) {
    out.push_back(make_variant(base, v));
  }
  return out;
}

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError(std::string(what) + ": rank-2 inputs required");
  require_same_shape(a, b, what);
}

/// Scores S[i][j] = <v_i, a_j> / tau.
std::vector<double> scores(const Tensor& v, const Tensor& a, double tau) {
  const std::size_t k = v.extent(0);
  std::vector<double> s(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) s[i * k + j] = dot(v.row(i), a.row(j)) / tau;
  }
  return s;
}

/// grad_v[i] += sum_j g[i][j] a_j / tau ; grad_a[j] += sum_i g[i][j] v_i / tau.
void scatter_score_grad(const std::vector<double>& g, const Tensor& v, const Tensor& a, double tau,
                        Tensor& grad_v, Tensor& grad_a) {
  const std::size_t k = v.extent(0), d = v.extent(1);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double gij = g[i * k + j] / tau;
      if (gij == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) {
        grad_v(i, c) += gij * a(j, c);
        grad_a(j, c) += gij * v(i, c);
      }
    }
  }
}

}  // namespace

LossResult contrastive_loss(const Tensor& visual, const Tensor& audio, double tau) {
  if (!(tau > 0.0)) throw ConfigError("contrastive_loss: tau must be positive");
  check_pair(visual, audio, "contrastive_loss");
  const std::size_t k = visual.extent(0);
  const auto s = scores(visual, audio, tau);
  const double inv_k = 1.0 / static_cast<double>(k);
  LossResult r;
  r.grad_visual = Tensor(visual.shape(), 0.0);
  r.grad_negative = Tensor(visual.shape(), 0.0);
  r.grad_audio = Tensor(audio.shape(), 0.0);
  std::vector<double> g(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    std::span<const double> row(s.data() + i * k, k);
    r.value += (ops::log_sum_exp(row) - row[i]) * inv_k;
    const auto p = ops::softmax(row);
    for (std::size_t j = 0; j < k; ++j) g[i * k + j] = (p[j] - (i == j ? 1.0 : 0.0)) * inv_k;
  }
  scatter_score_grad(g, visual, audio, tau, r.grad_visual, r.grad_audio);
  return r;
}

bool RelationMatrix::symmetric() const {
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (at(i, j) != at(j, i)) return false;
    }
  }
  return true;
}

bool RelationMatrix::unit_diagonal() const {
  for (std::size_t i = 0; i < k; ++i) {
    if (!at(i, i)) return false;
  }
  return true;
}

RelationMatrix RelationMatrix::identity(std::size_t k) {
  RelationMatrix m{k, std::vector<std::uint8_t>(k * k, 0)};
  for (std::size_t i = 0; i < k; ++i) m.y[i * k + i] = 1;
  return m;
}

RelationMatrix RelationMatrix::ones(std::size_t k) {
  return {k, std::vector<std::uint8_t>(k * k, 1)};
}

RelationMatrix relation_matrix(const Tensor& audio, double delta_a) {
  if (audio.rank() != 2) throw ShapeError("relation_matrix: (k x d) audio matrix required");
  const std::size_t k = audio.extent(0);
  RelationMatrix m{k, std::vector<std::uint8_t>(k * k, 0)};
  // Every instance relates to itself: a unit vector's self-similarity is 1,
  // and rounding of the self dot product must not clear the diagonal.
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      m.y[i * k + j] = i == j || dot(audio.row(i), audio.row(j)) >= delta_a ? 1 : 0;
    }
  }
  return m;
}

LossResult iterative_loss(const Tensor& v_plus, const Tensor& v_minus,
                          const std::vector<bool>& has_negative, const Tensor& audio,
                          const RelationMatrix& y, double tau) {
  if (!(tau > 0.0)) throw ConfigError("iterative_loss: tau must be positive");
  check_pair(v_plus, audio, "iterative_loss");
  check_pair(v_minus, audio, "iterative_loss");
  const std::size_t k = v_plus.extent(0);
  if (has_negative.size() != k || y.k != k) throw ShapeError("iterative_loss: batch size mismatch");
  for (std::size_t i = 0; i < k; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < k; ++j) any = any || y.at(i, j);
    if (!any) throw ConfigError("iterative_loss: relation row " + std::to_string(i) + " has no positive");
  }
  const auto sp = scores(v_plus, audio, tau);
  const auto sm = scores(v_minus, audio, tau);
  const double inv_k = 1.0 / static_cast<double>(k);
  LossResult r;
  r.grad_visual = Tensor(v_plus.shape(), 0.0);
  r.grad_negative = Tensor(v_minus.shape(), 0.0);
  r.grad_audio = Tensor(audio.shape(), 0.0);
  std::vector<double> gp(k * k, 0.0), gm(k * k, 0.0);
  std::vector<double> num, den;
  std::vector<std::size_t> num_cols;
  for (std::size_t i = 0; i < k; ++i) {
    num.clear();
    num_cols.clear();
    den.clear();
    for (std::size_t j = 0; j < k; ++j) {
      if (y.at(i, j)) {
        num.push_back(sp[i * k + j]);
        num_cols.push_back(j);
      }
    }
    // Denominator layout: [v+ terms (k), v- terms (k, if present)].
    den.insert(den.end(), sp.begin() + static_cast<long>(i * k), sp.begin() + static_cast<long>((i + 1) * k));
    if (has_negative[i]) {
      den.insert(den.end(), sm.begin() + static_cast<long>(i * k), sm.begin() + static_cast<long>((i + 1) * k));
    }
    r.value += (ops::log_sum_exp(den) - ops::log_sum_exp(num)) * inv_k;
    const auto q = ops::softmax(den);
    const auto p = ops::softmax(num);
    for (std::size_t j = 0; j < k; ++j) gp[i * k + j] = q[j] * inv_k;
    if (has_negative[i]) {
      for (std::size_t j = 0; j < k; ++j) gm[i * k + j] = q[k + j] * inv_k;
    }
    for (std::size_t n = 0; n < num_cols.size(); ++n) gp[i * k + num_cols[n]] -= p[n] * inv_k;
  }
  scatter_score_grad(gp, v_plus, audio, tau, r.grad_visual, r.grad_audio);
  scatter_score_grad(gm, v_minus, audio, tau, r.grad_negative, r.grad_audio);
  return r;
}

Tensor PseudoLabels::audio_matrix() const {
  if (items.empty()) throw ShapeError("audio_matrix: no pseudo-labels");
  const std::size_t d = items.front().audio.values.size();
  Tensor m({items.size(), d});
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].audio.values.values().begin(), items[i].audio.values.values().end(),
              m.row(i).begin());
  }
  return m;
}

InstanceLabels labels_from_response(const loc::ResponseMap& normalized, double delta_v) {
  InstanceLabels out;
  out.response = normalized;
  for (std::size_t p = 0; p < normalized.values.size(); ++p) {
    const double v = normalized.values[p];
    if (v > delta_v) out.pos.push_back(p);
    else if (v < delta_v) out.neg.push_back(p);
  }
  return out;
}

PseudoLabels compute_pseudo_labels(const enc::Snapshot& snapshot, const enc::EncoderConfig& cfg,
                                   const Batch& batch, double delta_v, std::size_t threads) {
  PseudoLabels out;
  out.items.resize(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const auto v = enc::visual_encode(snapshot.params(), cfg, batch[i]->image);
    const auto a = enc::audio_encode(snapshot.params(), cfg, batch[i]->lms);
    const auto r = loc::minmax_normalize(loc::response_map(v, a));
    out.items[i] = labels_from_response(r, delta_v);
    out.items[i].audio = a;
  });
  return out;
}

std::vector<std::size_t> sample_sounding_indices(const std::vector<std::size_t>& pos,
                                                 std::size_t num_patches, std::size_t r, Rng& rng) {
  if (pos.empty()) {
    std::vector<std::size_t> all(num_patches);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  if (pos.size() <= r) return pos;
  auto pick = rng.choose_without_replacement(pos.size(), r);
  std::vector<std::size_t> out;
  out.reserve(r);
  for (auto p : pick) out.push_back(pos[p]);
  return out;
}

std::optional<std::vector<std::size_t>> sample_nonsounding_indices(const std::vector<std::size_t>& neg,
                                                                   std::size_t r, Rng& rng) {
  if (neg.empty()) return std::nullopt;
  if (neg.size() <= r) return neg;
  auto pick = rng.choose_without_replacement(neg.size(), r);
  std::vector<std::size_t> out;
  out.reserve(r);
  for (auto p : pick) out.push_back(neg[p]);
  return out;
}

enc::PooledFeature sample_sounding_feature(const enc::VisualFeatureMap& v,
                                           const std::vector<std::size_t>& pos, std::size_t r,
                                           Rng& rng, bool renorm) {
  return enc::phi_subset(v, sample_sounding_indices(pos, v.num_patches(), r, rng), renorm);
}

std::optional<enc::PooledFeature> sample_nonsounding_feature(const enc::VisualFeatureMap& v,
                                                             const std::vector<std::size_t>& neg,
                                                             std::size_t r, Rng& rng, bool renorm) {
  auto idx = sample_nonsounding_indices(neg, r, rng);
  if (!idx) return std::nullopt;
  return enc::phi_subset(v, *idx, renorm);
}

}  // namespace avloc::icl
