#pragma once

// Iterative contrastive learning: the baseline contrastive objective, the
// pseudo-label machinery driven by the previous-epoch snapshot, the
// inter-frame audio relation and the full iterative objective.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "avloc/dataset.hpp"
#include "avloc/encoders.hpp"
#include "avloc/localization.hpp"
#include "avloc/rng.hpp"

namespace avloc::icl {

struct TrainConfig {
  std::size_t k = 32;  // batch size
  double tau = 0.07;
  double delta_v = 0.6;
  double delta_a = 0.6;
  std::size_t total_epochs = 30;
  std::size_t initial_epochs = 5;
  double learning_rate = 0.1;
  std::size_t sample_count = 16;  // r: max patches pooled per side
  std::uint64_t seed = 0;
  bool renorm_pooled = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Which terms of the iterative objective are active after the initial stage.
struct LossComponents {
  bool iterative = true;  // use pseudo-sounding features v+ after the initial stage
  bool intra = true;      // add pseudo-non-sounding negatives v-
  bool inter = true;      // use the audio relation matrix y instead of the identity
};

enum class Variant { initial, itr, itr_intra, itr_inter, full };

struct VariantConfig {
  Variant variant = Variant::full;
  std::string name;
  TrainConfig train;
  LossComponents components;
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);
VariantConfig make_variant(const TrainConfig& base, Variant v);
/// Initial, Itr, Itr+Intra, Itr+Inter and Full derived from one base config.
std::vector<VariantConfig> ablation_variants(const TrainConfig& base);

struct LossResult {
  double value = 0.0;
  Tensor grad_visual;    // k x d, w.r.t. phi(V_i) or v+_i
  Tensor grad_negative;  // k x d, w.r.t. v-_i (zero rows where absent)
  Tensor grad_audio;     // k x d
};

/// -(1/k) sum_i log softmax_j(<v_i, a_j> / tau)[i], log-sum-exp stabilised.
/// visual and audio are (k x d).
LossResult contrastive_loss(const Tensor& visual, const Tensor& audio, double tau);

/// k x k binary matrix, row-major.
struct RelationMatrix {
  std::size_t k = 0;
  std::vector<std::uint8_t> y;

  bool at(std::size_t i, std::size_t j) const { return y[i * k + j] != 0; }
  bool symmetric() const;
  bool unit_diagonal() const;
  static RelationMatrix identity(std::size_t k);
  static RelationMatrix ones(std::size_t k);
};

/// y[i][j] = 1 iff <a_i, a_j> >= delta_a, for unit-norm rows of `audio`. The
/// diagonal is always 1, so delta_a > 1 yields the identity.
RelationMatrix relation_matrix(const Tensor& audio, double delta_a);

/// -(1/k) sum_i log[ sum_j y_ij e^{v+_i.a_j/tau} /
///                   sum_j (e^{v-_i.a_j/tau} + e^{v+_i.a_j/tau}) ]
/// The v- terms of row i are dropped when has_negative[i] is false. Throws
/// ConfigError for tau <= 0 or a row of y without any positive.
LossResult iterative_loss(const Tensor& v_plus, const Tensor& v_minus,
                          const std::vector<bool>& has_negative, const Tensor& audio,
                          const RelationMatrix& y, double tau);

/// Pseudo-labels for one instance, computed with the snapshot parameters.
struct InstanceLabels {
  std::vector<std::size_t> pos;  // flat patch indices with R~ > delta_v
  std::vector<std::size_t> neg;  // flat patch indices with R~ < delta_v
  enc::AudioEmbedding audio;     // a~
  loc::ResponseMap response;     // min-max normalised R~
};

struct PseudoLabels {
  std::vector<InstanceLabels> items;

  /// (k x d) matrix of the snapshot audio embeddings.
  Tensor audio_matrix() const;
};

/// Splits a normalised response map at delta_v with strict inequalities on
/// both sides; patches equal to delta_v belong to neither set.
InstanceLabels labels_from_response(const loc::ResponseMap& normalized, double delta_v);

PseudoLabels compute_pseudo_labels(const enc::Snapshot& snapshot, const enc::EncoderConfig& cfg,
                                   const Batch& batch, double delta_v, std::size_t threads = 1);

/// Patch subset pooled into v+: r indices drawn without replacement when
/// |x_pos| > r, all of x_pos otherwise, and every patch when x_pos is empty.
std::vector<std::size_t> sample_sounding_indices(const std::vector<std::size_t>& pos,
                                                 std::size_t num_patches, std::size_t r, Rng& rng);
/// Same rule over x_neg; nullopt when x_neg is empty (no v- for the instance).
std::optional<std::vector<std::size_t>> sample_nonsounding_indices(
    const std::vector<std::size_t>& neg, std::size_t r, Rng& rng);

enc::PooledFeature sample_sounding_feature(const enc::VisualFeatureMap& v,
                                           const std::vector<std::size_t>& pos, std::size_t r,
                                           Rng& rng, bool renorm = true);
std::optional<enc::PooledFeature> sample_nonsounding_feature(const enc::VisualFeatureMap& v,
                                                             const std::vector<std::size_t>& neg,
                                                             std::size_t r, Rng& rng,
                                                             bool renorm = true);

}  // namespace avloc::icl
