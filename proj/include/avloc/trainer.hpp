#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avloc/dataset.hpp"
#include "avloc/encoders.hpp"
#include "avloc/evaluation.hpp"
#include "avloc/icl.hpp"

namespace avloc::icl {

/// Everything about a batch that does not depend on the current parameters:
/// which patches feed v+ and v-, and the relation matrix. Fixing the plan
/// makes the batch loss a smooth function of the current parameters.
struct BatchPlan {
  bool iterative = false;
  std::vector<std::vector<std::size_t>> pos;
  std::vector<std::optional<std::vector<std::size_t>>> neg;
  RelationMatrix y;
};

/// Plan for the baseline objective (phi over all patches, identity relation).
BatchPlan initial_plan(std::size_t k);

/// Draws the v+/v- patch subsets from the pseudo-labels and builds y. Without
/// `intra` no v- is sampled; without `inter` y is the identity.
BatchPlan plan_batch(const PseudoLabels& labels, const LossComponents& components,
                     const TrainConfig& cfg, std::size_t num_patches, Rng& rng);

struct BatchLossTerms {
  double loss = 0.0;
  std::size_t negatives = 0;         // instances with a v- term
  std::size_t relation_positives = 0;  // ones in y
};

/// Contrastive (plan.iterative == false) or iterative loss of the batch under
/// `params`; fills `grad` (same structure as params) when non-null. The
/// gradient is reduced in batch order, so `threads` never changes the result.
double batch_objective(const ParamVector& params, const enc::EncoderConfig& enc_cfg,
                       const Batch& batch, const BatchPlan& plan, const TrainConfig& cfg,
                       ParamVector* grad, std::size_t threads = 1, BatchLossTerms* terms = nullptr);

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  bool evaluated = false;
  double ciou_at_05 = 0.0;
  double auc = 0.0;
  std::size_t contrastive_evals = 0;
  std::size_t iterative_evals = 0;
};

struct TrainState {
  ParamVector params;
  std::optional<enc::Snapshot> snapshot;
  std::size_t epochs_done = 0;
  std::vector<EpochMetrics> log;
};

struct TrainOptions {
  LossComponents components;
  std::size_t threads = 1;
  const std::vector<Example>* test = nullptr;  // evaluated after every epoch when set
  eval::EvalConfig eval;
  /// Stop after this many epochs in total (0 = run to total_epochs).
  std::size_t stop_after = 0;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Initial stage with the contrastive loss, then the iterative loss with
/// pseudo-labels from the snapshot taken at the end of the previous epoch.
/// Plain gradient descent; batches come from a seeded shuffle per epoch.
TrainState train(const std::vector<Example>& train_set, const enc::EncoderConfig& enc_cfg,
                 const TrainConfig& cfg, const TrainOptions& options,
                 std::optional<TrainState> resume = std::nullopt);

/// "epoch,mean_loss,ciou_at_0.5,auc,contrastive_evals,iterative_evals".
std::string metrics_csv(const std::vector<EpochMetrics>& log);
std::vector<EpochMetrics> parse_metrics_csv(const std::string& text);

}  // namespace avloc::icl
