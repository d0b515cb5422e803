#include "avloc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "avloc/error.hpp"
#include "avloc/parallel.hpp"

namespace avloc::icl {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kSampleStream = 3;

std::uint64_t batch_key(std::size_t epoch, std::size_t batch) {
  return (static_cast<std::uint64_t>(epoch) << 32) | static_cast<std::uint64_t>(batch);
}

}  // namespace

BatchPlan initial_plan(std::size_t k) {
  BatchPlan p;
  p.iterative = false;
  p.y = RelationMatrix::identity(k);
  p.neg.assign(k, std::nullopt);
  return p;
}

BatchPlan plan_batch(const PseudoLabels& labels, const LossComponents& components,
                     const TrainConfig& cfg, std::size_t num_patches, Rng& rng) {
  const std::size_t k = labels.items.size();
  BatchPlan p;
  p.iterative = true;
  for (const auto& item : labels.items) {
    p.pos.push_back(sample_sounding_indices(item.pos, num_patches, cfg.sample_count, rng));
    p.neg.push_back(components.intra ? sample_nonsounding_indices(item.neg, cfg.sample_count, rng)
                                     : std::nullopt);
  }
  if (components.inter) {
    p.y = relation_matrix(labels.audio_matrix(), cfg.delta_a);
    if (!p.y.symmetric()) throw Error("relation matrix is not symmetric");
  } else {
    p.y = RelationMatrix::identity(k);
  }
  return p;
}

double batch_objective(const ParamVector& params, const enc::EncoderConfig& enc_cfg,
                       const Batch& batch, const BatchPlan& plan, const TrainConfig& cfg,
                       ParamVector* grad, std::size_t threads, BatchLossTerms* terms) {
  const std::size_t k = batch.size();
  if (k == 0) throw ConfigError("empty batch");
  if (plan.iterative && (plan.pos.size() != k || plan.neg.size() != k)) {
    throw ConfigError("batch plan does not match the batch size");
  }
  const std::size_t d = enc_cfg.embed_dim;

  std::vector<enc::VisualCache> vis(k);
  std::vector<enc::AudioCache> aud(k);
  parallel_for(k, threads, [&](std::size_t i) {
    vis[i] = enc::visual_forward(params, enc_cfg, batch[i]->image);
    aud[i] = enc::audio_forward(params, enc_cfg, batch[i]->lms);
  });

  std::vector<enc::PooledFeature> plus(k);
  std::vector<std::optional<enc::PooledFeature>> minus(k);
  Tensor vp({k, d}), vm({k, d}, 0.0), audio({k, d});
  std::vector<bool> has_neg(k, false);
  for (std::size_t i = 0; i < k; ++i) {
    plus[i] = plan.iterative ? enc::phi_subset(vis[i].map, plan.pos[i], cfg.renorm_pooled)
                             : enc::phi(vis[i].map, cfg.renorm_pooled);
    std::copy(plus[i].value.begin(), plus[i].value.end(), vp.row(i).begin());
    if (plan.iterative && plan.neg[i]) {
      minus[i] = enc::phi_subset(vis[i].map, *plan.neg[i], cfg.renorm_pooled);
      std::copy(minus[i]->value.begin(), minus[i]->value.end(), vm.row(i).begin());
      has_neg[i] = true;
    }
    std::copy(aud[i].pooled.unit.begin(), aud[i].pooled.unit.end(), audio.row(i).begin());
  }

  const LossResult lr = plan.iterative ? iterative_loss(vp, vm, has_neg, audio, plan.y, cfg.tau)
                                       : contrastive_loss(vp, audio, cfg.tau);
  if (terms) {
    terms->loss = lr.value;
    terms->negatives = static_cast<std::size_t>(std::count(has_neg.begin(), has_neg.end(), true));
    terms->relation_positives = static_cast<std::size_t>(std::count(plan.y.y.begin(), plan.y.y.end(), 1));
  }
  if (!std::isfinite(lr.value)) return lr.value;
  if (!grad) return lr.value;

  std::vector<ParamVector> per(k);
  parallel_for(k, threads, [&](std::size_t i) {
    per[i] = params.zeros_like();
    Tensor gf({enc_cfg.num_patches(), d}, 0.0);
    enc::phi_backward(plus[i], lr.grad_visual.row(i), gf);
    if (minus[i]) enc::phi_backward(*minus[i], lr.grad_negative.row(i), gf);
    enc::visual_backward(params, vis[i], gf, per[i]);
    enc::audio_backward(params, aud[i], lr.grad_audio.row(i), per[i]);
  });
  *grad = params.zeros_like();
  for (const auto& g : per) grad->axpy(1.0, g);
  return lr.value;
}

TrainState train(const std::vector<Example>& train_set, const enc::EncoderConfig& enc_cfg,
                 const TrainConfig& cfg, const TrainOptions& options,
                 std::optional<TrainState> resume) {
  cfg.validate();
  enc_cfg.validate();
  if (train_set.empty()) throw ConfigError("training split is empty");

  TrainState state;
  if (resume) {
    state = std::move(*resume);
    if (state.epochs_done > cfg.total_epochs) throw ConfigError("checkpoint is past total_epochs");
    if (state.epochs_done > 0 && !state.snapshot) {
      state.snapshot = enc::take_snapshot(state.params, state.epochs_done);
    }
  } else {
    Rng init_rng = Rng::derive(cfg.seed, kInitStream);
    state.params = enc::init_params(enc_cfg, init_rng);
  }

  const std::size_t last = options.stop_after ? std::min(options.stop_after, cfg.total_epochs)
                                              : cfg.total_epochs;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = state.epochs_done + 1; epoch <= last; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng::derive(cfg.seed, kShuffleStream, epoch);
    shuffle_rng.shuffle(order);

    const bool iterative = epoch > cfg.initial_epochs && options.components.iterative;
    EpochMetrics m;
    m.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.k, ++b) {
      const std::size_t end = std::min(order.size(), start + cfg.k);
      if (end - start < 2 && cfg.k > 1) break;
      Batch batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);

      BatchPlan plan;
      if (iterative) {
        if (!state.snapshot) throw Error("iterative stage reached without a snapshot");
        const auto labels =
            compute_pseudo_labels(*state.snapshot, enc_cfg, batch, cfg.delta_v, options.threads);
        Rng sample_rng = Rng::derive(cfg.seed, kSampleStream, batch_key(epoch, b));
        plan = plan_batch(labels, options.components, cfg, enc_cfg.num_patches(), sample_rng);
        ++m.iterative_evals;
      } else {
        plan = initial_plan(batch.size());
        ++m.contrastive_evals;
      }

      ParamVector g;
      BatchLossTerms terms;
      const double loss =
          batch_objective(state.params, enc_cfg, batch, plan, cfg, &g, options.threads, &terms);
      if (!std::isfinite(loss) || !g.all_finite()) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << b << ": loss=" << loss
           << " (" << (plan.iterative ? "iterative" : "contrastive") << ", negatives="
           << terms.negatives << ", relation positives=" << terms.relation_positives << ")";
        throw GradientError(os.str());
      }
      state.params.axpy(-cfg.learning_rate, g);
      loss_sum += loss;
      ++batches;
    }
    m.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    state.snapshot = enc::take_snapshot(state.params, epoch);
    state.epochs_done = epoch;
    if (options.test && !options.test->empty()) {
      const auto r = eval::evaluate_examples(state.params, enc_cfg, *options.test, options.eval,
                                             options.threads);
      m.evaluated = true;
      m.ciou_at_05 = r.ciou_at_05;
      m.auc = r.auc;
    }
    state.log.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }
  return state;
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::ostringstream os;
  os << "epoch,mean_loss,ciou_at_0.5,auc,contrastive_evals,iterative_evals\n";
  char buf[256];
  for (const auto& m : log) {
    if (m.evaluated) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu,%zu\n", m.epoch, m.mean_loss,
                    m.ciou_at_05, m.auc, m.contrastive_evals, m.iterative_evals);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,,,%zu,%zu\n", m.epoch, m.mean_loss,
                    m.contrastive_evals, m.iterative_evals);
    }
    os << buf;
  }
  return os.str();
}

std::vector<EpochMetrics> parse_metrics_csv(const std::string& text) {
  std::vector<EpochMetrics> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw IoError("metrics CSV row has " + std::to_string(f.size()) + " fields");
    EpochMetrics m;
    m.epoch = std::stoul(f[0]);
    m.mean_loss = std::stod(f[1]);
    m.evaluated = !f[2].empty();
    if (m.evaluated) {
      m.ciou_at_05 = std::stod(f[2]);
      m.auc = std::stod(f[3]);
    }
    m.contrastive_evals = std::stoul(f[4]);
    m.iterative_evals = std::stoul(f[5]);
    out.push_back(m);
  }
  return out;
}

}  // namespace avloc::icl
