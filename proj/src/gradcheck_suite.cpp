#include "avloc/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "avloc/encoders.hpp"
#include "avloc/trainer.hpp"

namespace avloc {

namespace {

enc::EncoderConfig small_encoder() {
  enc::EncoderConfig c;
  c.image_width = 8;
  c.image_height = 8;
  c.channels = 3;
  c.grid_w = 2;
  c.grid_h = 2;
  c.mel_bins = 8;
  c.hidden = 6;
  c.embed_dim = 4;
  return c;
}

std::vector<Example> random_examples(const enc::EncoderConfig& cfg, std::size_t k, Rng& rng) {
  std::vector<Example> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i].id = i;
    out[i].image = Tensor({cfg.image_width, cfg.image_height, cfg.channels});
    for (auto& v : out[i].image.data()) v = rng.draw_uniform();
    out[i].lms.mel_bins = cfg.mel_bins;
    out[i].lms.values = Tensor({cfg.mel_bins, 5});
    for (auto& v : out[i].lms.values.data()) v = rng.draw_uniform(-10.0, 5.0);
  }
  return out;
}

ParamVector random_params(const enc::EncoderConfig& cfg, Rng& rng) {
  ParamVector p = enc::init_params(cfg, rng);
  // Non-zero biases so every coordinate carries signal.
  for (auto name : {"visual.b1", "visual.b2", "audio.b1", "audio.b2"}) {
    for (auto& v : p.at(name).data()) v = rng.draw_uniform(-0.3, 0.3);
  }
  return p;
}

std::vector<std::size_t> random_subset(std::size_t n, std::size_t m, Rng& rng) {
  auto s = rng.choose_without_replacement(n, m);
  std::sort(s.begin(), s.end());
  return s;
}

Objective corrupt_objective(Objective base) {
  return [base](const ParamVector& at, ParamVector* grad) {
    const double v = base(at, grad);
    if (grad) {
      std::size_t worst = 0;
      for (std::size_t i = 0; i < grad->total_size(); ++i) {
        if (std::abs(grad->flat(i)) > std::abs(grad->flat(worst))) worst = i;
      }
      grad->flat(worst) *= 2.0;
    }
    return v;
  };
}

}  // namespace

GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options) {
  const auto cfg = small_encoder();
  const std::size_t k = 3;
  const std::size_t patches = cfg.num_patches();

  GradcheckSuiteReport report;
  report.seeds = options.num_seeds;
  report.tolerance = options.tolerance;
  const std::vector<std::string> names = {"contrastive",         "iterative:itr",
                                          "iterative:itr-intra", "iterative:itr-inter",
                                          "iterative:full",      "encoder:visual",
                                          "encoder:audio"};
  for (const auto& n : names) {
    GradcheckComponent c;
    c.name = n;
    report.components.push_back(c);
  }

  for (std::size_t s = 0; s < options.num_seeds; ++s) {
    Rng rng = Rng::derive(options.seed, 0x67726164, s);
    const auto examples = random_examples(cfg, k, rng);
    Batch batch;
    for (const auto& e : examples) batch.push_back(&e);
    const ParamVector params = random_params(cfg, rng);
    icl::TrainConfig tc;
    tc.tau = 0.5;

    // Iterative plans; instance 2 never has v-, relation links 0 and 1.
    auto make_plan = [&](bool intra, bool inter) {
      icl::BatchPlan plan;
      plan.iterative = true;
      for (std::size_t i = 0; i < k; ++i) {
        plan.pos.push_back(random_subset(patches, 1 + rng.draw_index(patches - 1), rng));
        if (intra && i != 2) plan.neg.emplace_back(random_subset(patches, 1 + rng.draw_index(patches - 1), rng));
        else plan.neg.emplace_back(std::nullopt);
      }
      plan.y = icl::RelationMatrix::identity(k);
      if (inter) plan.y.y[0 * k + 1] = plan.y.y[1 * k + 0] = 1;
      return plan;
    };

    std::vector<Objective> objectives;
    auto batch_loss = [&](icl::BatchPlan plan) -> Objective {
      return [&, plan](const ParamVector& at, ParamVector* grad) {
        return icl::batch_objective(at, cfg, batch, plan, tc, grad);
      };
    };
    objectives.push_back(batch_loss(icl::initial_plan(k)));
    objectives.push_back(batch_loss(make_plan(false, false)));
    objectives.push_back(batch_loss(make_plan(true, false)));
    objectives.push_back(batch_loss(make_plan(false, true)));
    objectives.push_back(batch_loss(make_plan(true, true)));

    Tensor vis_weights({patches, cfg.embed_dim});
    for (auto& v : vis_weights.data()) v = rng.draw_uniform(-1.0, 1.0);
    objectives.push_back([&, vis_weights](const ParamVector& at, ParamVector* grad) {
      const auto c = enc::visual_forward(at, cfg, examples[0].image);
      const Tensor rows = c.map.rows();
      double v = 0.0;
      for (std::size_t i = 0; i < rows.size(); ++i) v += vis_weights[i] * rows[i];
      if (grad) {
        *grad = at.zeros_like();
        enc::visual_backward(at, c, vis_weights, *grad);
      }
      return v;
    });
    std::vector<double> aud_weights(cfg.embed_dim);
    for (auto& v : aud_weights) v = rng.draw_uniform(-1.0, 1.0);
    objectives.push_back([&, aud_weights](const ParamVector& at, ParamVector* grad) {
      const auto c = enc::audio_forward(at, cfg, examples[1].lms);
      const double v = dot(c.pooled.unit, aud_weights);
      if (grad) {
        *grad = at.zeros_like();
        enc::audio_backward(at, c, aud_weights, *grad);
      }
      return v;
    });

    for (std::size_t c = 0; c < objectives.size(); ++c) {
      const Objective obj = options.corrupt ? corrupt_objective(objectives[c]) : objectives[c];
      const auto r = finite_diff_check(obj, params, options.step, options.tolerance);
      auto& comp = report.components[c];
      for (const auto& seg : r.segments) {
        if (seg.max_rel_error > comp.max_rel_error || std::isnan(seg.max_rel_error)) {
          comp.max_rel_error = seg.max_rel_error;
          comp.seed = s;
          comp.segment = seg.name;
          comp.index = seg.worst_index;
          comp.analytic = seg.worst_analytic;
          comp.numeric = seg.worst_numeric;
        }
      }
      comp.passed = comp.passed && r.passed;
    }
  }
  report.passed = std::all_of(report.components.begin(), report.components.end(),
                              [](const GradcheckComponent& c) { return c.passed; });
  return report;
}

}  // namespace avloc
