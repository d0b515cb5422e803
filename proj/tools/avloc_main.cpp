// avloc: corpus generation, training, evaluation, localization and gradient
// self-checks. Exit codes: 0 success, 1 runtime/data error, 2 usage error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "avloc/avic_io.hpp"
#include "avloc/error.hpp"
#include "avloc/gradcheck_suite.hpp"
#include "avloc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace avloc;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> delta_v, delta_a, tau, learning_rate;
  std::optional<std::size_t> total_epochs, initial_epochs, k, sample_count;

  void add(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Training seed");
    cmd->add_option("--delta-v", delta_v, "Sounding threshold on the normalised response");
    cmd->add_option("--delta-a", delta_a, "Audio relation threshold");
    cmd->add_option("--tau", tau, "Temperature");
    cmd->add_option("--lr", learning_rate, "Learning rate");
    cmd->add_option("--epochs", total_epochs, "Total epochs");
    cmd->add_option("--initial-epochs", initial_epochs, "Epochs of the initial stage");
    cmd->add_option("--batch", k, "Batch size k");
    cmd->add_option("--samples", sample_count, "Patches pooled per feature (r)");
  }

  void apply(icl::TrainConfig& t) const {
    if (seed) t.seed = *seed;
    if (delta_v) t.delta_v = *delta_v;
    if (delta_a) t.delta_a = *delta_a;
    if (tau) t.tau = *tau;
    if (learning_rate) t.learning_rate = *learning_rate;
    if (total_epochs) t.total_epochs = *total_epochs;
    if (initial_epochs) t.initial_epochs = *initial_epochs;
    if (k) t.k = *k;
    if (sample_count) t.sample_count = *sample_count;
    t.validate();
  }
};

corpus::CorpusConfig load_corpus_config(const std::string& path) {
  corpus::CorpusConfig cfg;
  if (path.empty()) return cfg;
  try {
    nlohmann::json::parse(read_text(path)).get_to(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

void print_gradcheck(const GradcheckSuiteReport& r) {
  for (const auto& c : r.components) {
    std::printf("%-22s max_rel_error=%.3e %s", c.name.c_str(), c.max_rel_error,
                c.passed ? "ok" : "FAIL");
    if (!c.passed) {
      std::printf("  (seed %zu, %s[%zu]: analytic %.6e, numeric %.6e)", c.seed, c.segment.c_str(),
                  c.index, c.analytic, c.numeric);
    }
    std::printf("\n");
  }
  std::printf("%zu seeds, tolerance %.0e: %s\n", r.seeds, r.tolerance,
              r.passed ? "passed" : "FAILED");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative contrastive sound localization on synthetic audio-visual data"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic corpus");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "Corpus config JSON (defaults when omitted)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Corpus seed");

  // train
  auto* tr = app.add_subcommand("train", "Train one ablation variant");
  std::string tr_corpus, tr_config, tr_out, tr_variant = "full", tr_resume;
  std::size_t tr_stop = 0;
  bool tr_no_eval = false;
  Overrides ov;
  tr->add_option("--corpus", tr_corpus, "Corpus directory")->required();
  tr->add_option("--config", tr_config, "Run config JSON");
  tr->add_option("--variant", tr_variant, "initial|itr|itr-intra|itr-inter|full")
      ->check(CLI::IsMember({"initial", "itr", "itr-intra", "itr-inter", "full"}));
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint directory to continue from");
  tr->add_option("--stop-after", tr_stop, "Stop once this many epochs are done");
  tr->add_flag("--no-eval", tr_no_eval, "Skip the per-epoch test evaluation");
  ov.add(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string ev_corpus, ev_ckpt, ev_out;
  bool ev_heatmaps = false;
  ev->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint directory")->required();
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev->add_flag("--export-heatmaps", ev_heatmaps, "Write one PGM per test instance");

  // localize
  auto* lo = app.add_subcommand("localize", "Heatmap for one image/audio pair");
  std::string lo_ckpt, lo_image, lo_audio, lo_audio_json, lo_out;
  std::optional<double> lo_dv;
  lo->add_option("--checkpoint", lo_ckpt, "Checkpoint directory")->required();
  lo->add_option("--image", lo_image, "Image (AVIC)")->required();
  lo->add_option("--audio", lo_audio, "Audio (raw f32; sidecar defaults to <stem>.json)")
      ->required();
  lo->add_option("--audio-json", lo_audio_json, "Audio sidecar JSON");
  lo->add_option("--out", lo_out, "Output PGM")->required();
  lo->add_option("--delta-v", lo_dv, "Region threshold (defaults to the checkpoint's)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and numerical gradients");
  GradcheckSuiteOptions gc_opt;
  gc->add_option("--seed", gc_opt.seed, "Base seed");
  gc->add_option("--seeds", gc_opt.num_seeds, "Number of random instances")
      ->check(CLI::PositiveNumber);
  gc->add_flag("--corrupt-gradient", gc_opt.corrupt, "Inject a gradient fault (debugging)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      const auto m = pipeline::gen_corpus(load_corpus_config(gen_config), gen_seed, gen_out);
      for (const auto& s : m.splits) {
        std::printf("%s: %zu instances\n", s.split.c_str(), s.instances.size());
      }
      std::printf("classes=%zu image=%zux%zux%zu audio=%gHz x %gs seed=%llu -> %s\n",
                  m.config.num_classes, m.config.width, m.config.height, m.config.channels,
                  m.config.sample_rate, m.config.clip_seconds,
                  static_cast<unsigned long long>(m.seed), gen_out.c_str());
    } else if (*tr) {
      pipeline::TrainRequest req;
      req.corpus = tr_corpus;
      req.out = tr_out;
      if (!tr_config.empty()) req.config = pipeline::load_run_config(tr_config);
      ov.apply(req.config.train);
      req.variant = icl::parse_variant(tr_variant);
      req.threads = threads;
      if (!tr_resume.empty()) req.resume = tr_resume;
      req.stop_after = tr_stop;
      req.evaluate_each_epoch = !tr_no_eval;
      req.log = &std::cout;
      const auto st = pipeline::train(req);
      std::printf("trained %s for %zu epochs -> %s\n", tr_variant.c_str(), st.epochs_done,
                  tr_out.c_str());
    } else if (*ev) {
      pipeline::EvalRequest req;
      req.corpus = ev_corpus;
      req.checkpoint = ev_ckpt;
      req.out = ev_out;
      req.threads = threads;
      req.export_heatmaps = ev_heatmaps;
      const auto r = pipeline::evaluate(req);
      std::printf("instances=%zu cIoU@0.3=%.2f cIoU@0.5=%.2f AUC=%.4f degenerate=%zu\n",
                  r.scores.size(), r.ciou_at_03, r.ciou_at_05, r.auc, r.degenerate_maps);
    } else if (*lo) {
      fs::path sidecar = lo_audio_json.empty() ? fs::path(lo_audio).replace_extension(".json")
                                               : fs::path(lo_audio_json);
      const auto r = pipeline::localize(lo_ckpt, lo_image, lo_audio, sidecar, lo_out, lo_dv);
      if (r.localization.response.degenerate) {
        std::fprintf(stderr, "warning: response map is constant; heatmap is all zeros\n");
      }
      std::printf("region (%zu patches):", r.region.indices.size());
      for (const auto& [i, j] : r.region.indices) std::printf(" (%zu,%zu)", i, j);
      std::printf("\n");
    } else if (*gc) {
      const auto r = run_gradcheck_suite(gc_opt);
      print_gradcheck(r);
      return r.passed ? 0 : kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
