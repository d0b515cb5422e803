#include "avloc/pipeline.hpp"

#include <ostream>

#include "avloc/avic_io.hpp"
#include "avloc/error.hpp"

namespace avloc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError(std::string("unknown ") + what + " key '" + it.key() + "'");
  }
}

json eval_to_json(const eval::EvalConfig& c) {
  return {{"pixel_threshold", c.pixel_threshold}, {"consensus", c.consensus}};
}

eval::EvalConfig eval_from_json(const json& j) {
  reject_unknown(j, {"pixel_threshold", "consensus"}, "eval config");
  eval::EvalConfig c;
  try {
    if (j.contains("pixel_threshold")) j.at("pixel_threshold").get_to(c.pixel_threshold);
    if (j.contains("consensus")) j.at("consensus").get_to(c.consensus);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("eval config: ") + e.what());
  }
  if (c.consensus == 0) throw ConfigError("eval consensus must be >= 1");
  return c;
}

std::string checkpoint_variant(const enc::Checkpoint& ck) {
  return ck.extra.value("variant", std::string("full"));
}

}  // namespace

json lms_to_json(const dsp::LogMelConfig& c) {
  return {{"mel_bins", c.mel_bins},   {"window_seconds", c.window_seconds},
          {"hop_seconds", c.hop_seconds}, {"f_min", c.f_min},
          {"f_max", c.f_max},         {"floor", c.floor}};
}

dsp::LogMelConfig lms_from_json(const json& j) {
  reject_unknown(j, {"mel_bins", "window_seconds", "hop_seconds", "f_min", "f_max", "floor"},
                 "audio config");
  dsp::LogMelConfig c;
  try {
    if (j.contains("mel_bins")) j.at("mel_bins").get_to(c.mel_bins);
    if (j.contains("window_seconds")) j.at("window_seconds").get_to(c.window_seconds);
    if (j.contains("hop_seconds")) j.at("hop_seconds").get_to(c.hop_seconds);
    if (j.contains("f_min")) j.at("f_min").get_to(c.f_min);
    if (j.contains("f_max")) j.at("f_max").get_to(c.f_max);
    if (j.contains("floor")) j.at("floor").get_to(c.floor);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("audio config: ") + e.what());
  }
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  j["train"] = c.train;
  j["encoder"] = c.encoder;
  j["audio"] = lms_to_json(c.audio);
  j["eval"] = eval_to_json(c.eval);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"train", "encoder", "audio", "eval"}, "run config");
  RunConfig c;
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("encoder")) enc::from_json(j.at("encoder"), c.encoder);
  if (j.contains("audio")) c.audio = lms_from_json(j.at("audio"));
  if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
  c.train.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

enc::EncoderConfig resolve_encoder(const RunConfig& cfg, const corpus::CorpusManifest& m,
                                   const std::vector<Example>* train) {
  enc::EncoderConfig e = cfg.encoder;
  e.image_width = m.config.width;
  e.image_height = m.config.height;
  e.channels = m.config.channels;
  e.mel_bins = cfg.audio.mel_bins;
  if (e.standardize_audio && e.audio_shift.empty() && train && !train->empty()) {
    std::vector<const dsp::Spectrogram*> clips;
    for (const auto& x : *train) clips.push_back(&x.lms);
    enc::fit_audio_standardization(e, clips);
  }
  e.validate();
  return e;
}

std::vector<Example> load_examples(const corpus::Corpus& c, const std::string& split,
                                   const dsp::LogMelConfig& audio, std::size_t threads) {
  if (split == "train") return prepare_examples(c.train, audio, threads);
  if (split == "test") return prepare_examples(c.test, audio, threads);
  throw ConfigError("unknown split '" + split + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

corpus::CorpusManifest gen_corpus(const corpus::CorpusConfig& cfg, std::uint64_t seed,
                                  const fs::path& out) {
  cfg.validate();
  const auto c = corpus::generate_corpus(cfg, seed);
  auto m = corpus::save_corpus(c, out);
  json resolved{{"command", "gen-corpus"}, {"seed", seed}, {"corpus", cfg}};
  write_json(out / "resolved_config.json", resolved);
  return m;
}

icl::TrainState train(const TrainRequest& req) {
  const auto c = corpus::load_corpus(req.corpus);
  const RunConfig& cfg = req.config;
  const auto vc = icl::make_variant(cfg.train, req.variant);
  const auto train_set = load_examples(c, "train", cfg.audio, req.threads);
  const auto test_set = load_examples(c, "test", cfg.audio, req.threads);
  const auto enc_cfg = resolve_encoder(cfg, c.manifest, &train_set);

  std::optional<icl::TrainState> resume;
  if (req.resume) {
    auto ck = enc::load_checkpoint(*req.resume);
    if (json(ck.encoder) != json(enc_cfg)) {
      throw ConfigError("checkpoint encoder config does not match the run config");
    }
    if (checkpoint_variant(ck) != vc.name) {
      throw ConfigError("checkpoint was trained as variant '" + checkpoint_variant(ck) +
                        "', not '" + vc.name + "'");
    }
    icl::TrainState st;
    st.params = std::move(ck.params);
    st.epochs_done = ck.extra.at("epochs_done").get<std::size_t>();
    st.log = icl::parse_metrics_csv(ck.extra.at("metrics_csv").get<std::string>());
    resume = std::move(st);
  }

  icl::TrainOptions opt;
  opt.components = vc.components;
  opt.threads = req.threads;
  opt.test = req.evaluate_each_epoch ? &test_set : nullptr;
  opt.eval = cfg.eval;
  opt.stop_after = req.stop_after;
  if (req.log) {
    std::ostream& os = *req.log;
    opt.on_epoch = [&os](const icl::EpochMetrics& m) {
      os << "epoch " << m.epoch << " loss " << m.mean_loss;
      if (m.evaluated) os << " cIoU@0.5 " << m.ciou_at_05 << " AUC " << m.auc;
      os << "\n";
      os.flush();
    };
  }
  auto state = icl::train(train_set, enc_cfg, vc.train, opt, std::move(resume));

  fs::create_directories(req.out);
  const std::string csv = icl::metrics_csv(state.log);
  enc::Checkpoint ck;
  ck.params = state.params;
  ck.encoder = enc_cfg;
  ck.extra = {{"variant", vc.name},
              {"epochs_done", state.epochs_done},
              {"train", vc.train},
              {"audio", lms_to_json(cfg.audio)},
              {"eval", eval_to_json(cfg.eval)},
              {"metrics_csv", csv}};
  enc::save_checkpoint(req.out / "checkpoint", ck);
  write_text(req.out / "metrics.csv", csv);

  RunConfig resolved = cfg;
  resolved.train = vc.train;
  resolved.encoder = enc_cfg;
  json r = to_json(resolved);
  r["command"] = "train";
  r["variant"] = vc.name;
  r["components"] = {{"iterative", vc.components.iterative},
                     {"intra", vc.components.intra},
                     {"inter", vc.components.inter}};
  r["corpus"] = fs::absolute(req.corpus).lexically_normal().string();
  r["corpus_seed"] = c.manifest.seed;
  r["resumed_from"] = req.resume ? json(fs::absolute(*req.resume).lexically_normal().string())
                                 : json(nullptr);
  r["stop_after"] = req.stop_after;
  write_json(req.out / "resolved_config.json", r);
  return state;
}

eval::EvalResult evaluate(const EvalRequest& req) {
  const auto ck = enc::load_checkpoint(req.checkpoint);
  const auto c = corpus::load_corpus(req.corpus);
  if (c.manifest.config.width != ck.encoder.image_width ||
      c.manifest.config.height != ck.encoder.image_height ||
      c.manifest.config.channels != ck.encoder.channels) {
    throw ShapeError("corpus images are " + std::to_string(c.manifest.config.width) + "x" +
                     std::to_string(c.manifest.config.height) + "x" +
                     std::to_string(c.manifest.config.channels) + " but the checkpoint expects " +
                     std::to_string(ck.encoder.image_width) + "x" +
                     std::to_string(ck.encoder.image_height) + "x" +
                     std::to_string(ck.encoder.channels));
  }
  const auto audio = lms_from_json(ck.extra.value("audio", json::object()));
  const eval::EvalConfig ev =
      req.eval ? *req.eval : eval_from_json(ck.extra.value("eval", json::object()));
  const auto test_set = load_examples(c, "test", audio, req.threads);

  fs::create_directories(req.out);
  std::optional<fs::path> hm;
  if (req.export_heatmaps) {
    hm = req.out / "heatmaps";
    fs::create_directories(*hm);
  }
  auto r = eval::evaluate_examples(ck.params, ck.encoder, test_set, ev, req.threads, hm);
  write_json(req.out / "eval.json", eval::eval_result_to_json(r));
  write_text(req.out / "curve.csv", eval::curve_csv(r.curve));

  json resolved{{"command", "eval"},
                {"corpus", fs::absolute(req.corpus).lexically_normal().string()},
                {"checkpoint", fs::absolute(req.checkpoint).lexically_normal().string()},
                {"encoder", ck.encoder},
                {"audio", lms_to_json(audio)},
                {"eval", eval_to_json(ev)},
                {"export_heatmaps", req.export_heatmaps}};
  write_json(req.out / "resolved_config.json", resolved);
  return r;
}

LocalizeResult localize(const fs::path& checkpoint, const fs::path& image,
                        const fs::path& audio_raw, const fs::path& audio_json, const fs::path& out,
                        std::optional<double> delta_v) {
  const auto ck = enc::load_checkpoint(checkpoint);
  const Tensor img = read_avic(image);
  const auto& e = ck.encoder;
  if (img.rank() != 3 || img.extent(0) != e.image_width || img.extent(1) != e.image_height ||
      img.extent(2) != e.channels) {
    throw ShapeError("image is " + shape_to_string(img.shape()) + " but the checkpoint expects " +
                     shape_to_string({e.image_width, e.image_height, e.channels}));
  }
  const auto wave = dsp::read_waveform(audio_raw, audio_json);
  const auto audio = lms_from_json(ck.extra.value("audio", json::object()));
  const auto lms = dsp::log_mel_spectrogram(wave, audio);

  LocalizeResult r;
  r.localization = eval::localize(ck.params, e, img, lms);
  double dv = icl::TrainConfig{}.delta_v;
  if (ck.extra.contains("train")) dv = ck.extra.at("train").value("delta_v", dv);
  if (delta_v) dv = *delta_v;
  r.region = loc::threshold_region(r.localization.response, dv);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  loc::export_heatmap(r.localization.heatmap, out);
  return r;
}

}  // namespace avloc::pipeline
