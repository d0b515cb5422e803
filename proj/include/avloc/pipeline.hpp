#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "avloc/corpus.hpp"
#include "avloc/dataset.hpp"
#include "avloc/encoders.hpp"
#include "avloc/evaluation.hpp"
#include "avloc/icl.hpp"
#include "avloc/trainer.hpp"
#include "json.hpp"

// End-to-end commands shared by the CLI, the Python module and the tests.
namespace avloc::pipeline {

/// Training/evaluation configuration file:
///   {"train": {...}, "encoder": {...}, "audio": {...}, "eval": {...}}
/// Every section and key is optional. Image size, channels and mel bins of
/// the encoder are always taken from the corpus and the audio section.
struct RunConfig {
  icl::TrainConfig train;
  enc::EncoderConfig encoder;
  dsp::LogMelConfig audio;
  eval::EvalConfig eval;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json lms_to_json(const dsp::LogMelConfig& c);
dsp::LogMelConfig lms_from_json(const nlohmann::json& j);

/// Encoder config matched to the corpus image size and the mel bins. With
/// standardize_audio set and no statistics given, they are fitted on `train`.
enc::EncoderConfig resolve_encoder(const RunConfig& cfg, const corpus::CorpusManifest& m,
                                   const std::vector<Example>* train = nullptr);

std::vector<Example> load_examples(const corpus::Corpus& c, const std::string& split,
                                   const dsp::LogMelConfig& audio, std::size_t threads);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// gen-corpus: writes the corpus plus resolved_config.json.
corpus::CorpusManifest gen_corpus(const corpus::CorpusConfig& cfg, std::uint64_t seed,
                                  const std::filesystem::path& out);

struct TrainRequest {
  std::filesystem::path corpus;
  std::filesystem::path out;
  RunConfig config;
  icl::Variant variant = icl::Variant::full;
  std::size_t threads = 1;
  std::optional<std::filesystem::path> resume;  // checkpoint directory
  std::size_t stop_after = 0;                   // 0 = run to total_epochs
  bool evaluate_each_epoch = true;
  std::ostream* log = nullptr;
};

/// train: writes out/checkpoint/, out/metrics.csv and out/resolved_config.json.
icl::TrainState train(const TrainRequest& req);

struct EvalRequest {
  std::filesystem::path corpus;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::optional<eval::EvalConfig> eval;  // defaults to the checkpoint's
  std::size_t threads = 1;
  bool export_heatmaps = false;
};

/// eval: writes out/eval.json, out/curve.csv, out/resolved_config.json and,
/// on request, out/heatmaps/<id>.pgm.
eval::EvalResult evaluate(const EvalRequest& req);

struct LocalizeResult {
  eval::Localization localization;
  loc::SoundingRegion region;
};

/// localize: heatmap PGM for one image/audio pair. Throws ShapeError naming
/// both sizes when the image does not match the checkpoint.
LocalizeResult localize(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                        const std::filesystem::path& audio_raw,
                        const std::filesystem::path& audio_json, const std::filesystem::path& out,
                        std::optional<double> delta_v = std::nullopt);

}  // namespace avloc::pipeline
