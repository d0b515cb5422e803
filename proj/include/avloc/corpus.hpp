#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "avloc/dsp.hpp"
#include "avloc/rng.hpp"
#include "avloc/tensor.hpp"

namespace avloc::corpus {

/// Half-open pixel box [x0, x1) x [y0, y1); x indexes the image width.
struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool overlaps(const BoundingBox& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
  /// Throws unless 0 <= x0 < x1 <= W and 0 <= y0 < y1 <= H.
  void validate(std::size_t width, std::size_t height) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct CorpusObject {
  BoundingBox box;
  std::size_t class_id = 0;
  bool sounding = false;

  friend bool operator==(const CorpusObject&, const CorpusObject&) = default;
};

struct CorpusConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t channels = 3;
  std::size_t num_classes = 8;
  std::size_t objects_min = 1;
  std::size_t objects_max = 4;
  std::size_t sounding_min = 1;
  std::size_t sounding_max = 2;
  double min_box_frac = 0.06;
  double max_box_frac = 0.12;
  double sample_rate = 8000.0;
  double clip_seconds = 1.0;
  double image_noise = 0.05;
  double audio_noise = 0.02;
  double texture_jitter = 0.05;
  double background_jitter = 0.1;  // per-image tint range around mid grey
  double tone_amplitude = 0.25;
  std::size_t train_instances = 512;
  std::size_t test_instances = 64;
  std::size_t placement_retries = 200;

  void validate() const;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, CorpusConfig& c);

/// Visual signature of a class: a stripe pattern modulating a base colour.
struct TextureRecipe {
  std::vector<double> base_color;    // one value per channel
  std::vector<double> accent_color;  // stripe colour
  int period = 4;                    // stripe period in pixels
  int orientation = 0;               // 0 horizontal, 1 vertical, 2 diagonal, 3 anti-diagonal
  int phase = 0;

  /// Colour of pixel (x, y) relative to the object's top-left corner.
  double value(int x, int y, std::size_t channel) const;
};

/// Deterministic per-class base pattern plus seeded colour jitter.
TextureRecipe synth_class_texture(std::size_t class_id, const CorpusConfig& cfg, Rng& rng);

/// Audio signature of a class: sinusoids at {300 + 120c, 620 + 120c} Hz.
struct ToneRecipe {
  std::vector<double> frequencies;
  double amplitude = 0.0;
};

/// Throws ConfigError if any class frequency reaches the Nyquist limit.
ToneRecipe synth_class_tone(std::size_t class_id, const CorpusConfig& cfg);
std::vector<double> render_tone(const ToneRecipe& tone, double sample_rate, std::size_t length);

struct CorpusInstance {
  std::size_t instance_id = 0;
  std::string split;
  Tensor image;  // W x H x C, values in [0, 1]
  dsp::Waveform waveform;
  std::vector<CorpusObject> objects;

  std::vector<BoundingBox> sounding_boxes() const;
  std::vector<std::size_t> sounding_classes() const;
};

/// Object and sounding counts drawn from the config ranges.
CorpusInstance generate_instance(const CorpusConfig& cfg, Rng& rng, std::size_t instance_id);
/// Explicit object / sounding counts.
CorpusInstance generate_instance(const CorpusConfig& cfg, Rng& rng, std::size_t instance_id,
                                 std::size_t num_objects, std::size_t num_sounding);

struct SplitManifest {
  std::string split;
  std::vector<std::string> instances;  // directories relative to the corpus root
};

struct CorpusManifest {
  CorpusConfig config;
  std::uint64_t seed = 0;
  std::vector<SplitManifest> splits;

  std::size_t num_instances() const;
  const SplitManifest& split(const std::string& name) const;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<CorpusInstance> train;
  std::vector<CorpusInstance> test;
};

/// Pure function of (cfg, seed): instance i draws from Rng::derive(seed, i).
Corpus generate_corpus(const CorpusConfig& cfg, std::uint64_t seed);

/// Writes manifest.json and <split>/<id>/{image.avic, audio.raw, audio.json, meta.json}.
CorpusManifest save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

void save_instance(const CorpusInstance& inst, const std::filesystem::path& dir);
CorpusInstance load_instance(const std::filesystem::path& dir);

nlohmann::json manifest_to_json(const CorpusManifest& m);

}  // namespace avloc::corpus
