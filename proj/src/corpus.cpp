#include "avloc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include "avloc/avic_io.hpp"
#include "avloc/error.hpp"

namespace avloc::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

void BoundingBox::validate(std::size_t width, std::size_t height) const {
  if (!(0 <= x0 && x0 < x1 && x1 <= static_cast<int>(width) && 0 <= y0 && y0 < y1 &&
        y1 <= static_cast<int>(height))) {
    throw ConfigError("bounding box [" + std::to_string(x0) + "," + std::to_string(y0) + "," +
                      std::to_string(x1) + "," + std::to_string(y1) + ") outside " +
                      std::to_string(width) + "x" + std::to_string(height) + " image");
  }
}

void CorpusConfig::validate() const {
  if (width == 0 || height == 0 || channels == 0) throw ConfigError("image extents must be positive");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (objects_min < 1 || objects_min > objects_max) {
    throw ConfigError("need 1 <= objects_min <= objects_max");
  }
  if (objects_max > num_classes) throw ConfigError("objects_max cannot exceed num_classes");
  if (sounding_min < 1 || sounding_min > sounding_max) {
    throw ConfigError("need 1 <= sounding_min <= sounding_max");
  }
  if (!(min_box_frac > 0.0 && min_box_frac <= max_box_frac && max_box_frac < 1.0)) {
    throw ConfigError("need 0 < min_box_frac <= max_box_frac < 1");
  }
  if (!(sample_rate > 0.0) || !(clip_seconds > 0.0)) {
    throw ConfigError("sample_rate and clip_seconds must be positive");
  }
  if (image_noise < 0.0 || audio_noise < 0.0 || texture_jitter < 0.0 || background_jitter < 0.0 || tone_amplitude <= 0.0) {
    throw ConfigError("noise levels must be non-negative and tone_amplitude positive");
  }
  if (train_instances == 0) throw ConfigError("train split must be non-empty");
  for (std::size_t c = 0; c < num_classes; ++c) synth_class_tone(c, *this);
}

#define AVLOC_CORPUS_FIELDS(X)                                                                 \
  X(width) X(height) X(channels) X(num_classes) X(objects_min) X(objects_max) X(sounding_min) \
  X(sounding_max) X(min_box_frac) X(max_box_frac) X(sample_rate) X(clip_seconds)              \
  X(image_noise) X(audio_noise) X(texture_jitter) X(background_jitter) X(tone_amplitude)     \
  X(train_instances) X(test_instances) X(placement_retries)

void to_json(json& j, const CorpusConfig& c) {
  j = json::object();
#define X(f) j[#f] = c.f;
  AVLOC_CORPUS_FIELDS(X)
#undef X
}

void from_json(const json& j, CorpusConfig& c) {
  if (!j.is_object()) throw ConfigError("corpus config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
#define X(f) known = known || it.key() == #f;
    AVLOC_CORPUS_FIELDS(X)
#undef X
    if (!known) throw ConfigError("unknown corpus config key '" + it.key() + "'");
  }
  try {
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    AVLOC_CORPUS_FIELDS(X)
#undef X
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad corpus config value: ") + e.what());
  }
}

#undef AVLOC_CORPUS_FIELDS

namespace {

std::vector<double> class_color(std::size_t class_id, std::size_t channels, double value) {
  // Golden-ratio hue walk: distinct hues for every class.
  const double hue = std::fmod(static_cast<double>(class_id) * 0.6180339887498949, 1.0) * 6.0;
  const double s = 0.75;
  const double c = value * s;
  const double x = c * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
  const double m = value - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hue)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double rgb[3] = {r + m, g + m, b + m};
  std::vector<double> out(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    out[ch] = ch < 3 ? rgb[ch] : (rgb[0] + rgb[1] + rgb[2]) / 3.0;
  }
  return out;
}

}  // namespace

double TextureRecipe::value(int x, int y, std::size_t channel) const {
  int coord = 0;
  switch (orientation) {
    case 0: coord = y; break;
    case 1: coord = x; break;
    case 2: coord = x + y; break;
    default: coord = x - y + 4 * period; break;
  }
  const bool stripe = ((coord + phase) % period) < period / 2;
  return stripe ? accent_color[channel] : base_color[channel];
}

TextureRecipe synth_class_texture(std::size_t class_id, const CorpusConfig& cfg, Rng& rng) {
  if (class_id >= cfg.num_classes) throw ConfigError("class_id out of range");
  TextureRecipe t;
  t.base_color = class_color(class_id, cfg.channels, 0.9);
  t.accent_color = class_color(class_id, cfg.channels, 0.45);
  t.orientation = static_cast<int>(class_id % 4);
  t.period = 4 + 2 * static_cast<int>((class_id / 4) % 3);
  for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
    const double shift = cfg.texture_jitter * (2.0 * rng.draw_uniform() - 1.0);
    t.base_color[ch] = std::clamp(t.base_color[ch] + shift, 0.0, 1.0);
    t.accent_color[ch] = std::clamp(t.accent_color[ch] + shift, 0.0, 1.0);
  }
  t.phase = static_cast<int>(rng.draw_index(static_cast<std::size_t>(t.period)));
  return t;
}

ToneRecipe synth_class_tone(std::size_t class_id, const CorpusConfig& cfg) {
  if (class_id >= cfg.num_classes) throw ConfigError("class_id out of range");
  ToneRecipe t;
  const double c = static_cast<double>(class_id);
  t.frequencies = {300.0 + 120.0 * c, 620.0 + 120.0 * c};
  t.amplitude = cfg.tone_amplitude;
  for (double f : t.frequencies) {
    if (f >= cfg.sample_rate / 2.0) {
      throw ConfigError("class " + std::to_string(class_id) + " tone at " + std::to_string(f) +
                        " Hz exceeds the Nyquist limit of " + std::to_string(cfg.sample_rate / 2.0));
    }
  }
  return t;
}

std::vector<double> render_tone(const ToneRecipe& tone, double sample_rate, std::size_t length) {
  std::vector<double> out(length, 0.0);
  for (double f : tone.frequencies) {
    const double w = 2.0 * std::numbers::pi * f / sample_rate;
    for (std::size_t n = 0; n < length; ++n) out[n] += tone.amplitude * std::sin(w * static_cast<double>(n));
  }
  return out;
}

std::vector<BoundingBox> CorpusInstance::sounding_boxes() const {
  std::vector<BoundingBox> out;
  for (const auto& o : objects) {
    if (o.sounding) out.push_back(o.box);
  }
  return out;
}

std::vector<std::size_t> CorpusInstance::sounding_classes() const {
  std::vector<std::size_t> out;
  for (const auto& o : objects) {
    if (o.sounding) out.push_back(o.class_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::optional<BoundingBox> draw_box(const CorpusConfig& cfg, Rng& rng) {
  const double image_area = static_cast<double>(cfg.width * cfg.height);
  const double area = image_area * rng.draw_uniform(cfg.min_box_frac, cfg.max_box_frac);
  const double aspect = std::exp(rng.draw_uniform(std::log(0.75), std::log(1.0 / 0.75)));
  int w = static_cast<int>(std::lround(std::sqrt(area * aspect)));
  int h = static_cast<int>(std::lround(area / std::max(w, 1)));
  w = std::clamp(w, 1, static_cast<int>(cfg.width));
  h = std::clamp(h, 1, static_cast<int>(cfg.height));
  const double frac = static_cast<double>(w) * h / image_area;
  if (frac < cfg.min_box_frac || frac > cfg.max_box_frac) return std::nullopt;
  BoundingBox b;
  b.x0 = static_cast<int>(rng.draw_index(cfg.width - static_cast<std::size_t>(w) + 1));
  b.y0 = static_cast<int>(rng.draw_index(cfg.height - static_cast<std::size_t>(h) + 1));
  b.x1 = b.x0 + w;
  b.y1 = b.y0 + h;
  return b;
}

std::vector<BoundingBox> place_boxes(const CorpusConfig& cfg, Rng& rng, std::size_t count) {
  constexpr int kDrawsPerBox = 64;
  for (std::size_t restart = 0; restart < cfg.placement_retries; ++restart) {
    std::vector<BoundingBox> boxes;
    for (int draw = 0; draw < kDrawsPerBox && boxes.size() < count; ++draw) {
      const auto b = draw_box(cfg, rng);
      if (!b) continue;
      const bool clash = std::any_of(boxes.begin(), boxes.end(),
                                     [&](const BoundingBox& o) { return o.overlaps(*b); });
      if (!clash) {
        boxes.push_back(*b);
        draw = -1;
      }
    }
    if (boxes.size() == count) return boxes;
  }
  throw ConfigError("could not place " + std::to_string(count) + " non-overlapping boxes after " +
                    std::to_string(cfg.placement_retries) + " restarts");
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

CorpusInstance generate_instance(const CorpusConfig& cfg, Rng& rng, std::size_t instance_id) {
  const std::size_t n_obj = cfg.objects_min + rng.draw_index(cfg.objects_max - cfg.objects_min + 1);
  const std::size_t hi = std::min(cfg.sounding_max, n_obj);
  const std::size_t lo = std::min(cfg.sounding_min, hi);
  const std::size_t n_snd = lo + rng.draw_index(hi - lo + 1);
  return generate_instance(cfg, rng, instance_id, n_obj, n_snd);
}

CorpusInstance generate_instance(const CorpusConfig& cfg, Rng& rng, std::size_t instance_id,
                                 std::size_t num_objects, std::size_t num_sounding) {
  if (num_objects < 1 || num_sounding < 1 || num_sounding > num_objects) {
    throw ConfigError("need 1 <= num_sounding <= num_objects");
  }
  if (num_objects > cfg.num_classes) throw ConfigError("more objects than classes");
  CorpusInstance inst;
  inst.instance_id = instance_id;

  const auto classes = rng.choose_without_replacement(cfg.num_classes, num_objects);
  const auto boxes = place_boxes(cfg, rng, num_objects);
  const auto sounding = rng.choose_without_replacement(num_objects, num_sounding);
  for (std::size_t i = 0; i < num_objects; ++i) {
    const bool snd = std::find(sounding.begin(), sounding.end(), i) != sounding.end();
    inst.objects.push_back({boxes[i], classes[i], snd});
  }

  // Image: tinted grey background with pixel noise, then textured boxes.
  const std::size_t W = cfg.width, H = cfg.height, C = cfg.channels;
  inst.image = Tensor({W, H, C});
  std::vector<double> tint(C);
  for (auto& t : tint) t = 0.5 + cfg.background_jitter * (2.0 * rng.draw_uniform() - 1.0);
  std::vector<TextureRecipe> textures;
  for (const auto& o : inst.objects) textures.push_back(synth_class_texture(o.class_id, cfg, rng));
  for (std::size_t x = 0; x < W; ++x) {
    for (std::size_t y = 0; y < H; ++y) {
      const CorpusObject* owner = nullptr;
      std::size_t owner_idx = 0;
      for (std::size_t k = 0; k < inst.objects.size(); ++k) {
        if (inst.objects[k].box.contains(static_cast<int>(x), static_cast<int>(y))) {
          owner = &inst.objects[k];
          owner_idx = k;
          break;
        }
      }
      for (std::size_t ch = 0; ch < C; ++ch) {
        double v = owner ? textures[owner_idx].value(static_cast<int>(x) - owner->box.x0,
                                                     static_cast<int>(y) - owner->box.y0, ch)
                         : tint[ch];
        if (cfg.image_noise > 0.0) v += cfg.image_noise * rng.draw_normal();
        inst.image[(x * H + y) * C + ch] = to_f32(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  // Audio: tones of the sounding objects plus white noise.
  const std::size_t n = static_cast<std::size_t>(std::lround(cfg.clip_seconds * cfg.sample_rate));
  inst.waveform.sample_rate = cfg.sample_rate;
  inst.waveform.samples.assign(n, 0.0);
  for (const auto& o : inst.objects) {
    if (!o.sounding) continue;
    const auto tone = render_tone(synth_class_tone(o.class_id, cfg), cfg.sample_rate, n);
    for (std::size_t i = 0; i < n; ++i) inst.waveform.samples[i] += tone[i];
  }
  for (auto& s : inst.waveform.samples) {
    if (cfg.audio_noise > 0.0) s += cfg.audio_noise * rng.draw_normal();
    s = to_f32(s);
  }
  return inst;
}

std::size_t CorpusManifest::num_instances() const {
  std::size_t n = 0;
  for (const auto& s : splits) n += s.instances.size();
  return n;
}

const SplitManifest& CorpusManifest::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.split == name) return s;
  }
  throw IoError("corpus has no '" + name + "' split");
}

Corpus generate_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Corpus c;
  c.manifest.config = cfg;
  c.manifest.seed = seed;
  const std::size_t total = cfg.train_instances + cfg.test_instances;
  for (std::size_t id = 0; id < total; ++id) {
    Rng rng = Rng::derive(seed, id);
    auto inst = generate_instance(cfg, rng, id);
    inst.split = id < cfg.train_instances ? "train" : "test";
    (id < cfg.train_instances ? c.train : c.test).push_back(std::move(inst));
  }
  return c;
}

namespace {

std::string instance_dir_name(const CorpusInstance& inst) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", inst.instance_id);
  return inst.split + "/" + buf;
}

json meta_to_json(const CorpusInstance& inst) {
  json objs = json::array();
  for (const auto& o : inst.objects) {
    objs.push_back({{"box", {{"x0", o.box.x0}, {"y0", o.box.y0}, {"x1", o.box.x1}, {"y1", o.box.y1}}},
                    {"class_id", o.class_id},
                    {"sounding", o.sounding}});
  }
  return {{"instance_id", inst.instance_id}, {"split", inst.split}, {"objects", objs}};
}

}  // namespace

json manifest_to_json(const CorpusManifest& m) {
  const auto& c = m.config;
  json splits = json::array();
  for (const auto& s : m.splits) {
    splits.push_back({{"split", s.split}, {"num_instances", s.instances.size()}, {"instances", s.instances}});
  }
  return {{"num_instances", m.num_instances()},
          {"W", c.width},
          {"H", c.height},
          {"C", c.channels},
          {"sample_rate", c.sample_rate},
          {"clip_seconds", c.clip_seconds},
          {"num_classes", c.num_classes},
          {"seed", m.seed},
          {"config", c},
          {"splits", splits}};
}

void save_instance(const CorpusInstance& inst, const fs::path& dir) {
  fs::create_directories(dir);
  write_avic(dir / "image.avic", inst.image);
  dsp::write_waveform(dir / "audio.raw", dir / "audio.json", inst.waveform);
  write_text(dir / "meta.json", meta_to_json(inst).dump(2) + "\n");
}

CorpusInstance load_instance(const fs::path& dir) {
  CorpusInstance inst;
  inst.image = read_avic(dir / "image.avic");
  inst.waveform = dsp::read_waveform(dir / "audio.raw", dir / "audio.json");
  try {
    const json meta = json::parse(read_text(dir / "meta.json"));
    inst.instance_id = meta.at("instance_id").get<std::size_t>();
    inst.split = meta.at("split").get<std::string>();
    for (const auto& o : meta.at("objects")) {
      CorpusObject obj;
      const auto& b = o.at("box");
      obj.box = {b.at("x0").get<int>(), b.at("y0").get<int>(), b.at("x1").get<int>(), b.at("y1").get<int>()};
      obj.class_id = o.at("class_id").get<std::size_t>();
      obj.sounding = o.at("sounding").get<bool>();
      inst.objects.push_back(obj);
    }
  } catch (const json::exception& e) {
    throw IoError("bad meta.json in '" + dir.string() + "': " + e.what());
  }
  return inst;
}

CorpusManifest save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  CorpusManifest m = corpus.manifest;
  m.splits.clear();
  for (const auto* part : {&corpus.train, &corpus.test}) {
    SplitManifest sm{part == &corpus.train ? "train" : "test", {}};
    for (const auto& inst : *part) {
      const auto rel = instance_dir_name(inst);
      save_instance(inst, dir / rel);
      sm.instances.push_back(rel);
    }
    m.splits.push_back(std::move(sm));
  }
  write_text(dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
  return m;
}

Corpus load_corpus(const fs::path& dir) {
  Corpus c;
  json j;
  try {
    j = json::parse(read_text(dir / "manifest.json"));
    c.manifest.config = j.at("config").get<CorpusConfig>();
    c.manifest.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("splits")) {
      SplitManifest sm;
      sm.split = s.at("split").get<std::string>();
      sm.instances = s.at("instances").get<std::vector<std::string>>();
      if (s.at("num_instances").get<std::size_t>() != sm.instances.size()) {
        throw IoError("manifest split '" + sm.split + "' count disagrees with its instance list");
      }
      c.manifest.splits.push_back(std::move(sm));
    }
    if (j.at("num_instances").get<std::size_t>() != c.manifest.num_instances()) {
      throw IoError("manifest num_instances disagrees with the split lists");
    }
  } catch (const json::exception& e) {
    throw IoError("bad manifest in '" + dir.string() + "': " + e.what());
  }
  const auto& cfg = c.manifest.config;
  for (const auto& sm : c.manifest.splits) {
    auto& dst = sm.split == "train" ? c.train : c.test;
    for (const auto& rel : sm.instances) {
      auto inst = load_instance(dir / rel);
      if (inst.split != sm.split) throw IoError("instance '" + rel + "' is not in split " + sm.split);
      if (inst.image.shape() != Shape{cfg.width, cfg.height, cfg.channels}) {
        throw IoError("instance '" + rel + "' image shape " + shape_to_string(inst.image.shape()) +
                      " disagrees with the manifest");
      }
      for (const auto& o : inst.objects) {
        o.box.validate(cfg.width, cfg.height);
        if (o.class_id >= cfg.num_classes) throw IoError("instance '" + rel + "' has class out of range");
      }
      dst.push_back(std::move(inst));
    }
  }
  return c;
}

}  // namespace avloc::corpus
