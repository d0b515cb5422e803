#include "avloc/encoders.hpp"

#include <bit>
#include <cmath>
#include <numeric>

#include "avloc/avic_io.hpp"
#include "avloc/error.hpp"

namespace avloc::enc {

namespace fs = std::filesystem;
using nlohmann::json;

void EncoderConfig::validate() const {
  if (image_width == 0 || image_height == 0 || channels == 0) {
    throw ConfigError("encoder image extents must be positive");
  }
  if (grid_w == 0 || grid_h == 0 || image_width % grid_w != 0 || image_height % grid_h != 0) {
    throw ConfigError("patch grid " + std::to_string(grid_w) + "x" + std::to_string(grid_h) +
                      " must evenly divide the " + std::to_string(image_width) + "x" +
                      std::to_string(image_height) + " image");
  }
  if (mel_bins == 0 || hidden == 0 || embed_dim == 0) {
    throw ConfigError("mel_bins, hidden and embed_dim must be positive");
  }
  if (audio_shift.size() != audio_gain.size() ||
      (!audio_shift.empty() && audio_shift.size() != mel_bins)) {
    throw ConfigError("audio_shift and audio_gain must both be empty or have mel_bins entries");
  }
  for (std::size_t m = 0; m < audio_shift.size(); ++m) {
    if (!std::isfinite(audio_shift[m]) || !std::isfinite(audio_gain[m]) || audio_gain[m] <= 0.0) {
      throw ConfigError("audio standardisation statistics must be finite with positive gain");
    }
  }
}

void fit_audio_standardization(EncoderConfig& cfg,
                               const std::vector<const dsp::Spectrogram*>& clips) {
  const std::size_t M = cfg.mel_bins;
  std::vector<double> sum(M, 0.0), sq(M, 0.0);
  std::size_t frames = 0;
  for (const auto* c : clips) {
    if (c->values.rank() != 2 || c->values.extent(0) != M) {
      throw ShapeError("fit_audio_standardization: spectrogram does not have " + std::to_string(M) +
                       " mel bins");
    }
    frames += c->values.extent(1);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t t = 0; t < c->values.extent(1); ++t) sum[m] += c->values(m, t);
    }
  }
  if (frames == 0) throw ShapeError("fit_audio_standardization: no frames");
  const double n = static_cast<double>(frames);
  for (auto& v : sum) v /= n;
  for (const auto* c : clips) {
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t t = 0; t < c->values.extent(1); ++t) {
        const double d = c->values(m, t) - sum[m];
        sq[m] += d * d;
      }
    }
  }
  cfg.audio_shift = sum;
  cfg.audio_gain.assign(M, 1.0);
  for (std::size_t m = 0; m < M; ++m) {
    const double sd = std::sqrt(sq[m] / n);
    if (sd > 1e-12) cfg.audio_gain[m] = 1.0 / sd;
  }
}

#define AVLOC_ENCODER_FIELDS(X)                                                        \
  X(image_width) X(image_height) X(channels) X(grid_w) X(grid_h) X(mel_bins) X(hidden) \
  X(embed_dim) X(image_shift) X(audio_scale) X(standardize_audio) X(audio_shift)       \
  X(audio_gain)

void to_json(json& j, const EncoderConfig& c) {
  j = json::object();
#define X(f) j[#f] = c.f;
  AVLOC_ENCODER_FIELDS(X)
#undef X
}

void from_json(const json& j, EncoderConfig& c) {
  if (!j.is_object()) throw ConfigError("encoder config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
#define X(f) known = known || it.key() == #f;
    AVLOC_ENCODER_FIELDS(X)
#undef X
    if (!known) throw ConfigError("unknown encoder config key '" + it.key() + "'");
  }
  try {
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    AVLOC_ENCODER_FIELDS(X)
#undef X
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad encoder config value: ") + e.what());
  }
}

#undef AVLOC_ENCODER_FIELDS

namespace {

Tensor uniform_weights(std::size_t out, std::size_t in, Rng& rng) {
  Tensor w({out, in});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : w.data()) v = rng.draw_uniform(-bound, bound);
  return w;
}

}  // namespace

ParamVector init_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamVector p;
  p.add("visual.w1", uniform_weights(cfg.hidden, cfg.patch_pixels(), rng));
  p.add("visual.b1", Tensor({cfg.hidden}, 0.0));
  p.add("visual.w2", uniform_weights(cfg.embed_dim, cfg.hidden, rng));
  p.add("visual.b2", Tensor({cfg.embed_dim}, 0.0));
  p.add("audio.w1", uniform_weights(cfg.hidden, cfg.mel_bins, rng));
  p.add("audio.b1", Tensor({cfg.hidden}, 0.0));
  p.add("audio.w2", uniform_weights(cfg.embed_dim, cfg.hidden, rng));
  p.add("audio.b2", Tensor({cfg.embed_dim}, 0.0));
  return p;
}

Snapshot take_snapshot(const ParamVector& params, std::size_t epoch) {
  return Snapshot(params, epoch);
}

Tensor extract_patches(const EncoderConfig& cfg, const Tensor& image) {
  const Shape expected{cfg.image_width, cfg.image_height, cfg.channels};
  if (image.shape() != expected) {
    throw ShapeError("image shape " + shape_to_string(image.shape()) +
                     " does not match the encoder's " + shape_to_string(expected));
  }
  const std::size_t pw = cfg.patch_w(), ph = cfg.patch_h(), C = cfg.channels;
  const std::size_t H = cfg.image_height;
  Tensor patches({cfg.num_patches(), cfg.patch_pixels()});
  for (std::size_t i = 0; i < cfg.grid_w; ++i) {
    for (std::size_t j = 0; j < cfg.grid_h; ++j) {
      auto row = patches.row(i * cfg.grid_h + j);
      std::size_t k = 0;
      for (std::size_t dx = 0; dx < pw; ++dx) {
        const std::size_t x = i * pw + dx;
        for (std::size_t dy = 0; dy < ph; ++dy) {
          const std::size_t y = j * ph + dy;
          for (std::size_t c = 0; c < C; ++c) row[k++] = image[(x * H + y) * C + c] + cfg.image_shift;
        }
      }
    }
  }
  return patches;
}

VisualCache visual_forward(const ParamVector& params, const EncoderConfig& cfg, const Tensor& image) {
  VisualCache c;
  c.patches = extract_patches(cfg, image);
  c.hidden = ops::tanh(ops::affine(c.patches, params.at("visual.w1"), params.at("visual.b1")));
  Tensor out = ops::affine(c.hidden, params.at("visual.w2"), params.at("visual.b2"));
  c.map.values = out.reshaped({cfg.grid_w, cfg.grid_h, cfg.embed_dim});
  c.map.image_width = cfg.image_width;
  c.map.image_height = cfg.image_height;
  return c;
}

VisualFeatureMap visual_encode(const ParamVector& params, const EncoderConfig& cfg,
                               const Tensor& image) {
  return visual_forward(params, cfg, image).map;
}

void visual_backward(const ParamVector& params, const VisualCache& cache,
                     const Tensor& grad_features, ParamVector& grad) {
  Tensor grad_hidden;
  ops::affine_backward(cache.hidden, params.at("visual.w2"), grad_features, &grad_hidden,
                       grad.at("visual.w2"), grad.at("visual.b2"));
  const Tensor grad_pre = ops::tanh_backward(cache.hidden, grad_hidden);
  ops::affine_backward(cache.patches, params.at("visual.w1"), grad_pre, nullptr,
                       grad.at("visual.w1"), grad.at("visual.b1"));
}

AudioCache audio_forward(const ParamVector& params, const EncoderConfig& cfg,
                         const dsp::Spectrogram& lms) {
  if (lms.values.rank() != 2 || lms.values.extent(0) != cfg.mel_bins) {
    throw ShapeError("spectrogram shape " + shape_to_string(lms.values.shape()) +
                     " does not have the encoder's " + std::to_string(cfg.mel_bins) + " mel bins");
  }
  const std::size_t T = lms.values.extent(1);
  AudioCache c;
  c.frames = Tensor({T, cfg.mel_bins});
  const bool fitted = !cfg.audio_shift.empty();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < cfg.mel_bins; ++m) {
      c.frames(t, m) = fitted ? (lms.values(m, t) - cfg.audio_shift[m]) * cfg.audio_gain[m]
                              : lms.values(m, t) * cfg.audio_scale;
    }
  }
  c.hidden = ops::tanh(ops::affine(c.frames, params.at("audio.w1"), params.at("audio.b1")));
  // mean over frames commutes with the second affine layer
  std::vector<std::size_t> all(T);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto mean_hidden = ops::mean_rows(c.hidden, all);
  const Tensor mh({1, cfg.hidden}, mean_hidden);
  const Tensor pooled = ops::affine(mh, params.at("audio.w2"), params.at("audio.b2"));
  c.pooled = ops::l2_normalize(pooled.data());
  return c;
}

AudioEmbedding audio_encode(const ParamVector& params, const EncoderConfig& cfg,
                            const dsp::Spectrogram& lms) {
  auto c = audio_forward(params, cfg, lms);
  return {Tensor::from_vector(c.pooled.unit), !c.pooled.degenerate};
}

void audio_backward(const ParamVector& params, const AudioCache& cache,
                    std::span<const double> grad_embedding, ParamVector& grad) {
  const auto g_pooled = ops::l2_normalize_backward(cache.pooled, grad_embedding);
  const std::size_t T = cache.hidden.extent(0), Hd = cache.hidden.extent(1);
  std::vector<std::size_t> all(T);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor mh({1, Hd}, ops::mean_rows(cache.hidden, all));
  Tensor g_mean;
  ops::affine_backward(mh, params.at("audio.w2"), Tensor({1, g_pooled.size()}, g_pooled), &g_mean,
                       grad.at("audio.w2"), grad.at("audio.b2"));
  Tensor g_hidden({T, Hd}, 0.0);
  ops::mean_rows_backward(all, g_mean.data(), g_hidden);
  const Tensor g_pre = ops::tanh_backward(cache.hidden, g_hidden);
  ops::affine_backward(cache.frames, params.at("audio.w1"), g_pre, nullptr, grad.at("audio.w1"),
                       grad.at("audio.b1"));
}

PooledFeature phi_subset(const VisualFeatureMap& v, std::span<const std::size_t> indices,
                         bool renorm) {
  if (indices.empty()) throw ShapeError("phi_subset: empty patch index set");
  const std::size_t d = v.dim();
  PooledFeature out;
  out.renorm = renorm;
  out.indices.assign(indices.begin(), indices.end());
  std::vector<double> mean(d, 0.0);
  for (auto p : indices) {
    if (p >= v.num_patches()) throw ShapeError("phi_subset: patch index out of range");
    out.patches.push_back(ops::l2_normalize(v.patch(p)));
    const auto& u = out.patches.back().unit;
    for (std::size_t c = 0; c < d; ++c) mean[c] += u[c];
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& m : mean) m *= inv;
  if (renorm) {
    out.pooled = ops::l2_normalize(mean);
    out.value = out.pooled.unit;
    out.degenerate = out.pooled.degenerate;
  } else {
    out.value = mean;
    out.degenerate = l2_norm(mean) == 0.0;
  }
  return out;
}

PooledFeature phi(const VisualFeatureMap& v, bool renorm) {
  std::vector<std::size_t> all(v.num_patches());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return phi_subset(v, all, renorm);
}

void phi_backward(const PooledFeature& pooled, std::span<const double> grad_value,
                  Tensor& grad_features) {
  std::vector<double> g_mean = pooled.renorm ? ops::l2_normalize_backward(pooled.pooled, grad_value)
                                             : std::vector<double>(grad_value.begin(), grad_value.end());
  const double inv = 1.0 / static_cast<double>(pooled.indices.size());
  for (auto& g : g_mean) g *= inv;
  for (std::size_t k = 0; k < pooled.indices.size(); ++k) {
    const auto g_patch = ops::l2_normalize_backward(pooled.patches[k], g_mean);
    auto row = grad_features.row(pooled.indices[k]);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += g_patch[c];
  }
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  json segments = json::object();
  for (const auto& s : ckpt.params.segments()) {
    const std::string file = s.name + ".avic";
    write_avic(dir / file, s.value);
    segments[s.name] = {{"file", file}, {"shape", s.value.shape()}};
  }
  std::vector<std::uint8_t> exact;
  exact.reserve(8 * ckpt.params.total_size());
  for (double v : ckpt.params.flatten()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) exact.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  write_bytes(dir / "params.f64", exact);
  json order = json::array();
  for (const auto& s : ckpt.params.segments()) order.push_back(s.name);
  json index{{"segments", segments},
             {"segment_order", order},
             {"exact", "params.f64"},
             {"encoder", ckpt.encoder},
             {"extra", ckpt.extra}};
  write_text(dir / "index.json", index.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  Checkpoint ckpt;
  json index;
  try {
    index = json::parse(read_text(dir / "index.json"));
    ckpt.encoder = index.at("encoder").get<EncoderConfig>();
    ckpt.extra = index.value("extra", json::object());
    const auto& segments = index.at("segments");
    for (const auto& name : index.at("segment_order")) {
      const auto& seg = segments.at(name.get<std::string>());
      Tensor t = read_avic(dir / seg.at("file").get<std::string>());
      if (t.shape() != seg.at("shape").get<Shape>()) {
        throw IoError("checkpoint segment '" + name.get<std::string>() + "' shape mismatch");
      }
      ckpt.params.add(name.get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint index in '" + dir.string() + "': " + e.what());
  }
  const auto exact_name = index.value("exact", std::string{});
  if (!exact_name.empty() && fs::exists(dir / exact_name)) {
    const auto bytes = read_bytes(dir / exact_name);
    if (bytes.size() != 8 * ckpt.params.total_size()) {
      throw IoError("checkpoint exact parameter file has the wrong length");
    }
    std::vector<double> values(ckpt.params.total_size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
      values[i] = std::bit_cast<double>(bits);
    }
    // The exact copy must agree with the 32-bit segment files.
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (static_cast<float>(values[i]) != static_cast<float>(ckpt.params.flat(i))) {
        throw IoError("checkpoint exact parameters disagree with the segment files");
      }
    }
    ckpt.params.assign_flat(values);
  }
  return ckpt;
}

}  // namespace avloc::enc
