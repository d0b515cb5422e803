#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "avloc/dsp.hpp"
#include "avloc/ops.hpp"
#include "avloc/params.hpp"
#include "avloc/rng.hpp"
#include "avloc/tensor.hpp"

namespace avloc::enc {

/// Patch-MLP visual encoder and frame-MLP audio encoder.
///
/// The visual encoder cuts a W x H x C image into a grid_w x grid_h grid of
/// patches and maps each patch through a shared tanh perceptron
/// (patch_pixels -> hidden -> embed_dim). The audio encoder maps every
/// log-mel frame through its own perceptron (mel_bins -> hidden -> embed_dim),
/// mean-pools over frames and L2-normalises.
///
/// Log-mel input is standardised per bin, (x - audio_shift[m]) * audio_gain[m],
/// once those statistics are fitted; until then it is multiplied by
/// audio_scale.
struct EncoderConfig {
  std::size_t image_width = 64;
  std::size_t image_height = 64;
  std::size_t channels = 3;
  std::size_t grid_w = 8;
  std::size_t grid_h = 8;
  std::size_t mel_bins = 64;
  std::size_t hidden = 32;
  std::size_t embed_dim = 16;
  double image_shift = -0.5;  // added to pixel values before the first layer
  double audio_scale = 0.1;   // multiplies log-mel values when no statistics are set
  bool standardize_audio = true;   // fit audio_shift / audio_gain on the training split
  std::vector<double> audio_shift;  // per-bin mean, empty or mel_bins long
  std::vector<double> audio_gain;   // per-bin 1 / std, same length as audio_shift

  std::size_t patch_w() const { return image_width / grid_w; }
  std::size_t patch_h() const { return image_height / grid_h; }
  std::size_t patch_pixels() const { return patch_w() * patch_h() * channels; }
  std::size_t num_patches() const { return grid_w * grid_h; }

  void validate() const;
};

/// Sets audio_shift / audio_gain to the per-bin mean and inverse standard
/// deviation over every frame of `clips`. Constant bins get gain 1.
void fit_audio_standardization(EncoderConfig& cfg,
                               const std::vector<const dsp::Spectrogram*>& clips);

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// Segments: visual.{w1,b1,w2,b2}, audio.{w1,b1,w2,b2}. Weights are drawn
/// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero.
ParamVector init_params(const EncoderConfig& cfg, Rng& rng);

/// Frozen parameter copy from the end of a training epoch.
class Snapshot {
 public:
  Snapshot(ParamVector params, std::size_t epoch) : params_(std::move(params)), epoch_(epoch) {}
  const ParamVector& params() const noexcept { return params_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  ParamVector params_;
  std::size_t epoch_;
};

Snapshot take_snapshot(const ParamVector& params, std::size_t epoch);

/// V in R^{w x h x d}; patch p = i * h + j sits in row p of rows().
struct VisualFeatureMap {
  Tensor values;  // (grid_w, grid_h, d)
  std::size_t image_width = 0;
  std::size_t image_height = 0;

  std::size_t grid_w() const { return values.extent(0); }
  std::size_t grid_h() const { return values.extent(1); }
  std::size_t dim() const { return values.extent(2); }
  std::size_t num_patches() const { return grid_w() * grid_h(); }
  std::span<const double> patch(std::size_t p) const {
    return values.data().subspan(p * dim(), dim());
  }
  /// (w*h) x d view of the same data.
  Tensor rows() const { return values.reshaped({num_patches(), dim()}); }
};

struct AudioEmbedding {
  Tensor values;  // (d)
  bool unit_norm = false;
};

struct VisualCache {
  Tensor patches;  // n x patch_pixels
  Tensor hidden;   // n x hidden, post-tanh
  VisualFeatureMap map;
};

struct AudioCache {
  Tensor frames;  // T x mel_bins, scaled
  Tensor hidden;  // T x hidden, post-tanh
  ops::Normalized pooled;
};

/// Image patches as rows, with image_shift applied.
Tensor extract_patches(const EncoderConfig& cfg, const Tensor& image);

VisualCache visual_forward(const ParamVector& params, const EncoderConfig& cfg, const Tensor& image);
VisualFeatureMap visual_encode(const ParamVector& params, const EncoderConfig& cfg,
                               const Tensor& image);
/// grad_features is (num_patches x d); accumulates into `grad`.
void visual_backward(const ParamVector& params, const VisualCache& cache,
                     const Tensor& grad_features, ParamVector& grad);

AudioCache audio_forward(const ParamVector& params, const EncoderConfig& cfg,
                         const dsp::Spectrogram& lms);
AudioEmbedding audio_encode(const ParamVector& params, const EncoderConfig& cfg,
                            const dsp::Spectrogram& lms);
void audio_backward(const ParamVector& params, const AudioCache& cache,
                    std::span<const double> grad_embedding, ParamVector& grad);

/// phi over a patch subset: each patch L2-normalised, averaged, and (when
/// renorm is set) the average normalised again. A zero average is returned
/// as the zero vector with `degenerate` set.
struct PooledFeature {
  std::vector<double> value;
  std::vector<std::size_t> indices;
  std::vector<ops::Normalized> patches;
  ops::Normalized pooled;
  bool renorm = true;
  bool degenerate = false;
};

PooledFeature phi_subset(const VisualFeatureMap& v, std::span<const std::size_t> indices,
                         bool renorm = true);
PooledFeature phi(const VisualFeatureMap& v, bool renorm = true);
/// Accumulates d(loss)/d(patch features) into grad_features (num_patches x d).
void phi_backward(const PooledFeature& pooled, std::span<const double> grad_value,
                  Tensor& grad_features);

/// Checkpoint directory: index.json mapping each segment to its AVIC file
/// and shape, plus params.f64 holding the exact little-endian doubles so a
/// resumed run continues bit-for-bit.
struct Checkpoint {
  ParamVector params;
  EncoderConfig encoder;
  nlohmann::json extra;  // caller-owned metadata (training state, dsp config)
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace avloc::enc
