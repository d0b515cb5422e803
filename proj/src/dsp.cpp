#include "avloc/dsp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "json.hpp"

#include "avloc/avic_io.hpp"
#include "avloc/error.hpp"

namespace avloc::dsp {

void Waveform::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw ConfigError("waveform sample_rate must be positive");
  }
  if (samples.empty()) throw ConfigError("waveform has no samples");
  for (double s : samples) {
    if (!std::isfinite(s)) throw ConfigError("waveform contains non-finite samples");
  }
}

std::vector<double> hann_window(std::size_t n) {
  if (n == 0) throw ConfigError("hann_window: n must be at least 1");
  if (n == 1) return {1.0};
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
  }
  // cos() is not exactly symmetric in floating point.
  for (std::size_t i = 0; i < n / 2; ++i) w[n - 1 - i] = w[i];
  return w;
}

std::size_t samples_for(double seconds, double rate) {
  const double n = std::round(seconds * rate);
  if (!(n >= 1.0)) throw ConfigError("window/hop must cover at least one sample");
  return static_cast<std::size_t>(n);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) {
  if (window > length) throw ConfigError("waveform shorter than one analysis window");
  if (hop == 0) throw ConfigError("hop must be positive");
  return 1 + (length - window) / hop;
}

void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t k = 0; k < len / 2; ++k) {
      // Per-twiddle evaluation instead of a running product keeps the error flat.
      const std::complex<double> wk(std::cos(ang * static_cast<double>(k)),
                                    std::sin(ang * static_cast<double>(k)));
      for (std::size_t i = 0; i < n; i += len) {
        const auto u = x[i + k];
        const auto v = x[i + k + len / 2] * wk;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
}

StftResult stft(const Waveform& w, double window_seconds, double hop_seconds) {
  w.validate();
  StftResult r;
  r.window_length = samples_for(window_seconds, w.sample_rate);
  r.hop_length = samples_for(hop_seconds, w.sample_rate);
  r.frames = frame_count(w.samples.size(), r.window_length, r.hop_length);
  r.fft_size = next_pow2(r.window_length);
  r.fft_bins = r.fft_size / 2 + 1;
  r.spectrum.assign(r.fft_bins * r.frames, {});
  r.power = Tensor({r.fft_bins, r.frames});

  const auto window = hann_window(r.window_length);
  std::vector<std::complex<double>> buf(r.fft_size);
  for (std::size_t f = 0; f < r.frames; ++f) {
    const std::size_t start = f * r.hop_length;
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < r.window_length; ++i) buf[i] = w.samples[start + i] * window[i];
    fft(buf);
    for (std::size_t b = 0; b < r.fft_bins; ++b) {
      r.spectrum[b * r.frames + f] = buf[b];
      r.power(b, f) = std::norm(buf[b]);
    }
  }
  return r;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(std::size_t mel_bins, std::size_t fft_bins, double sample_rate, double f_min,
                      double f_max) {
  if (mel_bins == 0) throw ConfigError("mel_filterbank: mel_bins must be at least 1");
  if (fft_bins < 2) throw ConfigError("mel_filterbank: need at least two FFT bins");
  if (!(sample_rate > 0.0) || !(f_min >= 0.0) || !(f_min < f_max) || f_max > sample_rate / 2.0) {
    throw ConfigError("mel_filterbank: require 0 <= f_min < f_max <= sample_rate / 2");
  }
  const double fft_size = 2.0 * static_cast<double>(fft_bins - 1);
  const double mel_lo = hz_to_mel(f_min), mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(mel_bins + 1));
  }
  Tensor fb({mel_bins, fft_bins});
  for (std::size_t m = 0; m < mel_bins; ++m) {
    const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
    double row_sum = 0.0;
    for (std::size_t k = 0; k < fft_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double wgt = std::max(0.0, std::min((f - lo) / (c - lo), (hi - f) / (hi - c)));
      fb(m, k) = wgt;
      row_sum += wgt;
    }
    if (!(row_sum > 0.0)) {
      throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                        " covers no FFT bin; use fewer mel bins or a longer window");
    }
  }
  return fb;
}

Spectrogram log_mel_spectrogram(const Waveform& w, const LogMelConfig& cfg) {
  const auto s = stft(w, cfg.window_seconds, cfg.hop_seconds);
  const double f_max = cfg.f_max > 0.0 ? cfg.f_max : w.sample_rate / 2.0;
  const Tensor fb = mel_filterbank(cfg.mel_bins, s.fft_bins, w.sample_rate, cfg.f_min, f_max);
  Spectrogram out;
  out.mel_bins = cfg.mel_bins;
  out.hop_seconds = cfg.hop_seconds;
  out.window_seconds = cfg.window_seconds;
  out.values = Tensor({cfg.mel_bins, s.frames});
  for (std::size_t m = 0; m < cfg.mel_bins; ++m) {
    for (std::size_t f = 0; f < s.frames; ++f) {
      double e = 0.0;
      for (std::size_t k = 0; k < s.fft_bins; ++k) e += fb(m, k) * s.power(k, f);
      out.values(m, f) = std::log(e + cfg.floor);
    }
  }
  return out;
}

void write_waveform(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                    const Waveform& w) {
  w.validate();
  write_bytes(raw_path, encode_f32le(w.samples));
  nlohmann::json j{{"sample_rate", w.sample_rate}, {"length", w.samples.size()}};
  write_text(json_path, j.dump(2) + "\n");
}

Waveform read_waveform(const std::filesystem::path& raw_path,
                       const std::filesystem::path& json_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad audio sidecar '" + json_path.string() + "': " + e.what());
  }
  if (!j.contains("sample_rate") || !j.contains("length")) {
    throw IoError("audio sidecar '" + json_path.string() + "' needs sample_rate and length");
  }
  Waveform w;
  w.sample_rate = j.at("sample_rate").get<double>();
  w.samples = decode_f32le(read_bytes(raw_path));
  const auto length = j.at("length").get<std::size_t>();
  if (w.samples.size() != length) {
    throw IoError("audio '" + raw_path.string() + "' holds " + std::to_string(w.samples.size()) +
                  " samples, sidecar says " + std::to_string(length));
  }
  w.validate();
  return w;
}

}  // namespace avloc::dsp
