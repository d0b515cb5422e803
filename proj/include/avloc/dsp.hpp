#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "avloc/tensor.hpp"

namespace avloc::dsp {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 0.0;

  /// Throws unless sample_rate > 0 and samples are non-empty and finite.
  void validate() const;
};

struct LogMelConfig {
  std::size_t mel_bins = 64;
  double window_seconds = 0.040;
  double hop_seconds = 0.020;
  double f_min = 0.0;
  double f_max = 0.0;  // <= 0 means sample_rate / 2
  double floor = 1e-10;
};

struct Spectrogram {
  Tensor values;  // mel_bins x frames
  std::size_t mel_bins = 0;
  double hop_seconds = 0.0;
  double window_seconds = 0.0;

  std::size_t frames() const { return values.extent(1); }
};

struct StftResult {
  std::size_t window_length = 0;  // samples covered by each frame
  std::size_t hop_length = 0;
  std::size_t fft_size = 0;       // window_length zero-padded to a power of two
  std::size_t fft_bins = 0;       // fft_size / 2 + 1
  std::size_t frames = 0;
  std::vector<std::complex<double>> spectrum;  // fft_bins x frames, row-major
  Tensor power;                                // fft_bins x frames

  std::complex<double> at(std::size_t bin, std::size_t frame) const {
    return spectrum[bin * frames + frame];
  }
};

/// Symmetric Hann window: 0.5 - 0.5 cos(2 pi i / (n - 1)); [1] for n = 1.
std::vector<double> hann_window(std::size_t n);

/// round(seconds * rate), at least 1.
std::size_t samples_for(double seconds, double rate);
std::size_t next_pow2(std::size_t n);
/// 1 + floor((length - window) / hop); requires window <= length.
std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& x);

/// Hann-windowed STFT. The window length is round(window_seconds * rate);
/// each segment is zero-padded to the next power of two before the DFT.
StftResult stft(const Waveform& w, double window_seconds, double hop_seconds);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters (mel_bins x fft_bins) with centres equally spaced on
/// the 2595 log10(1 + f / 700) mel scale between f_min and f_max.
Tensor mel_filterbank(std::size_t mel_bins, std::size_t fft_bins, double sample_rate, double f_min,
                      double f_max);

/// log(filterbank * power + floor), shape mel_bins x frames.
Spectrogram log_mel_spectrogram(const Waveform& w, const LogMelConfig& cfg);

/// Raw little-endian float32 samples plus a JSON sidecar
/// {"sample_rate": N, "length": M}.
void write_waveform(const std::filesystem::path& raw_path, const std::filesystem::path& json_path,
                    const Waveform& w);
Waveform read_waveform(const std::filesystem::path& raw_path,
                       const std::filesystem::path& json_path);

}  // namespace avloc::dsp
