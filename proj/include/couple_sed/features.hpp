#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "couple_sed/tensor.hpp"

namespace csed::features {

using numkit::Tensor;

struct FeatureConfig {
  double sample_rate = 16000.0;
  std::size_t n_fft = 2048;  // also the Hann window length
  std::size_t hop = 255;
  std::size_t n_mels = 128;
  double log_floor = 1e-10;
  /// Per-clip, per-band zero-mean / unit-variance scaling after the log.
  bool standardize = true;

  void validate() const;
  double frame_duration() const { return static_cast<double>(hop) / sample_rate; }
};

struct FeatureMatrix {
  Tensor frames;  // [T, n_mels]
  double frame_duration = 0.0;

  std::size_t n_frames() const { return frames.dim(0); }
  std::size_t n_bands() const { return frames.dim(1); }
};

/// floor((n_samples - window) / hop) + 1; throws when the clip is shorter than one window.
std::size_t frame_count(std::size_t n_samples, const FeatureConfig& cfg);

/// In-place radix-2 FFT when size is a power of two, otherwise a direct DFT.
void fft(std::vector<double>& re, std::vector<double>& im);

std::vector<double> hann_window(std::size_t n);

/// Hann-windowed one-sided DFT magnitudes, [T, n_fft/2 + 1].
Tensor stft_mag(std::span<const double> samples, const FeatureConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters spaced uniformly on the mel scale from 0 Hz to Nyquist,
/// [n_mels, n_fft/2 + 1].
Tensor mel_filterbank(const FeatureConfig& cfg);

/// log(filterbank * |STFT|^2 + log_floor), optionally standardized per band.
FeatureMatrix log_mel(std::span<const double> samples, const FeatureConfig& cfg);

// 16-bit PCM mono WAV.
struct WavData {
  std::vector<double> samples;  // in [-1, 1)
  int sample_rate = 16000;
};
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, std::span<const double> samples, int sample_rate);

}  // namespace csed::features
