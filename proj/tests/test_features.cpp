#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "couple_sed/features.hpp"

using namespace csed::features;

namespace {

std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t)
      out[k] += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
  return out;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 0.3);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

}  // namespace

TEST(Features, TenSecondClipHas620Frames) {
  FeatureConfig cfg;  // 16 kHz, window 2048, hop 255
  EXPECT_EQ(frame_count(160000, cfg), 620u);
  EXPECT_EQ(frame_count(2048, cfg), 1u);
  EXPECT_THROW(frame_count(2047, cfg), std::invalid_argument);
}

TEST(Features, FftMatchesDirectDft) {
  for (std::size_t n : {1u, 2u, 8u, 64u, 12u, 30u}) {
    const auto x = noise(n, n);
    std::vector<double> re = x, im(n, 0.0);
    fft(re, im);
    const auto ref = naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(re[k], ref[k].real(), 1e-10) << "n=" << n << " k=" << k;
      EXPECT_NEAR(im[k], ref[k].imag(), 1e-10) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Features, FftSatisfiesParseval) {
  const auto x = noise(256, 7);
  std::vector<double> re = x, im(x.size(), 0.0);
  fft(re, im);
  double et = 0.0, ef = 0.0;
  for (double v : x) et += v * v;
  for (std::size_t k = 0; k < re.size(); ++k) ef += re[k] * re[k] + im[k] * im[k];
  EXPECT_NEAR(et, ef / 256.0, 1e-9 * et);
}

TEST(Features, PeriodicHannWindow) {
  const auto w = hann_window(8);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_NEAR(w[4], 1.0, 1e-15);
  EXPECT_NEAR(w[2], 0.5, 1e-15);
  EXPECT_NEAR(w[1], w[7], 1e-15);
}

TEST(Features, StftPeaksAtToneBin) {
  FeatureConfig cfg;
  cfg.n_fft = 512;
  cfg.hop = 256;
  const double f0 = 1000.0;  // bin 32 at 16 kHz / 512
  std::vector<double> x(4096);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * f0 * static_cast<double>(i) / 16000.0);
  const auto m = stft_mag(x, cfg);
  ASSERT_EQ(m.dim(0), frame_count(4096, cfg));
  ASSERT_EQ(m.dim(1), 257u);
  std::size_t best = 0;
  for (std::size_t k = 0; k < 257; ++k)
    if (m.at(3, k) > m.at(3, best)) best = k;
  EXPECT_EQ(best, 32u);
}

TEST(Features, MelScaleIsMonotoneAndInvertible) {
  EXPECT_NEAR(hz_to_mel(1000.0), 2595.0 * std::log10(1.0 + 1000.0 / 700.0), 1e-9);
  double prev = -1.0;
  for (double hz = 0.0; hz <= 8000.0; hz += 250.0) {
    const double m = hz_to_mel(hz);
    EXPECT_GT(m, prev);
    EXPECT_NEAR(mel_to_hz(m), hz, 1e-8);
    prev = m;
  }
}

TEST(Features, FilterbankRowsAreNonEmptyAndOrdered) {
  FeatureConfig cfg;
  cfg.n_fft = 512;
  cfg.n_mels = 32;
  const auto fb = mel_filterbank(cfg);
  ASSERT_EQ(fb.dim(0), 32u);
  ASSERT_EQ(fb.dim(1), 257u);
  double prev_centre = -1.0;
  for (std::size_t m = 0; m < 32; ++m) {
    double sum = 0.0, centre = 0.0;
    for (std::size_t k = 0; k < 257; ++k) {
      EXPECT_GE(fb.at(m, k), 0.0);
      sum += fb.at(m, k);
      centre += fb.at(m, k) * static_cast<double>(k);
    }
    ASSERT_GT(sum, 0.0);
    EXPECT_GT(centre / sum, prev_centre);
    prev_centre = centre / sum;
  }
  cfg.n_mels = 300;
  EXPECT_THROW(mel_filterbank(cfg), std::invalid_argument);
}

TEST(Features, LogMelShapeAndStandardization) {
  FeatureConfig cfg;
  cfg.n_fft = 512;
  cfg.hop = 512;
  cfg.n_mels = 32;
  const auto x = noise(32000, 3);
  const auto fm = log_mel(x, cfg);
  EXPECT_EQ(fm.n_frames(), 62u);
  EXPECT_EQ(fm.n_bands(), 32u);
  EXPECT_DOUBLE_EQ(fm.frame_duration, 512.0 / 16000.0);
  for (std::size_t b = 0; b < 32; ++b) {
    double mean = 0.0, var = 0.0;
    for (std::size_t t = 0; t < 62; ++t) mean += fm.frames.at(t, b);
    mean /= 62.0;
    for (std::size_t t = 0; t < 62; ++t) var += std::pow(fm.frames.at(t, b) - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var / 62.0, 1.0, 1e-6);
  }
}

TEST(Features, SilenceHitsTheLogFloor) {
  FeatureConfig cfg;
  cfg.n_fft = 256;
  cfg.hop = 256;
  cfg.n_mels = 8;
  cfg.standardize = false;
  const auto fm = log_mel(std::vector<double>(1024, 0.0), cfg);
  for (double v : fm.frames.data()) EXPECT_DOUBLE_EQ(v, std::log(cfg.log_floor));
}

TEST(Features, WavRoundTripWithinQuantization) {
  const auto path = (std::filesystem::temp_directory_path() / "csed_wav_roundtrip.wav").string();
  auto x = noise(1000, 11);
  for (auto& v : x) v = std::clamp(v, -0.99, 0.99);
  write_wav(path, x, 16000);
  const auto w = read_wav(path);
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(w.samples[i], x[i], 1.0 / 32768.0);
  std::filesystem::remove(path);
  EXPECT_THROW(read_wav(path), std::runtime_error);
}
