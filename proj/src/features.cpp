#include "couple_sed/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace csed::features {

void FeatureConfig::validate() const {
  if (hop < 1) throw std::invalid_argument("feature config: hop must be >= 1");
  if (n_mels < 1) throw std::invalid_argument("feature config: n_mels must be >= 1");
  if (n_fft < hop) throw std::invalid_argument("feature config: window must be >= hop");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("feature config: sample_rate must be > 0");
  if (!(log_floor > 0.0)) throw std::invalid_argument("feature config: log_floor must be > 0");
}

std::size_t frame_count(std::size_t n_samples, const FeatureConfig& cfg) {
  if (n_samples < cfg.n_fft) {
    throw std::invalid_argument("clip has " + std::to_string(n_samples) +
                                " samples, shorter than one window of " +
                                std::to_string(cfg.n_fft));
  }
  return (n_samples - cfg.n_fft) / cfg.hop + 1;
}

void fft(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (im.size() != n) throw std::invalid_argument("fft: real/imag size mismatch");
  if (n <= 1) return;
  if ((n & (n - 1)) != 0) {
    std::vector<double> out_re(n, 0.0), out_im(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t t = 0; t < n; ++t) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / n;
        out_re[k] += re[t] * std::cos(a) - im[t] * std::sin(a);
        out_im[k] += re[t] * std::sin(a) + im[t] * std::cos(a);
      }
    }
    re.swap(out_re);
    im.swap(out_im);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t k = 0; k < len / 2; ++k) {
      const double wr = std::cos(ang * k), wi = std::sin(ang * k);
      for (std::size_t i = k; i < n; i += len) {
        const std::size_t j = i + len / 2;
        const double xr = re[j] * wr - im[j] * wi;
        const double xi = re[j] * wi + im[j] * wr;
        re[j] = re[i] - xr;
        im[j] = im[i] - xi;
        re[i] += xr;
        im[i] += xi;
      }
    }
  }
}

std::vector<double> hann_window(std::size_t n) {
  // periodic Hann, the usual STFT convention
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  }
  return w;
}

Tensor stft_mag(std::span<const double> samples, const FeatureConfig& cfg) {
  cfg.validate();
  const std::size_t T = frame_count(samples.size(), cfg);
  const std::size_t n = cfg.n_fft, bins = n / 2 + 1;
  const std::vector<double> window = hann_window(n);
  Tensor mag({T, bins});
  std::vector<double> re(n), im(n);
  for (std::size_t t = 0; t < T; ++t) {
    const double* src = samples.data() + t * cfg.hop;
    for (std::size_t i = 0; i < n; ++i) {
      re[i] = src[i] * window[i];
      im[i] = 0.0;
    }
    fft(re, im);
    for (std::size_t k = 0; k < bins; ++k) mag.at(t, k) = std::hypot(re[k], im[k]);
  }
  return mag;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.n_fft / 2 + 1;
  if (cfg.n_mels >= cfg.n_fft / 2) {
    throw std::invalid_argument("mel_filterbank: " + std::to_string(cfg.n_mels) +
                                " mel bands need more FFT resolution than n_fft=" +
                                std::to_string(cfg.n_fft));
  }
  const double mel_max = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  Tensor fb({cfg.n_mels, bins});
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    double row_sum = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      const double w = std::max(0.0, std::min((f - lo) / (centre - lo), (hi - f) / (hi - centre)));
      fb.at(m, k) = w;
      row_sum += w;
    }
    if (row_sum == 0.0) {
      throw std::invalid_argument("mel_filterbank: band " + std::to_string(m) +
                                  " falls between FFT bins; reduce n_mels or raise n_fft");
    }
  }
  return fb;
}

FeatureMatrix log_mel(std::span<const double> samples, const FeatureConfig& cfg) {
  const Tensor mag = stft_mag(samples, cfg);
  const Tensor fb = mel_filterbank(cfg);
  const std::size_t T = mag.dim(0), bins = mag.dim(1), M = cfg.n_mels;
  FeatureMatrix out{Tensor({T, M}), cfg.frame_duration()};
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < bins; ++k) power[k] = mag.at(t, k) * mag.at(t, k);
    for (std::size_t m = 0; m < M; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb.at(m, k) * power[k];
      out.frames.at(t, m) = std::log(e + cfg.log_floor);
    }
  }
  if (cfg.standardize) {
    for (std::size_t m = 0; m < M; ++m) {
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += out.frames.at(t, m);
      mean /= static_cast<double>(T);
      double var = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double d = out.frames.at(t, m) - mean;
        var += d * d;
      }
      const double sd = std::sqrt(var / static_cast<double>(T));
      for (std::size_t t = 0; t < T; ++t) {
        double& v = out.frames.at(t, m);
        v -= mean;
        if (sd > 0.0) v /= sd;
      }
    }
  }
  return out;
}

namespace {

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("wav: truncated header");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

template <typename T>
void write_le(std::ostream& out, T value) {
  const auto v = static_cast<std::uint64_t>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::string(tag, 4) != "RIFF") throw std::runtime_error("wav: missing RIFF in " + path);
  read_le<std::uint32_t>(in);
  in.read(tag, 4);
  if (!in || std::string(tag, 4) != "WAVE") throw std::runtime_error("wav: missing WAVE in " + path);

  WavData wav;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    const std::string id(tag, 4);
    const auto size = read_le<std::uint32_t>(in);
    if (id == "fmt ") {
      const auto format = read_le<std::uint16_t>(in);
      const auto channels = read_le<std::uint16_t>(in);
      wav.sample_rate = static_cast<int>(read_le<std::uint32_t>(in));
      read_le<std::uint32_t>(in);
      read_le<std::uint16_t>(in);
      const auto bits = read_le<std::uint16_t>(in);
      if (format != 1 || channels != 1 || bits != 16) {
        throw std::runtime_error("wav: only 16-bit PCM mono is supported (" + path + ")");
      }
      in.ignore(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt in " + path);
      wav.samples.resize(size / 2);
      for (auto& s : wav.samples) s = static_cast<double>(read_le<std::int16_t>(in)) / 32768.0;
      return wav;
    } else {
      in.ignore(size + (size & 1));
    }
  }
  throw std::runtime_error("wav: no data chunk in " + path);
}

void write_wav(const std::string& path, std::span<const double> samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate) * 2);
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : samples) {
    const double q = std::round(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0);
    write_le<std::int16_t>(out, static_cast<std::int16_t>(q));
  }
}

}  // namespace csed::features
