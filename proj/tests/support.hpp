#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "couple_sed/dataio.hpp"
#include "couple_sed/tensor.hpp"

namespace csed::test {

inline numkit::Tensor random_tensor(const numkit::Shape& shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  numkit::Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Small synthetic dataset with features, quick enough for unit tests.
inline dataio::Dataset tiny_dataset(std::uint64_t seed, std::size_t n_strong = 6, std::size_t n_weak = 6,
                                    std::size_t n_unlabeled = 8, std::size_t n_validation = 4) {
  dataio::SynthConfig sc;
  sc.n_strong = n_strong;
  sc.n_weak = n_weak;
  sc.n_unlabeled = n_unlabeled;
  sc.n_validation = n_validation;
  sc.clip_seconds = 1.0;
  sc.event_min_seconds = 0.2;
  sc.event_max_seconds = 0.6;
  sc.seed = seed;
  auto ds = dataio::synth_dataset(sc);
  features::FeatureConfig fc;
  fc.n_fft = 256;
  fc.hop = 256;
  fc.n_mels = 16;
  dataio::compute_features(ds, fc);
  return ds;
}

}  // namespace csed::test
