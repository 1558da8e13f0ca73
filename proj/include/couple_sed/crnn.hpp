#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "couple_sed/features.hpp"
#include "couple_sed/ops.hpp"
#include "couple_sed/tape.hpp"
#include "couple_sed/tensor.hpp"

namespace csed::crnn {

using numkit::Tape;
using numkit::Tensor;
using numkit::Var;

/// (time, frequency) pooling factors of one CNN block.
using PoolSize = std::array<std::size_t, 2>;

struct CrnnConfig {
  std::size_t n_mels = 128;
  std::vector<std::size_t> conv_filters{16, 32, 64, 128, 128, 128, 128};
  std::vector<PoolSize> pool_sizes{{2, 2}, {2, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 2}};
  std::size_t kernel = 3;
  std::size_t gru_layers = 2;
  std::size_t gru_hidden = 128;
  std::size_t n_classes = 10;
  double dropout = 0.0;

  /// Small configuration used for tests and desk-scale experiments.
  static CrnnConfig desk(std::size_t n_mels = 16);

  void validate() const;
  std::size_t time_pool() const;
  /// Output frames after the pooling schedule (ceil division per block).
  std::size_t output_frames(std::size_t input_frames) const;
  std::size_t output_bands() const;
  std::size_t gru_input() const { return conv_filters.back() * output_bands(); }

  friend bool operator==(const CrnnConfig&, const CrnnConfig&) = default;
};

struct ConvBlock {
  Tensor kernels;  // [2 * filters, C_in, k, k]; GLU halves the channels
  Tensor bias;     // [2 * filters]
};

struct GruLayer {
  numkit::GruWeights forward;
  numkit::GruWeights backward;
};

/// Every trainable weight of the network.
struct CrnnParams {
  CrnnConfig config;
  std::vector<ConvBlock> conv;
  std::vector<GruLayer> gru;
  Tensor attn_w, attn_b;  // softmax (attention) branch, [C, 2H], [C]
  Tensor cls_w, cls_b;    // sigmoid branch; also the frame-level classifier

  /// Stable name/tensor listing shared by optimizers, EMA and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const CrnnParams& a, const CrnnParams& b);
};

/// Zero tensors shaped like every parameter of `cfg`.
CrnnParams zero_params(const CrnnConfig& cfg);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from `seed`.
CrnnParams init_params(const CrnnConfig& cfg, std::uint64_t seed);

struct Predictions {
  Tensor frame_probs;  // [T', C]
  Tensor clip_probs;   // [C]
};

struct PredictionVars {
  Var frame_probs;
  Var clip_probs;
};

struct ForwardOptions {
  double noise_std = 0.0;
  std::uint64_t rng_seed = 0;
  bool dropout_active = false;
};

/// Registers every parameter as a leaf, in `tensors()` order.
std::vector<Var> register_params(Tape& tape, const CrnnParams& params, bool trainable);

/// Taped forward pass over one clip. `features` is [T, n_mels].
PredictionVars forward(Tape& tape, const CrnnParams& params, const std::vector<Var>& param_vars,
                       const Tensor& features, const ForwardOptions& options = {});

Predictions forward(const CrnnParams& params, const features::FeatureMatrix& features,
                    double noise_std = 0.0, std::uint64_t rng_seed = 0);
Predictions forward(const CrnnParams& params, const Tensor& features,
                    const ForwardOptions& options = {});

/// clip[c] = sum_t softmax_t(attn_logits)[t, c] * frame_probs[t, c].
Var attention_pool(Tape& tape, Var attn_logits, Var frame_probs);
Tensor attention_pool(const Tensor& frame_feats, const Tensor& attn_w, const Tensor& attn_b,
                      const Tensor& cls_w, const Tensor& cls_b);

// Binary checkpoint: config + every tensor with its shape; round trip is exact.
void save_checkpoint(const std::string& path, const CrnnParams& params);
CrnnParams load_checkpoint(const std::string& path);
/// Content hash of a checkpoint file, used as its provenance id.
std::string checkpoint_id(const std::string& path);

}  // namespace csed::crnn
