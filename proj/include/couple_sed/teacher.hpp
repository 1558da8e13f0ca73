#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "couple_sed/crnn.hpp"
#include "couple_sed/dataio.hpp"
#include "couple_sed/evalkit.hpp"
#include "couple_sed/losses.hpp"
#include "couple_sed/plg.hpp"

namespace csed::teacher {

using numkit::Tensor;

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double ema_alpha = 0.999;
  double noise_std = 0.1;
  /// Adds the same kind of input noise to the student.
  bool student_noise = false;
  /// Steps; unset means ten epochs' worth of batches.
  std::optional<std::size_t> ramp_len;
  double max_consistency_weight = 2.0;
  double pseudo_weight = 1.0;
  /// Off: supervised only, the teacher forward is skipped and unlabeled clips are unused.
  bool use_mean_teacher = true;
  dataio::VoiMode voi_mode = dataio::VoiMode::Random;
  std::uint64_t seed = 0;
  /// Post-processing and collars of the per-epoch validation score.
  plg::PlgConfig postprocess;
  evalkit::CollarParams collar;

  void validate() const;
};

struct MeanTeacherState {
  crnn::CrnnParams student;
  crnn::CrnnParams teacher;
  std::vector<Tensor> velocity;  // momentum buffers, tensors() order
  std::size_t step = 0;
};

MeanTeacherState init_state(const crnn::CrnnConfig& cfg, std::uint64_t seed);

/// teacher <- alpha * teacher + (1 - alpha) * student.
void ema_update(MeanTeacherState& state, double alpha);

/// max_w * exp(-5 (1 - min(step / ramp_len, 1))^2); ramp_len 0 gives max_w.
double ramp_up(std::size_t step, std::size_t ramp_len, double max_w);

struct Batch {
  std::vector<Tensor> features;  // [T, n_mels] each
  losses::BatchTargets targets;
};

struct StepOptions {
  /// Skip the teacher forward and the consistency cost entirely.
  bool skip_teacher = false;
  /// Consistency ramp length in steps.
  std::size_t ramp_len = 0;
};

/// One SGD update of the student followed by one EMA update of the teacher.
/// Throws std::runtime_error when the loss is not finite.
losses::LossBreakdown train_step(MeanTeacherState& state, const Batch& batch, const TrainConfig& cfg,
                                 const StepOptions& options);

struct EpochRecord {
  std::size_t epoch = 0;
  losses::LossBreakdown mean_loss;  // average over the epoch's steps
  double val_eb_f1 = 0.0;
};

using History = std::vector<EpochRecord>;

/// Numeric failure during train(); carries the epochs completed so far.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, History partial)
      : std::runtime_error(what), history(std::move(partial)) {}
  History history;
};

struct TrainResult {
  MeanTeacherState state;
  History history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Clips of `dataset` must carry features.
TrainResult train(const dataio::Dataset& dataset, const dataio::PseudoLabelSet& pseudo,
                  const crnn::CrnnConfig& model, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Events predicted by `params` for each clip of `split`, post-processed with `pp`.
dataio::EventMap detect(const crnn::CrnnParams& params, const dataio::Dataset& dataset, dataio::Split split,
                        const plg::PlgConfig& pp);

/// EB-F1 of `params` on the validation split.
evalkit::ScoreReport evaluate(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                              const plg::PlgConfig& pp, const evalkit::CollarParams& collar);

inline constexpr const char* kHistoryHeader = "epoch,j1_real,j1_pseudo,j2_strong,j2_weak,total,val_eb_f1";
void write_history_csv(const std::string& path, const History& history);

}  // namespace csed::teacher
