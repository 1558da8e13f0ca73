#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "couple_sed/crnn.hpp"

namespace csed::losses {

using numkit::Tape;
using numkit::Tensor;
using numkit::Var;

enum class Provenance { Real, Pseudo };
enum class Split { Strong, Weak, Unlabeled, Validation };

/// Training targets of one batch member. Strong targets are [T', C] in {0,1},
/// weak targets are [C] in {0,1}. A clip with neither is an unlabeled member
/// and only enters the consistency cost.
struct ClipTargets {
  std::optional<Tensor> strong;
  std::optional<Tensor> weak;
  Provenance provenance = Provenance::Real;
  Split split = Split::Unlabeled;

  bool labeled() const { return strong.has_value() || weak.has_value(); }
};

using BatchTargets = std::vector<ClipTargets>;

/// Throws if a clip claims labels inconsistent with its split tag, e.g. a
/// labeled clip tagged unlabeled with real provenance.
void validate(const BatchTargets& targets);

struct LossOptions {
  double pseudo_weight = 1.0;
  double eps = 1e-7;
};

struct LossBreakdown {
  double j1_real = 0.0;
  double j1_pseudo = 0.0;
  double j2_strong = 0.0;
  double j2_weak = 0.0;
  double total = 0.0;
  double consistency_weight = 0.0;
  std::size_t n_real_terms = 0;
  std::size_t n_pseudo_terms = 0;
  std::size_t n_strong_terms = 0;
  std::size_t n_weak_terms = 0;
};

/// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
double bce(const Tensor& probs, const Tensor& targets, double eps = 1e-7);

// ---------------------------------------------------------------------------
// Taped costs. Teacher predictions are plain tensors, so no gradient can flow
// into teacher weights.
// ---------------------------------------------------------------------------

struct ClassificationVars {
  Var j1_real;
  Var j1_pseudo;
  std::size_t n_real_terms = 0;
  std::size_t n_pseudo_terms = 0;
};

/// Frame-level BCE for strong targets and clip-level BCE for weak targets,
/// averaged over every contributing scalar term of each provenance. The
/// pseudo component is multiplied by pseudo_weight.
ClassificationVars classification_cost(Tape& tape, std::span<const crnn::PredictionVars> preds,
                                       const BatchTargets& targets, const LossOptions& options = {});

struct ConsistencyVars {
  Var j2_strong;
  Var j2_weak;
  std::size_t n_strong_terms = 0;
  std::size_t n_weak_terms = 0;
};

/// Mean squared student/teacher difference of frame probabilities and of clip
/// probabilities over every clip of the batch.
ConsistencyVars consistency_cost(Tape& tape, std::span<const crnn::PredictionVars> student,
                                 std::span<const crnn::Predictions> teacher);

struct ObjectiveVars {
  Var total;
  LossBreakdown breakdown;
};

ObjectiveVars total_objective(Tape& tape, const ClassificationVars& j1, const ConsistencyVars& j2,
                              double consistency_weight);

// ---------------------------------------------------------------------------
// Value-only versions.
// ---------------------------------------------------------------------------

std::pair<double, double> classification_cost(std::span<const crnn::Predictions> preds,
                                              const BatchTargets& targets,
                                              const LossOptions& options = {});
std::pair<double, double> consistency_cost(std::span<const crnn::Predictions> student,
                                           std::span<const crnn::Predictions> teacher);
LossBreakdown total_objective(double j1_real, double j1_pseudo, double j2_strong, double j2_weak,
                              double consistency_weight);

}  // namespace csed::losses
