#include "couple_sed/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace csed::losses {

namespace nk = numkit;

void validate(const BatchTargets& targets) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const ClipTargets& t = targets[i];
    if (t.provenance == Provenance::Real && t.split == Split::Unlabeled && t.labeled()) {
      throw std::invalid_argument("batch clip " + std::to_string(i) +
                                  ": unlabeled clip carries real targets");
    }
    if (t.provenance == Provenance::Real && t.split == Split::Strong && !t.strong) {
      throw std::invalid_argument("batch clip " + std::to_string(i) + ": strong clip without strong target");
    }
    if (t.provenance == Provenance::Real && t.split == Split::Weak && !t.weak) {
      throw std::invalid_argument("batch clip " + std::to_string(i) + ": weak clip without weak target");
    }
    if (t.provenance == Provenance::Pseudo && !t.labeled()) {
      throw std::invalid_argument("batch clip " + std::to_string(i) + ": pseudo clip without targets");
    }
  }
}

double bce(const Tensor& probs, const Tensor& targets, double eps) {
  nk::require_shape(targets, probs.shape(), "bce");
  if (probs.size() == 0) return 0.0;
  nk::Tape tape;
  const Var s = nk::bce_sum(tape, tape.constant(probs), targets, eps);
  return tape.value(s)[0] / static_cast<double>(probs.size());
}

ClassificationVars classification_cost(Tape& tape, std::span<const crnn::PredictionVars> preds,
                                       const BatchTargets& targets, const LossOptions& options) {
  if (preds.size() != targets.size()) {
    throw nk::ShapeError("classification_cost: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(targets.size()) + " targets");
  }
  std::optional<Var> sums[2];
  std::size_t counts[2] = {0, 0};
  auto add_term = [&](int which, Var term, std::size_t n) {
    sums[which] = sums[which] ? nk::add(tape, *sums[which], term) : term;
    counts[which] += n;
  };
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const ClipTargets& t = targets[i];
    const int which = t.provenance == Provenance::Real ? 0 : 1;
    if (t.strong) {
      add_term(which, nk::bce_sum(tape, preds[i].frame_probs, *t.strong, options.eps), t.strong->size());
    }
    if (t.weak) {
      add_term(which, nk::bce_sum(tape, preds[i].clip_probs, *t.weak, options.eps), t.weak->size());
    }
  }
  ClassificationVars out;
  out.n_real_terms = counts[0];
  out.n_pseudo_terms = counts[1];
  out.j1_real = sums[0] ? nk::scale(tape, *sums[0], 1.0 / static_cast<double>(counts[0]))
                        : tape.constant(Tensor::scalar(0.0));
  out.j1_pseudo = sums[1] ? nk::scale(tape, *sums[1], options.pseudo_weight / static_cast<double>(counts[1]))
                          : tape.constant(Tensor::scalar(0.0));
  return out;
}

ConsistencyVars consistency_cost(Tape& tape, std::span<const crnn::PredictionVars> student,
                                 std::span<const crnn::Predictions> teacher) {
  if (student.size() != teacher.size()) {
    throw nk::ShapeError("consistency_cost: student/teacher batch sizes differ");
  }
  ConsistencyVars out;
  if (student.empty()) {
    out.j2_strong = tape.constant(Tensor::scalar(0.0));
    out.j2_weak = tape.constant(Tensor::scalar(0.0));
    return out;
  }
  std::optional<Var> strong, weak;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const Var s = nk::sq_err_sum(tape, student[i].frame_probs, teacher[i].frame_probs);
    const Var w = nk::sq_err_sum(tape, student[i].clip_probs, teacher[i].clip_probs);
    strong = strong ? nk::add(tape, *strong, s) : s;
    weak = weak ? nk::add(tape, *weak, w) : w;
    out.n_strong_terms += teacher[i].frame_probs.size();
    out.n_weak_terms += teacher[i].clip_probs.size();
  }
  out.j2_strong = nk::scale(tape, *strong, 1.0 / static_cast<double>(out.n_strong_terms));
  out.j2_weak = nk::scale(tape, *weak, 1.0 / static_cast<double>(out.n_weak_terms));
  return out;
}

ObjectiveVars total_objective(Tape& tape, const ClassificationVars& j1, const ConsistencyVars& j2,
                              double consistency_weight) {
  if (consistency_weight < 0.0) throw std::invalid_argument("total_objective: negative consistency weight");
  const Var classification = nk::add(tape, j1.j1_real, j1.j1_pseudo);
  const Var consistency = nk::scale(tape, nk::add(tape, j2.j2_strong, j2.j2_weak), consistency_weight);
  ObjectiveVars out;
  out.total = nk::add(tape, classification, consistency);
  out.breakdown = total_objective(tape.value(j1.j1_real)[0], tape.value(j1.j1_pseudo)[0],
                                  tape.value(j2.j2_strong)[0], tape.value(j2.j2_weak)[0],
                                  consistency_weight);
  out.breakdown.n_real_terms = j1.n_real_terms;
  out.breakdown.n_pseudo_terms = j1.n_pseudo_terms;
  out.breakdown.n_strong_terms = j2.n_strong_terms;
  out.breakdown.n_weak_terms = j2.n_weak_terms;
  return out;
}

namespace {

std::vector<crnn::PredictionVars> as_constants(Tape& tape, std::span<const crnn::Predictions> preds) {
  std::vector<crnn::PredictionVars> vars;
  vars.reserve(preds.size());
  for (const auto& p : preds) vars.push_back({tape.constant(p.frame_probs), tape.constant(p.clip_probs)});
  return vars;
}

}  // namespace

std::pair<double, double> classification_cost(std::span<const crnn::Predictions> preds,
                                              const BatchTargets& targets, const LossOptions& options) {
  Tape tape;
  const auto vars = as_constants(tape, preds);
  const ClassificationVars j1 = classification_cost(tape, vars, targets, options);
  return {tape.value(j1.j1_real)[0], tape.value(j1.j1_pseudo)[0]};
}

std::pair<double, double> consistency_cost(std::span<const crnn::Predictions> student,
                                           std::span<const crnn::Predictions> teacher) {
  if (student.size() != teacher.size()) {
    throw nk::ShapeError("consistency_cost: student/teacher batch sizes differ");
  }
  Tape tape;
  const auto vars = as_constants(tape, student);
  const ConsistencyVars j2 = consistency_cost(tape, vars, teacher);
  return {tape.value(j2.j2_strong)[0], tape.value(j2.j2_weak)[0]};
}

LossBreakdown total_objective(double j1_real, double j1_pseudo, double j2_strong, double j2_weak,
                              double consistency_weight) {
  if (consistency_weight < 0.0) throw std::invalid_argument("total_objective: negative consistency weight");
  LossBreakdown b;
  b.j1_real = j1_real;
  b.j1_pseudo = j1_pseudo;
  b.j2_strong = j2_strong;
  b.j2_weak = j2_weak;
  b.consistency_weight = consistency_weight;
  b.total = (j1_real + j1_pseudo) + consistency_weight * (j2_strong + j2_weak);
  return b;
}

}  // namespace csed::losses
