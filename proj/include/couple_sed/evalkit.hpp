#pragma once

#include <string>
#include <utility>
#include <vector>

#include "couple_sed/dataio.hpp"

namespace csed::evalkit {

using dataio::EventLabel;
using dataio::EventMap;

struct CollarParams {
  double onset_collar = 0.200;
  double offset_collar = 0.200;
  double offset_ratio = 0.20;

  void validate() const;
};

enum class MatchMode { Optimal, Greedy };

/// |Δonset| <= onset_collar and |Δoffset| <= max(offset_collar, ratio * ref length).
bool eligible(const EventLabel& ref, const EventLabel& est, const CollarParams& collar);

/// One-to-one matching over eligible (ref, est) pairs of a single class, as
/// (ref index, est index). Optimal mode returns a maximum-cardinality
/// matching; Greedy takes, per ref in order, the first unused eligible est.
std::vector<std::pair<std::size_t, std::size_t>> match_events(const std::vector<EventLabel>& ref,
                                                              const std::vector<EventLabel>& est,
                                                              const CollarParams& collar,
                                                              MatchMode mode = MatchMode::Optimal);

struct ClassScore {
  std::string name;
  std::size_t tp = 0, fp = 0, fn = 0;
  double f1 = 0.0;
  /// False when the class has neither reference nor estimated events.
  bool present = false;
};

struct ScoreReport {
  std::vector<ClassScore> classes;
  double macro_f1 = 0.0;
};

/// 2TP / (2TP + FP + FN), 0 when undefined.
double f1_score(std::size_t tp, std::size_t fp, std::size_t fn);

/// Per-class counts summed over clips and the macro F1 over classes present
/// in ref or est. With no events anywhere the macro F1 is 1.
ScoreReport eb_f1(const EventMap& ref, const EventMap& est, const CollarParams& collar,
                  const std::vector<std::string>& classes, MatchMode mode = MatchMode::Optimal);

std::string format_report(const ScoreReport& report);
std::string report_csv(const ScoreReport& report);

}  // namespace csed::evalkit
