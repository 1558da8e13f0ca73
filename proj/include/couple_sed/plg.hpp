#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "couple_sed/crnn.hpp"
#include "couple_sed/dataio.hpp"

namespace csed::plg {

using dataio::EventLabel;
using dataio::PseudoLabelSet;
using numkit::Tensor;

struct PlgConfig {
  double clip_threshold = 0.5;
  double frame_threshold = 0.5;
  std::size_t median_window = 5;
  bool gate_strong_by_weak = true;

  void validate() const;
};

/// Which pseudo-label types to produce.
struct PseudoTypes {
  bool upw = false;
  bool ups = false;
  bool wps = false;

  bool any() const { return upw || ups || wps; }
  std::string name() const;
};

/// Majority vote over a centered window; windows shrink at the edges. Ties
/// cannot occur for interior frames; at edges a tie resolves to 0.
std::vector<int> median_filter(const std::vector<int>& bits, std::size_t window);

/// Each maximal run [i, j] of ones becomes (i * d, (j + 1) * d).
std::vector<std::pair<double, double>> frames_to_events(const std::vector<int>& bits, double frame_duration);

/// Tags whose clip probability is >= threshold.
std::set<std::string> tags_from_probs(const Tensor& clip_probs, const std::vector<std::string>& classes,
                                      double threshold);

/// Per class: threshold, median filter, run extraction. Offsets are clipped to
/// `clip_duration`. With a gate, classes outside it produce no events.
std::vector<EventLabel> events_from_probs(const Tensor& frame_probs, const std::vector<std::string>& classes,
                                          double threshold, std::size_t median_window, double frame_duration,
                                          double clip_duration,
                                          const std::set<std::string>* gate = nullptr);

/// Output-frame duration of `params` on clips of `dataset`.
double output_frame_duration(const crnn::CrnnParams& params, const dataio::Clip& clip);

/// Clip index -> predictions; clips must carry features.
std::vector<crnn::Predictions> predict(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                                       const std::vector<std::size_t>& clips);

dataio::TagMap generate_upw(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                            const std::vector<std::size_t>& clips, double clip_threshold);

/// With `weak_gate`, events are restricted to each clip's real weak tags.
dataio::EventMap generate_strong(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                                 const std::vector<std::size_t>& clips, double frame_threshold,
                                 std::size_t median_window, bool weak_gate);

/// UPW/UPS over the unlabeled split and WPS over the weak split.
PseudoLabelSet generate(const crnn::CrnnParams& params, const dataio::Dataset& dataset, const PlgConfig& cfg,
                        const PseudoTypes& types, const std::string& provenance);

/// Keeps only the requested types of an existing set.
PseudoLabelSet select(const PseudoLabelSet& all, const PseudoTypes& types);

// Files: upw.tsv (weak format), ups.tsv and wps.tsv (strong format), each
// headed by "# plg-checkpoint: <id>".
void save_pseudo_labels(const std::string& dir, const PseudoLabelSet& labels);
PseudoLabelSet load_pseudo_labels(const std::string& dir);

}  // namespace csed::plg
