#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "couple_sed/features.hpp"
#include "couple_sed/losses.hpp"

namespace csed::dataio {

using losses::Provenance;
using losses::Split;
using numkit::Tensor;

struct EventLabel {
  double onset = 0.0;
  double offset = 0.0;
  std::string class_name;

  friend bool operator==(const EventLabel&, const EventLabel&) = default;
};

/// filename -> events / tags
using EventMap = std::map<std::string, std::vector<EventLabel>>;
using TagMap = std::map<std::string, std::set<std::string>>;

/// Malformed label or dataset file. The message names the file and line.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_string(Split split);
Split parse_split(const std::string& s);

struct Clip {
  std::string id;
  std::vector<double> samples;
  double duration = 0.0;
  Split split = Split::Unlabeled;
  /// Visible strong labels: set for the strong and validation splits only.
  std::vector<EventLabel> events;
  /// Visible weak labels: set for the weak split only.
  std::set<std::string> tags;
  /// Generator ground truth for every clip; never used for training.
  std::vector<EventLabel> hidden_truth;
  features::FeatureMatrix features;
};

struct Dataset {
  std::vector<std::string> classes;
  double sample_rate = 16000.0;
  std::vector<Clip> clips;

  std::size_t class_index(const std::string& name) const;
  std::vector<std::size_t> indices(Split split) const;
  /// Throws on duplicate ids, non-positive durations or out-of-range events.
  void validate() const;
};

// DCASE-style label files ---------------------------------------------------

inline constexpr const char* kStrongHeader = "filename\tonset\toffset\tevent_label";
inline constexpr const char* kWeakHeader = "filename\tevent_labels";

/// Lines "filename<TAB>onset<TAB>offset<TAB>event_label". An optional header
/// and '#' comment lines are skipped.
EventMap load_strong(const std::string& path);
void save_strong(const std::string& path, const EventMap& events, const std::string& comment = {});

/// Lines "filename<TAB>tag1,tag2,...". Duplicate filenames are an error.
TagMap load_weak(const std::string& path);
void save_weak(const std::string& path, const TagMap& tags, const std::string& comment = {});

/// First "# key: value" comment with the given key, or empty.
std::string read_header_value(const std::string& path, const std::string& key);

// Synthetic data ------------------------------------------------------------

struct SynthConfig {
  std::size_t n_strong = 40;
  std::size_t n_weak = 80;
  std::size_t n_unlabeled = 400;
  std::size_t n_validation = 60;
  std::size_t n_classes = 4;
  double clip_seconds = 2.0;
  double sample_rate = 16000.0;
  std::size_t events_min = 1;
  std::size_t events_max = 3;
  double event_min_seconds = 0.3;
  double event_max_seconds = 1.0;
  double snr_db_min = -6.0;
  double snr_db_max = 6.0;
  /// Non-target interfering tones per clip, drawn uniformly in [0, distractors_max].
  std::size_t distractors_max = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<std::string> synth_class_names(std::size_t n_classes);

/// Each class is a fixed band-limited template (tone stack, chirp, AM tone or
/// noise band); events land at seeded onsets over Gaussian background noise.
Dataset synth_dataset(const SynthConfig& cfg);

void compute_features(Dataset& dataset, const features::FeatureConfig& cfg);

// Dataset directories: splits.tsv, classes.txt, strong.tsv, weak.tsv,
// validation.tsv and audio/<id> as 16-bit WAV.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

// Targets ---------------------------------------------------------------------

/// Frame t covers [t*d, (t+1)*d); it is active for an event when its centre
/// lies in [onset, offset).
Tensor events_to_frames(const std::vector<EventLabel>& events, const std::vector<std::string>& classes,
                        std::size_t n_frames, double frame_duration);
Tensor tags_to_vector(const std::set<std::string>& tags, const std::vector<std::string>& classes);

// Pseudo labels and epoch composition ----------------------------------------

struct PseudoLabelSet {
  TagMap upw;    // unlabeled clip -> pseudo tags
  EventMap ups;  // unlabeled clip -> pseudo events
  EventMap wps;  // weak clip -> pseudo events
  std::string provenance;

  bool empty() const { return upw.empty() && ups.empty() && wps.empty(); }
};

struct TrainItem {
  std::size_t clip = 0;
  Provenance provenance = Provenance::Real;

  friend bool operator==(const TrainItem&, const TrainItem&) = default;
};

enum class VoiMode { RealFirst, PseudoFirst, Random };
std::string to_string(VoiMode mode);
VoiMode parse_voi_mode(const std::string& s);

/// Real items for every strong and weak clip, plus unlabeled clips when
/// `include_unlabeled`. An unlabeled clip with UPW/UPS labels becomes one
/// pseudo item instead; a weak clip with WPS labels adds a pseudo item.
std::vector<TrainItem> build_items(const Dataset& dataset, const PseudoLabelSet& pseudo,
                                   bool include_unlabeled);

/// Orders one epoch and chunks it into batches. RealFirst puts every real
/// item before every pseudo item (each group shuffled), PseudoFirst the
/// reverse, Random shuffles the union.
std::vector<std::vector<TrainItem>> compose_epoch(std::span<const TrainItem> items, VoiMode mode,
                                                  std::size_t batch_size, std::uint64_t seed);

/// Training targets of one item at `n_frames` output resolution.
losses::ClipTargets make_targets(const Dataset& dataset, const PseudoLabelSet& pseudo,
                                 const TrainItem& item, std::size_t n_frames, double frame_duration);

}  // namespace csed::dataio
