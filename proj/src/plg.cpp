#include "couple_sed/plg.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

namespace csed::plg {

namespace fs = std::filesystem;

void PlgConfig::validate() const {
  if (!(clip_threshold >= 0.0 && clip_threshold <= 1.0))
    throw std::invalid_argument("plg: clip_threshold must lie in [0, 1]");
  if (!(frame_threshold >= 0.0 && frame_threshold <= 1.0))
    throw std::invalid_argument("plg: frame_threshold must lie in [0, 1]");
  if (median_window < 1 || median_window % 2 == 0)
    throw std::invalid_argument("plg: median_window must be odd and >= 1");
}

std::string PseudoTypes::name() const {
  std::string s;
  if (ups) s += "+UPS";
  if (wps) s += "+WPS";
  if (upw) s += "+UPW";
  return s;
}

std::vector<int> median_filter(const std::vector<int>& bits, std::size_t window) {
  if (window % 2 == 0) throw std::invalid_argument("median_filter: window must be odd, got " + std::to_string(window));
  const std::size_t n = bits.size(), half = window / 2;
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    std::size_t ones = 0;
    for (std::size_t k = lo; k < hi; ++k) ones += bits[k] != 0;
    out[i] = 2 * ones > hi - lo ? 1 : 0;
  }
  return out;
}

std::vector<std::pair<double, double>> frames_to_events(const std::vector<int>& bits, double frame_duration) {
  if (!(frame_duration > 0.0)) throw std::invalid_argument("frames_to_events: frame_duration must be > 0");
  std::vector<std::pair<double, double>> out;
  std::size_t i = 0;
  while (i < bits.size()) {
    if (!bits[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < bits.size() && bits[j + 1]) ++j;
    out.emplace_back(static_cast<double>(i) * frame_duration, static_cast<double>(j + 1) * frame_duration);
    i = j + 1;
  }
  return out;
}

std::set<std::string> tags_from_probs(const Tensor& clip_probs, const std::vector<std::string>& classes,
                                      double threshold) {
  numkit::require_shape(clip_probs, {classes.size()}, "tags_from_probs");
  std::set<std::string> out;
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (clip_probs[c] >= threshold) out.insert(classes[c]);
  return out;
}

std::vector<EventLabel> events_from_probs(const Tensor& frame_probs, const std::vector<std::string>& classes,
                                          double threshold, std::size_t median_window, double frame_duration,
                                          double clip_duration, const std::set<std::string>* gate) {
  if (frame_probs.rank() != 2 || frame_probs.dim(1) != classes.size())
    throw numkit::ShapeError("events_from_probs: frame_probs " + numkit::shape_str(frame_probs.shape()));
  const std::size_t T = frame_probs.dim(0);
  std::vector<EventLabel> out;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (gate && !gate->contains(classes[c])) continue;
    std::vector<int> bits(T);
    for (std::size_t t = 0; t < T; ++t) bits[t] = frame_probs.at(t, c) >= threshold ? 1 : 0;
    for (auto [on, off] : frames_to_events(median_filter(bits, median_window), frame_duration)) {
      off = std::min(off, clip_duration);
      if (on < off) out.push_back({on, off, classes[c]});
    }
  }
  std::sort(out.begin(), out.end(), [](const EventLabel& a, const EventLabel& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.class_name < b.class_name;
  });
  return out;
}

double output_frame_duration(const crnn::CrnnParams& params, const dataio::Clip& clip) {
  return clip.features.frame_duration * static_cast<double>(params.config.time_pool());
}

std::vector<crnn::Predictions> predict(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                                       const std::vector<std::size_t>& clips) {
  std::vector<crnn::Predictions> out;
  out.reserve(clips.size());
  for (std::size_t i : clips) {
    const auto& clip = dataset.clips.at(i);
    if (clip.features.frames.empty()) throw std::invalid_argument("plg: clip " + clip.id + " has no features");
    out.push_back(crnn::forward(params, clip.features));
  }
  return out;
}

dataio::TagMap generate_upw(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                            const std::vector<std::size_t>& clips, double clip_threshold) {
  const auto preds = predict(params, dataset, clips);
  dataio::TagMap out;
  for (std::size_t k = 0; k < clips.size(); ++k)
    out[dataset.clips[clips[k]].id] = tags_from_probs(preds[k].clip_probs, dataset.classes, clip_threshold);
  return out;
}

dataio::EventMap generate_strong(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                                 const std::vector<std::size_t>& clips, double frame_threshold,
                                 std::size_t median_window, bool weak_gate) {
  const auto preds = predict(params, dataset, clips);
  dataio::EventMap out;
  for (std::size_t k = 0; k < clips.size(); ++k) {
    const auto& clip = dataset.clips[clips[k]];
    out[clip.id] = events_from_probs(preds[k].frame_probs, dataset.classes, frame_threshold, median_window,
                                     output_frame_duration(params, clip), clip.duration,
                                     weak_gate ? &clip.tags : nullptr);
  }
  return out;
}

PseudoLabelSet generate(const crnn::CrnnParams& params, const dataio::Dataset& dataset, const PlgConfig& cfg,
                        const PseudoTypes& types, const std::string& provenance) {
  cfg.validate();
  PseudoLabelSet out;
  out.provenance = provenance;
  const auto unlabeled = dataset.indices(dataio::Split::Unlabeled);
  const auto weak = dataset.indices(dataio::Split::Weak);
  if (types.upw || types.ups) {
    const auto preds = predict(params, dataset, unlabeled);
    for (std::size_t k = 0; k < unlabeled.size(); ++k) {
      const auto& clip = dataset.clips[unlabeled[k]];
      if (types.upw) out.upw[clip.id] = tags_from_probs(preds[k].clip_probs, dataset.classes, cfg.clip_threshold);
      if (types.ups) {
        out.ups[clip.id] = events_from_probs(preds[k].frame_probs, dataset.classes, cfg.frame_threshold,
                                             cfg.median_window, output_frame_duration(params, clip),
                                             clip.duration);
      }
    }
  }
  if (types.wps) {
    out.wps = generate_strong(params, dataset, weak, cfg.frame_threshold, cfg.median_window,
                              cfg.gate_strong_by_weak);
  }
  return out;
}

PseudoLabelSet select(const PseudoLabelSet& all, const PseudoTypes& types) {
  PseudoLabelSet out;
  out.provenance = all.provenance;
  if (types.upw) out.upw = all.upw;
  if (types.ups) out.ups = all.ups;
  if (types.wps) out.wps = all.wps;
  return out;
}

void save_pseudo_labels(const std::string& dir, const PseudoLabelSet& labels) {
  fs::create_directories(dir);
  const std::string comment = "plg-checkpoint: " + labels.provenance;
  dataio::save_weak((fs::path(dir) / "upw.tsv").string(), labels.upw, comment);
  dataio::save_strong((fs::path(dir) / "ups.tsv").string(), labels.ups, comment);
  dataio::save_strong((fs::path(dir) / "wps.tsv").string(), labels.wps, comment);
}

PseudoLabelSet load_pseudo_labels(const std::string& dir) {
  PseudoLabelSet out;
  const auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
  out.upw = dataio::load_weak(path("upw.tsv"));
  out.ups = dataio::load_strong(path("ups.tsv"));
  out.wps = dataio::load_strong(path("wps.tsv"));
  out.provenance = dataio::read_header_value(path("upw.tsv"), "plg-checkpoint");
  return out;
}

}  // namespace csed::plg
