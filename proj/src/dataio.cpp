#include "couple_sed/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "couple_sed/util.hpp"

namespace csed::dataio {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::Strong: return "strong";
    case Split::Weak: return "weak";
    case Split::Unlabeled: return "unlabeled";
    case Split::Validation: return "validation";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "strong") return Split::Strong;
  if (s == "weak") return Split::Weak;
  if (s == "unlabeled") return Split::Unlabeled;
  if (s == "validation") return Split::Validation;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::size_t Dataset::class_index(const std::string& name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw std::invalid_argument("unknown class '" + name + "'");
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips.size(); ++i)
    if (clips[i].split == split) out.push_back(i);
  return out;
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const Clip& c : clips) {
    if (!ids.insert(c.id).second) throw std::invalid_argument("duplicate clip id " + c.id);
    if (!(c.duration > 0.0)) throw std::invalid_argument("clip " + c.id + " has non-positive duration");
    for (const auto* list : {&c.events, &c.hidden_truth}) {
      for (const EventLabel& e : *list) {
        if (!(0.0 <= e.onset && e.onset < e.offset && e.offset <= c.duration + 1e-9)) {
          throw std::invalid_argument("clip " + c.id + " has event outside [0, duration]");
        }
        class_index(e.class_name);
      }
    }
    for (const auto& t : c.tags) class_index(t);
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

double parse_seconds(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError(where + ": '" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) throw FormatError(where + ": '" + s + "' is not a number");
  return v;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::string format_seconds(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

EventMap load_strong(const std::string& path) {
  auto in = open_in(path);
  EventMap out;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    if (!seen_content && line == kStrongHeader) {
      seen_content = true;
      continue;
    }
    seen_content = true;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto f = split_tabs(line);
    if (f.size() != 4) {
      throw FormatError(where + ": expected 4 tab-separated fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty() || f[3].empty()) throw FormatError(where + ": empty filename or label");
    EventLabel e{parse_seconds(f[1], where), parse_seconds(f[2], where), f[3]};
    if (!(e.onset < e.offset)) throw FormatError(where + ": onset must be before offset");
    if (e.onset < 0.0) throw FormatError(where + ": negative onset");
    out[f[0]].push_back(std::move(e));
  }
  return out;
}

void save_strong(const std::string& path, const EventMap& events, const std::string& comment) {
  auto out = open_out(path);
  if (!comment.empty()) out << "# " << comment << '\n';
  out << kStrongHeader << '\n';
  for (const auto& [file, list] : events) {
    for (const EventLabel& e : list) {
      out << file << '\t' << format_seconds(e.onset) << '\t' << format_seconds(e.offset) << '\t'
          << e.class_name << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

TagMap load_weak(const std::string& path) {
  auto in = open_in(path);
  TagMap out;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    if (!seen_content && line == kWeakHeader) {
      seen_content = true;
      continue;
    }
    seen_content = true;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto f = split_tabs(line);
    if (f.size() != 2) {
      throw FormatError(where + ": expected 2 tab-separated fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty()) throw FormatError(where + ": empty filename");
    std::set<std::string> tags;
    std::stringstream ss(f[1]);
    std::string tag;
    while (std::getline(ss, tag, ',')) {
      if (tag.empty()) throw FormatError(where + ": empty tag in '" + f[1] + "'");
      tags.insert(tag);
    }
    if (!out.emplace(f[0], std::move(tags)).second) {
      throw FormatError(where + ": duplicate filename " + f[0]);
    }
  }
  return out;
}

void save_weak(const std::string& path, const TagMap& tags, const std::string& comment) {
  auto out = open_out(path);
  if (!comment.empty()) out << "# " << comment << '\n';
  out << kWeakHeader << '\n';
  for (const auto& [file, set] : tags) {
    out << file << '\t';
    bool first = true;
    for (const auto& t : set) {
      if (!first) out << ',';
      out << t;
      first = false;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string read_header_value(const std::string& path, const std::string& key) {
  auto in = open_in(path);
  std::string line;
  const std::string prefix = "# " + key + ":";
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.rfind(prefix, 0) == 0) {
      std::string v = line.substr(prefix.size());
      const auto first = v.find_first_not_of(' ');
      return first == std::string::npos ? std::string{} : v.substr(first);
    }
  }
  return {};
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (n_classes < 2) throw std::invalid_argument("synth: n_classes must be >= 2");
  if (!(clip_seconds > 0.0)) throw std::invalid_argument("synth: clip_seconds must be > 0");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("synth: sample_rate must be > 0");
  if (events_min > events_max) throw std::invalid_argument("synth: events_min > events_max");
  if (!(event_min_seconds > 0.0) || event_min_seconds > event_max_seconds ||
      event_max_seconds > clip_seconds) {
    throw std::invalid_argument("synth: event length range must lie in (0, clip_seconds]");
  }
  if (snr_db_min > snr_db_max) throw std::invalid_argument("synth: snr_db_min > snr_db_max");
}

std::vector<std::string> synth_class_names(std::size_t n_classes) {
  static const char* kinds[] = {"tone", "chirp", "trill", "hiss"};
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_classes; ++c) names.push_back(std::string(kinds[c % 4]) + std::to_string(c));
  return names;
}

namespace {

constexpr double kNoiseSigma = 0.05;

double class_frequency(std::size_t c, std::size_t n_classes) {
  const double lo = 400.0, hi = 5000.0;
  return lo * std::pow(hi / lo, static_cast<double>(c) / static_cast<double>(n_classes - 1));
}

/// Unit-RMS event waveform of `n` samples for class `c`.
std::vector<double> render_event(std::size_t c, std::size_t n_classes, std::size_t n, double sr,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(0.93, 1.07), phase(0.0, 2.0 * std::numbers::pi);
  const double f = class_frequency(c, n_classes) * jitter(rng);
  std::vector<double> s(n, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  switch (c % 4) {
    case 0: {  // harmonic stack
      const double p = phase(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        s[i] = std::sin(two_pi * f * t + p) + 0.5 * std::sin(two_pi * 2 * f * t) +
               0.25 * std::sin(two_pi * 3 * f * t);
      }
      break;
    }
    case 1: {  // linear up-chirp f -> 1.6 f
      const double dur = static_cast<double>(n) / sr;
      const double k = 0.6 * f / dur;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        s[i] = std::sin(two_pi * (f * t + 0.5 * k * t * t));
      }
      break;
    }
    case 2: {  // amplitude-modulated tone
      const double p = phase(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        s[i] = (0.6 + 0.4 * std::sin(two_pi * 9.0 * t + p)) * std::sin(two_pi * f * t);
      }
      break;
    }
    default: {  // noise band around f
      std::uniform_real_distribution<double> band(0.85 * f, 1.15 * f);
      for (int k = 0; k < 24; ++k) {
        const double fk = band(rng), pk = phase(rng);
        for (std::size_t i = 0; i < n; ++i) s[i] += std::sin(two_pi * fk * static_cast<double>(i) / sr + pk);
      }
      break;
    }
  }
  double e = 0.0;
  for (double v : s) e += v * v;
  const double rms = std::sqrt(e / static_cast<double>(std::max<std::size_t>(n, 1)));
  if (rms > 0.0)
    for (auto& v : s) v /= rms;
  return s;
}

void mix_in(std::vector<double>& clip, const std::vector<double>& event, std::size_t start, double gain,
            double sr) {
  const std::size_t fade = std::min<std::size_t>(static_cast<std::size_t>(0.01 * sr), event.size() / 2);
  for (std::size_t i = 0; i < event.size() && start + i < clip.size(); ++i) {
    double w = 1.0;
    if (i < fade) w = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / fade);
    const std::size_t from_end = event.size() - 1 - i;
    if (from_end < fade) w = std::min(w, 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(from_end) / fade));
    clip[start + i] += gain * w * event[i];
  }
}

double round_ms(double s) { return std::round(s * 1000.0) / 1000.0; }

}  // namespace

Dataset synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.classes = synth_class_names(cfg.n_classes);
  ds.sample_rate = cfg.sample_rate;
  const std::size_t n_samples = static_cast<std::size_t>(std::llround(cfg.clip_seconds * cfg.sample_rate));
  std::mt19937_64 rng(cfg.seed);

  const std::pair<Split, std::size_t> plan[] = {{Split::Strong, cfg.n_strong},
                                                {Split::Weak, cfg.n_weak},
                                                {Split::Unlabeled, cfg.n_unlabeled},
                                                {Split::Validation, cfg.n_validation}};
  std::normal_distribution<double> noise(0.0, kNoiseSigma);
  std::uniform_int_distribution<std::size_t> n_events(cfg.events_min, cfg.events_max);
  std::uniform_int_distribution<std::size_t> n_distract(0, cfg.distractors_max);
  std::uniform_int_distribution<std::size_t> pick_class(0, cfg.n_classes - 1);
  std::uniform_real_distribution<double> length(cfg.event_min_seconds, cfg.event_max_seconds);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> snr(cfg.snr_db_min, cfg.snr_db_max);

  for (const auto& [split, count] : plan) {
    for (std::size_t i = 0; i < count; ++i) {
      Clip clip;
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04zu.wav", to_string(split).c_str(), i);
      clip.id = name;
      clip.split = split;
      clip.duration = static_cast<double>(n_samples) / cfg.sample_rate;
      clip.samples.resize(n_samples);
      for (auto& v : clip.samples) v = noise(rng);

      const std::size_t k = n_events(rng);
      for (std::size_t e = 0; e < k; ++e) {
        const std::size_t c = pick_class(rng);
        const double len = round_ms(length(rng));
        const double onset = round_ms(unit(rng) * (clip.duration - len));
        const double offset = std::min(round_ms(onset + len), clip.duration);
        const auto start = static_cast<std::size_t>(std::llround(onset * cfg.sample_rate));
        const auto n = static_cast<std::size_t>(std::llround((offset - onset) * cfg.sample_rate));
        const double gain = kNoiseSigma * std::pow(10.0, snr(rng) / 20.0);
        mix_in(clip.samples, render_event(c, cfg.n_classes, n, cfg.sample_rate, rng), start, gain,
               cfg.sample_rate);
        clip.hidden_truth.push_back({onset, offset, ds.classes[c]});
      }
      const std::size_t d = n_distract(rng);
      for (std::size_t e = 0; e < d; ++e) {
        const double f = 200.0 * std::pow(7000.0 / 200.0, unit(rng));
        const double len = length(rng);
        const auto n = static_cast<std::size_t>(len * cfg.sample_rate);
        const auto start = static_cast<std::size_t>(unit(rng) * static_cast<double>(n_samples - n));
        std::vector<double> tone(n);
        for (std::size_t j = 0; j < n; ++j)
          tone[j] = std::sqrt(2.0) * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(j) / cfg.sample_rate);
        mix_in(clip.samples, tone, start, kNoiseSigma * std::pow(10.0, snr(rng) / 20.0), cfg.sample_rate);
      }
      std::sort(clip.hidden_truth.begin(), clip.hidden_truth.end(),
                [](const EventLabel& a, const EventLabel& b) { return a.onset < b.onset; });
      if (split == Split::Strong || split == Split::Validation) clip.events = clip.hidden_truth;
      if (split == Split::Weak)
        for (const auto& e : clip.hidden_truth) clip.tags.insert(e.class_name);
      ds.clips.push_back(std::move(clip));
    }
  }
  ds.validate();
  return ds;
}

void compute_features(Dataset& dataset, const features::FeatureConfig& cfg) {
  for (Clip& c : dataset.clips) c.features = features::log_mel(c.samples, cfg);
}

// ---------------------------------------------------------------------------

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(fs::path(dir) / "audio");
  {
    auto out = open_out((fs::path(dir) / "classes.txt").string());
    for (const auto& c : ds.classes) out << c << '\n';
  }
  {
    auto out = open_out((fs::path(dir) / "splits.tsv").string());
    out << "filename\tsplit\tduration\n";
    for (const Clip& c : ds.clips) out << c.id << '\t' << to_string(c.split) << '\t' << format_seconds(c.duration) << '\n';
  }
  EventMap strong, validation;
  TagMap weak;
  for (const Clip& c : ds.clips) {
    if (c.split == Split::Strong) strong[c.id] = c.events;
    if (c.split == Split::Validation) validation[c.id] = c.events;
    if (c.split == Split::Weak) weak[c.id] = c.tags;
    features::write_wav((fs::path(dir) / "audio" / c.id).string(), c.samples,
                        static_cast<int>(ds.sample_rate));
  }
  save_strong((fs::path(dir) / "strong.tsv").string(), strong);
  save_strong((fs::path(dir) / "validation.tsv").string(), validation);
  save_weak((fs::path(dir) / "weak.tsv").string(), weak);
}

Dataset load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
  Dataset ds;
  {
    auto in = open_in((fs::path(dir) / "classes.txt").string());
    std::string line;
    while (std::getline(in, line)) {
      line = strip_cr(line);
      if (!line.empty()) ds.classes.push_back(line);
    }
  }
  const EventMap strong = load_strong((fs::path(dir) / "strong.tsv").string());
  const EventMap validation = load_strong((fs::path(dir) / "validation.tsv").string());
  const TagMap weak = load_weak((fs::path(dir) / "weak.tsv").string());

  const std::string splits_path = (fs::path(dir) / "splits.tsv").string();
  auto in = open_in(splits_path);
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (first && line.rfind("filename\t", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    const std::string where = splits_path + ":" + std::to_string(line_no);
    const auto f = split_tabs(line);
    if (f.size() != 3) throw FormatError(where + ": expected filename, split, duration");
    Clip c;
    c.id = f[0];
    try {
      c.split = parse_split(f[1]);
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
    c.duration = parse_seconds(f[2], where);
    const auto wav = features::read_wav((fs::path(dir) / "audio" / c.id).string());
    c.samples = wav.samples;
    ds.sample_rate = wav.sample_rate;
    auto find_events = [&](const EventMap& m) {
      const auto it = m.find(c.id);
      return it == m.end() ? std::vector<EventLabel>{} : it->second;
    };
    if (c.split == Split::Strong) c.events = find_events(strong);
    if (c.split == Split::Validation) c.events = find_events(validation);
    if (c.split == Split::Weak) {
      const auto it = weak.find(c.id);
      if (it != weak.end()) c.tags = it->second;
    }
    c.hidden_truth = c.events;
    ds.clips.push_back(std::move(c));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------

Tensor events_to_frames(const std::vector<EventLabel>& events, const std::vector<std::string>& classes,
                        std::size_t n_frames, double frame_duration) {
  Tensor out({n_frames, classes.size()});
  for (const EventLabel& e : events) {
    const auto it = std::find(classes.begin(), classes.end(), e.class_name);
    if (it == classes.end()) throw std::invalid_argument("unknown class '" + e.class_name + "'");
    const auto c = static_cast<std::size_t>(it - classes.begin());
    for (std::size_t t = 0; t < n_frames; ++t) {
      const double centre = (static_cast<double>(t) + 0.5) * frame_duration;
      if (centre >= e.onset && centre < e.offset) out.at(t, c) = 1.0;
    }
  }
  return out;
}

Tensor tags_to_vector(const std::set<std::string>& tags, const std::vector<std::string>& classes) {
  Tensor out({classes.size()});
  for (const auto& t : tags) {
    const auto it = std::find(classes.begin(), classes.end(), t);
    if (it == classes.end()) throw std::invalid_argument("unknown class '" + t + "'");
    out[static_cast<std::size_t>(it - classes.begin())] = 1.0;
  }
  return out;
}

std::string to_string(VoiMode mode) {
  switch (mode) {
    case VoiMode::RealFirst: return "RF";
    case VoiMode::PseudoFirst: return "PF";
    case VoiMode::Random: return "random";
  }
  return "?";
}

VoiMode parse_voi_mode(const std::string& s) {
  if (s == "RF" || s == "rf") return VoiMode::RealFirst;
  if (s == "PF" || s == "pf") return VoiMode::PseudoFirst;
  if (s == "random") return VoiMode::Random;
  throw std::invalid_argument("unknown VOI mode '" + s + "' (expected RF, PF or random)");
}

std::vector<TrainItem> build_items(const Dataset& dataset, const PseudoLabelSet& pseudo,
                                   bool include_unlabeled) {
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
    const Clip& c = dataset.clips[i];
    switch (c.split) {
      case Split::Strong:
        items.push_back({i, Provenance::Real});
        break;
      case Split::Weak:
        items.push_back({i, Provenance::Real});
        if (pseudo.wps.contains(c.id)) items.push_back({i, Provenance::Pseudo});
        break;
      case Split::Unlabeled:
        if (pseudo.upw.contains(c.id) || pseudo.ups.contains(c.id)) {
          items.push_back({i, Provenance::Pseudo});
        } else if (include_unlabeled) {
          items.push_back({i, Provenance::Real});
        }
        break;
      case Split::Validation:
        break;
    }
  }
  return items;
}

std::vector<std::vector<TrainItem>> compose_epoch(std::span<const TrainItem> items, VoiMode mode,
                                                  std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("compose_epoch: batch_size must be >= 1");
  if (items.empty()) throw std::invalid_argument("compose_epoch: no items to schedule");
  std::mt19937_64 rng(seed);
  std::vector<TrainItem> order;
  order.reserve(items.size());
  if (mode == VoiMode::Random) {
    order.assign(items.begin(), items.end());
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    std::vector<TrainItem> real, pseudo;
    for (const auto& it : items) (it.provenance == Provenance::Real ? real : pseudo).push_back(it);
    std::shuffle(real.begin(), real.end(), rng);
    std::shuffle(pseudo.begin(), pseudo.end(), rng);
    auto& first = mode == VoiMode::RealFirst ? real : pseudo;
    auto& second = mode == VoiMode::RealFirst ? pseudo : real;
    order = std::move(first);
    order.insert(order.end(), second.begin(), second.end());
  }
  std::vector<std::vector<TrainItem>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  return batches;
}

losses::ClipTargets make_targets(const Dataset& dataset, const PseudoLabelSet& pseudo,
                                 const TrainItem& item, std::size_t n_frames, double frame_duration) {
  const Clip& c = dataset.clips.at(item.clip);
  losses::ClipTargets t;
  t.provenance = item.provenance;
  t.split = c.split;
  if (item.provenance == Provenance::Real) {
    if (c.split == Split::Strong) t.strong = events_to_frames(c.events, dataset.classes, n_frames, frame_duration);
    if (c.split == Split::Weak) t.weak = tags_to_vector(c.tags, dataset.classes);
    return t;
  }
  if (c.split == Split::Unlabeled) {
    if (const auto it = pseudo.ups.find(c.id); it != pseudo.ups.end())
      t.strong = events_to_frames(it->second, dataset.classes, n_frames, frame_duration);
    if (const auto it = pseudo.upw.find(c.id); it != pseudo.upw.end())
      t.weak = tags_to_vector(it->second, dataset.classes);
  } else if (c.split == Split::Weak) {
    if (const auto it = pseudo.wps.find(c.id); it != pseudo.wps.end())
      t.strong = events_to_frames(it->second, dataset.classes, n_frames, frame_duration);
  }
  if (!t.labeled()) throw std::invalid_argument("pseudo item for " + c.id + " has no pseudo labels");
  return t;
}

}  // namespace csed::dataio
