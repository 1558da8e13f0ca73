#include "couple_sed/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "couple_sed/util.hpp"

namespace csed::experiment {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Synth: return "synth";
    case Mode::Train: return "train";
    case Mode::Plg: return "plg";
    case Mode::Score: return "score";
    case Mode::Ablation1: return "ablation1";
    case Mode::Ablation2: return "ablation2";
    case Mode::Voi: return "voi";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::Synth, Mode::Train, Mode::Plg, Mode::Score, Mode::Ablation1, Mode::Ablation2, Mode::Voi})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode '" + s + "'");
}

ExperimentConfig desk_defaults() {
  ExperimentConfig cfg;
  cfg.features.n_fft = 512;
  cfg.features.hop = 512;
  cfg.features.n_mels = 32;
  cfg.model = crnn::CrnnConfig::desk(32);
  cfg.train.epochs = 30;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 0.02;
  cfg.train.ema_alpha = 0.99;
  return cfg;
}

// ---------------------------------------------------------------------------
// INI parsing

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T, typename Parse>
  void field(const std::string& section, const std::string& key, T& out, Parse parse, const char* expected) {
    known_[section].insert(key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return;
    const auto v = sec->get_optional<std::string>(key);
    if (!v) return;
    const std::string raw = trim(*v);
    try {
      out = parse(raw);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("[" + section + "] " + key + ": expected " + expected + ", got '" + raw + "'");
    }
  }

  void size(const std::string& s, const std::string& k, std::size_t& out) {
    field(s, k, out, [](const std::string& v) {
      std::size_t used = 0;
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      const auto x = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      return static_cast<std::size_t>(x);
    }, "a non-negative integer");
  }
  void u64(const std::string& s, const std::string& k, std::uint64_t& out) {
    std::size_t tmp = out;
    size(s, k, tmp);
    out = tmp;
  }
  void real(const std::string& s, const std::string& k, double& out) {
    field(s, k, out, [](const std::string& v) {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument("bad");
      return x;
    }, "a number");
  }
  void flag(const std::string& s, const std::string& k, bool& out) {
    field(s, k, out, [](const std::string& v) {
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw std::invalid_argument("bad");
    }, "true or false");
  }
  void text(const std::string& s, const std::string& k, std::string& out) {
    field(s, k, out, [](const std::string& v) { return v; }, "a string");
  }

  /// Rejects sections and keys that no field consumed.
  void check_unknown() const {
    for (const auto& [section, sub] : tree_) {
      const auto it = known_.find(section);
      if (it == known_.end()) throw ConfigError("unknown section [" + section + "]");
      for (const auto& [key, value] : sub) {
        if (!it->second.contains(key)) throw ConfigError("[" + section + "] unknown key '" + key + "'");
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::map<std::string, std::set<std::string>> known_;
};

std::vector<std::size_t> parse_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) {
    std::size_t used = 0;
    if (item[0] == '-') throw std::invalid_argument("negative");
    out.push_back(std::stoull(item, &used));
    if (used != item.size()) throw std::invalid_argument("trailing");
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  ExperimentConfig cfg = desk_defaults();
  Reader r(tree);

  r.text("paths", "dataset_dir", cfg.paths.dataset_dir);
  r.text("paths", "checkpoint", cfg.paths.checkpoint);
  r.text("paths", "pseudo_dir", cfg.paths.pseudo_dir);
  r.text("paths", "ref", cfg.paths.ref);
  r.text("paths", "est", cfg.paths.est);
  r.text("paths", "out", cfg.paths.out);

  r.real("features", "sample_rate", cfg.features.sample_rate);
  r.size("features", "n_fft", cfg.features.n_fft);
  r.size("features", "hop", cfg.features.hop);
  r.size("features", "n_mels", cfg.features.n_mels);
  r.flag("features", "standardize", cfg.features.standardize);

  r.field("model", "conv_filters", cfg.model.conv_filters, parse_sizes, "a comma-separated integer list");
  r.field("model", "pool_sizes", cfg.model.pool_sizes, [](const std::string& v) {
    std::vector<crnn::PoolSize> out;
    for (const auto& item : split_list(v)) {
      const auto x = item.find('x');
      if (x == std::string::npos) throw std::invalid_argument("no x");
      const auto a = parse_sizes(item.substr(0, x)), b = parse_sizes(item.substr(x + 1));
      if (a.size() != 1 || b.size() != 1) throw std::invalid_argument("bad");
      out.push_back({a[0], b[0]});
    }
    return out;
  }, "a list like 2x2,1x2");
  r.size("model", "kernel", cfg.model.kernel);
  r.size("model", "gru_layers", cfg.model.gru_layers);
  r.size("model", "gru_hidden", cfg.model.gru_hidden);
  r.real("model", "dropout", cfg.model.dropout);

  auto& t = cfg.train;
  r.size("train", "epochs", t.epochs);
  r.size("train", "batch_size", t.batch_size);
  r.real("train", "learning_rate", t.learning_rate);
  r.real("train", "momentum", t.momentum);
  r.real("train", "ema_alpha", t.ema_alpha);
  r.real("train", "noise_std", t.noise_std);
  r.flag("train", "student_noise", t.student_noise);
  r.field("train", "ramp_len", t.ramp_len, [](const std::string& v) -> std::optional<std::size_t> {
    if (v == "auto") return std::nullopt;
    const auto s = parse_sizes(v);
    if (s.size() != 1) throw std::invalid_argument("bad");
    return s[0];
  }, "an integer step count or 'auto'");
  r.real("train", "max_consistency_weight", t.max_consistency_weight);
  r.real("train", "pseudo_weight", t.pseudo_weight);
  r.flag("train", "mean_teacher", t.use_mean_teacher);
  r.field("train", "voi_mode", t.voi_mode, dataio::parse_voi_mode, "RF, PF or random");
  r.u64("train", "seed", t.seed);
  r.real("train", "onset_collar", t.collar.onset_collar);
  r.real("train", "offset_collar", t.collar.offset_collar);
  r.real("train", "offset_ratio", t.collar.offset_ratio);
  r.field("train", "pseudo_types", cfg.train_pseudo, [](const std::string& v) {
    plg::PseudoTypes p;
    for (const auto& item : split_list(v)) {
      if (item == "UPW") p.upw = true;
      else if (item == "UPS") p.ups = true;
      else if (item == "WPS") p.wps = true;
      else throw std::invalid_argument("bad");
    }
    return p;
  }, "a list of UPW, UPS, WPS");

  r.real("plg", "clip_threshold", cfg.plg.clip_threshold);
  r.real("plg", "frame_threshold", cfg.plg.frame_threshold);
  r.size("plg", "median_window", cfg.plg.median_window);
  r.flag("plg", "gate_strong_by_weak", cfg.plg.gate_strong_by_weak);

  auto& s = cfg.synth;
  r.size("synth", "n_strong", s.n_strong);
  r.size("synth", "n_weak", s.n_weak);
  r.size("synth", "n_unlabeled", s.n_unlabeled);
  r.size("synth", "n_validation", s.n_validation);
  r.size("synth", "n_classes", s.n_classes);
  r.real("synth", "clip_seconds", s.clip_seconds);
  r.size("synth", "events_min", s.events_min);
  r.size("synth", "events_max", s.events_max);
  r.real("synth", "event_min_seconds", s.event_min_seconds);
  r.real("synth", "event_max_seconds", s.event_max_seconds);
  r.real("synth", "snr_db_min", s.snr_db_min);
  r.real("synth", "snr_db_max", s.snr_db_max);
  r.size("synth", "distractors_max", s.distractors_max);
  r.u64("synth", "seed", s.seed);

  r.field("experiment", "seeds", cfg.seeds, [](const std::string& v) {
    std::vector<std::uint64_t> out;
    for (auto x : parse_sizes(v)) out.push_back(x);
    return out;
  }, "a comma-separated integer list");
  r.size("experiment", "threads", cfg.threads);
  r.field("experiment", "score_classes", cfg.score_classes, split_list, "a comma-separated list");

  r.check_unknown();

  // Derived fields and cross-field checks.
  s.sample_rate = cfg.features.sample_rate;
  cfg.model.n_mels = cfg.features.n_mels;
  cfg.model.n_classes = s.n_classes;
  const auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[") + section + "] " + e.what());
    }
  };
  wrap("features", [&] { cfg.features.validate(); });
  wrap("model", [&] { cfg.model.validate(); });
  wrap("train", [&] { cfg.train.validate(); });
  wrap("plg", [&] { cfg.plg.validate(); });
  wrap("synth", [&] { cfg.synth.validate(); });
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void check_for_mode(const ExperimentConfig& cfg, Mode mode) {
  if (!cfg.paths.dataset_dir.empty() && mode != Mode::Score && mode != Mode::Synth &&
      !fs::is_directory(cfg.paths.dataset_dir)) {
    throw ConfigError("[paths] dataset_dir: directory not found: " + cfg.paths.dataset_dir);
  }
  switch (mode) {
    case Mode::Score:
      if (cfg.paths.ref.empty() || cfg.paths.est.empty())
        throw ConfigError("[paths] ref and est are required for score mode");
      break;
    case Mode::Plg:
      if (cfg.paths.checkpoint.empty()) throw ConfigError("[paths] checkpoint is required for plg mode");
      break;
    case Mode::Ablation1:
    case Mode::Ablation2:
    case Mode::Voi:
      if (cfg.seeds.size() < 3) throw ConfigError("[experiment] seeds: at least 3 seeds are required");
      break;
    case Mode::Train:
      if (cfg.seeds.empty()) throw ConfigError("[experiment] seeds: at least one seed is required");
      break;
    case Mode::Synth:
      break;
  }
}

dataio::Dataset make_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  dataio::Dataset ds;
  if (cfg.paths.dataset_dir.empty()) {
    dataio::SynthConfig sc = cfg.synth;
    sc.seed = mix_seed(cfg.synth.seed, seed);
    ds = dataio::synth_dataset(sc);
  } else {
    ds = dataio::load_dataset(cfg.paths.dataset_dir);
  }
  dataio::compute_features(ds, cfg.features);
  return ds;
}

std::string describe(const teacher::TrainConfig& t) {
  std::ostringstream o;
  o.precision(17);
  o << "train.epochs=" << t.epochs << '\n'
    << "train.batch_size=" << t.batch_size << '\n'
    << "train.learning_rate=" << t.learning_rate << '\n'
    << "train.momentum=" << t.momentum << '\n'
    << "train.ema_alpha=" << t.ema_alpha << '\n'
    << "train.noise_std=" << t.noise_std << '\n'
    << "train.student_noise=" << t.student_noise << '\n'
    << "train.ramp_len=" << (t.ramp_len ? std::to_string(*t.ramp_len) : "auto") << '\n'
    << "train.max_consistency_weight=" << t.max_consistency_weight << '\n'
    << "train.pseudo_weight=" << t.pseudo_weight << '\n'
    << "train.mean_teacher=" << t.use_mean_teacher << '\n'
    << "train.voi_mode=" << dataio::to_string(t.voi_mode) << '\n'
    << "train.seed=" << t.seed << '\n'
    << "plg.frame_threshold=" << t.postprocess.frame_threshold << '\n'
    << "plg.median_window=" << t.postprocess.median_window << '\n'
    << "collar=" << t.collar.onset_collar << ',' << t.collar.offset_collar << ',' << t.collar.offset_ratio
    << '\n';
  return o.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream o;
  o.precision(17);
  o << describe(cfg.train);
  o << "features=" << cfg.features.sample_rate << ',' << cfg.features.n_fft << ',' << cfg.features.hop << ','
    << cfg.features.n_mels << ',' << cfg.features.standardize << '\n';
  o << "model=" << cfg.model.kernel << ',' << cfg.model.gru_layers << ',' << cfg.model.gru_hidden << ','
    << cfg.model.dropout;
  for (auto f : cfg.model.conv_filters) o << ",f" << f;
  for (auto p : cfg.model.pool_sizes) o << ",p" << p[0] << 'x' << p[1];
  o << '\n';
  o << "plg=" << cfg.plg.clip_threshold << ',' << cfg.plg.frame_threshold << ',' << cfg.plg.median_window << ','
    << cfg.plg.gate_strong_by_weak << '\n';
  const auto& s = cfg.synth;
  o << "synth=" << s.n_strong << ',' << s.n_weak << ',' << s.n_unlabeled << ',' << s.n_validation << ','
    << s.n_classes << ',' << s.clip_seconds << ',' << s.events_min << ',' << s.events_max << ','
    << s.event_min_seconds << ',' << s.event_max_seconds << ',' << s.snr_db_min << ',' << s.snr_db_max << ','
    << s.distractors_max << ',' << s.seed << '\n';
  o << "dataset=" << cfg.paths.dataset_dir << "\nseeds=";
  for (auto x : cfg.seeds) o << x << ',';
  return hex64(fnv1a64(o.str()));
}

// ---------------------------------------------------------------------------
// Variants and reports

std::vector<Variant> ablation1_variants(dataio::VoiMode voi) {
  const plg::PseudoTypes none, all{true, true, true};
  return {{"CRNN", false, none, voi},
          {"CRNN+MT", true, none, voi},
          {"CRNN+PLG", false, all, voi},
          {"CRNN+MT+PLG", true, all, voi}};
}

std::vector<Variant> ablation2_variants(dataio::VoiMode voi) {
  return {{"baseline", true, {}, voi},
          {"+UPW", true, {true, false, false}, voi},
          {"+WPS", true, {false, false, true}, voi},
          {"+UPS", true, {false, true, false}, voi},
          {"+UPS+WPS", true, {false, true, true}, voi},
          {"+UPS+WPS+UPW", true, {true, true, true}, voi}};
}

std::vector<Variant> voi_variants() {
  const plg::PseudoTypes all{true, true, true};
  return {{"RF", true, all, dataio::VoiMode::RealFirst},
          {"PF", true, all, dataio::VoiMode::PseudoFirst},
          {"random", true, all, dataio::VoiMode::Random}};
}

teacher::TrainConfig variant_config(const teacher::TrainConfig& base, const Variant& v, std::uint64_t seed) {
  teacher::TrainConfig t = base;
  t.use_mean_teacher = v.mean_teacher;
  t.voi_mode = v.voi;
  t.seed = seed;
  return t;
}

const ReportRow& AblationReport::row(const std::string& variant) const {
  for (const auto& r : rows)
    if (r.variant == variant) return r;
  throw std::out_of_range("report has no row '" + variant + "'");
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string report_csv(const AblationReport& report) {
  std::ostringstream o;
  o << kReportHeader << '\n';
  char buf[64];
  for (const auto& r : report.rows) {
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", r.eb_f1[i], r.median);
      o << r.variant << ',' << r.seeds[i] << buf << '\n';
    }
  }
  for (const auto& line : report.footer) o << "# " << line << '\n';
  return o.str();
}

void write_report_csv(const std::string& path, const AblationReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report_csv(report);
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<std::string> reference_footer(Mode mode) {
  const std::string head = "published full-scale EB-F1 (%), DCASE2020 validation set, not reproducible here: ";
  switch (mode) {
    case Mode::Ablation1:
      return {head + "CRNN 28.14; CRNN+MT 32.39; CRNN+PLG 30.04; CRNN+MT+PLG 33.93"};
    case Mode::Ablation2:
      return {head + "baseline 32.39; +UPW 30.06; +WPS 32.15; +UPS 32.42; +UPS+WPS 33.52; +UPS+WPS+UPW 33.93"};
    case Mode::Voi:
      return {head + "best system 44.25; random order reported best for all three PLG models"};
    default:
      return {};
  }
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first) first = std::current_exception();
          }
        }
      });
    }
  }
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct RunResult {
  std::string label;
  std::uint64_t seed = 0;
  teacher::History history;
  crnn::CrnnParams student;

  double final_f1() const { return history.empty() ? 0.0 : history.back().val_eb_f1; }
};

}  // namespace

struct Runner::Impl {
  std::mutex mu;
  std::map<std::uint64_t, std::shared_ptr<const dataio::Dataset>> datasets;
  std::map<std::uint64_t, std::shared_ptr<const dataio::PseudoLabelSet>> pseudo;  // all types, per seed
  std::map<std::string, std::shared_ptr<const RunResult>> runs;
  std::optional<crnn::CrnnParams> external_plg;
  Log log;
};

Runner::Runner(ExperimentConfig cfg, Log log) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
  impl_->log = std::move(log);
}

Runner::~Runner() = default;

namespace {

std::string run_key(const teacher::TrainConfig& t, const plg::PseudoTypes& p) {
  return describe(t) + "pseudo=" + p.name() + "\n";
}

std::string run_label(const Variant& v, std::uint64_t seed) {
  std::string name = (v.mean_teacher ? "MT" : "CRNN") + (v.pseudo.any() ? v.pseudo.name() : std::string{}) +
                     "_" + dataio::to_string(v.voi) + "_seed" + std::to_string(seed);
  for (char& c : name)
    if (c == '+') c = '-';
  return name;
}

}  // namespace

AblationReport Runner::run(const std::string& title, const std::vector<Variant>& variants) {
  const auto& seeds = cfg_.seeds;
  auto dataset_for = [&](std::uint64_t seed) {
    {
      std::lock_guard lock(impl_->mu);
      if (auto it = impl_->datasets.find(seed); it != impl_->datasets.end()) return it->second;
    }
    auto ptr = std::make_shared<const dataio::Dataset>(make_dataset(cfg_, seed));
    std::lock_guard lock(impl_->mu);
    return impl_->datasets.emplace(seed, ptr).first->second;
  };

  auto train_one = [&](const Variant& v, std::uint64_t seed,
                       const dataio::PseudoLabelSet& labels) -> std::shared_ptr<const RunResult> {
    const teacher::TrainConfig tc = variant_config(cfg_.train, v, seed);
    const std::string key = run_key(tc, v.pseudo);
    {
      std::lock_guard lock(impl_->mu);
      if (auto it = impl_->runs.find(key); it != impl_->runs.end()) return it->second;
    }
    const auto ds = dataset_for(seed);
    auto result = teacher::train(*ds, plg::select(labels, v.pseudo), cfg_.model, tc);
    auto rr = std::make_shared<RunResult>();
    rr->label = run_label(v, seed);
    rr->seed = seed;
    rr->history = std::move(result.history);
    rr->student = std::move(result.state.student);
    std::lock_guard lock(impl_->mu);
    if (impl_->log) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), " eb_f1=%.4f", rr->final_f1());
      impl_->log(rr->label + buf);
    }
    return impl_->runs.emplace(key, rr).first->second;
  };

  // PLG checkpoint per seed: the trained +MT student, or an external checkpoint.
  const Variant plg_source{"CRNN+MT", true, {}, cfg_.train.voi_mode};
  const bool need_pseudo = std::any_of(variants.begin(), variants.end(), [](const Variant& v) { return v.pseudo.any(); });
  if (!cfg_.paths.checkpoint.empty() && !impl_->external_plg) impl_->external_plg = crnn::load_checkpoint(cfg_.paths.checkpoint);

  // Stage 1: runs without pseudo labels (including PLG sources).
  std::vector<std::pair<Variant, std::uint64_t>> stage1, stage2;
  for (const auto& v : variants)
    for (auto s : seeds) (v.pseudo.any() ? stage2 : stage1).emplace_back(v, s);
  if (need_pseudo && !impl_->external_plg)
    for (auto s : seeds) stage1.emplace_back(plg_source, s);
  const dataio::PseudoLabelSet no_labels;
  parallel_for(stage1.size(), cfg_.threads, [&](std::size_t i) { train_one(stage1[i].first, stage1[i].second, no_labels); });

  if (need_pseudo) {
    parallel_for(seeds.size(), cfg_.threads, [&](std::size_t i) {
      const auto seed = seeds[i];
      {
        std::lock_guard lock(impl_->mu);
        if (impl_->pseudo.contains(seed)) return;
      }
      const auto ds = dataset_for(seed);
      std::string provenance;
      const crnn::CrnnParams* params = nullptr;
      std::shared_ptr<const RunResult> src;
      if (impl_->external_plg) {
        params = &*impl_->external_plg;
        provenance = crnn::checkpoint_id(cfg_.paths.checkpoint);
      } else {
        src = train_one(plg_source, seed, no_labels);
        params = &src->student;
        provenance = src->label;
      }
      auto labels = std::make_shared<const dataio::PseudoLabelSet>(
          plg::generate(*params, *ds, cfg_.plg, {true, true, true}, provenance));
      std::lock_guard lock(impl_->mu);
      impl_->pseudo.emplace(seed, labels);
    });
    parallel_for(stage2.size(), cfg_.threads, [&](std::size_t i) {
      std::shared_ptr<const dataio::PseudoLabelSet> labels;
      {
        std::lock_guard lock(impl_->mu);
        labels = impl_->pseudo.at(stage2[i].second);
      }
      train_one(stage2[i].first, stage2[i].second, *labels);
    });
  }

  AblationReport report;
  report.title = title;
  for (const auto& v : variants) {
    ReportRow row;
    row.variant = v.name;
    for (auto s : seeds) {
      std::shared_ptr<const RunResult> rr;
      {
        std::lock_guard lock(impl_->mu);
        rr = impl_->runs.at(run_key(variant_config(cfg_.train, v, s), v.pseudo));
      }
      row.seeds.push_back(s);
      row.eb_f1.push_back(rr->final_f1());
    }
    row.median = median(row.eb_f1);
    report.rows.push_back(std::move(row));
  }
  return report;
}

AblationReport Runner::ablation1() {
  auto r = run("ablation1", ablation1_variants(cfg_.train.voi_mode));
  r.footer = reference_footer(Mode::Ablation1);
  return r;
}

AblationReport Runner::ablation2() {
  auto r = run("ablation2", ablation2_variants(cfg_.train.voi_mode));
  r.footer = reference_footer(Mode::Ablation2);
  return r;
}

AblationReport Runner::voi() {
  auto r = run("voi", voi_variants());
  r.footer = reference_footer(Mode::Voi);
  return r;
}

void Runner::write_artifacts(const std::string& dir) const {
  fs::create_directories(fs::path(dir) / "history");
  fs::create_directories(fs::path(dir) / "checkpoints");
  std::lock_guard lock(impl_->mu);
  for (const auto& [key, rr] : impl_->runs) {
    teacher::write_history_csv((fs::path(dir) / "history" / (rr->label + ".csv")).string(), rr->history);
    crnn::save_checkpoint((fs::path(dir) / "checkpoints" / (rr->label + ".ckpt")).string(), rr->student);
  }
}

}  // namespace csed::experiment
