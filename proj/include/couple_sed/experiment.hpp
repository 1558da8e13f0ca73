#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "couple_sed/crnn.hpp"
#include "couple_sed/dataio.hpp"
#include "couple_sed/features.hpp"
#include "couple_sed/plg.hpp"
#include "couple_sed/teacher.hpp"

namespace csed::experiment {

/// Invalid or incomplete configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Synth, Train, Plg, Score, Ablation1, Ablation2, Voi };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& s);

struct Paths {
  /// Empty: every seed synthesizes its own dataset from [synth].
  std::string dataset_dir;
  std::string checkpoint;  // plg input / external PLG checkpoint
  std::string pseudo_dir;  // train: optional pseudo labels
  std::string ref;         // score
  std::string est;         // score
  std::string out = "out";
};

struct ExperimentConfig {
  Paths paths;
  features::FeatureConfig features;
  crnn::CrnnConfig model;
  teacher::TrainConfig train;
  plg::PlgConfig plg;
  plg::PseudoTypes train_pseudo{true, true, true};  // train mode, with a pseudo dir
  dataio::SynthConfig synth;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Score mode class list; empty means the classes of the reference file.
  std::vector<std::string> score_classes;
  /// Worker threads for independent runs; 0 means hardware concurrency.
  std::size_t threads = 0;
};

/// Desk-scale defaults: 2 s synthetic clips, 32 mel bands, the small CRNN.
ExperimentConfig desk_defaults();

/// Reads an INI file over desk_defaults(). Unknown sections or keys and
/// malformed values raise ConfigError naming the field.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

/// Mode-specific checks (required paths, seed counts).
void check_for_mode(const ExperimentConfig& cfg, Mode mode);

/// The dataset of one run seed, with features: loaded from paths.dataset_dir,
/// or synthesized with seed mix_seed(synth.seed, seed) when that is empty.
dataio::Dataset make_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// Canonical "section.key=value" lines of the fields that define a run.
std::string describe(const teacher::TrainConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

struct Variant {
  std::string name;
  bool mean_teacher = true;
  plg::PseudoTypes pseudo;
  dataio::VoiMode voi = dataio::VoiMode::Random;
};

std::vector<Variant> ablation1_variants(dataio::VoiMode voi);
std::vector<Variant> ablation2_variants(dataio::VoiMode voi);
std::vector<Variant> voi_variants();

/// Base config with exactly the variant's switches applied.
teacher::TrainConfig variant_config(const teacher::TrainConfig& base, const Variant& v, std::uint64_t seed);

struct ReportRow {
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> eb_f1;
  double median = 0.0;
};

struct AblationReport {
  std::string title;
  std::vector<ReportRow> rows;
  std::vector<std::string> footer;

  const ReportRow& row(const std::string& variant) const;
};

double median(std::vector<double> values);

inline constexpr const char* kReportHeader = "variant,seed,eb_f1,median";
std::string report_csv(const AblationReport& report);
void write_report_csv(const std::string& path, const AblationReport& report);

/// Trains variants over seeds, sharing identical runs across reports.
class Runner {
 public:
  using Log = std::function<void(const std::string&)>;

  explicit Runner(ExperimentConfig cfg, Log log = {});
  ~Runner();
  Runner(const Runner&) = delete;
  Runner& operator=(const Runner&) = delete;

  AblationReport ablation1();
  AblationReport ablation2();
  AblationReport voi();
  AblationReport run(const std::string& title, const std::vector<Variant>& variants);

  /// Writes per-run history CSVs and the PLG checkpoints under `dir`.
  void write_artifacts(const std::string& dir) const;

  const ExperimentConfig& config() const { return cfg_; }

 private:
  struct Impl;
  ExperimentConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

std::vector<std::string> reference_footer(Mode mode);

}  // namespace csed::experiment
