// couple-sed <mode> --config <path> [--seed N] [--out DIR]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "couple_sed/evalkit.hpp"
#include "couple_sed/experiment.hpp"
#include "couple_sed/plg.hpp"
#include "couple_sed/teacher.hpp"
#include "couple_sed/util.hpp"

namespace fs = std::filesystem;
namespace ex = csed::experiment;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json base_summary(const ex::ExperimentConfig& cfg, ex::Mode mode) {
  return {{"mode", ex::to_string(mode)}, {"config_hash", ex::config_hash(cfg)}, {"seeds", cfg.seeds}};
}

/// Class count of an on-disk dataset, so the model matches it.
void sync_classes(ex::ExperimentConfig& cfg) {
  if (cfg.paths.dataset_dir.empty()) return;
  std::ifstream in(fs::path(cfg.paths.dataset_dir) / "classes.txt");
  if (!in) throw ex::ConfigError("[paths] dataset_dir: no classes.txt in " + cfg.paths.dataset_dir);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  cfg.model.n_classes = n;
  cfg.synth.n_classes = n;
}

int run_synth(const ex::ExperimentConfig& cfg, const fs::path& out) {
  csed::dataio::SynthConfig sc = cfg.synth;
  sc.seed = csed::mix_seed(cfg.synth.seed, cfg.seeds.front());
  const auto ds = csed::dataio::synth_dataset(sc);
  csed::dataio::save_dataset(out.string(), ds);
  std::cout << "wrote " << ds.clips.size() << " clips to " << out.string() << '\n';
  return kExitOk;
}

int run_train(const ex::ExperimentConfig& cfg, const fs::path& out) {
  const auto seed = cfg.seeds.front();
  const auto ds = ex::make_dataset(cfg, seed);
  csed::dataio::PseudoLabelSet pseudo;
  if (!cfg.paths.pseudo_dir.empty())
    pseudo = csed::plg::select(csed::plg::load_pseudo_labels(cfg.paths.pseudo_dir), cfg.train_pseudo);
  auto tc = cfg.train;
  tc.seed = seed;
  const fs::path history_path = out / "history.csv";
  csed::teacher::TrainResult result;
  try {
    result = csed::teacher::train(ds, pseudo, cfg.model, tc, [](const csed::teacher::EpochRecord& r) {
      std::fprintf(stderr, "epoch %zu total %.4f val_eb_f1 %.4f\n", r.epoch, r.mean_loss.total, r.val_eb_f1);
    });
  } catch (const csed::teacher::TrainingError& e) {
    csed::teacher::write_history_csv(history_path.string(), e.history);
    throw;
  }
  csed::teacher::write_history_csv(history_path.string(), result.history);
  const fs::path ckpt = out / "student.ckpt";
  csed::crnn::save_checkpoint(ckpt.string(), result.state.student);
  json summary = base_summary(cfg, ex::Mode::Train);
  summary["checkpoint"] = ckpt.string();
  summary["checkpoint_id"] = csed::crnn::checkpoint_id(ckpt.string());
  summary["final_val_eb_f1"] = result.history.empty() ? 0.0 : result.history.back().val_eb_f1;
  write_json(out / "summary.json", summary);
  std::cout << "checkpoint " << ckpt.string() << '\n';
  return kExitOk;
}

int run_plg(const ex::ExperimentConfig& cfg, const fs::path& out) {
  const auto ds = ex::make_dataset(cfg, cfg.seeds.front());
  const auto params = csed::crnn::load_checkpoint(cfg.paths.checkpoint);
  const auto id = csed::crnn::checkpoint_id(cfg.paths.checkpoint);
  const auto labels = csed::plg::generate(params, ds, cfg.plg, {true, true, true}, id);
  csed::plg::save_pseudo_labels((out / "pseudo").string(), labels);
  json summary = base_summary(cfg, ex::Mode::Plg);
  summary["checkpoint_id"] = id;
  summary["upw_clips"] = labels.upw.size();
  summary["ups_clips"] = labels.ups.size();
  summary["wps_clips"] = labels.wps.size();
  write_json(out / "summary.json", summary);
  std::cout << "pseudo labels in " << (out / "pseudo").string() << '\n';
  return kExitOk;
}

int run_score(const ex::ExperimentConfig& cfg) {
  const auto ref = csed::dataio::load_strong(cfg.paths.ref);
  const auto est = csed::dataio::load_strong(cfg.paths.est);
  std::vector<std::string> classes = cfg.score_classes;
  if (classes.empty()) {
    std::set<std::string> names;
    for (const auto& [clip, events] : ref)
      for (const auto& e : events) names.insert(e.class_name);
    classes.assign(names.begin(), names.end());
    if (classes.empty()) throw ex::ConfigError("[experiment] score_classes: reference file has no events");
  }
  const auto report = csed::evalkit::eb_f1(ref, est, cfg.train.collar, classes);
  std::cout << csed::evalkit::format_report(report) << '\n' << csed::evalkit::report_csv(report);
  return kExitOk;
}

int run_experiment(const ex::ExperimentConfig& cfg, ex::Mode mode, const fs::path& out) {
  ex::Runner runner(cfg, [](const std::string& line) { std::fprintf(stderr, "run %s\n", line.c_str()); });
  ex::AblationReport report;
  if (mode == ex::Mode::Ablation1) report = runner.ablation1();
  if (mode == ex::Mode::Ablation2) report = runner.ablation2();
  if (mode == ex::Mode::Voi) report = runner.voi();
  const fs::path csv = out / (ex::to_string(mode) + ".csv");
  ex::write_report_csv(csv.string(), report);
  runner.write_artifacts(out.string());
  json summary = base_summary(cfg, mode);
  json medians = json::object();
  for (const auto& row : report.rows) medians[row.variant] = row.median;
  summary["medians"] = medians;
  summary["report"] = csv.string();
  summary["reference"] = report.footer;
  write_json(out / "summary.json", summary);
  std::cout << ex::report_csv(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean Teacher + pseudo-label sound event detection experiments"};
  std::string mode_name, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("mode", mode_name, "synth | train | plg | score | ablation1 | ablation2 | voi")->required();
  app.add_option("--config", config_path, "INI config file")->required();
  app.add_option("--seed", seed, "Run seed (multi-seed modes: first of the seed list)");
  app.add_option("--out", out_dir, "Output directory (overrides [paths] out)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const ex::Mode mode = ex::parse_mode(mode_name);
    ex::ExperimentConfig cfg = ex::load_config(config_path);
    if (const char* env = std::getenv("CL_SEED"); env && !seed) {
      try {
        seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ex::ConfigError(std::string("CL_SEED: expected an integer, got '") + env + "'");
      }
    }
    if (seed) {
      const std::size_t n = std::max<std::size_t>(cfg.seeds.size(), 1);
      cfg.seeds.clear();
      for (std::size_t i = 0; i < n; ++i) cfg.seeds.push_back(*seed + i);
    }
    if (!out_dir.empty()) cfg.paths.out = out_dir;
    ex::check_for_mode(cfg, mode);
    if (mode != ex::Mode::Score && mode != ex::Mode::Synth) sync_classes(cfg);

    const fs::path out = cfg.paths.out;
    if (mode != ex::Mode::Score) fs::create_directories(out);
    switch (mode) {
      case ex::Mode::Synth: return run_synth(cfg, out);
      case ex::Mode::Train: return run_train(cfg, out);
      case ex::Mode::Plg: return run_plg(cfg, out);
      case ex::Mode::Score: return run_score(cfg);
      default: return run_experiment(cfg, mode, out);
    }
  } catch (const ex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
