#include "couple_sed/teacher.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "couple_sed/util.hpp"

namespace csed::teacher {

namespace nk = numkit;

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must lie in [0, 1)");
  if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0)) throw std::invalid_argument("train: ema_alpha must lie in [0, 1]");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("train: noise_std must be >= 0");
  if (!(max_consistency_weight >= 0.0)) throw std::invalid_argument("train: max_consistency_weight must be >= 0");
  if (!(pseudo_weight >= 0.0)) throw std::invalid_argument("train: pseudo_weight must be >= 0");
  postprocess.validate();
  collar.validate();
}

MeanTeacherState init_state(const crnn::CrnnConfig& cfg, std::uint64_t seed) {
  MeanTeacherState s;
  s.student = crnn::init_params(cfg, seed);
  s.teacher = s.student;
  for (const Tensor* t : s.student.tensors()) s.velocity.emplace_back(t->shape());
  return s;
}

void ema_update(MeanTeacherState& state, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha must lie in [0, 1]");
  auto teacher = state.teacher.tensors();
  const auto student = std::as_const(state.student).tensors();
  if (teacher.size() != student.size()) throw nk::ShapeError("ema_update: parameter lists differ");
  for (std::size_t k = 0; k < teacher.size(); ++k) {
    nk::require_shape(*teacher[k], student[k]->shape(), "ema_update");
    auto t = teacher[k]->data();
    const auto s = student[k]->data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = alpha * t[i] + (1.0 - alpha) * s[i];
  }
}

double ramp_up(std::size_t step, std::size_t ramp_len, double max_w) {
  if (ramp_len == 0) return max_w;
  const double p = std::min(static_cast<double>(step) / static_cast<double>(ramp_len), 1.0);
  return max_w * std::exp(-5.0 * (1.0 - p) * (1.0 - p));
}

losses::LossBreakdown train_step(MeanTeacherState& state, const Batch& batch, const TrainConfig& cfg,
                                 const StepOptions& options) {
  if (batch.features.empty()) throw std::invalid_argument("train_step: empty batch");
  if (batch.features.size() != batch.targets.size())
    throw nk::ShapeError("train_step: features and targets differ in count");
  losses::validate(batch.targets);

  nk::Tape tape;
  const auto vars = crnn::register_params(tape, state.student, true);
  std::vector<crnn::PredictionVars> student;
  student.reserve(batch.features.size());
  for (std::size_t i = 0; i < batch.features.size(); ++i) {
    crnn::ForwardOptions fo;
    if (cfg.student_noise) {
      fo.noise_std = cfg.noise_std;
      fo.rng_seed = mix_seed(mix_seed(cfg.seed, state.step), 2 * i + 1);
    }
    student.push_back(crnn::forward(tape, state.student, vars, batch.features[i], fo));
  }

  const losses::ClassificationVars j1 =
      losses::classification_cost(tape, student, batch.targets, {cfg.pseudo_weight, 1e-7});
  losses::ConsistencyVars j2;
  double w = 0.0;
  if (options.skip_teacher) {
    j2.j2_strong = tape.constant(Tensor::scalar(0.0));
    j2.j2_weak = tape.constant(Tensor::scalar(0.0));
  } else {
    std::vector<crnn::Predictions> teacher;
    teacher.reserve(batch.features.size());
    for (std::size_t i = 0; i < batch.features.size(); ++i) {
      crnn::ForwardOptions fo;
      fo.noise_std = cfg.noise_std;
      fo.rng_seed = mix_seed(mix_seed(cfg.seed, state.step), 2 * i + 2);
      teacher.push_back(crnn::forward(state.teacher, batch.features[i], fo));
    }
    j2 = losses::consistency_cost(tape, student, teacher);
    w = ramp_up(state.step, options.ramp_len, cfg.max_consistency_weight);
  }
  const losses::ObjectiveVars obj = losses::total_objective(tape, j1, j2, w);
  const losses::LossBreakdown& b = obj.breakdown;
  if (!std::isfinite(b.total)) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "non-finite loss at step %zu: j1_real=%g j1_pseudo=%g j2_strong=%g j2_weak=%g w=%g",
                  state.step, b.j1_real, b.j1_pseudo, b.j2_strong, b.j2_weak, w);
    throw std::runtime_error(buf);
  }
  tape.backward(obj.total);

  auto params = state.student.tensors();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor g = tape.grad(vars[k]);
    auto v = state.velocity[k].data();
    auto p = params[k]->data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = cfg.momentum * v[i] + gd[i];
      p[i] -= cfg.learning_rate * v[i];
    }
  }
  ema_update(state, cfg.ema_alpha);
  ++state.step;
  return b;
}

dataio::EventMap detect(const crnn::CrnnParams& params, const dataio::Dataset& dataset, dataio::Split split,
                        const plg::PlgConfig& pp) {
  dataio::EventMap out;
  for (std::size_t i : dataset.indices(split)) {
    const auto& clip = dataset.clips[i];
    const crnn::Predictions p = crnn::forward(params, clip.features);
    out[clip.id] = plg::events_from_probs(p.frame_probs, dataset.classes, pp.frame_threshold, pp.median_window,
                                          plg::output_frame_duration(params, clip), clip.duration);
  }
  return out;
}

evalkit::ScoreReport evaluate(const crnn::CrnnParams& params, const dataio::Dataset& dataset,
                              const plg::PlgConfig& pp, const evalkit::CollarParams& collar) {
  dataio::EventMap ref;
  for (std::size_t i : dataset.indices(dataio::Split::Validation)) ref[dataset.clips[i].id] = dataset.clips[i].events;
  return evalkit::eb_f1(ref, detect(params, dataset, dataio::Split::Validation, pp), collar, dataset.classes);
}

TrainResult train(const dataio::Dataset& dataset, const dataio::PseudoLabelSet& pseudo,
                  const crnn::CrnnConfig& model, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  if (model.n_classes != dataset.classes.size())
    throw std::invalid_argument("train: model has " + std::to_string(model.n_classes) + " classes, dataset has " +
                                std::to_string(dataset.classes.size()));
  const auto items = dataio::build_items(dataset, pseudo, cfg.use_mean_teacher);
  const bool any_labeled = std::any_of(items.begin(), items.end(), [&](const dataio::TrainItem& it) {
    const auto split = dataset.clips[it.clip].split;
    return it.provenance == losses::Provenance::Pseudo || split == dataio::Split::Strong ||
           split == dataio::Split::Weak;
  });
  if (!any_labeled) throw std::invalid_argument("train: dataset has no labeled clips");

  TrainResult result{init_state(model, cfg.seed), {}};
  if (cfg.epochs == 0) return result;

  const std::size_t batches_per_epoch = (items.size() + cfg.batch_size - 1) / cfg.batch_size;
  StepOptions so;
  so.skip_teacher = !cfg.use_mean_teacher;
  so.ramp_len = cfg.ramp_len.value_or(10 * batches_per_epoch);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    const auto batches = dataio::compose_epoch(items, cfg.voi_mode, cfg.batch_size, mix_seed(cfg.seed, 1000 + epoch));
    for (const auto& items_in_batch : batches) {
      Batch batch;
      for (const auto& it : items_in_batch) {
        const auto& clip = dataset.clips[it.clip];
        const std::size_t frames = model.output_frames(clip.features.n_frames());
        const double d = clip.features.frame_duration * static_cast<double>(model.time_pool());
        batch.features.push_back(clip.features.frames);
        batch.targets.push_back(dataio::make_targets(dataset, pseudo, it, frames, d));
      }
      losses::LossBreakdown b;
      try {
        b = train_step(result.state, batch, cfg, so);
      } catch (const std::runtime_error& e) {
        throw TrainingError(e.what(), result.history);
      }
      rec.mean_loss.j1_real += b.j1_real;
      rec.mean_loss.j1_pseudo += b.j1_pseudo;
      rec.mean_loss.j2_strong += b.j2_strong;
      rec.mean_loss.j2_weak += b.j2_weak;
      rec.mean_loss.total += b.total;
      rec.mean_loss.consistency_weight = b.consistency_weight;
    }
    const double n = static_cast<double>(batches.size());
    rec.mean_loss.j1_real /= n;
    rec.mean_loss.j1_pseudo /= n;
    rec.mean_loss.j2_strong /= n;
    rec.mean_loss.j2_weak /= n;
    rec.mean_loss.total /= n;
    if (!dataset.indices(dataio::Split::Validation).empty())
      rec.val_eb_f1 = evaluate(result.state.student, dataset, cfg.postprocess, cfg.collar).macro_f1;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

void write_history_csv(const std::string& path, const History& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kHistoryHeader << '\n';
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.6f\n", r.epoch, r.mean_loss.j1_real,
                  r.mean_loss.j1_pseudo, r.mean_loss.j2_strong, r.mean_loss.j2_weak, r.mean_loss.total,
                  r.val_eb_f1);
    out << buf;
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace csed::teacher
