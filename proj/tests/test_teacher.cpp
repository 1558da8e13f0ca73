#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "couple_sed/teacher.hpp"
#include "support.hpp"

using namespace csed;
using namespace csed::teacher;
using losses::ClipTargets;
using losses::Provenance;

namespace {

crnn::CrnnConfig tiny_model(std::size_t n_classes) {
  auto cfg = crnn::CrnnConfig::desk(16);
  cfg.n_classes = n_classes;
  return cfg;
}

Batch real_batch(std::size_t T, std::size_t C, std::uint64_t seed) {
  Batch b;
  const std::size_t Tp = tiny_model(C).output_frames(T);
  b.features.push_back(test::random_tensor({T, 16}, seed));
  Tensor strong({Tp, C});
  for (std::size_t t = 0; t < Tp / 2; ++t) strong.at(t, 0) = 1.0;
  b.targets.push_back({strong, std::nullopt, Provenance::Real, losses::Split::Strong});
  b.features.push_back(test::random_tensor({T, 16}, seed + 1));
  b.targets.push_back({std::nullopt, Tensor({C}, std::vector<double>(C, 1.0)), Provenance::Real, losses::Split::Weak});
  b.features.push_back(test::random_tensor({T, 16}, seed + 2));
  b.targets.push_back({std::nullopt, std::nullopt, Provenance::Real, losses::Split::Unlabeled});
  return b;
}

bool params_equal(const crnn::CrnnParams& a, const crnn::CrnnParams& b) { return a == b; }

}  // namespace

TEST(Ema, ExamplesAndClosedForm) {
  auto s = init_state(tiny_model(2), 1);
  auto student_vals = s.student.tensors();
  for (auto* t : student_vals)
    for (auto& v : t->data()) v = 1.0;
  for (auto* t : s.teacher.tensors())
    for (auto& v : t->data()) v = 0.0;
  ema_update(s, 0.9);
  EXPECT_NEAR(s.teacher.tensors()[0]->data()[0], 0.1, 1e-15);
  for (int k = 1; k < 7; ++k) ema_update(s, 0.9);
  EXPECT_NEAR(s.teacher.tensors()[0]->data()[0], 1.0 - std::pow(0.9, 7), 1e-12);
  const auto before = s.teacher;
  ema_update(s, 1.0);
  EXPECT_TRUE(params_equal(s.teacher, before));
  ema_update(s, 0.0);
  EXPECT_TRUE(params_equal(s.teacher, s.student));
  EXPECT_THROW(ema_update(s, 1.5), std::invalid_argument);
  EXPECT_THROW(ema_update(s, -0.1), std::invalid_argument);
}

TEST(Ema, InitialTeacherCopiesStudent) {
  const auto s = init_state(tiny_model(3), 7);
  EXPECT_TRUE(params_equal(s.student, s.teacher));
  EXPECT_EQ(s.step, 0u);
  EXPECT_EQ(s.velocity.size(), s.student.tensors().size());
}

TEST(Ramp, ValuesAndMonotonicity) {
  EXPECT_NEAR(ramp_up(0, 100, 1.0), std::exp(-5.0), 1e-15);
  EXPECT_NEAR(ramp_up(50, 100, 1.0), std::exp(-1.25), 1e-15);
  EXPECT_DOUBLE_EQ(ramp_up(100, 100, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(ramp_up(500, 100, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(ramp_up(3, 0, 2.0), 2.0);
  for (std::size_t s = 0; s < 200; ++s) ASSERT_LE(ramp_up(s, 150, 1.0), ramp_up(s + 1, 150, 1.0));
}

TEST(TrainStep, ZeroLearningRateAndFrozenTeacherChangeNothing) {
  auto s = init_state(tiny_model(2), 3);
  const auto before = s;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.ema_alpha = 1.0;
  const auto b = train_step(s, real_batch(24, 2, 5), cfg, {false, 10});
  EXPECT_TRUE(params_equal(s.student, before.student));
  EXPECT_TRUE(params_equal(s.teacher, before.teacher));
  EXPECT_EQ(s.step, 1u);
  EXPECT_GT(b.j1_real, 0.0);
}

TEST(TrainStep, SkipTeacherMatchesZeroConsistencyWeight) {
  TrainConfig cfg;
  cfg.max_consistency_weight = 0.0;
  auto a = init_state(tiny_model(2), 3);
  auto b = a;
  const auto batch = real_batch(24, 2, 9);
  for (int i = 0; i < 3; ++i) {
    train_step(a, batch, cfg, {true, 10});
    train_step(b, batch, cfg, {false, 10});
  }
  EXPECT_TRUE(params_equal(a.student, b.student));
  EXPECT_TRUE(params_equal(a.teacher, b.teacher));
}

TEST(TrainStep, ZeroPseudoWeightIgnoresPseudoClips) {
  TrainConfig cfg;
  cfg.pseudo_weight = 0.0;
  const auto base = real_batch(24, 2, 13);
  Batch real_only;
  real_only.features = {base.features[0], base.features[1]};
  real_only.targets = {base.targets[0], base.targets[1]};
  Batch with_pseudo = real_only;
  with_pseudo.features.push_back(test::random_tensor({24, 16}, 77));
  with_pseudo.targets.push_back({std::nullopt, Tensor({2}, std::vector<double>{1, 0}), Provenance::Pseudo,
                                 losses::Split::Unlabeled});
  auto a = init_state(tiny_model(2), 5);
  auto b = a;
  for (int i = 0; i < 3; ++i) {
    const auto la = train_step(a, real_only, cfg, {true, 10});
    const auto lb = train_step(b, with_pseudo, cfg, {true, 10});
    EXPECT_EQ(la.j1_real, lb.j1_real);
    EXPECT_EQ(lb.j1_pseudo, 0.0);
  }
  EXPECT_TRUE(params_equal(a.student, b.student));
}

TEST(TrainStep, NonFiniteLossThrows) {
  auto s = init_state(tiny_model(2), 3);
  auto batch = real_batch(24, 2, 1);
  batch.features[0].data()[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    train_step(s, batch, TrainConfig{}, {false, 10});
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST(TrainStep, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.ema_alpha = 1.2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

class TrainLoop : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { ds_ = new dataio::Dataset(test::tiny_dataset(8, 4, 4, 4, 2)); }
  static void TearDownTestSuite() { delete ds_; }
  static dataio::Dataset* ds_;
  static TrainConfig quick() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 42;
    return cfg;
  }
};
dataio::Dataset* TrainLoop::ds_ = nullptr;

TEST_F(TrainLoop, DeterministicForSeed) {
  const auto model = tiny_model(ds_->classes.size());
  std::size_t calls = 0;
  const auto a = train(*ds_, {}, model, quick(), [&](const EpochRecord&) { ++calls; });
  const auto b = train(*ds_, {}, model, quick());
  EXPECT_EQ(calls, 2u);
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_TRUE(params_equal(a.state.student, b.state.student));
  EXPECT_EQ(a.history[1].mean_loss.total, b.history[1].mean_loss.total);
  for (const auto& r : a.history) {
    EXPECT_GE(r.val_eb_f1, 0.0);
    EXPECT_LE(r.val_eb_f1, 1.0);
  }
}

TEST_F(TrainLoop, ZeroEpochsReturnsInitialState) {
  auto cfg = quick();
  cfg.epochs = 0;
  const auto model = tiny_model(ds_->classes.size());
  const auto r = train(*ds_, {}, model, cfg);
  EXPECT_TRUE(r.history.empty());
  EXPECT_TRUE(params_equal(r.state.student, init_state(model, cfg.seed).student));
}

TEST_F(TrainLoop, RejectsUnusableInputs) {
  const auto unlabeled_only = test::tiny_dataset(2, 0, 0, 3, 1);
  EXPECT_THROW(train(unlabeled_only, {}, tiny_model(unlabeled_only.classes.size()), quick()),
               std::invalid_argument);
  EXPECT_THROW(train(*ds_, {}, tiny_model(ds_->classes.size() + 1), quick()), std::invalid_argument);
}

TEST_F(TrainLoop, HistoryCsv) {
  const auto r = train(*ds_, {}, tiny_model(ds_->classes.size()), quick());
  const auto path = (std::filesystem::temp_directory_path() / "csed_history.csv").string();
  write_history_csv(path, r.history);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kHistoryHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  EXPECT_EQ(rows, 2u);
}
