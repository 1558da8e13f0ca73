#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "couple_sed/plg.hpp"
#include "support.hpp"

using namespace csed;
using namespace csed::plg;
using dataio::EventLabel;
namespace fs = std::filesystem;

namespace {

// Shrinking-window majority with edge ties going to 0.
std::vector<int> majority_oracle(const std::vector<int>& bits, std::size_t window) {
  const long h = static_cast<long>(window / 2), n = static_cast<long>(bits.size());
  std::vector<int> out(bits.size());
  for (long i = 0; i < n; ++i) {
    long ones = 0, total = 0;
    for (long j = std::max(0L, i - h); j <= std::min(n - 1, i + h); ++j) {
      ones += bits[j];
      ++total;
    }
    out[i] = 2 * ones > total ? 1 : 0;
  }
  return out;
}

std::vector<EventLabel> sorted(std::vector<EventLabel> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return std::tie(a.onset, a.class_name) < std::tie(b.onset, b.class_name);
  });
  return v;
}

}  // namespace

TEST(MedianFilter, KnownExample) {
  EXPECT_EQ(median_filter({0, 1, 0, 1, 1, 1, 0}, 3), (std::vector<int>{0, 0, 1, 1, 1, 1, 0}));
  EXPECT_EQ(median_filter({1, 0, 1}, 1), (std::vector<int>{1, 0, 1}));
  EXPECT_THROW(median_filter({1, 0}, 2), std::invalid_argument);
  EXPECT_THROW(median_filter({1, 0}, 0), std::invalid_argument);
}

TEST(MedianFilter, MatchesMajorityOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> bits(1 + rng() % 30);
    for (auto& b : bits) b = static_cast<int>(rng() % 2);
    const std::size_t w = 2 * (rng() % 5) + 1;
    ASSERT_EQ(median_filter(bits, w), majority_oracle(bits, w));
  }
}

TEST(FramesToEvents, RunsBecomeIntervals) {
  const auto ev = frames_to_events({0, 1, 1, 0, 1}, 0.1);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_DOUBLE_EQ(ev[0].first, 0.1);
  EXPECT_DOUBLE_EQ(ev[0].second, 0.3);
  EXPECT_DOUBLE_EQ(ev[1].first, 0.4);
  EXPECT_DOUBLE_EQ(ev[1].second, 0.5);
  EXPECT_TRUE(frames_to_events({0, 0}, 0.1).empty());
  EXPECT_THROW(frames_to_events({1}, 0.0), std::invalid_argument);
}

TEST(Tags, ThresholdIsInclusive) {
  const std::vector<std::string> classes = {"a", "b", "c", "d"};
  const Tensor p({4}, std::vector<double>{0.7, 0.3, 0.5, 0.9});
  EXPECT_EQ(tags_from_probs(p, classes, 0.5), (std::set<std::string>{"a", "c", "d"}));
}

TEST(EventsFromProbs, SmoothsGapAndGates) {
  const std::vector<std::string> classes = {"a"};
  const Tensor p({5, 1}, std::vector<double>{0.9, 0.9, 0.1, 0.9, 0.9});
  const auto ev = events_from_probs(p, classes, 0.5, 3, 0.1, 0.5);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_NEAR(ev[0].onset, 0.0, 1e-12);
  EXPECT_NEAR(ev[0].offset, 0.5, 1e-12);
  const std::set<std::string> empty_gate;
  EXPECT_TRUE(events_from_probs(p, classes, 0.5, 3, 0.1, 0.5, &empty_gate).empty());
  // Offsets never pass the clip end.
  const auto clipped = events_from_probs(p, classes, 0.5, 3, 0.1, 0.42);
  EXPECT_NEAR(clipped[0].offset, 0.42, 1e-12);
}

TEST(EventsFromProbs, HigherThresholdNeverAddsFrames) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> classes = {"a", "b", "c"};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 4 + rng() % 20;
    const Tensor p = test::random_tensor({T, 3}, rng(), 0.0, 1.0);
    const double lo = 0.2 + 0.3 * (rng() % 100) / 100.0, hi = lo + 0.3 * (rng() % 100) / 100.0;
    const std::size_t w = 2 * (rng() % 3) + 1;
    const auto f_lo = dataio::events_to_frames(events_from_probs(p, classes, lo, w, 0.1, T * 0.1), classes, T, 0.1);
    const auto f_hi = dataio::events_to_frames(events_from_probs(p, classes, hi, w, 0.1, T * 0.1), classes, T, 0.1);
    for (std::size_t i = 0; i < f_lo.size(); ++i) ASSERT_LE(f_hi[i], f_lo[i]);
  }
}

TEST(EventsFromProbs, FrameRoundTripIsIdentity) {
  std::mt19937_64 rng(12);
  const std::vector<std::string> classes = {"a", "b"};
  const double d = 0.25;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 2 + rng() % 16;
    const Tensor p = test::random_tensor({T, 2}, rng(), 0.0, 1.0);
    const auto ev = events_from_probs(p, classes, 0.5, 1, d, T * d);
    const auto frames = dataio::events_to_frames(ev, classes, T, d);
    const auto again = events_from_probs(frames, classes, 0.5, 1, d, T * d);
    ASSERT_EQ(sorted(again), sorted(ev));
  }
}

TEST(PseudoTypes, NamesAndSelection) {
  EXPECT_EQ((PseudoTypes{true, true, true}).name(), "+UPS+WPS+UPW");
  EXPECT_FALSE(PseudoTypes{}.any());
  dataio::PseudoLabelSet all;
  all.upw["u"] = {"a"};
  all.ups["u"] = {{0.0, 0.5, "a"}};
  all.wps["w"] = {{0.1, 0.2, "b"}};
  const auto only_ups = select(all, {false, true, false});
  EXPECT_TRUE(only_ups.upw.empty());
  EXPECT_TRUE(only_ups.wps.empty());
  EXPECT_EQ(only_ups.ups, all.ups);
}

TEST(Generate, CoversSplitsAndRespectsWeakGate) {
  const auto ds = test::tiny_dataset(21, 2, 5, 5, 1);
  crnn::CrnnConfig cfg = crnn::CrnnConfig::desk(16);
  cfg.n_classes = ds.classes.size();
  const auto params = crnn::init_params(cfg, 4);
  PlgConfig pc;
  pc.clip_threshold = 0.0;   // every class tagged
  pc.frame_threshold = 0.0;  // every frame active
  const auto labels = generate(params, ds, pc, {true, true, true}, "ckpt");
  EXPECT_EQ(labels.provenance, "ckpt");
  for (auto i : ds.indices(dataio::Split::Unlabeled)) {
    EXPECT_EQ(labels.upw.at(ds.clips[i].id).size(), ds.classes.size());
    EXPECT_EQ(labels.ups.at(ds.clips[i].id).size(), ds.classes.size());
  }
  for (auto i : ds.indices(dataio::Split::Weak)) {
    const auto& ev = labels.wps.at(ds.clips[i].id);
    EXPECT_EQ(ev.size(), ds.clips[i].tags.size());
    for (const auto& e : ev) EXPECT_TRUE(ds.clips[i].tags.count(e.class_name));
  }
  EXPECT_TRUE(generate(params, ds, pc, {}, "x").empty());
  PlgConfig bad;
  bad.median_window = 4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(PseudoFiles, RoundTripWithCheckpointHeader) {
  const auto dir = fs::temp_directory_path() / "csed_pseudo";
  fs::remove_all(dir);
  dataio::PseudoLabelSet p;
  p.provenance = "abc123";
  p.upw["u1.wav"] = {"a", "b"};
  p.upw["u2.wav"] = {};
  p.ups["u1.wav"] = {{0.128, 0.512, "a"}};
  p.wps["w1.wav"] = {{0.0, 1.0, "b"}};
  save_pseudo_labels(dir.string(), p);
  const auto back = load_pseudo_labels(dir.string());
  EXPECT_EQ(back.provenance, "abc123");
  EXPECT_EQ(back.upw, p.upw);
  EXPECT_EQ(back.ups, p.ups);
  EXPECT_EQ(back.wps, p.wps);
}
