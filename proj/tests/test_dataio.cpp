#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "couple_sed/dataio.hpp"
#include "support.hpp"

using namespace csed;
using namespace csed::dataio;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("csed_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST(LabelFiles, ParsesStrongLine) {
  const auto dir = temp_dir("strong_parse");
  write_file(dir / "s.tsv", std::string(kStrongHeader) + "\na.wav\t0.500\t1.250\tdog\n");
  const auto m = load_strong((dir / "s.tsv").string());
  ASSERT_EQ(m.at("a.wav").size(), 1u);
  EXPECT_EQ(m.at("a.wav")[0], (EventLabel{0.5, 1.25, "dog"}));
}

TEST(LabelFiles, StrongErrorsNameTheLine) {
  const auto dir = temp_dir("strong_err");
  write_file(dir / "bad.tsv", "a.wav\t0.1\t0.2\tdog\nb.wav\t0.5\t1.0\n");
  try {
    load_strong((dir / "bad.tsv").string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  write_file(dir / "order.tsv", "a.wav\t1.0\t0.5\tdog\n");
  EXPECT_THROW(load_strong((dir / "order.tsv").string()), FormatError);
  write_file(dir / "nan.tsv", "a.wav\tx\t0.5\tdog\n");
  EXPECT_THROW(load_strong((dir / "nan.tsv").string()), FormatError);
}

TEST(LabelFiles, WeakParsingAndDuplicates) {
  const auto dir = temp_dir("weak_parse");
  write_file(dir / "w.tsv", std::string(kWeakHeader) + "\na.wav\tdog,cat\nb.wav\t\n");
  const auto m = load_weak((dir / "w.tsv").string());
  EXPECT_EQ(m.at("a.wav"), (std::set<std::string>{"cat", "dog"}));
  EXPECT_TRUE(m.at("b.wav").empty());
  write_file(dir / "dup.tsv", "a.wav\tdog\na.wav\tcat\n");
  EXPECT_THROW(load_weak((dir / "dup.tsv").string()), FormatError);
}

TEST(LabelFiles, RandomRoundTrips) {
  const auto dir = temp_dir("roundtrip");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 9.0), len(0.001, 1.0);
  const std::vector<std::string> names = {"dog", "cat", "alarm", "speech"};
  for (int trial = 0; trial < 50; ++trial) {
    EventMap events;
    TagMap tags;
    for (int c = 0; c < 5; ++c) {
      const std::string clip = "clip" + std::to_string(c) + ".wav";
      for (int e = 0; e < static_cast<int>(rng() % 4); ++e) {
        const double on = u(rng);
        events[clip].push_back({on, on + len(rng), names[rng() % 4]});
      }
      std::set<std::string> ts;
      for (const auto& n : names)
        if (rng() % 2) ts.insert(n);
      tags[clip] = ts;
    }
    save_strong((dir / "s.tsv").string(), events, "plg-checkpoint: abc");
    save_weak((dir / "w.tsv").string(), tags);
    const auto ev2 = load_strong((dir / "s.tsv").string());
    EXPECT_EQ(load_weak((dir / "w.tsv").string()), tags);
    EXPECT_EQ(read_header_value((dir / "s.tsv").string(), "plg-checkpoint"), "abc");
    for (const auto& [clip, list] : events) {
      if (list.empty()) continue;
      ASSERT_EQ(ev2.at(clip).size(), list.size());
      for (std::size_t i = 0; i < list.size(); ++i) {
        EXPECT_NEAR(ev2.at(clip)[i].onset, list[i].onset, 0.0005);
        EXPECT_NEAR(ev2.at(clip)[i].offset, list[i].offset, 0.0005);
        EXPECT_EQ(ev2.at(clip)[i].class_name, list[i].class_name);
      }
    }
  }
}

TEST(Synth, CountsBoundsAndDeterminism) {
  SynthConfig cfg;
  cfg.n_strong = 5;
  cfg.n_weak = 7;
  cfg.n_unlabeled = 3;
  cfg.n_validation = 4;
  cfg.seed = 9;
  const auto ds = synth_dataset(cfg);
  EXPECT_EQ(ds.indices(Split::Strong).size(), 5u);
  EXPECT_EQ(ds.indices(Split::Weak).size(), 7u);
  EXPECT_EQ(ds.indices(Split::Unlabeled).size(), 3u);
  EXPECT_EQ(ds.indices(Split::Validation).size(), 4u);
  for (const auto& c : ds.clips) {
    EXPECT_EQ(c.samples.size(), 32000u);
    for (const auto& e : c.hidden_truth) {
      EXPECT_GE(e.onset, 0.0);
      EXPECT_LT(e.onset, e.offset);
      EXPECT_LE(e.offset, cfg.clip_seconds);
    }
    switch (c.split) {
      case Split::Strong:
      case Split::Validation: EXPECT_EQ(c.events, c.hidden_truth); break;
      case Split::Weak: EXPECT_TRUE(c.events.empty()); EXPECT_FALSE(c.tags.empty()); break;
      case Split::Unlabeled: EXPECT_TRUE(c.events.empty()); EXPECT_TRUE(c.tags.empty()); break;
    }
  }
  const auto again = synth_dataset(cfg);
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    EXPECT_EQ(ds.clips[i].samples, again.clips[i].samples);
    EXPECT_EQ(ds.clips[i].hidden_truth, again.clips[i].hidden_truth);
  }
}

TEST(Synth, FixedEventCountGivesExactOccurrences) {
  SynthConfig cfg;
  cfg.n_strong = 200;
  cfg.n_weak = cfg.n_unlabeled = cfg.n_validation = 0;
  cfg.events_min = cfg.events_max = 2;
  cfg.clip_seconds = 1.0;
  cfg.event_max_seconds = 0.5;
  std::size_t total = 0;
  for (const auto& c : synth_dataset(cfg).clips) total += c.hidden_truth.size();
  EXPECT_EQ(total, 400u);
}

TEST(Synth, RejectsInvalidConfig) {
  SynthConfig cfg;
  cfg.n_classes = 1;
  EXPECT_THROW(synth_dataset(cfg), std::invalid_argument);
  cfg = {};
  cfg.event_max_seconds = 3.0;
  EXPECT_THROW(synth_dataset(cfg), std::invalid_argument);
}

TEST(DatasetDir, SaveLoadRoundTrip) {
  const auto dir = temp_dir("dataset");
  const auto ds = test::tiny_dataset(3, 2, 2, 2, 2);
  save_dataset(dir.string(), ds);
  const auto back = load_dataset(dir.string());
  EXPECT_EQ(back.classes, ds.classes);
  ASSERT_EQ(back.clips.size(), ds.clips.size());
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    EXPECT_EQ(back.clips[i].id, ds.clips[i].id);
    EXPECT_EQ(back.clips[i].split, ds.clips[i].split);
    EXPECT_EQ(back.clips[i].tags, ds.clips[i].tags);
    ASSERT_EQ(back.clips[i].events.size(), ds.clips[i].events.size());
    for (std::size_t k = 0; k < ds.clips[i].events.size(); ++k)
      EXPECT_NEAR(back.clips[i].events[k].onset, ds.clips[i].events[k].onset, 0.0005);
    ASSERT_EQ(back.clips[i].samples.size(), ds.clips[i].samples.size());
  }
  EXPECT_THROW(load_dataset((dir / "missing").string()), std::runtime_error);
}

TEST(Targets, FrameCentreRule) {
  const std::vector<std::string> classes = {"a", "b"};
  // Frames of 0.1 s; centres 0.05, 0.15, ...
  const auto t = events_to_frames({{0.1, 0.3, "a"}, {0.26, 0.34, "b"}}, classes, 5, 0.1);
  EXPECT_EQ(t.at(0, 0), 0.0);
  EXPECT_EQ(t.at(1, 0), 1.0);
  EXPECT_EQ(t.at(2, 0), 1.0);
  EXPECT_EQ(t.at(3, 0), 0.0);
  EXPECT_EQ(t.at(2, 1), 0.0);  // event shorter than a frame, misses the centre
  EXPECT_THROW(events_to_frames({{0.0, 0.1, "z"}}, classes, 5, 0.1), std::invalid_argument);
  EXPECT_EQ(tags_to_vector({"b"}, classes), Tensor({2}, std::vector<double>{0, 1}));
}

// --- epoch composition --------------------------------------------------------

namespace {

std::vector<TrainItem> random_items(std::mt19937_64& rng) {
  std::vector<TrainItem> items;
  const std::size_t n = 1 + rng() % 40;
  for (std::size_t i = 0; i < n; ++i) items.push_back({i, rng() % 2 ? Provenance::Real : Provenance::Pseudo});
  return items;
}

auto key(const TrainItem& t) { return std::make_pair(t.clip, static_cast<int>(t.provenance)); }

}  // namespace

TEST(ComposeEpoch, RealFirstSmallExample) {
  const std::vector<TrainItem> items = {{0, Provenance::Pseudo}, {1, Provenance::Real}, {2, Provenance::Pseudo}, {3, Provenance::Real}};
  const auto batches = compose_epoch(items, VoiMode::RealFirst, 1, 3);
  ASSERT_EQ(batches.size(), 4u);
  EXPECT_EQ(batches[0][0].provenance, Provenance::Real);
  EXPECT_EQ(batches[1][0].provenance, Provenance::Real);
  EXPECT_EQ(batches[2][0].provenance, Provenance::Pseudo);
  EXPECT_EQ(batches[3][0].provenance, Provenance::Pseudo);
}

TEST(ComposeEpoch, PermutationAndOrderingProperties) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto items = random_items(rng);
    const std::size_t bs = 1 + rng() % 8;
    for (VoiMode mode : {VoiMode::RealFirst, VoiMode::PseudoFirst, VoiMode::Random}) {
      const auto batches = compose_epoch(items, mode, bs, rng());
      std::vector<TrainItem> flat;
      for (std::size_t b = 0; b < batches.size(); ++b) {
        ASSERT_FALSE(batches[b].empty());
        ASSERT_LE(batches[b].size(), bs);
        if (b + 1 < batches.size()) ASSERT_EQ(batches[b].size(), bs);
        flat.insert(flat.end(), batches[b].begin(), batches[b].end());
      }
      auto a = items, c = flat;
      std::sort(a.begin(), a.end(), [](auto& x, auto& y) { return key(x) < key(y); });
      std::sort(c.begin(), c.end(), [](auto& x, auto& y) { return key(x) < key(y); });
      ASSERT_EQ(a, c);
      if (mode == VoiMode::Random) continue;
      const Provenance first = mode == VoiMode::RealFirst ? Provenance::Real : Provenance::Pseudo;
      bool seen_second = false;
      for (const auto& it : flat) {
        if (it.provenance != first) seen_second = true;
        else ASSERT_FALSE(seen_second);
      }
    }
  }
}

TEST(ComposeEpoch, SeededAndValidated) {
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < 30; ++i) items.push_back({i, i % 3 ? Provenance::Real : Provenance::Pseudo});
  EXPECT_EQ(compose_epoch(items, VoiMode::Random, 4, 8), compose_epoch(items, VoiMode::Random, 4, 8));
  EXPECT_NE(compose_epoch(items, VoiMode::Random, 4, 8), compose_epoch(items, VoiMode::Random, 4, 9));
  EXPECT_THROW(compose_epoch(items, VoiMode::Random, 0, 1), std::invalid_argument);
  EXPECT_THROW(compose_epoch({}, VoiMode::Random, 2, 1), std::invalid_argument);
  EXPECT_EQ(parse_voi_mode("RF"), VoiMode::RealFirst);
  EXPECT_THROW(parse_voi_mode("first"), std::invalid_argument);
}

TEST(Items, BuildItemsAndTargets) {
  const auto ds = test::tiny_dataset(4, 2, 2, 2, 1);
  const auto strong = ds.indices(Split::Strong), weak = ds.indices(Split::Weak), unl = ds.indices(Split::Unlabeled);
  EXPECT_EQ(build_items(ds, {}, false).size(), 4u);
  EXPECT_EQ(build_items(ds, {}, true).size(), 6u);

  PseudoLabelSet p;
  p.upw[ds.clips[unl[0]].id] = {ds.classes[0]};
  p.ups[ds.clips[unl[0]].id] = {{0.1, 0.4, ds.classes[1]}};
  p.wps[ds.clips[weak[1]].id] = {};
  const auto items = build_items(ds, p, false);
  // 4 real + 1 pseudo unlabeled + 1 pseudo weak
  ASSERT_EQ(items.size(), 6u);
  const auto with_unl = build_items(ds, p, true);
  EXPECT_EQ(with_unl.size(), 7u);  // the second unlabeled clip stays a real unlabeled item

  for (const auto& it : items) {
    const auto t = make_targets(ds, p, it, 4, 0.25);
    const auto& clip = ds.clips[it.clip];
    if (it.provenance == Provenance::Real) {
      EXPECT_EQ(t.strong.has_value(), clip.split == Split::Strong);
      EXPECT_EQ(t.weak.has_value(), clip.split == Split::Weak);
    } else if (clip.split == Split::Unlabeled) {
      ASSERT_TRUE(t.strong && t.weak);
      EXPECT_EQ((*t.weak)[0], 1.0);
      EXPECT_EQ(t.strong->at(1, 1), 1.0);
    } else {
      ASSERT_TRUE(t.strong.has_value());
      for (double v : t.strong->data()) EXPECT_EQ(v, 0.0);
    }
  }
}
