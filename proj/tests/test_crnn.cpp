#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "couple_sed/crnn.hpp"
#include "couple_sed/grad_check.hpp"
#include "support.hpp"

using namespace csed;
using namespace csed::crnn;
using csed::test::random_tensor;

TEST(CrnnConfig, DeskParameterCount) {
  // conv0: 16*1*9 + 16; conv1: 32*8*9 + 32; GRU input 16 filters * 4 bands = 64,
  // per direction 48*64 + 48*16 + 96; heads 2 * (4*32 + 4).
  const std::size_t expected = (144 + 16) + (2304 + 32) + 2 * (3072 + 768 + 96) + 2 * (128 + 4);
  EXPECT_EQ(init_params(CrnnConfig::desk(16), 1).parameter_count(), expected);
  EXPECT_EQ(expected, 10632u);
}

TEST(CrnnConfig, OutputFramesUseCeilingPerBlock) {
  const auto cfg = CrnnConfig::desk(16);
  EXPECT_EQ(cfg.time_pool(), 4u);
  EXPECT_EQ(cfg.output_frames(62), 16u);
  EXPECT_EQ(cfg.output_frames(8), 2u);
  EXPECT_EQ(cfg.output_frames(5), 2u);
  EXPECT_EQ(cfg.output_bands(), 4u);
}

TEST(CrnnConfig, ValidationRejectsMismatchedPools) {
  auto cfg = CrnnConfig::desk(16);
  cfg.pool_sizes.pop_back();
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = CrnnConfig::desk(16);
  cfg.kernel = 2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Crnn, ForwardShapesAndRanges) {
  const auto params = init_params(CrnnConfig::desk(16), 3);
  const auto p = forward(params, random_tensor({13, 16}, 4));
  ASSERT_EQ(p.frame_probs.shape(), (numkit::Shape{4, 4}));
  ASSERT_EQ(p.clip_probs.shape(), (numkit::Shape{4}));
  for (double v : p.frame_probs.data()) EXPECT_TRUE(v > 0.0 && v < 1.0);
  for (double v : p.clip_probs.data()) EXPECT_TRUE(v > 0.0 && v < 1.0);
  EXPECT_THROW(forward(params, random_tensor({13, 15}, 4)), numkit::ShapeError);
}

TEST(Crnn, ClipProbabilityIsAttentionWeightedFrameProbability) {
  const Tensor feats = random_tensor({6, 8}, 5);
  const Tensor aw = random_tensor({3, 8}, 6), ab = random_tensor({3}, 7);
  const Tensor cw = random_tensor({3, 8}, 8), cb = random_tensor({3}, 9);
  const Tensor clip = attention_pool(feats, aw, ab, cw, cb);
  for (std::size_t c = 0; c < 3; ++c) {
    double z = 0.0, num = 0.0;
    for (std::size_t t = 0; t < 6; ++t) {
      double a = ab[c], s = cb[c];
      for (std::size_t d = 0; d < 8; ++d) {
        a += aw.at(c, d) * feats.at(t, d);
        s += cw.at(c, d) * feats.at(t, d);
      }
      z += std::exp(a);
      num += std::exp(a) / (1.0 + std::exp(-s));
    }
    EXPECT_NEAR(clip[c], num / z, 1e-12);
  }
}

TEST(Crnn, ClipProbabilityLiesWithinFrameRange) {
  const auto params = init_params(CrnnConfig::desk(16), 10);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = forward(params, random_tensor({20, 16}, 20 + s, -3, 3));
    for (std::size_t c = 0; c < 4; ++c) {
      double lo = 1.0, hi = 0.0;
      for (std::size_t t = 0; t < p.frame_probs.dim(0); ++t) {
        lo = std::min(lo, p.frame_probs.at(t, c));
        hi = std::max(hi, p.frame_probs.at(t, c));
      }
      EXPECT_GE(p.clip_probs[c], lo - 1e-15);
      EXPECT_LE(p.clip_probs[c], hi + 1e-15);
    }
  }
}

TEST(Crnn, InputNoiseIsSeededAndNegativeStdRejected) {
  const auto params = init_params(CrnnConfig::desk(16), 11);
  features::FeatureMatrix fm{random_tensor({8, 16}, 12), 0.032};
  const auto a = forward(params, fm, 0.1, 5), b = forward(params, fm, 0.1, 5), c = forward(params, fm, 0.1, 6);
  EXPECT_EQ(a.clip_probs, b.clip_probs);
  EXPECT_NE(a.clip_probs, c.clip_probs);
  EXPECT_EQ(forward(params, fm).clip_probs, forward(params, fm.frames).clip_probs);
  EXPECT_THROW(forward(params, fm, -0.1, 0), std::invalid_argument);
}

TEST(Crnn, InitIsSeededAndBounded) {
  const auto cfg = CrnnConfig::desk(16);
  EXPECT_TRUE(init_params(cfg, 4) == init_params(cfg, 4));
  EXPECT_FALSE(init_params(cfg, 4) == init_params(cfg, 5));
  const auto p = init_params(cfg, 4);
  const double bound = 1.0 / std::sqrt(9.0);  // conv0 fan-in 1 * 3 * 3
  for (double v : p.conv[0].kernels.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Crnn, TapedForwardMatchesPureForward) {
  const auto params = init_params(CrnnConfig::desk(16), 13);
  const Tensor x = random_tensor({9, 16}, 14);
  numkit::Tape tape;
  const auto vars = register_params(tape, params, true);
  const auto pv = forward(tape, params, vars, x);
  const auto p = forward(params, x);
  EXPECT_EQ(tape.value(pv.frame_probs), p.frame_probs);
  EXPECT_EQ(tape.value(pv.clip_probs), p.clip_probs);
}

TEST(Crnn, GradientOfClipOutputsMatchesFiniteDifferences) {
  const auto cfg = CrnnConfig::desk(16);
  const auto base = init_params(cfg, 15);
  const Tensor x = random_tensor({8, 16}, 16);
  const Tensor proj_c = random_tensor({4}, 17), proj_f = random_tensor({2, 4}, 18);
  const numkit::LossFn fn = [&](std::span<const Tensor> ps, std::vector<Tensor>* grads) {
    CrnnParams p = base;
    auto ts = p.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = ps[i];
    numkit::Tape tape;
    const auto vars = register_params(tape, p, true);
    const auto out = forward(tape, p, vars, x);
    const Var lc = numkit::sum_axis0(tape, numkit::mul_const(tape, out.clip_probs, proj_c));
    const Var lf = numkit::sum_axis0(tape, numkit::sum_axis0(tape, numkit::mul_const(tape, out.frame_probs, proj_f)));
    const Var loss = numkit::add(tape, lc, lf);
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (Var v : vars) grads->push_back(tape.grad(v));
    }
    return tape.value(loss)[0];
  };
  std::vector<Tensor> params;
  for (const Tensor* t : base.tensors()) params.push_back(*t);
  numkit::GradCheckOptions opts;
  opts.max_per_tensor = 40;
  const auto r = numkit::grad_check(fn, params, 1e-5, opts);
  EXPECT_LE(r.max_rel_error, 1e-4) << "tensor " << base.named()[r.worst_tensor].first << " index " << r.worst_index;
}

TEST(Crnn, CheckpointRoundTripIsExact) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "csed_ckpt_test.ckpt").string();
  const auto params = init_params(CrnnConfig::desk(16), 19);
  save_checkpoint(path, params);
  const auto loaded = load_checkpoint(path);
  EXPECT_TRUE(loaded == params);
  EXPECT_EQ(checkpoint_id(path), checkpoint_id(path));
  EXPECT_EQ(checkpoint_id(path).size(), 16u);

  const auto bad = (dir / "csed_ckpt_bad.ckpt").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(bad), std::runtime_error);
  EXPECT_THROW(load_checkpoint((dir / "csed_missing.ckpt").string()), std::runtime_error);
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}
