// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "auxadapt/adapt.hpp"
#include "test_util.hpp"

namespace auxadapt {
namespace {

// --- momentum update ------------------------------------------------------

TEST(MomentumStep, ZeroGradientZeroVelocityIsFixedPoint) {
  std::vector<double> p{1.5, -2.0}, v{0.0, 0.0}, g{0.0, 0.0};
  sgd_momentum_step<double>(p, v, g, 0.1, 0.9);
  EXPECT_EQ(p, (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(v, (std::vector<double>{0.0, 0.0}));
}

TEST(MomentumStep, ZeroMomentumIsPlainSgd) {
  std::vector<double> p{1.0}, v{0.7}, g{2.0};
  sgd_momentum_step<double>(p, v, g, 0.25, 0.0);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(v[0], 0.5);
}

TEST(MomentumStep, TwoStepUnrolling) {
  std::vector<double> p{3.0}, v{0.0};
  const std::vector<double> g{1.0};
  sgd_momentum_step<double>(p, v, g, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(v[0], 0.1);
  sgd_momentum_step<double>(p, v, g, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(v[0], 0.19);
  EXPECT_NEAR(p[0], 3.0 - 0.29, 4e-16);
}

TEST(MomentumUpdate, RejectsUnknownFrozenAndMisshaped) {
  auto net = build_network(default_auxnet_spec(4), 1);
  Velocity<float> v = zero_velocity(net);
  GradientSet<float> g;
  g.emplace("nope", Tensor<float>(Shape{1}));
  EXPECT_THROW(sgd_momentum_update(net, v, g, 0.1, 0.5), Error);
  g.clear();
  g.emplace("l2.running_mean", Tensor<float>(Shape{8}));
  EXPECT_THROW(sgd_momentum_update(net, v, g, 0.1, 0.5), Error);
  g.clear();
  g.emplace("l1.bias", Tensor<float>(Shape{3}));
  EXPECT_THROW(sgd_momentum_update(net, v, g, 0.1, 0.5), Error);
  g.clear();
  g.emplace("l1.bias", Tensor<float>(Shape{8}, 1.0f));
  EXPECT_THROW(sgd_momentum_update(net, v, g, 0.1, 1.5), Error);
}

TEST(MomentumUpdate, VelocityStartsAtZeroAndMatchesShapes) {
  const auto net = build_network(default_auxnet_spec(4), 1);
  const auto v = zero_velocity(net);
  std::size_t trainable = 0;
  for (const auto& p : net.parameters()) {
    if (!p.trainable) {
      EXPECT_EQ(v.count(p.name), 0u);
      continue;
    }
    ++trainable;
    ASSERT_EQ(v.at(p.name).shape(), p.value.shape());
    for (float x : v.at(p.name).data()) EXPECT_EQ(x, 0.0f);
  }
  EXPECT_EQ(v.size(), trainable);
}

// --- adaptive momentum ----------------------------------------------------

TEST(AdaptiveMomentum, FirstFrameIsZero) {
  EXPECT_EQ(adaptive_momentum(Tensor<float>::nchw(1, 3, 2, 2, 0.3f), nullptr), 0.0);
}

TEST(AdaptiveMomentum, IdenticalFramesHitTheCeiling) {
  const auto x = testing::random_tensor(Shape{1, 3, 4, 4}, 1);
  EXPECT_EQ(adaptive_momentum(x, &x), 0.99);
}

TEST(AdaptiveMomentum, MaximalChangeClampsAtZero) {
  const auto one = Tensor<float>::nchw(1, 3, 4, 4, 1.0f), zero = Tensor<float>::nchw(1, 3, 4, 4, 0.0f);
  EXPECT_EQ(adaptive_momentum(one, &zero), 0.0);
}

TEST(AdaptiveMomentum, HalfTheElementsDifferByHalf) {
  auto a = Tensor<float>::nchw(1, 3, 4, 4, 0.2f), b = a;
  for (std::size_t i = 0; i < b.size(); i += 2) b[i] = 0.7f;
  EXPECT_NEAR(adaptive_momentum(b, &a), 0.75, 1e-7);
}

TEST(AdaptiveMomentum, ConstantShiftGivesOneMinusDelta) {
  for (double delta : {0.05, 0.125, 0.3, 0.6}) {
    const auto a = Tensor<double>::nchw(1, 3, 5, 5, 0.1), b = Tensor<double>::nchw(1, 3, 5, 5, 0.1 + delta);
    EXPECT_NEAR(adaptive_momentum(b, &a), 1.0 - delta, 1e-12);
  }
}

TEST(AdaptiveMomentum, RejectsShapeMismatch) {
  const auto a = Tensor<float>::nchw(1, 3, 4, 4), b = Tensor<float>::nchw(1, 3, 4, 5);
  EXPECT_THROW(adaptive_momentum(a, &b), Error);
}

// --- confidence mask and schedule ----------------------------------------

TEST(ConfidenceMask, UniformLogitsIncludeEverything) {
  const auto s = confidence_mask(Tensor<float>::nchw(1, 4, 5, 5), 0.9);
  EXPECT_EQ(s.included_fraction, 1.0);
  EXPECT_EQ(count_true(s.mask), 25u);
}

TEST(ConfidenceMask, SaturatedLogitsIncludeNothing) {
  auto l = Tensor<float>::nchw(1, 4, 5, 5);
  for (std::size_t p = 0; p < 25; ++p) l[(p % 4) * 25 + p] = 20.0f;
  EXPECT_EQ(confidence_mask(l, 0.9).included_fraction, 0.0);
}

TEST(ConfidenceMask, BoundaryIsExcluded) {
  // Confidence exactly equal to the threshold is not below it.
  EXPECT_EQ(confidence_mask(Tensor<float>::nchw(1, 4, 2, 2), 0.25).included_fraction, 0.0);
  EXPECT_EQ(confidence_mask(Tensor<float>::nchw(1, 2, 2, 2), 0.5).included_fraction, 0.0);
  auto l = Tensor<double>::nchw(1, 2, 1, 2);
  l[0] = 100.0;  // confidence rounds to exactly 1
  EXPECT_EQ(confidence_map(l)[0], 1.0);
  const auto s = confidence_mask(l, 1.0);
  EXPECT_FALSE(s.mask[0]);
  EXPECT_TRUE(s.mask[1]);
  EXPECT_EQ(s.included_fraction, 0.5);
}

TEST(ConfidenceMask, RejectsOutOfRangeThreshold) {
  EXPECT_THROW(confidence_mask(Tensor<float>::nchw(1, 2, 1, 1), 0.0), Error);
  EXPECT_THROW(confidence_mask(Tensor<float>::nchw(1, 2, 1, 1), 1.01), Error);
}

TEST(Schedule, PeriodOneAlwaysUpdates) {
  for (std::size_t t = 1; t <= 40; ++t) EXPECT_TRUE(should_update(t, 1));
}

TEST(Schedule, PeriodFiveOverTenFrames) {
  std::vector<std::size_t> hits;
  for (std::size_t t = 1; t <= 10; ++t)
    if (should_update(t, 5)) hits.push_back(t);
  EXPECT_EQ(hits, (std::vector<std::size_t>{1, 6}));
  EXPECT_THROW(should_update(0, 5), Error);
}

TEST(Config, Validation) {
  AdaptConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.learning_rate, 1e-4);
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.update_period = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.confidence_threshold = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.learning_rate = -1e-3;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_method("naive_last_part"), Method::naive_last_part);
  EXPECT_THROW(parse_method("tent"), Error);
}

TEST(LastPart, FinalConvAndPrecedingBatchNorm) {
  auto s = make_adapt_state(build_network(default_mainnet_spec(4), 1), AdaptConfig{.method = Method::naive_last_part});
  std::vector<std::string> names;
  for (const auto& p : s.net.parameters())
    if (p.trainable) names.push_back(p.name);
  EXPECT_EQ(names, (std::vector<std::string>{"l7.gamma", "l7.beta", "l9.weight", "l9.bias"}));
  EXPECT_EQ(last_part_first_layer(NetworkSpec{"x", 3, 2, {LayerSpec::conv(1, 3, 2)}}), 0u);
}

// --- single steps ---------------------------------------------------------

SceneConfig tiny_scene(std::size_t frames) {
  SceneConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.min_size = 4;
  cfg.max_size = 8;
  cfg.num_shapes = 3;
  cfg.num_frames = frames;
  return cfg;
}

TEST(AuxadaptStep, ZeroAuxAndZeroRateIsMainArgmax) {
  const auto main = build_network(default_mainnet_spec(4), 1);
  auto aux = build_network(default_auxnet_spec(4), 2);
  for (auto& p : aux.parameters())
    if (!p.is_running_stat()) p.value.fill(0.0f);
  AdaptConfig cfg;
  cfg.learning_rate = 0.0;
  AdaptState s = make_adapt_state(aux, cfg);
  const auto before = checksum(s.net);
  const auto v = generate_video(tiny_scene(3), 4);
  for (const auto& f : v.frames) {
    const auto ml = infer(main, f);
    const auto r = auxadapt_step(s, ml, f, cfg);
    EXPECT_EQ(r.segmentation, argmax_decision(ml));
    EXPECT_TRUE(r.updated);
  }
  EXPECT_EQ(checksum(s.net), before);
  EXPECT_EQ(s.frame_index, 3u);
}

TEST(AuxadaptStep, LossDescendsOnAStaticFrame) {
  const auto main = build_network(default_mainnet_spec(4), 3);
  AdaptConfig cfg;
  cfg.momentum = 0.0;
  AdaptState s = make_adapt_state(build_network(default_auxnet_spec(4), 4), cfg);
  const auto frame = generate_video(tiny_scene(1), 2).frames[0];
  const auto ml = infer(main, frame);
  std::vector<double> losses;
  for (int i = 0; i < 21; ++i) losses.push_back(auxadapt_step(s, ml, frame, cfg).loss);
  int descending = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) descending += losses[i] <= losses[i - 1];
  EXPECT_GE(descending, 18);
}

TEST(AuxadaptStep, MainNetIsUntouched) {
  const auto main = build_network(default_mainnet_spec(4), 5);
  const auto before = checksum(main);
  AdaptConfig cfg;
  cfg.learning_rate = 0.1;
  AdaptState s = make_adapt_state(build_network(default_auxnet_spec(4), 6), cfg);
  const auto frame = generate_video(tiny_scene(1), 3).frames[0];
  auxadapt_step(s, infer(main, frame), frame, cfg);
  EXPECT_EQ(checksum(main), before);
  EXPECT_EQ(s.backward_passes, 1u);
}

TEST(AuxadaptStep, MaskedLossMatchesRestrictedOracle) {
  const auto main = build_network(default_mainnet_spec(4), 7);
  AdaptConfig cfg;
  cfg.confidence_threshold = 0.6;
  const auto aux = build_network(default_auxnet_spec(4), 8);
  AdaptState s = make_adapt_state(aux, cfg);
  const auto frame = generate_video(tiny_scene(1), 5).frames[0];
  const auto ml = infer(main, frame);
  const auto r = auxadapt_step(s, ml, frame, cfg);
  ASSERT_TRUE(r.updated);

  // Oracle: mean CE of the aux logits over pixels whose fused confidence
  // is below the threshold, computed in double from scratch.
  const auto al = infer(aux, frame);
  const std::size_t plane = 16 * 16;
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    double fmax = -1e300, fs = 0.0;
    for (std::size_t k = 0; k < 4; ++k) fmax = std::max(fmax, double(ml[k * plane + p]) + al[k * plane + p]);
    for (std::size_t k = 0; k < 4; ++k) fs += std::exp(double(ml[k * plane + p]) + al[k * plane + p] - fmax);
    if (1.0 / fs >= 0.6) continue;
    double as = 0.0;
    for (std::size_t k = 0; k < 4; ++k) as += std::exp(double(al[k * plane + p]));
    const auto c = static_cast<std::size_t>(r.segmentation[p] - 1);
    total += std::log(as) - al[c * plane + p];
    ++n;
  }
  ASSERT_GT(n, 0u);
  EXPECT_NEAR(r.included_fraction, double(n) / plane, 1e-15);
  EXPECT_NEAR(r.loss, total / double(n), 1e-6 * std::abs(total / double(n)));
}

TEST(AuxadaptStep, EmptyMaskSkipsTheUpdate) {
  const auto main = build_network(default_mainnet_spec(4), 7);
  AdaptConfig cfg;
  cfg.confidence_threshold = 0.2;  // below 1/K: nothing qualifies
  AdaptState s = make_adapt_state(build_network(default_auxnet_spec(4), 8), cfg);
  const auto before = checksum(s.net);
  const auto frame = generate_video(tiny_scene(1), 5).frames[0];
  const auto r = auxadapt_step(s, infer(main, frame), frame, cfg);
  EXPECT_FALSE(r.updated);
  EXPECT_EQ(r.backward_macs, 0u);
  EXPECT_EQ(r.included_fraction, 0.0);
  EXPECT_EQ(checksum(s.net), before);
  EXPECT_EQ(s.backward_passes, 0u);
}

// --- whole runs -----------------------------------------------------------

struct Nets {
  Network<float> main = build_network(default_mainnet_spec(4), 11);
  Network<float> aux = build_network(default_auxnet_spec(4), 12);
};

TEST(RunAdaptation, FrozenEqualsIndependentInference) {
  Nets n;
  const auto v = generate_video(tiny_scene(6), 1);
  const auto r = run_adaptation(v, n.main, nullptr, AdaptConfig{.method = Method::frozen});
  for (std::size_t t = 0; t < v.size(); ++t) EXPECT_EQ(r.segmentations[t], argmax_decision(infer(n.main, v.frames[t])));
  EXPECT_EQ(r.metrics.total_backward_macs(), 0u);
  const auto fwd = count_macs(n.main, 16, 16).forward;
  for (const auto& f : r.metrics.frames) EXPECT_EQ(f.fwd_macs, fwd);
  EXPECT_EQ(macs_per_frame(r.metrics), double(fwd) / 1e9);
}

TEST(RunAdaptation, ZeroRateReproducesTheUnadaptedFusion) {
  Nets n;
  const auto v = generate_video(tiny_scene(6), 2);
  AdaptConfig cfg;
  cfg.learning_rate = 0.0;
  const auto r = run_adaptation(v, n.main, &n.aux, cfg);
  for (std::size_t t = 0; t < v.size(); ++t)
    EXPECT_EQ(r.segmentations[t], fuse_and_decide(infer(n.main, v.frames[t]), infer(n.aux, v.frames[t])));
}

// The adaptation loop written out by hand from the primitive ops: frozen
// main logits, aux forward, logit sum, argmax, CE on the aux tape,
// momentum descent in double.
TEST(RunAdaptation, MatchesHandWrittenLoop) {
  Nets n;
  const auto v = generate_video(tiny_scene(8), 3);
  AdaptConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.8;
  const auto r = run_adaptation(v, n.main, &n.aux, cfg);

  auto aux = n.aux;
  std::map<std::string, std::vector<double>> vel;
  for (std::size_t t = 0; t < v.size(); ++t) {
    const auto ml = infer(n.main, v.frames[t]);
    auto fwd = forward_graph(aux, v.frames[t]);
    Tensor<float> fused = ml;
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += fwd.value()[i];
    SegMap seg(16, 16);
    for (std::size_t p = 0; p < 256; ++p) {
      int best = 0;
      for (int k = 1; k < 4; ++k)
        if (fused[k * 256 + p] > fused[best * 256 + p]) best = k;
      seg[p] = best + 1;
    }
    ASSERT_EQ(seg, r.segmentations[t]) << "frame " << t + 1;
    const auto grads = fwd.tape.backward(ops::softmax_cross_entropy(fwd.tape, fwd.logits, seg));
    for (const auto& [name, g] : grads) {
      auto& vv = vel[name];
      vv.resize(g.size(), 0.0);
      auto& theta = aux.find(name)->value;
      for (std::size_t i = 0; i < g.size(); ++i) {
        vv[i] = 0.8 * static_cast<double>(static_cast<float>(vv[i])) + 0.05 * g[i];
        theta[i] = static_cast<float>(theta[i] - vv[i]);
      }
    }
  }
  EXPECT_EQ(checksum(aux), checksum(r.state.net));
}

TEST(RunAdaptation, BackwardPassesFollowThePeriod) {
  Nets n;
  const auto v = generate_video(tiny_scene(30), 4);
  for (std::size_t p : {1u, 2u, 5u, 7u, 10u}) {
    AdaptConfig cfg;
    cfg.update_period = p;
    const auto r = run_adaptation(v, n.main, &n.aux, cfg);
    EXPECT_EQ(r.state.backward_passes, (30 + p - 1) / p) << "period " << p;
    std::size_t with_bwd = 0;
    for (const auto& f : r.metrics.frames) with_bwd += f.bwd_macs > 0;
    EXPECT_EQ(with_bwd, r.state.backward_passes);
  }
}

TEST(RunAdaptation, MacAccounting) {
  Nets n;
  const auto v = generate_video(tiny_scene(10), 5);
  const auto main_fwd = count_macs(n.main, 16, 16).forward, aux_fwd = count_macs(n.aux, 16, 16).forward;

  const auto a = run_adaptation(v, n.main, &n.aux, AdaptConfig{});
  for (const auto& f : a.metrics.frames) {
    EXPECT_EQ(f.fwd_macs, main_fwd + aux_fwd);
    EXPECT_EQ(f.bwd_macs, 2 * aux_fwd);
  }

  AdaptConfig p10;
  p10.update_period = 10;
  const auto b = run_adaptation(v, n.main, &n.aux, p10);
  EXPECT_EQ(b.metrics.total_backward_macs(), 2 * aux_fwd);

  const auto all = run_adaptation(v, n.main, nullptr, AdaptConfig{.method = Method::naive_all_layers});
  const auto last = run_adaptation(v, n.main, nullptr, AdaptConfig{.method = Method::naive_last_part});
  const auto mc = count_macs(n.main, 16, 16);
  for (std::size_t t = 0; t < v.size(); ++t) {
    EXPECT_EQ(all.metrics.frames[t].bwd_macs, 2 * main_fwd);
    EXPECT_EQ(last.metrics.frames[t].bwd_macs, mc.backward_from(7));
    EXPECT_EQ(all.metrics.frames[t].fwd_macs, main_fwd);
  }
  EXPECT_GT(all.metrics.frames[0].bwd_macs, a.metrics.frames[0].bwd_macs);
  EXPECT_GT(all.metrics.frames[0].bwd_macs, last.metrics.frames[0].bwd_macs);
}

TEST(RunAdaptation, NaiveMethodsAdaptACopy) {
  Nets n;
  const auto before = checksum(n.main);
  const auto v = generate_video(tiny_scene(4), 6);
  AdaptConfig cfg{.learning_rate = 0.05, .method = Method::naive_last_part};
  const auto r = run_adaptation(v, n.main, nullptr, cfg);
  EXPECT_EQ(checksum(n.main), before);
  EXPECT_NE(checksum(r.state.net), before);
  // Only the last part moved.
  for (const auto& p : r.state.net.parameters()) {
    const bool moved = !(p.value == n.main.find(p.name)->value);
    EXPECT_EQ(moved, (p.layer == 7 && !p.is_running_stat()) || p.layer == 9) << p.name;
  }
}

TEST(RunAdaptation, RunningStatisticsNeverChange) {
  Nets n;
  const auto v = generate_video(tiny_scene(5), 7);
  const auto r = run_adaptation(v, n.main, &n.aux, AdaptConfig{.learning_rate = 0.1});
  for (const auto& p : r.state.net.parameters())
    if (p.is_running_stat()) EXPECT_EQ(p.value, n.aux.find(p.name)->value) << p.name;
}

TEST(RunAdaptation, MotionMomentumOnStaticVideo) {
  auto cfg = tiny_scene(5);
  cfg.velocity_min = cfg.velocity_max = 0;
  cfg.jitter_amplitude = 0.0;
  const auto v = generate_video(cfg, 8);
  Nets n;
  AdaptState s = make_adapt_state(n.aux, AdaptConfig{.momentum_mode = MomentumMode::motion_adaptive});
  const AdaptConfig ac{.momentum_mode = MomentumMode::motion_adaptive};
  std::vector<double> betas;
  for (const auto& f : v.frames) betas.push_back(auxadapt_step(s, infer(n.main, f), f, ac).momentum);
  EXPECT_EQ(betas, (std::vector<double>{0.0, 0.99, 0.99, 0.99, 0.99}));
}

TEST(RunAdaptation, RejectsBadInputs) {
  Nets n;
  SyntheticVideo empty;
  empty.num_classes = 4;
  EXPECT_THROW(run_adaptation(empty, n.main, &n.aux, AdaptConfig{}), Error);
  const auto v = generate_video(tiny_scene(2), 1);
  EXPECT_THROW(run_adaptation(v, n.main, nullptr, AdaptConfig{}), Error);
  const auto k3 = build_network(default_auxnet_spec(3), 1);
  EXPECT_THROW(run_adaptation(v, n.main, &k3, AdaptConfig{}), Error);
}

}  // namespace
}  // namespace auxadapt
