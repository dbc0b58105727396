// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "auxadapt/checkpoint.hpp"
#include "auxadapt/network.hpp"
#include "test_util.hpp"

namespace auxadapt {
namespace {

TEST(BuildNetwork, SameSeedIsBitIdentical) {
  const auto a = build_network(default_mainnet_spec(4), 9), b = build_network(default_mainnet_spec(4), 9);
  EXPECT_EQ(checksum(a), checksum(b));
  EXPECT_NE(checksum(a), checksum(build_network(default_mainnet_spec(4), 10)));
}

TEST(BuildNetwork, AuxNetIsUnderAThirdOfMainNet) {
  const auto main = build_network(default_mainnet_spec(4), 1), aux = build_network(default_auxnet_spec(4), 1);
  // Hand count: conv k*k*ci*co + co, batch norm 4c.
  const std::size_t main_expected = (27 * 16 + 16) + 64 + 2 * (144 * 16 + 16 + 64) + (16 * 4 + 4);
  const std::size_t aux_expected = (27 * 8 + 8) + 32 + (72 * 8 + 8) + 32 + (8 * 4 + 4);
  EXPECT_EQ(main.parameter_count(), main_expected);
  EXPECT_EQ(aux.parameter_count(), aux_expected);
  EXPECT_EQ(aux.parameter_count(true), aux_expected - 32);
  EXPECT_LT(3 * aux.parameter_count(), main.parameter_count());
  EXPECT_EQ(aux.input_downsample_factor(), 2u);
  EXPECT_EQ(main.input_downsample_factor(), 1u);
}

TEST(BuildNetwork, RejectsChannelMismatch) {
  NetworkSpec spec{"bad", 3, 8, {LayerSpec::conv(3, 4, 8)}};
  try {
    build_network(spec, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::shape);
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
  }
}

TEST(BuildNetwork, RejectsUnbalancedScaling) {
  NetworkSpec spec{"bad", 3, 2, {LayerSpec::avg_pool(2), LayerSpec::conv(1, 3, 2)}};
  EXPECT_THROW(build_network(spec, 1), Error);
}

TEST(BuildNetwork, InitialisationFollowsFanIn) {
  const auto net = build_network(default_mainnet_spec(4), 3);
  const auto& w = net.find("l3.weight")->value;
  double sq = 0.0;
  for (float v : w.data()) sq += double(v) * v;
  const double var = sq / double(w.size());
  EXPECT_NEAR(var, 2.0 / 144.0, 0.25 * 2.0 / 144.0);
  for (float v : net.find("l3.bias")->value.data()) EXPECT_EQ(v, 0.0f);
  for (float v : net.find("l1.gamma")->value.data()) EXPECT_EQ(v, 1.0f);
  for (float v : net.find("l1.running_var")->value.data()) EXPECT_EQ(v, 1.0f);
  EXPECT_FALSE(net.find("l1.running_mean")->trainable);
}

TEST(LayerSpec, ParseRoundTrip) {
  for (const auto& l : default_mainnet_spec(5).layers) EXPECT_EQ(LayerSpec::parse(l.to_string()), l);
  for (const auto& l : default_auxnet_spec(5).layers) EXPECT_EQ(LayerSpec::parse(l.to_string()), l);
  EXPECT_EQ(LayerSpec::parse("bn(8)"), LayerSpec::batchnorm(8));
  EXPECT_EQ(LayerSpec::parse("conv(3, 8, 4)"), LayerSpec::conv(3, 8, 4));
}

TEST(LayerSpec, ParseErrorsAreConfigErrors) {
  for (const char* bad : {"conv(2,3,4)", "conv(3,3)", "relu(1)", "pool(2)", "conv(3,a,4)", "avg_pool(0)", "conv(3,3,4"}) {
    try {
      LayerSpec::parse(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), Error::Kind::config) << bad;
    }
  }
}

TEST(PredictLogits, AuxNetReturnsFullResolution) {
  const auto aux = build_network(default_auxnet_spec(4), 2);
  const auto out = infer(aux, testing::random_tensor(Shape{1, 3, 32, 32}, 1));
  EXPECT_EQ(out.shape(), (Shape{1, 4, 32, 32}));
  EXPECT_TRUE(out.all_finite());
}

TEST(PredictLogits, RepeatedCallsAreIdentical) {
  const auto main = build_network(default_mainnet_spec(4), 4);
  const auto x = testing::random_tensor(Shape{1, 3, 16, 16}, 2);
  const auto first = infer(main, x);
  const auto sum = checksum(main);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(infer(main, x), first);
  EXPECT_EQ(checksum(main), sum);
}

TEST(PredictLogits, RejectsOddSizeForPoolingNet) {
  const auto aux = build_network(default_auxnet_spec(4), 2);
  EXPECT_THROW(infer(aux, Tensor<float>::nchw(1, 3, 15, 16)), Error);
  EXPECT_THROW(infer(aux, Tensor<float>::nchw(1, 1, 16, 16)), Error);
}

TEST(Ofm, InteriorMatchesMainNetOnConstantInput) {
  const auto main = build_network(default_mainnet_spec(4), 5);
  const auto ofm = derive_ofm_auxnet(main, 2);
  const auto x = Tensor<float>::nchw(1, 3, 32, 32, 0.4f);
  const auto a = infer(main, x), b = infer(ofm, x);
  // MainNet's receptive field reaches 3 px; at half resolution that is 6
  // px of the full frame, plus one for the upsampling taps. Beyond that
  // zero padding cannot reach.
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t y = 8; y < 24; ++y)
      for (std::size_t x2 = 8; x2 < 24; ++x2) EXPECT_NEAR(a.at(0, k, y, x2), b.at(0, k, y, x2), 1e-5);
}

TEST(Ofm, PointwiseNetMatchesEverywhere) {
  NetworkSpec spec{"pw", 3, 3, {LayerSpec::conv(1, 3, 6), LayerSpec::batchnorm(6), LayerSpec::relu(), LayerSpec::conv(1, 6, 3)}};
  const auto main = build_network(spec, 6);
  const auto ofm = derive_ofm_auxnet(main, 2);
  const auto x = Tensor<float>::nchw(1, 3, 8, 8, 0.7f);
  const auto a = infer(main, x), b = infer(ofm, x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(Ofm, IsCheaperByTheSquareOfTheFactor) {
  const auto main = build_network(default_mainnet_spec(4), 5);
  const auto ofm = derive_ofm_auxnet(main, 2);
  const auto mm = count_macs(main, 64, 64), om = count_macs(ofm, 64, 64);
  EXPECT_LT(om.forward, mm.forward);
  std::uint64_t main_conv = 0, ofm_conv = 0;
  for (std::size_t i = 0; i < main.spec().layers.size(); ++i)
    if (main.spec().layers[i].kind == LayerKind::conv) {
      main_conv += mm.per_layer[i];
      ofm_conv += om.per_layer[i + 1];
    }
  EXPECT_EQ(ofm_conv * 4, main_conv);
}

TEST(Ofm, IsADeepCopy) {
  const auto main = build_network(default_mainnet_spec(4), 5);
  const auto before = checksum(main);
  auto ofm = derive_ofm_auxnet(main, 2);
  for (auto& p : ofm.parameters()) {
    EXPECT_EQ(p.trainable, !p.is_running_stat()) << p.name;
    p.value.fill(3.0f);
  }
  EXPECT_EQ(checksum(main), before);
  EXPECT_THROW(derive_ofm_auxnet(main, 1), Error);
}

Tensor<float> logits_1px(std::vector<float> v) {
  const std::size_t k = v.size();
  return Tensor<float>(Shape{1, k, 1, 1}, std::move(v));
}

TEST(Fuse, ZeroAuxLeavesMainDecision) {
  const auto m = testing::random_tensor(Shape{1, 4, 5, 5}, 3, -2.0, 2.0);
  EXPECT_EQ(fuse_and_decide(m, Tensor<float>(m.shape())), argmax_decision(m));
}

TEST(Fuse, OneHotAuxOverZeroMain) {
  auto aux = Tensor<float>::nchw(1, 4, 3, 3);
  for (std::size_t p = 0; p < 9; ++p) aux[2 * 9 + p] = 1.0f;
  const auto seg = fuse_and_decide(Tensor<float>::nchw(1, 4, 3, 3), aux);
  for (int c : seg.values) EXPECT_EQ(c, 3);
}

TEST(Fuse, LargerSummedMarginWins) {
  EXPECT_EQ(fuse_and_decide(logits_1px({0.4f, 0.0f}), logits_1px({0.0f, 0.5f}))[0], 2);
}

TEST(Fuse, TiesGoToTheLowestClass) {
  EXPECT_EQ(fuse_and_decide(logits_1px({0.0f, 1.0f, 1.0f}), logits_1px({0.0f, 0.0f, 0.0f}))[0], 2);
  EXPECT_EQ(argmax_decision(Tensor<float>::nchw(1, 5, 1, 1))[0], 1);
}

TEST(Fuse, Commutative) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = testing::random_tensor(Shape{1, 4, 6, 6}, s, -3.0, 3.0);
    const auto b = testing::random_tensor(Shape{1, 4, 6, 6}, s + 50, -3.0, 3.0);
    EXPECT_EQ(fuse_and_decide(a, b), fuse_and_decide(b, a));
  }
  EXPECT_THROW(fuse_and_decide(Tensor<float>::nchw(1, 4, 2, 2), Tensor<float>::nchw(1, 3, 2, 2)), Error);
}

TEST(Fuse, PerPixelConstantDoesNotChangeDecision) {
  const auto a = testing::random_tensor(Shape{1, 4, 6, 6}, 1, -1.0, 1.0);
  const auto b = testing::random_tensor(Shape{1, 4, 6, 6}, 2, -1.0, 1.0);
  auto shifted = b;
  for (std::size_t p = 0; p < 36; ++p)
    for (std::size_t k = 0; k < 4; ++k) shifted[k * 36 + p] += static_cast<float>(p % 4) * 2.0f;
  // Only compare where the fused margin is not at float resolution.
  const auto fused = add_logits(a, b);
  const auto d1 = fuse_and_decide(a, b), d2 = fuse_and_decide(a, shifted);
  for (std::size_t p = 0; p < 36; ++p) {
    float top = -1e30f, second = -1e30f;
    for (std::size_t k = 0; k < 4; ++k) {
      const float v = fused[k * 36 + p];
      if (v > top) {
        second = top;
        top = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (top - second > 1e-5f) EXPECT_EQ(d1[p], d2[p]);
  }
}

TEST(MacCount, SingleConvFormula) {
  NetworkSpec spec{"c", 1, 2, {LayerSpec::conv(3, 1, 2)}};
  EXPECT_EQ(count_macs(spec, 8, 8).forward, 3u * 3 * 1 * 2 * 8 * 8);
  NetworkSpec one{"c", 1, 2, {LayerSpec::conv(3, 1, 1), LayerSpec::conv(1, 1, 2)}};
  EXPECT_EQ(count_macs(one, 8, 8).per_layer[0], 576u);
}

TEST(MacCount, DefaultNetsByHand) {
  const std::uint64_t hw = 64 * 64, q = 32 * 32;
  const std::uint64_t main = 27 * 16 * hw + 16 * hw + 2 * (144 * 16 * hw + 16 * hw) + 16 * 4 * hw;
  const std::uint64_t aux = 3 * q + 27 * 8 * q + 8 * q + 72 * 8 * q + 8 * q + 8 * 4 * q + 4 * hw;
  EXPECT_EQ(count_macs(default_mainnet_spec(4), 64, 64).forward, main);
  EXPECT_EQ(count_macs(default_auxnet_spec(4), 64, 64).forward, aux);
}

TEST(MacCount, BackwardIsTwiceForwardAndAdditive) {
  for (const auto& spec : {default_mainnet_spec(4), default_auxnet_spec(4), default_auxnet_spec(7)}) {
    const auto m = count_macs(spec, 32, 48);
    EXPECT_EQ(m.backward, 2 * m.forward);
    std::uint64_t s = 0;
    for (auto v : m.per_layer) s += v;
    EXPECT_EQ(s, m.forward);
    EXPECT_EQ(m.backward_from(0), m.backward);
  }
}

TEST(Gradients, FrozenNetworkContributesNothing) {
  auto net = build_network(default_auxnet_spec(4), 1);
  net.set_trainable(false);
  auto fwd = forward_graph(net, testing::random_tensor(Shape{1, 3, 8, 8}, 1));
  const auto grads = fwd.tape.backward(ops::softmax_cross_entropy(fwd.tape, fwd.logits, SegMap(8, 8, 2)));
  EXPECT_TRUE(grads.empty());
  EXPECT_FALSE(net.first_trainable_layer().has_value());
}

TEST(Checkpoint, RoundTripIsExact) {
  auto net = build_network(default_auxnet_spec(4), 3);
  net.set_trainable_from(4);
  net.find("l2.running_mean")->value.fill(0.125f);
  std::stringstream ss;
  write_network(ss, net);
  const auto back = read_network(ss);
  EXPECT_EQ(back.spec(), net.spec());
  EXPECT_EQ(checksum(back), checksum(net));
  for (const auto& p : net.parameters()) EXPECT_EQ(back.find(p.name)->trainable, p.trainable) << p.name;
}

TEST(Checkpoint, HeaderLayout) {
  std::stringstream ss;
  write_network(ss, build_network(default_auxnet_spec(4), 3));
  const std::string b = ss.str();
  EXPECT_EQ(b.substr(0, 4), "AAXN");
  std::uint32_t version, name_len;
  std::memcpy(&version, b.data() + 4, 4);
  std::memcpy(&name_len, b.data() + 8, 4);
  EXPECT_EQ(version, 1u);
  EXPECT_EQ(b.substr(12, name_len), "auxnet-toy");
}

TEST(Checkpoint, Errors) {
  std::stringstream bad("ABCD");
  try {
    read_network(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::format);
  }
  try {
    load_network("/nonexistent/main.aaxn");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::missing_checkpoint);
    EXPECT_NE(std::string(e.what()).find("pretrain"), std::string::npos);
  }
  std::stringstream full;
  write_network(full, build_network(default_auxnet_spec(4), 3));
  std::stringstream cut(full.str().substr(0, full.str().size() - 3));
  EXPECT_THROW(read_network(cut), Error);
}

}  // namespace
}  // namespace auxadapt
