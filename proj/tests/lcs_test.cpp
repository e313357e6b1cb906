#include <gtest/gtest.h>

#include <cmath>

#include "fedsurg/errors.hpp"
#include "fedsurg/lcs.hpp"
#include "test_support.hpp"

using namespace fedsurg;
using namespace fedsurg::lcs;
using fedsurg::check::random_tensor;

namespace {

text::TextIndicator make_ind(std::vector<double> v) {
  text::TextIndicator t;
  const std::size_t n = v.size();
  t.vector = Tensor(Shape{n}, std::move(v));
  return t;
}

LcsParams zero_channel(std::size_t c, std::size_t d) {
  LcsParams p;
  p.fc_weight = Tensor(Shape{c + d, c});
  p.fc_bias = Tensor(Shape{c});
  return p;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// F is [1,2,2,2]; values indexed (y, x, ch).
Tensor feature_block() { return Tensor(Shape{1, 2, 2, 2}, {1.0, -2.0, 3.0, 0.5, -1.0, 4.0, 0.0, 2.5}); }

}  // namespace

TEST(LcsGate, ZeroParametersGiveOneHalf) {
  Rng rng(1);
  Tensor f = random_tensor(rng, {1, 4, 4, 8});
  ChannelGate g = lcs_gate(f, text::embed_prompt("x", 64), zero_channel(8, 64), GateAxis::channel);
  ASSERT_EQ(g.values.shape(), Shape{8});
  for (double v : g.values.data()) EXPECT_EQ(v, 0.5);
}

TEST(LcsGate, LargeBiasSaturates) {
  Rng rng(2);
  Tensor f = random_tensor(rng, {1, 4, 4, 8});
  LcsParams p = zero_channel(8, 64);
  p.fc_bias.fill(20.0);
  ChannelGate g = lcs_gate(f, text::embed_prompt("x", 64), p, GateAxis::channel);
  for (double v : g.values.data()) EXPECT_GT(v, 0.9999);
}

TEST(LcsGate, ChannelHandSetWeightsMatchOracle) {
  Tensor f = feature_block();
  auto ind = make_ind({0.3, -0.7});
  LcsParams p;
  p.fc_weight = Tensor(Shape{4, 2}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8});
  p.fc_bias = Tensor::vector({0.05, -0.1});
  // oracle: pooled = per-channel mean over the four pixels, z = [pooled, xi] W + b
  const double m0 = (1.0 + 3.0 - 1.0 + 0.0) / 4.0;
  const double m1 = (-2.0 + 0.5 + 4.0 + 2.5) / 4.0;
  const double z[4] = {m0, m1, 0.3, -0.7};
  for (std::size_t j = 0; j < 2; ++j) {
    double acc = p.fc_bias[j];
    for (std::size_t i = 0; i < 4; ++i) acc += z[i] * p.fc_weight[i * 2 + j];
    EXPECT_NEAR(lcs_gate(f, ind, p, GateAxis::channel).values[j], sig(acc), 1e-12);
  }
}

TEST(LcsGate, SpatialHandSetWeightsMatchOracle) {
  Tensor f = feature_block();
  auto ind = make_ind({0.3, -0.7});
  LcsParams p;
  p.proj_weight = Tensor(Shape{2, 1}, {0.9, 0.2});
  p.pixel_weight = Tensor(Shape{2, 1}, {0.6, -1.1});
  p.pixel_bias = Tensor::vector({0.25});
  ChannelGate g = lcs_gate(f, ind, p, GateAxis::spatial);
  ASSERT_EQ(g.values.shape(), (Shape{1, 2, 2}));
  const double s = 0.3 * 0.9 - 0.7 * 0.2;
  for (std::size_t px = 0; px < 4; ++px) {
    const double mean = (f[px * 2] + f[px * 2 + 1]) / 2.0;
    EXPECT_NEAR(g.values[px], sig(0.6 * mean - 1.1 * s + 0.25), 1e-12);
  }
}

TEST(LcsApply, ResidualForm) {
  Tensor f(Shape{1, 1, 1, 1}, 2.0);
  ChannelGate half{Tensor::vector({0.5}), GateAxis::channel};
  EXPECT_EQ(lcs_apply(f, half)[0], 3.0);

  Rng rng(3);
  Tensor big = random_tensor(rng, {2, 3, 3, 4});
  EXPECT_EQ(lcs_apply(big, ChannelGate{Tensor(Shape{4}), GateAxis::channel}), big);
  EXPECT_EQ(lcs_apply(big, ChannelGate{Tensor(Shape{2, 3, 3}), GateAxis::spatial}), big);
}

TEST(LcsApply, RatioBandAndSignPreserved) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor(rng, {1, 3, 3, 5}, -3, 3);
    Tensor gv = random_tensor(rng, {5}, 1e-3, 1 - 1e-3);
    Tensor out = lcs_apply(f, ChannelGate{gv, GateAxis::channel});
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] == 0.0) continue;
      const double r = out[i] / f[i];
      EXPECT_GT(r, 1.0);
      EXPECT_LT(r, 2.0);
      EXPECT_GE(out[i] * f[i], 0.0);
      EXPECT_GE(std::abs(out[i]), std::abs(f[i]));
      EXPECT_LE(std::abs(out[i]), 2 * std::abs(f[i]));
    }
  }
}

TEST(LcsGate, DimensionMismatchRejected) {
  Rng rng(5);
  Tensor f = random_tensor(rng, {1, 2, 2, 8});
  EXPECT_THROW(lcs_gate(f, text::embed_prompt("x", 32), zero_channel(8, 64), GateAxis::channel), InputError);
  LcsParams sp;
  sp.proj_weight = Tensor(Shape{64, 1});
  sp.pixel_weight = Tensor(Shape{2, 1});
  sp.pixel_bias = Tensor(Shape{1});
  EXPECT_THROW(lcs_gate(f, text::embed_prompt("x", 32), sp, GateAxis::spatial), InputError);
  EXPECT_THROW(lcs_apply(f, ChannelGate{Tensor(Shape{7}), GateAxis::channel}), DimensionError);
}

TEST(LcsGradients, GateAndApplyMatchFiniteDifferences) {
  Rng rng(6);
  for (GateAxis axis : {GateAxis::channel, GateAxis::spatial}) {
    for (int seed = 0; seed < 20; ++seed) {
      model::ParameterSet ps;
      register_parameters(ps, axis, 3, 2, rng);
      for (auto& e : ps.entries())
        for (auto& v : e.value.data()) v = rng.uniform(-1, 1);
      std::vector<Tensor> inputs{random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {2})};
      for (const auto& e : ps.entries()) inputs.push_back(e.value);
      Tensor probe = random_tensor(rng, {1, 2, 3, 3});
      auto build = [&](ag::Tape&, const std::vector<ag::Var>& v) {
        model::BoundParameters bound(ps, std::vector<ag::Var>(v.begin() + 2, v.end()));
        return check::weighted_sum(apply(v[0], gate(v[0], v[1], bound, axis), axis), probe);
      };
      auto r = check::check_gradients(inputs, build);
      EXPECT_LT(r.max_rel_error, 1e-6) << model::to_string(axis) << " seed " << seed;
    }
  }
}
