#include "fedsurg/lcs.hpp"

#include <cmath>

#include "fedsurg/errors.hpp"

namespace fedsurg::lcs {

namespace {

struct GateVars {
  ag::Var fc_weight, fc_bias, proj_weight, pixel_weight, pixel_bias;
};

ag::Var gate_impl(ag::Var features, ag::Var indicator, const GateVars& p, GateAxis axis) {
  if (features.shape().size() != 4) throw InputError("lcs gate: features must be [l,h,w,c]");
  const std::size_t c = features.shape()[3];
  const std::size_t d = indicator.value().size();
  if (axis == GateAxis::channel) {
    const Shape& ws = p.fc_weight.shape();
    if (ws.size() != 2 || ws[0] != c + d || ws[1] != c) {
      throw InputError("lcs gate: fc_weight " + shape_str(ws) + " incompatible with c=" + std::to_string(c) +
                       ", d=" + std::to_string(d));
    }
    ag::Var pooled = ag::global_avg_pool(features);
    return ag::sigmoid(ag::affine(ag::concat(pooled, indicator), p.fc_weight, p.fc_bias));
  }
  if (p.proj_weight.shape() != Shape{d, 1}) throw InputError("lcs gate: proj_weight must be [d,1]");
  ag::Var pooled_map = ag::channel_mean(features);
  ag::Var projected = ag::affine(indicator, p.proj_weight, features.tape().constant(Tensor(Shape{1})));
  return ag::sigmoid(ag::pixel_affine2(pooled_map, projected, p.pixel_weight, p.pixel_bias));
}

}  // namespace

LcsParams LcsParams::from(const model::ParameterSet& params, GateAxis axis) {
  LcsParams p;
  if (axis == GateAxis::channel) {
    p.fc_weight = params.at("lcs.fc.weight");
    p.fc_bias = params.at("lcs.fc.bias");
  } else {
    p.proj_weight = params.at("lcs.proj.weight");
    p.pixel_weight = params.at("lcs.pixel.weight");
    p.pixel_bias = params.at("lcs.pixel.bias");
  }
  return p;
}

void register_parameters(model::ParameterSet& params, GateAxis axis, std::size_t channels, std::size_t indicator_dim,
                         Rng& rng) {
  using model::Group;
  if (axis == GateAxis::channel) {
    // zero weights and bias: the initial gate is sigma(0) = 0.5 everywhere
    params.add("lcs.fc.weight", Tensor(Shape{channels + indicator_dim, channels}), Group::personalized);
    params.add("lcs.fc.bias", Tensor(Shape{channels}), Group::personalized);
    return;
  }
  // The projection is random so that the zero-initialised pixel FC still
  // receives an indicator-dependent gradient; the gate itself starts at 0.5.
  Tensor proj(Shape{indicator_dim, 1});
  const double bound = std::sqrt(1.0 / static_cast<double>(indicator_dim));
  for (auto& v : proj.data()) v = rng.uniform(-bound, bound);
  params.add("lcs.proj.weight", std::move(proj), Group::personalized);
  params.add("lcs.pixel.weight", Tensor(Shape{2, 1}), Group::personalized);
  params.add("lcs.pixel.bias", Tensor(Shape{1}), Group::personalized);
}

ChannelGate lcs_gate(const Tensor& features, const text::TextIndicator& indicator, const LcsParams& params,
                     GateAxis axis) {
  ag::Tape tape;
  GateVars v;
  if (axis == GateAxis::channel) {
    v.fc_weight = tape.constant(params.fc_weight);
    v.fc_bias = tape.constant(params.fc_bias);
  } else {
    v.proj_weight = tape.constant(params.proj_weight);
    v.pixel_weight = tape.constant(params.pixel_weight);
    v.pixel_bias = tape.constant(params.pixel_bias);
  }
  ag::Var g = gate_impl(tape.constant(features), tape.constant(indicator.vector), v, axis);
  return ChannelGate{g.value(), axis};
}

Tensor lcs_apply(const Tensor& features, const ChannelGate& gate) {
  ag::Tape tape;
  return apply(tape.constant(features), tape.constant(gate.values), gate.axis).value();
}

ag::Var gate(ag::Var features, ag::Var indicator, const model::BoundParameters& params, GateAxis axis) {
  GateVars v;
  if (axis == GateAxis::channel) {
    v.fc_weight = params("lcs.fc.weight");
    v.fc_bias = params("lcs.fc.bias");
  } else {
    v.proj_weight = params("lcs.proj.weight");
    v.pixel_weight = params("lcs.pixel.weight");
    v.pixel_bias = params("lcs.pixel.bias");
  }
  return gate_impl(features, indicator, v, axis);
}

ag::Var apply(ag::Var features, ag::Var gate, GateAxis axis) {
  const Shape& fs = features.shape();
  ag::Var broadcast;
  if (axis == GateAxis::channel) {
    if (gate.shape() != Shape{fs.at(3)}) throw DimensionError("lcs apply: channel gate must be [c]");
    broadcast = ag::broadcast_channels(gate, fs);
  } else {
    if (gate.shape() != Shape{fs.at(0), fs.at(1), fs.at(2)}) throw DimensionError("lcs apply: spatial gate must be [l,h,w]");
    broadcast = ag::broadcast_spatial(gate, fs[3]);
  }
  return ag::add(features, ag::mul(features, broadcast));
}

}  // namespace fedsurg::lcs
