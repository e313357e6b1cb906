#pragma once

// Language-guided channel selection: a per-site gate computed from pooled
// encoder features and the site indicator, applied with a residual so that
// F* = F + F * gate. Gate parameters are personalized and never aggregated.

#include "fedsurg/autograd.hpp"
#include "fedsurg/model.hpp"
#include "fedsurg/rng.hpp"
#include "fedsurg/tensor.hpp"
#include "fedsurg/text_embed.hpp"

namespace fedsurg::lcs {

using model::GateAxis;

/// Gate parameters. Channel axis uses fc_weight [(c+d), c] and fc_bias [c];
/// spatial axis uses proj_weight [d,1], pixel_weight [2,1], pixel_bias [1].
struct LcsParams {
  Tensor fc_weight;
  Tensor fc_bias;
  Tensor proj_weight;
  Tensor pixel_weight;
  Tensor pixel_bias;

  static LcsParams from(const model::ParameterSet& params, GateAxis axis);
};

/// Gate values in (0,1): shape [c] for the channel axis, [l,h,w] for spatial.
struct ChannelGate {
  Tensor values;
  GateAxis axis = GateAxis::channel;
};

/// Parameter names and shapes registered by build_model.
void register_parameters(model::ParameterSet& params, GateAxis axis, std::size_t channels, std::size_t indicator_dim,
                         Rng& rng);

ChannelGate lcs_gate(const Tensor& features, const text::TextIndicator& indicator, const LcsParams& params,
                     GateAxis axis);
Tensor lcs_apply(const Tensor& features, const ChannelGate& gate);

// Differentiable forms used inside the model forward pass.
ag::Var gate(ag::Var features, ag::Var indicator, const model::BoundParameters& params, GateAxis axis);
ag::Var apply(ag::Var features, ag::Var gate, GateAxis axis);

}  // namespace fedsurg::lcs
