#pragma once

// Server-side hyper aggregation. For every shared layer the sites' updates
// are stacked, each site attends over the others' updates, the attended
// update is scaled by a small language-conditioned gate network, and the
// result is added to the site's locally trained weights with a learned
// per-(site, layer) coefficient psi.

#include <cstdint>
#include <string>
#include <vector>

#include "fedsurg/adam.hpp"
#include "fedsurg/autograd.hpp"
#include "fedsurg/model.hpp"
#include "fedsurg/tensor.hpp"

namespace fedsurg::lha {

/// Row k is site k's flattened update at one layer.
struct LayerUpdateMatrix {
  std::string layer;
  Tensor rows;  // [K, d]

  std::size_t sites() const { return rows.dim(0); }
  std::size_t width() const { return rows.dim(1); }
  Tensor row(std::size_t k) const;
};

LayerUpdateMatrix stack_updates(const std::vector<model::ParameterSet>& deltas, const std::string& layer);

/// softmax(V . row_k / sqrt(d)), strictly positive, sums to 1.
Tensor attention_weights(const LayerUpdateMatrix& v, std::size_t k);
/// Convex combination of the rows of V under attention_weights(v, k).
Tensor cross_attention(const LayerUpdateMatrix& v, std::size_t k);

/// FC from [mean(A), indicator] to G chunk logits. Shared across layers and sites.
struct GateNet {
  Tensor weight;  // [(1 + d), G]
  Tensor bias;    // [G]
  AdamState weight_state;
  AdamState bias_state;

  static GateNet zeros(std::size_t indicator_dim, std::size_t chunks, double learning_rate = 1e-3);
  std::size_t chunks() const { return bias.size(); }
  std::size_t indicator_dim() const { return weight.dim(0) - 1; }
};

/// Chunk gate values in (0,1)^G.
Tensor gate_chunks(const Tensor& attended, const Tensor& indicator, const GateNet& net);

/// A * (1 + xi*), xi* the chunk gate broadcast over contiguous blocks of
/// ceil(d/G). With `zero_gate` the gate is forced to 0 and A is returned.
Tensor language_gate(const Tensor& attended, const Tensor& indicator, const GateNet& net, bool zero_gate = false);
ag::Var language_gate(ag::Var attended, ag::Var indicator, ag::Var weight, ag::Var bias);

enum class PsiUpdate { adam, raw };
std::string_view to_string(PsiUpdate mode);
PsiUpdate parse_psi_update(std::string_view name);

/// One scalar per (site, layer), each with its own Adam moments.
class PsiTable {
 public:
  PsiTable() = default;
  PsiTable(std::size_t sites, std::size_t layers, double learning_rate = 1e-3, double limit = 10.0);

  std::size_t sites() const { return values_.dim(0); }
  std::size_t layers() const { return values_.dim(1); }
  double at(std::size_t k, std::size_t l) const { return values_[k * layers() + l]; }
  const Tensor& values() const { return values_; }

  /// Alignment step from the gated update and the site's own update.
  /// Returns true when the result was clamped to [-limit, limit].
  bool update(std::size_t k, std::size_t l, const Tensor& gated, const Tensor& delta, PsiUpdate mode);

 private:
  Tensor values_;
  std::vector<ScalarAdam> optimizers_;
  double limit_ = 10.0;
};

/// w = local + psi[l] * gated[l] on the listed layers; every other layer
/// keeps its local value. Terms with psi == 0 are skipped.
model::ParameterSet aggregate_site(const model::ParameterSet& local, const std::vector<std::string>& layers,
                                   const std::vector<Tensor>& gated, const std::vector<double>& psi_row);

/// One (site, layer) contribution to the gate-net objective.
struct GateTerm {
  Tensor attended;   // A_{k,l}
  Tensor delta;      // dw_{k,l}
  Tensor indicator;  // site indicator
  double psi = 0.0;
};

/// -sum psi <A~(theta), dw> / d over the terms, in order.
double surrogate_loss(const GateNet& net, const std::vector<GateTerm>& terms);
/// Gradient of surrogate_loss with respect to (weight, bias).
std::pair<Tensor, Tensor> surrogate_gradient(const GateNet& net, const std::vector<GateTerm>& terms);
/// One Adam step on the surrogate. Returns the loss before the step.
double train_gate_net(GateNet& net, const std::vector<GateTerm>& terms);

struct LhaConfig {
  std::size_t chunks = 16;
  double psi_learning_rate = 1e-3;
  double gate_learning_rate = 1e-3;
  double psi_limit = 10.0;
  PsiUpdate psi_update = PsiUpdate::adam;
  bool zero_gate = false;
};

struct LayerDiagnostics {
  std::string layer;
  Tensor attention;                 // [K, K], row k is site k's weights
  std::vector<double> gate_means;   // mean chunk gate per site
};

struct RoundOutcome {
  std::vector<model::ParameterSet> params;
  std::vector<LayerDiagnostics> layers;
  Tensor psi;  // after this round's update
  double surrogate_loss = 0.0;
  std::size_t psi_clamped = 0;
};

/// Holds psi and the gate net across rounds.
class LhaServer {
 public:
  LhaServer(std::size_t sites, std::vector<std::string> layers, std::size_t indicator_dim, LhaConfig config);

  /// previous[k] are the weights each site started the round from, local[k]
  /// its locally trained weights. Aggregation uses psi from before the update.
  RoundOutcome aggregate(const std::vector<model::ParameterSet>& previous,
                         const std::vector<model::ParameterSet>& local, const std::vector<Tensor>& indicators);

  const PsiTable& psi() const { return psi_; }
  const GateNet& gate_net() const { return net_; }
  const std::vector<std::string>& layers() const { return layers_; }

 private:
  std::vector<std::string> layers_;
  LhaConfig config_;
  PsiTable psi_;
  GateNet net_;
};

}  // namespace fedsurg::lha
