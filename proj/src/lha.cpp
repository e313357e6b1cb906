#include "fedsurg/lha.hpp"

#include <algorithm>
#include <cmath>

#include "fedsurg/errors.hpp"
#include "fedsurg/ops.hpp"

namespace fedsurg::lha {

Tensor LayerUpdateMatrix::row(std::size_t k) const {
  const std::size_t d = width();
  std::vector<double> v(rows.data().begin() + static_cast<std::ptrdiff_t>(k * d),
                        rows.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
  return Tensor(Shape{d}, std::move(v));
}

LayerUpdateMatrix stack_updates(const std::vector<model::ParameterSet>& deltas, const std::string& layer) {
  if (deltas.empty()) throw ContractViolation("stack_updates: no sites");
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (!deltas[k].contains(layer)) {
      throw ContractViolation("stack_updates: site " + std::to_string(k) + " has no layer " + layer);
    }
  }
  const Shape& shape = deltas[0].at(layer).shape();
  const std::size_t d = shape_size(shape);
  Tensor rows(Shape{deltas.size(), d});
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const Tensor& t = deltas[k].at(layer);
    if (t.shape() != shape) {
      throw ContractViolation("stack_updates: layer " + layer + " has shape " + shape_str(t.shape()) + " at site " +
                              std::to_string(k) + ", expected " + shape_str(shape));
    }
    std::copy(t.data().begin(), t.data().end(), rows.data().begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  return LayerUpdateMatrix{layer, std::move(rows)};
}

Tensor attention_weights(const LayerUpdateMatrix& v, std::size_t k) {
  const std::size_t n = v.sites(), d = v.width();
  if (k >= n) throw InputError("cross_attention: site index out of range");
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  const auto rows = v.rows.data();
  Tensor scores(Shape{n});
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += rows[j * d + i] * rows[k * d + i];
    scores[j] = s * inv;
  }
  return ops::softmax(scores);
}

Tensor cross_attention(const LayerUpdateMatrix& v, std::size_t k) {
  const Tensor w = attention_weights(v, k);
  const std::size_t n = v.sites(), d = v.width();
  const auto rows = v.rows.data();
  // written relative to row k so equal rows reproduce it exactly
  Tensor out = v.row(k);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == k) continue;
    for (std::size_t i = 0; i < d; ++i) out[i] += w[j] * (rows[j * d + i] - rows[k * d + i]);
  }
  return out;
}

GateNet GateNet::zeros(std::size_t indicator_dim, std::size_t chunks, double learning_rate) {
  if (chunks == 0) throw InputError("gate net needs at least one chunk");
  GateNet net;
  net.weight = Tensor(Shape{indicator_dim + 1, chunks});
  net.bias = Tensor(Shape{chunks});
  AdamConfig cfg;
  cfg.learning_rate = learning_rate;
  net.weight_state = AdamState(net.weight.shape(), cfg);
  net.bias_state = AdamState(net.bias.shape(), cfg);
  return net;
}

namespace {

void check_indicator(const Tensor& indicator, const Tensor& weight) {
  if (indicator.rank() != 1 || indicator.size() + 1 != weight.dim(0)) {
    throw InputError("language gate: indicator " + shape_str(indicator.shape()) + " does not match gate net input " +
                     std::to_string(weight.dim(0) - 1));
  }
}

ag::Var chunk_gate(ag::Var attended, ag::Var indicator, ag::Var weight, ag::Var bias) {
  ag::Var pooled = ag::reshape(ag::mean(attended), Shape{1});
  return ag::sigmoid(ag::affine(ag::concat(pooled, indicator), weight, bias));
}

}  // namespace

Tensor gate_chunks(const Tensor& attended, const Tensor& indicator, const GateNet& net) {
  check_indicator(indicator, net.weight);
  ag::Tape tape;
  return chunk_gate(tape.constant(attended), tape.constant(indicator), tape.constant(net.weight),
                    tape.constant(net.bias))
      .value();
}

ag::Var language_gate(ag::Var attended, ag::Var indicator, ag::Var weight, ag::Var bias) {
  check_indicator(indicator.value(), weight.value());
  ag::Var chunks = chunk_gate(attended, indicator, weight, bias);
  ag::Var gate = ag::chunk_broadcast(chunks, attended.value().size());
  return ag::add(attended, ag::mul(attended, gate));
}

Tensor language_gate(const Tensor& attended, const Tensor& indicator, const GateNet& net, bool zero_gate) {
  if (zero_gate) return attended;
  ag::Tape tape;
  return language_gate(tape.constant(attended), tape.constant(indicator), tape.constant(net.weight),
                       tape.constant(net.bias))
      .value();
}

std::string_view to_string(PsiUpdate mode) { return mode == PsiUpdate::adam ? "adam" : "raw"; }

PsiUpdate parse_psi_update(std::string_view name) {
  if (name == "adam") return PsiUpdate::adam;
  if (name == "raw") return PsiUpdate::raw;
  throw InputError("unknown psi_update mode '" + std::string(name) + "' (expected adam or raw)");
}

PsiTable::PsiTable(std::size_t sites, std::size_t layers, double learning_rate, double limit)
    : values_(Shape{std::max<std::size_t>(sites, 1), std::max<std::size_t>(layers, 1)}),
      optimizers_(values_.size()),
      limit_(limit) {
  if (sites == 0 || layers == 0) throw InputError("psi table needs at least one site and one layer");
  for (auto& o : optimizers_) o.config.learning_rate = learning_rate;
}

bool PsiTable::update(std::size_t k, std::size_t l, const Tensor& gated, const Tensor& delta, PsiUpdate mode) {
  if (k >= sites() || l >= layers()) throw InputError("psi update: index out of range");
  const double inner = dot(gated, delta);
  const std::size_t idx = k * layers() + l;
  ScalarAdam& opt = optimizers_[idx];
  if (opt.config.learning_rate == 0.0) return false;  // frozen
  double next = values_[idx];
  if (mode == PsiUpdate::adam) {
    next = opt.step(next, -inner / static_cast<double>(gated.size()));
  } else {
    next += inner;
  }
  const bool clamped = std::abs(next) > limit_;
  values_[idx] = std::clamp(next, -limit_, limit_);
  return clamped;
}

model::ParameterSet aggregate_site(const model::ParameterSet& local, const std::vector<std::string>& layers,
                                   const std::vector<Tensor>& gated, const std::vector<double>& psi_row) {
  if (gated.size() != layers.size() || psi_row.size() != layers.size()) {
    throw ContractViolation("aggregate_site: layers, gated updates and psi row differ in length");
  }
  model::ParameterSet out = local;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Tensor& w = out.at(layers[l]);
    if (w.size() != gated[l].size()) throw ContractViolation("aggregate_site: gated update size for " + layers[l]);
    if (psi_row[l] == 0.0) continue;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += psi_row[l] * gated[l][i];
  }
  return out;
}

namespace {

ag::Var surrogate_graph(ag::Tape& tape, ag::Var weight, ag::Var bias, const std::vector<GateTerm>& terms) {
  ag::Var total = tape.constant(Tensor::scalar(0.0));
  for (const GateTerm& t : terms) {
    if (t.psi == 0.0) continue;
    ag::Var gated = language_gate(tape.constant(t.attended), tape.constant(t.indicator), weight, bias);
    ag::Var inner = ag::dot(gated, tape.constant(t.delta));
    total = ag::add(total, ag::scale_shift(inner, -t.psi / static_cast<double>(t.delta.size()), 0.0));
  }
  return total;
}

}  // namespace

double surrogate_loss(const GateNet& net, const std::vector<GateTerm>& terms) {
  ag::Tape tape;
  return surrogate_graph(tape, tape.constant(net.weight), tape.constant(net.bias), terms).value().item();
}

std::pair<Tensor, Tensor> surrogate_gradient(const GateNet& net, const std::vector<GateTerm>& terms) {
  ag::Tape tape;
  ag::Var w = tape.leaf(net.weight);
  ag::Var b = tape.leaf(net.bias);
  ag::Var loss = surrogate_graph(tape, w, b, terms);
  tape.backward(loss);
  return {tape.grad(w.id()), tape.grad(b.id())};
}

double train_gate_net(GateNet& net, const std::vector<GateTerm>& terms) {
  const double before = surrogate_loss(net, terms);
  if (net.weight_state.config.learning_rate == 0.0) return before;
  auto [gw, gb] = surrogate_gradient(net, terms);
  adam_step(net.weight, gw, net.weight_state);
  adam_step(net.bias, gb, net.bias_state);
  return before;
}

LhaServer::LhaServer(std::size_t sites, std::vector<std::string> layers, std::size_t indicator_dim, LhaConfig config)
    : layers_(std::move(layers)),
      config_(config),
      psi_(sites, layers_.size(), config.psi_learning_rate, config.psi_limit),
      net_(GateNet::zeros(indicator_dim, config.chunks, config.gate_learning_rate)) {}

RoundOutcome LhaServer::aggregate(const std::vector<model::ParameterSet>& previous,
                                  const std::vector<model::ParameterSet>& local,
                                  const std::vector<Tensor>& indicators) {
  const std::size_t n = local.size();
  if (n != psi_.sites() || previous.size() != n || indicators.size() != n) {
    throw ContractViolation("lha aggregate: expected " + std::to_string(psi_.sites()) + " sites");
  }
  const std::size_t nl = layers_.size();
  std::vector<model::ParameterSet> deltas;
  deltas.reserve(n);
  for (std::size_t k = 0; k < n; ++k) deltas.push_back(model::subtract(local[k], previous[k]));

  RoundOutcome out;
  // gated[k][l], attended[k][l]
  std::vector<std::vector<Tensor>> attended(n, std::vector<Tensor>(nl)), gated(n, std::vector<Tensor>(nl));
  std::vector<LayerUpdateMatrix> stacked;
  stacked.reserve(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    stacked.push_back(stack_updates(deltas, layers_[l]));
    LayerDiagnostics diag{layers_[l], Tensor(Shape{n, n}), std::vector<double>(n)};
#pragma omp parallel for schedule(static) if (n > 1)
    for (std::size_t k = 0; k < n; ++k) {
      const Tensor w = attention_weights(stacked[l], k);
      for (std::size_t j = 0; j < n; ++j) diag.attention[k * n + j] = w[j];
      attended[k][l] = cross_attention(stacked[l], k);
      if (config_.zero_gate) {
        gated[k][l] = attended[k][l];
        diag.gate_means[k] = 0.0;
      } else {
        const Tensor chunks = gate_chunks(attended[k][l], indicators[k], net_);
        double s = 0.0;
        for (double c : chunks.data()) s += c;
        diag.gate_means[k] = s / static_cast<double>(chunks.size());
        gated[k][l] = language_gate(attended[k][l], indicators[k], net_);
      }
    }
    out.layers.push_back(std::move(diag));
  }

  out.params.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> row(nl);
    for (std::size_t l = 0; l < nl; ++l) row[l] = psi_.at(k, l);
    out.params[k] = aggregate_site(local[k], layers_, gated[k], row);
  }

  std::vector<GateTerm> terms;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < nl; ++l) {
      const Tensor delta = stacked[l].row(k);
      if (psi_.update(k, l, gated[k][l], delta, config_.psi_update)) ++out.psi_clamped;
      if (!config_.zero_gate) terms.push_back(GateTerm{attended[k][l], delta, indicators[k], psi_.at(k, l)});
    }
  }
  out.surrogate_loss = config_.zero_gate ? 0.0 : train_gate_net(net_, terms);
  out.psi = psi_.values();
  return out;
}

}  // namespace fedsurg::lha
