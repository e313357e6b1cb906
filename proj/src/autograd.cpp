#include "fedsurg/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "fedsurg/errors.hpp"
#include "fedsurg/ops.hpp"

namespace fedsurg::ag {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::append(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  return append(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return append(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ContractViolation("autograd: operands recorded on different tapes");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return append(std::move(n));
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty()) {
    // lazily materialise zeros so callers always see a tensor of the right shape
    auto& mutable_node = const_cast<Node&>(n);
    mutable_node.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

Tensor* Tape::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractViolation("backward: loss belongs to another tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " + shape_str(nodes_[loss.id()].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  visited_ = 0;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor(nodes_[loss.id()].value.shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.is_leaf || !n.requires_grad || n.grad.empty()) continue;
    n.backward(*this, i);
    ++visited_;
  }
}

// ---------------------------------------------------------------------------

Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, Padding padding) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  if (bias.value().rank() != 1 || bias.value().dim(0) != g.out_c) throw DimensionError("conv2d: bias must be [c_out]");
  Tensor out(Shape{g.frames, g.out_h, g.out_w, g.out_c});
  kernels::conv2d_forward(g, input.value().data(), kernel.value().data(), bias.value().data(), out.data());
  return input.tape().record(std::move(out), {input, kernel, bias}, [g](Tape& t, std::size_t self) {
    const Tensor& go = t.grad(self);
    const std::size_t in_id = t.input(self, 0), k_id = t.input(self, 1), b_id = t.input(self, 2);
    if (Tensor* gi = t.grad_sink(in_id)) {
      Tensor tmp(gi->shape());
      kernels::conv2d_backward_input(g, go.data(), t.value(k_id).data(), tmp.data());
      add_inplace(*gi, tmp);
    }
    Tensor* gk = t.grad_sink(k_id);
    Tensor* gb = t.grad_sink(b_id);
    if (gk || gb) {
      Tensor dk(t.value(k_id).shape()), db(t.value(b_id).shape());
      kernels::conv2d_backward_params(g, t.value(in_id).data(), go.data(), dk.data(), db.data());
      if (gk) add_inplace(*gk, dk);
      if (gb) add_inplace(*gb, db);
    }
  });
}

Var affine(Var input, Var weight, Var bias) {
  Tensor out = ops::affine(input.value(), weight.value(), bias.value());
  return input.tape().record(std::move(out), {input, weight, bias}, [](Tape& t, std::size_t self) {
    const Tensor& go = t.grad(self);
    const std::size_t x_id = t.input(self, 0), w_id = t.input(self, 1), b_id = t.input(self, 2);
    const Tensor& x = t.value(x_id);
    const Tensor& w = t.value(w_id);
    const std::size_t n = x.size(), m = go.size();
    if (Tensor* gx = t.grad_sink(x_id)) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += w[i * m + j] * go[j];
        (*gx)[i] += s;
      }
    }
    if (Tensor* gw = t.grad_sink(w_id)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) (*gw)[i * m + j] += x[i] * go[j];
    }
    if (Tensor* gb = t.grad_sink(b_id)) add_inplace(*gb, go);
  });
}

Var sigmoid(Var x) {
  Tensor out = ops::sigmoid(x.value());
  return x.tape().record(std::move(out), {x}, [](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const Tensor& y = t.value(self);
      const Tensor& go = t.grad(self);
      for (std::size_t i = 0; i < y.size(); ++i) (*gx)[i] += go[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var relu(Var x) {
  Tensor out = ops::relu(x.value());
  return x.tape().record(std::move(out), {x}, [](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const Tensor& xin = t.value(t.input(self, 0));
      const Tensor& go = t.grad(self);
      for (std::size_t i = 0; i < xin.size(); ++i) {
        if (xin[i] > 0.0) (*gx)[i] += go[i];
      }
    }
  });
}

Var softmax(Var scores) {
  Tensor out = ops::softmax(scores.value());
  return scores.tape().record(std::move(out), {scores}, [](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const Tensor& y = t.value(self);
      const Tensor& go = t.grad(self);
      const double inner = fedsurg::dot(y, go);
      for (std::size_t i = 0; i < y.size(); ++i) (*gx)[i] += y[i] * (go[i] - inner);
    }
  });
}

Var global_avg_pool(Var input) {
  Tensor out = ops::global_avg_pool(input.value());
  return input.tape().record(std::move(out), {input}, [](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const Tensor& go = t.grad(self);
      const std::size_t c = go.size();
      const std::size_t positions = gx->size() / c;
      const double inv = 1.0 / static_cast<double>(positions);
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) (*gx)[p * c + ch] += go[ch] * inv;
    }
  });
}

Var channel_mean(Var input) {
  Tensor out = ops::channel_mean(input.value());
  const std::size_t c = input.value().dim(3);
  return input.tape().record(std::move(out), {input}, [c](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const Tensor& go = t.grad(self);
      const double inv = 1.0 / static_cast<double>(c);
      for (std::size_t p = 0; p < go.size(); ++p)
        for (std::size_t ch = 0; ch < c; ++ch) (*gx)[p * c + ch] += go[p] * inv;
    }
  });
}

Var concat(Var a, Var b) {
  Tensor out = ops::concat(a.value(), b.value());
  const std::size_t na = a.value().size();
  return a.tape().record(std::move(out), {a, b}, [na](Tape& t, std::size_t self) {
    const Tensor& go = t.grad(self);
    if (Tensor* ga = t.grad_sink(t.input(self, 0))) {
      for (std::size_t i = 0; i < na; ++i) (*ga)[i] += go[i];
    }
    if (Tensor* gb = t.grad_sink(t.input(self, 1))) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += go[na + i];
    }
  });
}

Var upsample2x(Var input) {
  Tensor out = ops::upsample2x(input.value());
  return input.tape().record(std::move(out), {input}, [](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const Tensor& go = t.grad(self);
      const std::size_t n = gx->dim(0), h = gx->dim(1), w = gx->dim(2), c = gx->dim(3);
      for (std::size_t f = 0; f < n; ++f)
        for (std::size_t y = 0; y < 2 * h; ++y)
          for (std::size_t x = 0; x < 2 * w; ++x) {
            const double* src = go.data().data() + ((f * 2 * h + y) * 2 * w + x) * c;
            double* dst = gx->data().data() + ((f * h + y / 2) * w + x / 2) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const Tensor& go = t.grad(self);
      for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
    }
  });
}

Var broadcast_channels(Var gate, const Shape& shape) {
  const std::size_t c = gate.value().size();
  if (gate.value().rank() != 1 || shape.empty() || shape.back() != c) {
    throw DimensionError("broadcast_channels: gate " + shape_str(gate.shape()) + " vs " + shape_str(shape));
  }
  Tensor out(shape);
  const std::size_t positions = out.size() / c;
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out[p * c + ch] = gate.value()[ch];
  return gate.tape().record(std::move(out), {gate}, [c](Tape& t, std::size_t self) {
    if (Tensor* gg = t.grad_sink(t.input(self, 0))) {
      const Tensor& go = t.grad(self);
      const std::size_t positions = go.size() / c;
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) (*gg)[ch] += go[p * c + ch];
    }
  });
}

Var broadcast_spatial(Var gate, std::size_t channels) {
  Shape shape = gate.shape();
  shape.push_back(channels);
  Tensor out(shape);
  const std::size_t positions = gate.value().size();
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t ch = 0; ch < channels; ++ch) out[p * channels + ch] = gate.value()[p];
  return gate.tape().record(std::move(out), {gate}, [channels](Tape& t, std::size_t self) {
    if (Tensor* gg = t.grad_sink(t.input(self, 0))) {
      const Tensor& go = t.grad(self);
      for (std::size_t p = 0; p < gg->size(); ++p) {
        double s = 0.0;
        for (std::size_t ch = 0; ch < channels; ++ch) s += go[p * channels + ch];
        (*gg)[p] += s;
      }
    }
  });
}

Var chunk_broadcast(Var chunks, std::size_t length) {
  const std::size_t groups = chunks.value().size();
  if (groups == 0 || length == 0) throw DimensionError("chunk_broadcast: empty operand");
  const std::size_t width = (length + groups - 1) / groups;
  Tensor out(Shape{length});
  for (std::size_t i = 0; i < length; ++i) out[i] = chunks.value()[i / width];
  return chunks.tape().record(std::move(out), {chunks}, [width](Tape& t, std::size_t self) {
    if (Tensor* gc = t.grad_sink(t.input(self, 0))) {
      const Tensor& go = t.grad(self);
      for (std::size_t i = 0; i < go.size(); ++i) (*gc)[i / width] += go[i];
    }
  });
}

Var add(Var a, Var b) {
  Tensor out = fedsurg::add(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const Tensor& go = t.grad(self);
    if (Tensor* ga = t.grad_sink(t.input(self, 0))) add_inplace(*ga, go);
    if (Tensor* gb = t.grad_sink(t.input(self, 1))) add_inplace(*gb, go);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const Tensor& go = t.grad(self);
    const std::size_t a_id = t.input(self, 0), b_id = t.input(self, 1);
    if (Tensor* ga = t.grad_sink(a_id)) {
      const Tensor& bv = t.value(b_id);
      for (std::size_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i] * bv[i];
    }
    if (Tensor* gb = t.grad_sink(b_id)) {
      const Tensor& av = t.value(a_id);
      for (std::size_t i = 0; i < go.size(); ++i) (*gb)[i] += go[i] * av[i];
    }
  });
}

Var scale_shift(Var x, double factor, double offset) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = factor * v + offset;
  return x.tape().record(std::move(out), {x}, [factor](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) axpy_inplace(*gx, factor, t.grad(self));
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const double go = t.grad(self).item();
      for (auto& g : gx->data()) g += go;
    }
  });
}

Var mean(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.value().size());
  return x.tape().record(Tensor::scalar(s * inv), {x}, [inv](Tape& t, std::size_t self) {
    if (Tensor* gx = t.grad_sink(t.input(self, 0))) {
      const double go = t.grad(self).item() * inv;
      for (auto& g : gx->data()) g += go;
    }
  });
}

Var dot(Var a, Var b) {
  const double s = fedsurg::dot(a.value(), b.value());
  return a.tape().record(Tensor::scalar(s), {a, b}, [](Tape& t, std::size_t self) {
    const double go = t.grad(self).item();
    const std::size_t a_id = t.input(self, 0), b_id = t.input(self, 1);
    if (Tensor* ga = t.grad_sink(a_id)) axpy_inplace(*ga, go, t.value(b_id).reshaped(ga->shape()));
    if (Tensor* gb = t.grad_sink(b_id)) axpy_inplace(*gb, go, t.value(a_id).reshaped(gb->shape()));
  });
}

Var pixel_affine2(Var map, Var s, Var weight, Var bias) {
  if (s.value().size() != 1 || weight.value().size() != 2 || bias.value().size() != 1) {
    throw DimensionError("pixel_affine2: expected scalar s, weight [2,1], bias [1]");
  }
  const double w0 = weight.value()[0], w1 = weight.value()[1], b = bias.value()[0];
  const double sv = s.value()[0];
  Tensor out = map.value();
  for (auto& v : out.data()) v = w0 * v + w1 * sv + b;
  return map.tape().record(std::move(out), {map, s, weight, bias}, [](Tape& t, std::size_t self) {
    const Tensor& go = t.grad(self);
    const std::size_t m_id = t.input(self, 0), s_id = t.input(self, 1), w_id = t.input(self, 2),
                      b_id = t.input(self, 3);
    const Tensor& m = t.value(m_id);
    const Tensor& w = t.value(w_id);
    double total = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) {
      total += go[i];
      weighted += go[i] * m[i];
    }
    if (Tensor* gm = t.grad_sink(m_id)) axpy_inplace(*gm, w[0], go);
    if (Tensor* gs = t.grad_sink(s_id)) (*gs)[0] += w[1] * total;
    if (Tensor* gw = t.grad_sink(w_id)) {
      (*gw)[0] += weighted;
      (*gw)[1] += t.value(s_id)[0] * total;
    }
    if (Tensor* gb = t.grad_sink(b_id)) (*gb)[0] += total;
  });
}

Var cross_entropy(Var logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.rank() < 2) throw DimensionError("cross_entropy: logits must be [..., C]");
  const std::size_t classes = z.shape().back();
  const std::size_t positions = z.size() / classes;
  if (targets.size() != positions) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(positions) + " positions");
  }
  std::vector<std::size_t> ids(positions);
  for (std::size_t p = 0; p < positions; ++p) {
    const double v = targets[p];
    if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(classes)) {
      throw InputError("cross_entropy: target " + std::to_string(v) + " outside [0," + std::to_string(classes) + ")");
    }
    ids[p] = static_cast<std::size_t>(v);
  }
  Tensor probs(z.shape());
  double loss = 0.0;
  for (std::size_t p = 0; p < positions; ++p) {
    const double* row = z.data().data() + p * classes;
    const double m = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[p * classes + c] = std::exp(row[c] - m);
      total += probs[p * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[p * classes + c] /= total;
    loss += (std::log(total) + m) - row[ids[p]];
  }
  const double inv = 1.0 / static_cast<double>(positions);
  return logits.tape().record(
      Tensor::scalar(loss * inv), {logits},
      [probs = std::move(probs), ids = std::move(ids), classes, inv](Tape& t, std::size_t self) {
        if (Tensor* gz = t.grad_sink(t.input(self, 0))) {
          const double go = t.grad(self).item() * inv;
          for (std::size_t p = 0; p < ids.size(); ++p) {
            for (std::size_t c = 0; c < classes; ++c) {
              const double onehot = c == ids[p] ? 1.0 : 0.0;
              (*gz)[p * classes + c] += go * (probs[p * classes + c] - onehot);
            }
          }
        }
      });
}

Var l1_loss(Var prediction, const Tensor& target) {
  if (prediction.value().size() != target.size()) {
    throw DimensionError("l1_loss: prediction " + shape_str(prediction.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) s += std::abs(prediction.value()[i] - target[i]);
  const double inv = 1.0 / static_cast<double>(target.size());
  return prediction.tape().record(Tensor::scalar(s * inv), {prediction}, [target, inv](Tape& t, std::size_t self) {
    if (Tensor* gp = t.grad_sink(t.input(self, 0))) {
      const Tensor& p = t.value(t.input(self, 0));
      const double go = t.grad(self).item() * inv;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - target[i];
        (*gp)[i] += d > 0.0 ? go : (d < 0.0 ? -go : 0.0);
      }
    }
  });
}

}  // namespace fedsurg::ag
