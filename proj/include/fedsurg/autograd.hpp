#pragma once

// Tape-based reverse-mode differentiation. A Tape records one forward pass;
// nodes are appended in evaluation order, so the insertion order is already
// topological and backward() simply walks it in reverse.

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "fedsurg/kernels.hpp"
#include "fedsurg/tensor.hpp"

namespace fedsurg::ag {

class Tape;

/// Handle to one node of a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient after Tape::backward; zero-filled for nodes off the loss path.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  /// Appends an operation node. It requires a gradient iff any input does.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node. `loss` must hold
  /// exactly one element. Gradients from earlier calls are discarded.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  /// Number of nodes whose backward function ran during the last backward().
  std::size_t visited() const { return visited_; }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t input(std::size_t node, std::size_t i) const { return nodes_[node].inputs[i]; }
  /// Accumulation target for the gradient of node `id`, or nullptr when the
  /// node needs no gradient.
  Tensor* grad_sink(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  Var append(Node node);

  std::deque<Node> nodes_;
  std::size_t visited_ = 0;
};

// ---- differentiable operations ----

Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, Padding padding = Padding::same);
Var affine(Var input, Var weight, Var bias);
Var sigmoid(Var x);
Var relu(Var x);
Var softmax(Var scores);
Var global_avg_pool(Var input);
Var channel_mean(Var input);
Var concat(Var a, Var b);
Var upsample2x(Var input);
Var reshape(Var x, Shape shape);

/// [c] -> [l,h,w,c], repeating the vector at every position.
Var broadcast_channels(Var gate, const Shape& shape);
/// [l,h,w] -> [l,h,w,c], repeating each position's value across channels.
Var broadcast_spatial(Var gate, std::size_t channels);
/// [G] -> [d]: coordinate i takes chunk i / ceil(d / G).
Var chunk_broadcast(Var chunks, std::size_t length);

Var add(Var a, Var b);
Var mul(Var a, Var b);
/// factor * x + offset, elementwise.
Var scale_shift(Var x, double factor, double offset);
Var sum(Var x);
Var mean(Var x);
Var dot(Var a, Var b);

/// Per-position 2-input affine: out = w[0]*map + w[1]*s + b, with s a
/// single-element tensor broadcast over the map.
Var pixel_affine2(Var map, Var s, Var weight, Var bias);

/// Mean over positions of -log softmax(logits)[target]; logits [..., C],
/// targets holds integer class ids, one per leading position.
Var cross_entropy(Var logits, const Tensor& targets);
/// Mean absolute error against a constant target.
Var l1_loss(Var prediction, const Tensor& target);

}  // namespace fedsurg::ag
