#pragma once

#include <cstdint>

#include "fedsurg/tensor.hpp"

namespace fedsurg {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments of one parameter tensor. Zero moments at step_count 0.
struct AdamState {
  AdamConfig config;
  Tensor first_moment;
  Tensor second_moment;
  std::int64_t step_count = 0;

  AdamState() = default;
  AdamState(const Shape& shape, AdamConfig cfg);
};

/// Bias-corrected Adam update of `param` in place.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

/// Scalar form used for per-entry server weights.
struct ScalarAdam {
  AdamConfig config;
  double first_moment = 0.0;
  double second_moment = 0.0;
  std::int64_t step_count = 0;

  /// Returns the updated value.
  double step(double value, double grad);
};

}  // namespace fedsurg
