#include "fedsurg/adam.hpp"

#include <cmath>

#include "fedsurg/errors.hpp"

namespace fedsurg {

AdamState::AdamState(const Shape& shape, AdamConfig cfg)
    : config(cfg), first_moment(shape), second_moment(shape) {}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  require_same_shape(param, grad, "adam_step");
  if (state.first_moment.empty()) {
    state.first_moment = Tensor(param.shape());
    state.second_moment = Tensor(param.shape());
  }
  require_same_shape(param, state.first_moment, "adam_step state");
  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param[i] -= c.learning_rate * (m_hat / (std::sqrt(v_hat) + c.eps));
  }
}

double ScalarAdam::step(double value, double grad) {
  ++step_count;
  const double t = static_cast<double>(step_count);
  first_moment = config.beta1 * first_moment + (1.0 - config.beta1) * grad;
  second_moment = config.beta2 * second_moment + (1.0 - config.beta2) * grad * grad;
  const double m_hat = first_moment / (1.0 - std::pow(config.beta1, t));
  const double v_hat = second_moment / (1.0 - std::pow(config.beta2, t));
  return value - config.learning_rate * (m_hat / (std::sqrt(v_hat) + config.eps));
}

}  // namespace fedsurg
