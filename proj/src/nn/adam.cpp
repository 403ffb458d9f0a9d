#include "refgame/nn/adam.hpp"

#include <cmath>

#include "refgame/error.hpp"

namespace refgame::nn {

Adam::Adam(const ParameterSet& params, AdamConfig config)
    : config_(config), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::update(ParameterSet& params, const ParameterSet& grads) {
  if (!params.same_layout(grads) || !params.same_layout(m_)) {
    throw Error(ErrorCode::ShapeMismatch, "gradient layout does not match parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (params.trainable(i) && !grads[i].allFinite()) {
      throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient in " + grads.name(i));
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.trainable(i)) continue;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseAbs2();
    params[i].array() -= config_.learning_rate * (m_[i].array() / correction1) /
                         ((v_[i].array() / correction2).sqrt() + config_.epsilon);
  }
}

}  // namespace refgame::nn
