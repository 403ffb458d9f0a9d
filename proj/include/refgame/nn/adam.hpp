#pragma once

#include <cstdint>

#include "refgame/nn/parameters.hpp"

namespace refgame::nn {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.7;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig config);

  /// Throws NonFiniteGradient (leaving params untouched) or ShapeMismatch.
  void update(ParameterSet& params, const ParameterSet& grads);

  std::uint64_t step() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const ParameterSet& first_moment() const { return m_; }
  const ParameterSet& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  ParameterSet m_;
  ParameterSet v_;
  std::uint64_t step_ = 0;
};

}  // namespace refgame::nn
