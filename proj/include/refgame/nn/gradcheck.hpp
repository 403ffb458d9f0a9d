#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "refgame/nn/parameters.hpp"

namespace refgame::nn {

/// Evaluates the loss at the current parameters; when `grads` is non-null it
/// must also accumulate reverse-mode gradients into it (pre-zeroed).
using LossFunction = std::function<double(const ParameterSet& params, ParameterSet* grads)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Cap on probed entries per tensor; 0 probes every entry.
  std::size_t max_probes_per_tensor = 0;
  // Relative errors use max(|analytic|, |numeric|, floor) as denominator.
  double denominator_floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t probes = 0;
  std::vector<std::pair<std::string, double>> per_tensor;
};

/// Compares reverse-mode gradients with central finite differences on every
/// trainable tensor.
GradCheckReport gradient_check(ParameterSet params, const LossFunction& loss, const GradCheckOptions& options = {});

}  // namespace refgame::nn
