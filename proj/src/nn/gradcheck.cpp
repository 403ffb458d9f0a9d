#include "refgame/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace refgame::nn {

GradCheckReport gradient_check(ParameterSet params, const LossFunction& loss, const GradCheckOptions& options) {
  ParameterSet analytic = params.zeros_like();
  loss(params, &analytic);

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (!params.trainable(t)) continue;
    Matrix& value = params[t];
    const Eigen::Index n = value.size();
    const Eigen::Index stride =
        options.max_probes_per_tensor == 0
            ? 1
            : std::max<Eigen::Index>(1, n / static_cast<Eigen::Index>(options.max_probes_per_tensor));
    double worst = 0.0;
    for (Eigen::Index k = 0; k < n; k += stride) {
      double& x = value.data()[k];
      const double saved = x;
      x = saved + options.epsilon;
      const double up = loss(params, nullptr);
      x = saved - options.epsilon;
      const double down = loss(params, nullptr);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double exact = analytic[t].data()[k];
      const double denom = std::max({std::abs(numeric), std::abs(exact), options.denominator_floor});
      worst = std::max(worst, std::abs(numeric - exact) / denom);
      ++report.probes;
    }
    report.per_tensor.emplace_back(params.name(t), worst);
    if (worst >= report.max_relative_error) {
      report.max_relative_error = worst;
      report.worst_tensor = params.name(t);
    }
  }
  return report;
}

}  // namespace refgame::nn
