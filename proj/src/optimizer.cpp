#include "gense/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace gense {

void AdamW::step(std::span<ad::Parameter* const> params) {
  if (first_moment_.empty()) {
    for (const ad::Parameter* p : params) {
      first_moment_.emplace_back(p->value.size(), 0.0);
      second_moment_.emplace_back(p->value.size(), 0.0);
    }
  }
  if (first_moment_.size() != params.size())
    throw std::invalid_argument("AdamW parameter set changed between steps");

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    std::vector<double>& m = first_moment_[i];
    std::vector<double>& v = second_moment_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k];
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
      const double update = (m[k] / correction1) / (std::sqrt(v[k] / correction2) + config_.epsilon);
      p.value.data[k] -= config_.learning_rate * (update + config_.weight_decay * p.value.data[k]);
    }
  }
}

}  // namespace gense
