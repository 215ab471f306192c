#pragma once

#include <span>
#include <vector>

#include "gense/autodiff.hpp"

namespace gense {

struct AdamWConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay and a constant learning rate (no warmup,
// no schedule). Moment buffers are sized on the first step.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  /// Applies one update from the accumulated Parameter::grad values. Does not
  /// clear gradients.
  void step(std::span<ad::Parameter* const> params);
  std::size_t steps_taken() const { return steps_; }

 private:
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

}  // namespace gense
