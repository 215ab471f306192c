#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gense/backbone.hpp"
#include "gense/rng.hpp"

namespace gense::test {

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t nontrivial = 0;  // coordinates with a gradient above the noise floor
  double worst_relative_error = 0.0;
};

// Central differences on random parameter coordinates against the analytic
// gradient from `accumulate`. Sampling continues until `wanted` coordinates
// with a non-negligible gradient have been compared.
inline GradCheckResult gradient_check(Seq2SeqBackbone& model, const std::function<double()>& loss,
                                      const std::function<void()>& accumulate, std::size_t wanted,
                                      std::uint64_t seed, double step = 1e-5) {
  model.zero_grad();
  accumulate();
  const auto params = model.parameters();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (auto* p : params) {
    offsets.push_back(total);
    total += p->value.size();
  }

  Rng rng(seed);
  GradCheckResult result;
  for (std::size_t attempt = 0; attempt < 40 * wanted && result.nontrivial < wanted; ++attempt) {
    const std::size_t flat = rng.below(total);
    const std::size_t which =
        static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    ad::Parameter& p = *params[which];
    const std::size_t k = flat - offsets[which];
    const double analytic = p.grad.data[k];
    const double saved = p.value.data[k];
    p.value.data[k] = saved + step;
    const double up = loss();
    p.value.data[k] = saved - step;
    const double down = loss();
    p.value.data[k] = saved;
    const double numeric = (up - down) / (2.0 * step);

    ++result.checked;
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    if (scale < 1e-6) continue;
    ++result.nontrivial;
    result.worst_relative_error = std::max(result.worst_relative_error, std::abs(numeric - analytic) / scale);
  }
  return result;
}

}  // namespace gense::test
