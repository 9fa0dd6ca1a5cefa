#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "audiomt/model.hpp"
#include "audiomt/random.hpp"

namespace audiomt::testing {

struct GradCheckResult {
  double worst_relative = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
};

// Central differences on the summed NLL against accumulate_gradients.
// Up to `per_tensor` coordinates are sampled from every tensor. Relative
// error uses max(|a|, |n|, floor) as the denominator.
inline GradCheckResult gradient_check(const TrainingExample& ex, Parameters<double> params,
                                      std::size_t per_tensor, double h, double floor,
                                      std::uint64_t seed) {
  Parameters<double> grads = params.zeros_like();
  accumulate_gradients(ex, params, 1.0, grads);
  std::size_t count = 0;
  for (auto m : ex.loss_mask) count += m;
  const double n = static_cast<double>(count);

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& value = params.tensors[t].value;
    const auto size = static_cast<std::size_t>(value.size());
    for (std::size_t k = 0; k < std::min(size, per_tensor); ++k) {
      const auto i = static_cast<Eigen::Index>(size <= per_tensor ? k : uniform_below(rng, size));
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double up = loss(ex, params) * n;
      value.data()[i] = saved - h;
      const double down = loss(ex, params) * n;
      value.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads.tensors[t].value.data()[i];
      const double rel = std::abs(numeric - analytic) /
                         std::max({std::abs(numeric), std::abs(analytic), floor});
      ++result.checked;
      if (rel > result.worst_relative) {
        result.worst_relative = rel;
        result.worst_name = params.tensors[t].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

// Moves every parameter off its initial value so gains, biases and zero
// blocks all carry signal.
inline void perturb(Parameters<double>& params, double scale, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& t : params.tensors) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += scale * standard_normal(rng);
  }
}

}  // namespace audiomt::testing
