#pragma once

#include <cstdint>
#include <vector>

#include "condense/autodiff.hpp"

namespace condense {

// Bias-corrected Adam over a fixed parameter list. Moment buffers are
// parallel to the parameter vector; callers zero gradients between steps.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  int64_t step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState init(const std::vector<VarPtr>& params, double learning_rate);
};

void adam_step(const std::vector<VarPtr>& params, AdamState& state);

}  // namespace condense
