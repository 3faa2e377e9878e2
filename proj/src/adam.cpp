#include "condense/adam.hpp"

#include <cmath>

namespace condense {

AdamState AdamState::init(const std::vector<VarPtr>& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moment.reserve(params.size());
  s.second_moment.reserve(params.size());
  for (const VarPtr& p : params) {
    s.first_moment.emplace_back(p->value.shape());
    s.second_moment.emplace_back(p->value.shape());
  }
  return s;
}

void adam_step(const std::vector<VarPtr>& params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw StateError("adam_step parameter count does not match optimizer state");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) {
      throw StateError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.first_moment[i].size() != params[i]->value.size()) {
      throw StateError("adam_step: moment buffer " + std::to_string(i) + " length mismatch");
    }
  }
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const float bias1 = static_cast<float>(1.0 / (1.0 - std::pow(b1, static_cast<double>(state.step_count))));
  const float bias2 = static_cast<float>(1.0 / (1.0 - std::pow(b2, static_cast<double>(state.step_count))));
  const float lr = static_cast<float>(state.learning_rate);
  const float eps = static_cast<float>(state.epsilon);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  for (size_t i = 0; i < params.size(); ++i) {
    float* p = params[i]->value.data();
    const float* g = params[i]->grad.data();
    float* m = state.first_moment[i].data();
    float* v = state.second_moment[i].data();
    const int64_t n = params[i]->value.size();
    for (int64_t j = 0; j < n; ++j) {
      m[j] = fb1 * m[j] + (1.0f - fb1) * g[j];
      v[j] = fb2 * v[j] + (1.0f - fb2) * g[j] * g[j];
      const float mhat = m[j] * bias1;
      const float vhat = v[j] * bias2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace condense
