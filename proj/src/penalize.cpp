#include "condense/penalize.hpp"

#include <algorithm>
#include <cmath>

namespace condense {

std::string to_string(PenalStrategy s) {
  switch (s) {
    case PenalStrategy::uniform: return "uniform";
    case PenalStrategy::linear: return "linear";
    case PenalStrategy::exponential: return "exponential";
  }
  return "?";
}

std::string to_string(PenalRegime r) {
  return r == PenalRegime::high ? "high" : "low";
}

PenalStrategy penal_strategy_from_string(const std::string& s) {
  if (s == "uniform") return PenalStrategy::uniform;
  if (s == "linear") return PenalStrategy::linear;
  if (s == "exponential") return PenalStrategy::exponential;
  throw ConfigError("unknown penalization strategy: " + s);
}

PenalRegime penal_regime_from_string(const std::string& s) {
  if (s == "high") return PenalRegime::high;
  if (s == "low") return PenalRegime::low;
  throw ConfigError("unknown penalization regime: " + s);
}

namespace {

// gamma per output channel; the channel axis is 0 for conv weights and 1 for
// conv_transpose weights.
std::vector<double> channel_l1(const LayerSpec& spec, const Tensor& w) {
  std::vector<double> gamma(static_cast<size_t>(spec.out_ch), 0.0);
  if (spec.kind == LayerKind::conv) {
    const int64_t block = static_cast<int64_t>(spec.in_ch) * spec.kernel * spec.kernel;
    for (int c = 0; c < spec.out_ch; ++c) {
      const float* p = w.data() + c * block;
      double acc = 0.0;
      for (int64_t i = 0; i < block; ++i) acc += std::fabs(static_cast<double>(p[i]));
      gamma[static_cast<size_t>(c)] = acc;
    }
  } else {
    const int64_t kk = static_cast<int64_t>(spec.kernel) * spec.kernel;
    for (int c = 0; c < spec.out_ch; ++c) {
      double acc = 0.0;
      for (int ic = 0; ic < spec.in_ch; ++ic) {
        const float* p = w.data() + (static_cast<int64_t>(ic) * spec.out_ch + c) * kk;
        for (int64_t i = 0; i < kk; ++i) acc += std::fabs(static_cast<double>(p[i]));
      }
      gamma[static_cast<size_t>(c)] = acc;
    }
  }
  return gamma;
}

std::vector<int> descending_order(const std::vector<double>& gamma) {
  std::vector<int> order(gamma.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (gamma[static_cast<size_t>(a)] != gamma[static_cast<size_t>(b)]) {
      return gamma[static_cast<size_t>(a)] > gamma[static_cast<size_t>(b)];
    }
    return a < b;
  });
  return order;
}

}  // namespace

ChannelImportance channel_importance(const NetworkGraph& g, int layer_id) {
  const int idx = g.layer_index(layer_id);
  const LayerSpec& spec = g.layers[static_cast<size_t>(idx)];
  ChannelImportance ci;
  ci.layer_id = layer_id;
  ci.gamma = channel_l1(spec, g.weights[static_cast<size_t>(idx)]->value);
  ci.order = descending_order(ci.gamma);
  return ci;
}

double channel_weight_factor(PenalStrategy strategy, int j) {
  if (j < 1) throw DomainError("channel rank must be >= 1, got " + std::to_string(j));
  switch (strategy) {
    case PenalStrategy::uniform: return 1.0;
    case PenalStrategy::linear: return static_cast<double>(j);
    case PenalStrategy::exponential: return std::exp(0.01 * static_cast<double>(j));
  }
  return 1.0;
}

double layer_penalty(const ChannelImportance& importance, PenalStrategy strategy) {
  double acc = 0.0;
  for (size_t j = 0; j < importance.order.size(); ++j) {
    acc += channel_weight_factor(strategy, static_cast<int>(j) + 1) *
           importance.gamma[static_cast<size_t>(importance.order[j])];
  }
  return acc;
}

double total_penalty(const NetworkGraph& g, const CostVector& factors, PenalStrategy strategy) {
  if (factors.factors.size() != g.layers.size()) {
    throw ConfigError("cost vector has " + std::to_string(factors.factors.size()) +
                      " factors for a graph with " + std::to_string(g.layers.size()) + " layers");
  }
  double acc = 0.0;
  for (size_t i = 0; i < g.layers.size(); ++i) {
    acc += factors.factors[i] * layer_penalty(channel_importance(g, g.layers[i].id), strategy);
  }
  return acc;
}

double calibrate_alpha(double l_penal_first, double l_l1_first, double target_ratio,
                       PenalRegime regime) {
  if (!(l_penal_first > 0.0)) {
    throw CalibrationError("first-iteration penalty is not positive; cannot calibrate alpha");
  }
  if (!(l_l1_first > 0.0)) {
    throw CalibrationError("first-iteration l1 loss is not positive; cannot calibrate alpha");
  }
  if (!(target_ratio > 0.0)) throw ConfigError("target_ratio must be positive");
  const double alpha_high = target_ratio * l_l1_first / l_penal_first;
  return regime == PenalRegime::high ? alpha_high : 0.1 * alpha_high;
}

VarPtr penalty_node(const NetworkGraph& g, const CostVector& factors, PenalStrategy strategy) {
  if (factors.factors.size() != g.layers.size()) {
    throw ConfigError("cost vector length does not match graph layer count");
  }
  auto out = std::make_shared<Node>();
  out->value = Tensor::scalar(static_cast<float>(total_penalty(g, factors, strategy)));
  if (!grad_enabled()) return out;
  out->requires_grad = true;
  out->parents = g.weights;
  // Copies needed by the closure: specs and factors by value, weights shared.
  std::vector<LayerSpec> specs = g.layers;
  std::vector<double> lf = factors.factors;
  std::vector<VarPtr> weights = g.weights;
  out->backward_fn = [specs, lf, weights, strategy](Node& self) {
    const float up = self.grad[0];
    for (size_t i = 0; i < specs.size(); ++i) {
      if (!weights[i]->requires_grad) continue;
      const LayerSpec& spec = specs[i];
      const Tensor& w = weights[i]->value;
      const std::vector<double> gamma = channel_l1(spec, w);
      const std::vector<int> order = descending_order(gamma);
      std::vector<float> coeff(gamma.size());
      for (size_t j = 0; j < order.size(); ++j) {
        coeff[static_cast<size_t>(order[j])] = static_cast<float>(
            lf[i] * channel_weight_factor(strategy, static_cast<int>(j) + 1) * up);
      }
      Tensor grad(w.shape());
      const float* wp = w.data();
      float* gp = grad.data();
      if (spec.kind == LayerKind::conv) {
        const int64_t block = static_cast<int64_t>(spec.in_ch) * spec.kernel * spec.kernel;
        for (int c = 0; c < spec.out_ch; ++c) {
          const float k = coeff[static_cast<size_t>(c)];
          for (int64_t t = 0; t < block; ++t) {
            const float v = wp[c * block + t];
            gp[c * block + t] = v > 0.0f ? k : (v < 0.0f ? -k : 0.0f);
          }
        }
      } else {
        const int64_t kk = static_cast<int64_t>(spec.kernel) * spec.kernel;
        for (int ic = 0; ic < spec.in_ch; ++ic) {
          for (int c = 0; c < spec.out_ch; ++c) {
            const float k = coeff[static_cast<size_t>(c)];
            const int64_t base = (static_cast<int64_t>(ic) * spec.out_ch + c) * kk;
            for (int64_t t = 0; t < kk; ++t) {
              const float v = wp[base + t];
              gp[base + t] = v > 0.0f ? k : (v < 0.0f ? -k : 0.0f);
            }
          }
        }
      }
      weights[i]->ensure_grad().add_(grad);
    }
  };
  return out;
}

}  // namespace condense
