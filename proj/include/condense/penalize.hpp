#pragma once

#include <string>
#include <vector>

#include "condense/costmodel.hpp"
#include "condense/netgraph.hpp"

namespace condense {

enum class PenalStrategy { uniform, linear, exponential };
enum class PenalRegime { high, low };

std::string to_string(PenalStrategy s);
std::string to_string(PenalRegime r);
PenalStrategy penal_strategy_from_string(const std::string& s);
PenalRegime penal_regime_from_string(const std::string& s);

struct ChannelImportance {
  int layer_id = 0;
  // gamma[c] = L1 norm of output-channel c's weight slice.
  std::vector<double> gamma;
  // Channel indices sorted by descending gamma, ties by ascending index.
  std::vector<int> order;
};

struct PenalizationConfig {
  bool enabled = true;
  PenalStrategy strategy = PenalStrategy::linear;
  PenalRegime regime = PenalRegime::high;
  FactorSource layer_factor_source = FactorSource::mac;
  double target_ratio = 0.1;
  double alpha = 0.0;  // set by calibration on the first training iteration
};

ChannelImportance channel_importance(const NetworkGraph& g, int layer_id);

// Rank multiplier f(j) for 1-based sorted rank j.
double channel_weight_factor(PenalStrategy strategy, int j);

// Sum of f(j) * gamma over the descending rank order.
double layer_penalty(const ChannelImportance& importance, PenalStrategy strategy);

// Sum of l(i) * layer_penalty(i) over every layer of a generator graph.
double total_penalty(const NetworkGraph& g, const CostVector& factors, PenalStrategy strategy);

// alpha such that alpha * l_penal / l_l1 equals target_ratio on the first
// iteration; the low regime scales the result by 0.1.
double calibrate_alpha(double l_penal_first, double l_l1_first, double target_ratio,
                       PenalRegime regime);

// Differentiable penalty over the graph's weights. The forward value equals
// total_penalty; the sort permutation is a constant within the step, so the
// gradient on channel c is l(i) * f(rank(c)) * sign(w).
VarPtr penalty_node(const NetworkGraph& g, const CostVector& factors, PenalStrategy strategy);

}  // namespace condense
