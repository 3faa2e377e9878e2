#pragma once

#include <map>
#include <optional>
#include <vector>

#include "condense/netgraph.hpp"
#include "condense/penalize.hpp"

namespace condense {

struct MagnitudeCurve {
  int layer_id = 0;
  std::vector<double> sorted_gamma;  // descending
  std::vector<int> channel_ids;      // permutation realizing the sort
};

struct HingeReport {
  enum class Method { max_ratio_drop, manual };
  int layer_id = 0;
  int keep_count = 0;  // in [1, out_ch]
  Method method = Method::max_ratio_drop;
  std::optional<double> drop_ratio;  // absent when nothing is pruned
};

// Output-channel keep-sets (original ids, ascending) plus the induced
// input-channel keep-sets in each consumer's concatenated input space.
struct PruningPlan {
  std::map<int, std::vector<int>> keep_out;
  std::map<int, std::vector<int>> keep_in;
};

MagnitudeCurve magnitude_curve(const NetworkGraph& g, int layer_id);

// keep_count = position maximizing the adjacent drop ratio
// sorted_gamma[p-1] / max(sorted_gamma[p], floor), restricted to ratios
// >= min_drop_ratio; no qualifying position means keep everything.
HingeReport detect_hinge(const MagnitudeCurve& curve, double min_drop_ratio = 10.0,
                         double floor = 1e-12);

// One report per prunable layer (the output layer is excluded and always
// keeps its channels). Keep-sets take the top keep_count channels by gamma.
PruningPlan build_pruning_plan(const NetworkGraph& g, const std::vector<HingeReport>& hinges);

PruningPlan identity_plan(const NetworkGraph& g);

// Throws PlanError/StructuralError when the plan does not fit the graph.
void check_plan(const NetworkGraph& g, const PruningPlan& plan);

// New graph with weights sliced on both channel axes per the plan. Channel
// ids are never renumbered semantically: relative order is preserved.
NetworkGraph apply_pruning(const NetworkGraph& g, const PruningPlan& plan);

// Test oracle companion: zero out pruned output channels' weights and the
// input slices that read them, without changing any shape.
NetworkGraph mask_pruned_channels(const NetworkGraph& g, const PruningPlan& plan);

}  // namespace condense
