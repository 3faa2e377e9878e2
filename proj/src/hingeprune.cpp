#include "condense/hingeprune.hpp"

#include <algorithm>

namespace condense {

MagnitudeCurve magnitude_curve(const NetworkGraph& g, int layer_id) {
  const ChannelImportance ci = channel_importance(g, layer_id);
  MagnitudeCurve curve;
  curve.layer_id = layer_id;
  curve.channel_ids = ci.order;
  curve.sorted_gamma.reserve(ci.order.size());
  for (int c : ci.order) curve.sorted_gamma.push_back(ci.gamma[static_cast<size_t>(c)]);
  return curve;
}

HingeReport detect_hinge(const MagnitudeCurve& curve, double min_drop_ratio, double floor) {
  if (!(min_drop_ratio > 1.0)) throw DomainError("min_drop_ratio must be > 1");
  if (floor < 0.0) throw DomainError("floor must be non-negative");
  HingeReport report;
  report.layer_id = curve.layer_id;
  report.method = HingeReport::Method::max_ratio_drop;
  const size_t n = curve.sorted_gamma.size();
  int best_pos = 0;
  double best_ratio = 0.0;
  for (size_t p = 1; p < n; ++p) {
    const double ratio = curve.sorted_gamma[p - 1] / std::max(curve.sorted_gamma[p], floor);
    if (ratio >= min_drop_ratio && ratio > best_ratio) {
      best_ratio = ratio;
      best_pos = static_cast<int>(p);
    }
  }
  if (best_pos == 0) {
    report.keep_count = static_cast<int>(n);  // no hinge: keep everything
  } else {
    report.keep_count = best_pos;
    report.drop_ratio = best_ratio;
  }
  return report;
}

namespace {

// Input keep positions for one layer given every producer's keep set, in the
// layer's original concatenated channel space.
std::vector<int> derive_input_keep(const NetworkGraph& g, const LayerSpec& layer,
                                   const std::map<int, std::vector<int>>& keep_out) {
  std::vector<int> keep;
  int offset = 0;
  for (int s : layer.input_sources) {
    if (s == kNetworkInput) {
      for (int c = 0; c < g.input_channels; ++c) keep.push_back(offset + c);
      offset += g.input_channels;
    } else {
      const auto it = keep_out.find(s);
      if (it == keep_out.end()) {
        throw PlanError("plan is missing a keep-set for producer layer " + std::to_string(s));
      }
      for (int c : it->second) keep.push_back(offset + c);
      offset += g.layer(s).out_ch;
    }
  }
  if (offset != layer.in_ch) {
    throw StructuralError("layer " + std::to_string(layer.id) + " input width mismatch");
  }
  return keep;
}

void validate_keep_set(const LayerSpec& layer, const std::vector<int>& keep) {
  if (keep.empty()) {
    throw PlanError("layer " + std::to_string(layer.id) + " keep-set is empty");
  }
  int prev = -1;
  for (int c : keep) {
    if (c < 0 || c >= layer.out_ch) {
      throw PlanError("layer " + std::to_string(layer.id) + " keep-set id " + std::to_string(c) +
                      " out of range");
    }
    if (c <= prev) {
      throw PlanError("layer " + std::to_string(layer.id) + " keep-set must be ascending and unique");
    }
    prev = c;
  }
}

}  // namespace

PruningPlan build_pruning_plan(const NetworkGraph& g, const std::vector<HingeReport>& hinges) {
  const int output_id = g.output_layer_id();
  std::map<int, const HingeReport*> by_layer;
  for (const HingeReport& h : hinges) {
    if (h.layer_id == output_id) {
      throw PlanError("the output layer is never pruned; drop its hinge report");
    }
    if (!by_layer.emplace(h.layer_id, &h).second) {
      throw PlanError("duplicate hinge report for layer " + std::to_string(h.layer_id));
    }
  }
  PruningPlan plan;
  for (const LayerSpec& layer : g.layers) {
    if (layer.id == output_id) {
      std::vector<int> all(static_cast<size_t>(layer.out_ch));
      for (int c = 0; c < layer.out_ch; ++c) all[static_cast<size_t>(c)] = c;
      plan.keep_out[layer.id] = all;
      continue;
    }
    const auto it = by_layer.find(layer.id);
    if (it == by_layer.end()) {
      throw PlanError("no hinge report for prunable layer " + std::to_string(layer.id));
    }
    const HingeReport& h = *it->second;
    if (h.keep_count < 1 || h.keep_count > layer.out_ch) {
      throw PlanError("layer " + std::to_string(layer.id) + " keep_count " +
                      std::to_string(h.keep_count) + " outside [1, " +
                      std::to_string(layer.out_ch) + "]");
    }
    const MagnitudeCurve curve = magnitude_curve(g, layer.id);
    std::vector<int> keep(curve.channel_ids.begin(), curve.channel_ids.begin() + h.keep_count);
    std::sort(keep.begin(), keep.end());
    plan.keep_out[layer.id] = std::move(keep);
  }
  for (const LayerSpec& layer : g.layers) {
    plan.keep_in[layer.id] = derive_input_keep(g, layer, plan.keep_out);
  }
  check_plan(g, plan);
  return plan;
}

PruningPlan identity_plan(const NetworkGraph& g) {
  PruningPlan plan;
  for (const LayerSpec& layer : g.layers) {
    std::vector<int> all(static_cast<size_t>(layer.out_ch));
    for (int c = 0; c < layer.out_ch; ++c) all[static_cast<size_t>(c)] = c;
    plan.keep_out[layer.id] = all;
  }
  for (const LayerSpec& layer : g.layers) {
    plan.keep_in[layer.id] = derive_input_keep(g, layer, plan.keep_out);
  }
  return plan;
}

void check_plan(const NetworkGraph& g, const PruningPlan& plan) {
  const int output_id = g.output_layer_id();
  for (const LayerSpec& layer : g.layers) {
    const auto out_it = plan.keep_out.find(layer.id);
    if (out_it == plan.keep_out.end()) {
      throw PlanError("plan has no keep-set for layer " + std::to_string(layer.id));
    }
    validate_keep_set(layer, out_it->second);
    if (layer.id == output_id &&
        out_it->second.size() != static_cast<size_t>(layer.out_ch)) {
      throw PlanError("the output layer must keep all its channels");
    }
    const auto in_it = plan.keep_in.find(layer.id);
    if (in_it == plan.keep_in.end()) {
      throw PlanError("plan has no input keep-set for layer " + std::to_string(layer.id));
    }
    // Consistency: the stored input keep-set must equal the concatenation of
    // the producers' keep-sets.
    const std::vector<int> derived = derive_input_keep(g, layer, plan.keep_out);
    if (in_it->second != derived) {
      throw StructuralError("layer " + std::to_string(layer.id) +
                            " input keep-set is inconsistent with its producers' keep-sets");
    }
    if (derived.empty()) {
      throw PlanError("layer " + std::to_string(layer.id) + " would lose all inputs");
    }
  }
  if (plan.keep_out.size() != g.layers.size() || plan.keep_in.size() != g.layers.size()) {
    throw PlanError("plan covers a different layer set than the graph");
  }
}

NetworkGraph apply_pruning(const NetworkGraph& g, const PruningPlan& plan) {
  check_plan(g, plan);
  NetworkGraph out;
  out.input_channels = g.input_channels;
  out.skip_edges = g.skip_edges;
  out.layers = g.layers;
  out.weights.reserve(g.weights.size());
  for (size_t i = 0; i < g.layers.size(); ++i) {
    LayerSpec& layer = out.layers[i];
    const std::vector<int>& keep_out = plan.keep_out.at(layer.id);
    const std::vector<int>& keep_in = plan.keep_in.at(layer.id);
    const Tensor& w = g.weights[i]->value;
    Tensor sliced;
    if (layer.kind == LayerKind::conv) {
      sliced = kernels::take_channels(kernels::take_channels(w, 0, keep_out), 1, keep_in);
    } else {
      sliced = kernels::take_channels(kernels::take_channels(w, 0, keep_in), 1, keep_out);
    }
    layer.in_ch = static_cast<int>(keep_in.size());
    layer.out_ch = static_cast<int>(keep_out.size());
    out.weights.push_back(make_param(std::move(sliced)));
  }
  validate_graph(out);
  return out;
}

NetworkGraph mask_pruned_channels(const NetworkGraph& g, const PruningPlan& plan) {
  check_plan(g, plan);
  NetworkGraph out = clone_graph(g);
  for (size_t i = 0; i < out.layers.size(); ++i) {
    const LayerSpec& layer = out.layers[i];
    const std::vector<int>& keep_out = plan.keep_out.at(layer.id);
    const std::vector<int>& keep_in = plan.keep_in.at(layer.id);
    std::vector<char> out_kept(static_cast<size_t>(layer.out_ch), 0);
    std::vector<char> in_kept(static_cast<size_t>(layer.in_ch), 0);
    for (int c : keep_out) out_kept[static_cast<size_t>(c)] = 1;
    for (int c : keep_in) in_kept[static_cast<size_t>(c)] = 1;
    Tensor& w = out.weights[i]->value;
    const int d0 = w.dim(0), d1 = w.dim(1), k = w.dim(2);
    for (int a = 0; a < d0; ++a) {
      for (int b = 0; b < d1; ++b) {
        const bool keep = (layer.kind == LayerKind::conv)
                              ? (out_kept[static_cast<size_t>(a)] && in_kept[static_cast<size_t>(b)])
                              : (in_kept[static_cast<size_t>(a)] && out_kept[static_cast<size_t>(b)]);
        if (keep) continue;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) w.at(a, b, kh, kw) = 0.0f;
        }
      }
    }
  }
  return out;
}

}  // namespace condense
