#include "condense/netgraph.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <unordered_map>

namespace condense {

namespace {

Tensor init_weight(LayerKind kind, int in_ch, int out_ch, int k, Rng& rng) {
  std::vector<int> shape = (kind == LayerKind::conv)
                               ? std::vector<int>{out_ch, in_ch, k, k}
                               : std::vector<int>{in_ch, out_ch, k, k};
  Tensor w(shape);
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0f, 0.02f);
  return w;
}

int source_width(const NetworkGraph& g, int source) {
  if (source == kNetworkInput) return g.input_channels;
  return g.layer(source).out_ch;
}

}  // namespace

int NetworkGraph::layer_index(int id) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id == id) return static_cast<int>(i);
  }
  throw StructuralError("no layer with id " + std::to_string(id));
}

int NetworkGraph::output_layer_id() const {
  const std::vector<int> order = execution_order(*this);
  if (order.empty()) throw StructuralError("graph has no layers");
  return layers[static_cast<size_t>(order.back())].id;
}

std::vector<int> execution_order(const NetworkGraph& g) {
  const size_t n = g.layers.size();
  std::unordered_map<int, int> index;
  for (size_t i = 0; i < n; ++i) {
    if (!index.emplace(g.layers[i].id, static_cast<int>(i)).second) {
      throw StructuralError("duplicate layer id " + std::to_string(g.layers[i].id));
    }
  }
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> consumers(n);
  for (size_t i = 0; i < n; ++i) {
    for (int s : g.layers[i].input_sources) {
      if (s == kNetworkInput) continue;
      auto it = index.find(s);
      if (it == index.end()) {
        throw StructuralError("layer " + std::to_string(g.layers[i].id) +
                              " references unknown source " + std::to_string(s));
      }
      consumers[static_cast<size_t>(it->second)].push_back(static_cast<int>(i));
      ++indegree[i];
    }
  }
  // Kahn with ascending-id tie-break so the order is storage-independent.
  std::set<std::pair<int, int>> ready;  // (id, index)
  for (size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.emplace(g.layers[i].id, static_cast<int>(i));
  }
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    const int idx = ready.begin()->second;
    ready.erase(ready.begin());
    order.push_back(idx);
    for (int c : consumers[static_cast<size_t>(idx)]) {
      if (--indegree[static_cast<size_t>(c)] == 0) {
        ready.emplace(g.layers[static_cast<size_t>(c)].id, c);
      }
    }
  }
  if (order.size() != n) throw StructuralError("graph contains a cycle");
  return order;
}

void validate_graph(const NetworkGraph& g) {
  if (g.layers.size() != g.weights.size()) {
    throw StructuralError("graph has " + std::to_string(g.layers.size()) + " layers but " +
                          std::to_string(g.weights.size()) + " weight tensors");
  }
  if (g.input_channels < 1) throw StructuralError("graph input_channels must be positive");
  execution_order(g);  // resolvable + acyclic
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.in_ch < 1 || l.out_ch < 1) {
      throw StructuralError("layer " + std::to_string(l.id) + " has invalid geometry");
    }
    if (l.input_sources.empty()) {
      throw StructuralError("layer " + std::to_string(l.id) + " has no input sources");
    }
    int width = 0;
    for (int s : l.input_sources) width += source_width(g, s);
    if (width != l.in_ch) {
      throw StructuralError("layer " + std::to_string(l.id) + " declares in_ch " +
                            std::to_string(l.in_ch) + " but sources provide " + std::to_string(width));
    }
    const Tensor& w = g.weights[i]->value;
    const std::vector<int> expect = (l.kind == LayerKind::conv)
                                        ? std::vector<int>{l.out_ch, l.in_ch, l.kernel, l.kernel}
                                        : std::vector<int>{l.in_ch, l.out_ch, l.kernel, l.kernel};
    if (w.shape() != expect) {
      throw StructuralError("layer " + std::to_string(l.id) + " weight shape " + w.shape_str() +
                            " does not match its spec");
    }
  }
  for (const auto& [producer, consumer] : g.skip_edges) {
    const LayerSpec& c = g.layer(consumer);
    if (std::find(c.input_sources.begin(), c.input_sources.end(), producer) == c.input_sources.end()) {
      throw StructuralError("skip edge " + std::to_string(producer) + "->" + std::to_string(consumer) +
                            " is not backed by an input source");
    }
  }
}

NetworkGraph clone_graph(const NetworkGraph& g) {
  NetworkGraph out;
  out.layers = g.layers;
  out.skip_edges = g.skip_edges;
  out.input_channels = g.input_channels;
  out.weights.reserve(g.weights.size());
  for (const VarPtr& w : g.weights) out.weights.push_back(make_param(w->value));
  return out;
}

bool structurally_equal(const NetworkGraph& a, const NetworkGraph& b) {
  if (a.layers.size() != b.layers.size() || a.input_channels != b.input_channels ||
      a.skip_edges != b.skip_edges) {
    return false;
  }
  for (size_t i = 0; i < a.layers.size(); ++i) {
    const LayerSpec& x = a.layers[i];
    const LayerSpec& y = b.layers[i];
    if (x.id != y.id || x.kind != y.kind || x.in_ch != y.in_ch || x.out_ch != y.out_ch ||
        x.kernel != y.kernel || x.stride != y.stride || x.padding != y.padding ||
        x.activation != y.activation || x.leaky_slope != y.leaky_slope ||
        x.instance_norm != y.instance_norm || x.input_sources != y.input_sources) {
      return false;
    }
  }
  return true;
}

std::vector<int> unet_channel_schedule(int base_channels, int depth, int cap) {
  std::vector<int> schedule;
  schedule.reserve(static_cast<size_t>(depth));
  int c = base_channels;
  for (int d = 0; d < depth; ++d) {
    schedule.push_back(std::min(c, cap));
    if (c <= cap) c *= 2;
  }
  return schedule;
}

NetworkGraph build_unet(int base_channels, int depth, int cap, int input_size, Rng& rng,
                        bool use_instance_norm) {
  if (base_channels < 1 || depth < 1 || cap < 1) {
    throw ConfigError("build_unet: base_channels, depth and cap must be positive");
  }
  if (base_channels > cap) throw ConfigError("build_unet: base_channels exceeds cap");
  int div = 1;
  for (int d = 0; d < depth; ++d) div *= 2;
  if (input_size < div || input_size % div != 0) {
    throw ConfigError("build_unet: input_size " + std::to_string(input_size) +
                      " is not divisible by 2^depth = " + std::to_string(div));
  }
  const std::vector<int> c = unet_channel_schedule(base_channels, depth, cap);
  NetworkGraph g;
  g.input_channels = 3;
  const int k = 4, stride = 2, pad = 1;
  for (int d = 0; d < depth; ++d) {
    LayerSpec l;
    l.id = d;
    l.kind = LayerKind::conv;
    l.in_ch = (d == 0) ? g.input_channels : c[static_cast<size_t>(d - 1)];
    l.out_ch = c[static_cast<size_t>(d)];
    l.kernel = k; l.stride = stride; l.padding = pad;
    l.activation = Act::leaky_relu;
    l.instance_norm = use_instance_norm && d > 0;
    l.input_sources = {d == 0 ? kNetworkInput : d - 1};
    g.layers.push_back(l);
    g.weights.push_back(make_param(init_weight(l.kind, l.in_ch, l.out_ch, k, rng)));
  }
  for (int j = 0; j < depth; ++j) {
    LayerSpec l;
    l.id = depth + j;
    l.kind = LayerKind::conv_transpose;
    if (j == 0) {
      l.in_ch = c[static_cast<size_t>(depth - 1)];
      l.input_sources = {depth - 1};
    } else {
      const int skip_from = depth - 1 - j;
      l.in_ch = 2 * c[static_cast<size_t>(skip_from)];
      l.input_sources = {depth + j - 1, skip_from};
      g.skip_edges.emplace_back(skip_from, l.id);
    }
    const bool last = (j == depth - 1);
    l.out_ch = last ? 3 : c[static_cast<size_t>(depth - 2 - j)];
    l.kernel = k; l.stride = stride; l.padding = pad;
    l.activation = last ? Act::tanh : Act::relu;
    l.instance_norm = use_instance_norm && !last;
    g.layers.push_back(l);
    g.weights.push_back(make_param(init_weight(l.kind, l.in_ch, l.out_ch, k, rng)));
  }
  validate_graph(g);
  return g;
}

NetworkGraph build_patchgan(int input_channels, Rng& rng, int base_channels) {
  if (input_channels < 1) throw ConfigError("build_patchgan: input_channels must be positive");
  if (base_channels < 1) throw ConfigError("build_patchgan: base_channels must be positive");
  struct Row { int out_ch, stride; Act act; };
  const std::vector<Row> rows = {
      {base_channels, 2, Act::leaky_relu},
      {base_channels * 2, 2, Act::leaky_relu},
      {base_channels * 4, 2, Act::leaky_relu},
      {base_channels * 8, 1, Act::leaky_relu},
      {1, 1, Act::sigmoid},
  };
  NetworkGraph g;
  g.input_channels = input_channels;
  int prev = input_channels;
  for (size_t i = 0; i < rows.size(); ++i) {
    LayerSpec l;
    l.id = static_cast<int>(i);
    l.kind = LayerKind::conv;
    l.in_ch = prev;
    l.out_ch = rows[i].out_ch;
    l.kernel = 4; l.stride = rows[i].stride; l.padding = 1;
    l.activation = rows[i].act;
    l.input_sources = {i == 0 ? kNetworkInput : static_cast<int>(i) - 1};
    g.layers.push_back(l);
    g.weights.push_back(make_param(init_weight(l.kind, l.in_ch, l.out_ch, l.kernel, rng)));
    prev = l.out_ch;
  }
  validate_graph(g);
  return g;
}

int receptive_field(const NetworkGraph& g) {
  const std::vector<int> order = execution_order(g);
  int expected_source = kNetworkInput;
  int64_t field = 1, jump = 1;
  for (int idx : order) {
    const LayerSpec& l = g.layers[static_cast<size_t>(idx)];
    if (l.kind != LayerKind::conv) {
      throw TopologyError("receptive_field requires a pure conv stack");
    }
    if (l.input_sources.size() != 1 || l.input_sources[0] != expected_source) {
      throw TopologyError("receptive_field requires a sequential single-source chain");
    }
    field += static_cast<int64_t>(l.kernel - 1) * jump;
    jump *= l.stride;
    expected_source = l.id;
  }
  return static_cast<int>(field);
}

std::vector<int> infer_spatial(const NetworkGraph& g, int input_size) {
  if (input_size < 1) throw ConfigError("input_size must be positive");
  const std::vector<int> order = execution_order(g);
  std::unordered_map<int, int> out_size;
  std::vector<int> result(g.layers.size(), 0);
  for (int idx : order) {
    const LayerSpec& l = g.layers[static_cast<size_t>(idx)];
    std::optional<int> in_size;
    for (int s : l.input_sources) {
      const int size = (s == kNetworkInput) ? input_size : out_size.at(s);
      if (in_size && *in_size != size) {
        throw DimensionError("layer " + std::to_string(l.id) +
                             " concatenates sources with unequal spatial sizes");
      }
      in_size = size;
    }
    int out;
    if (l.kind == LayerKind::conv) {
      out = (*in_size + 2 * l.padding - l.kernel) / l.stride + 1;
      if (*in_size + 2 * l.padding < l.kernel || out < 1) {
        throw ConfigError("layer " + std::to_string(l.id) + " output spatial size would be non-positive");
      }
    } else {
      out = (*in_size - 1) * l.stride - 2 * l.padding + l.kernel;
      if (out < 1) {
        throw ConfigError("layer " + std::to_string(l.id) + " output spatial size would be non-positive");
      }
    }
    out_size[l.id] = out;
    result[static_cast<size_t>(idx)] = out;
  }
  return result;
}

MacReport count_macs(const NetworkGraph& g, int input_size) {
  const std::vector<int> spatial = infer_spatial(g, input_size);
  const std::vector<int> order = execution_order(g);
  std::unordered_map<int, int> out_size;
  for (size_t i = 0; i < g.layers.size(); ++i) out_size[g.layers[i].id] = spatial[i];
  MacReport report;
  report.per_layer_macs.resize(g.layers.size());
  report.per_layer_params.resize(g.layers.size());
  for (int idx : order) {
    const LayerSpec& l = g.layers[static_cast<size_t>(idx)];
    const int64_t kk = static_cast<int64_t>(l.kernel) * l.kernel;
    const int64_t ch = static_cast<int64_t>(l.in_ch) * l.out_ch;
    int64_t positions;
    if (l.kind == LayerKind::conv) {
      positions = static_cast<int64_t>(spatial[static_cast<size_t>(idx)]) * spatial[static_cast<size_t>(idx)];
    } else {
      const int s = l.input_sources[0] == kNetworkInput ? input_size : out_size.at(l.input_sources[0]);
      positions = static_cast<int64_t>(s) * s;
    }
    report.per_layer_macs[static_cast<size_t>(idx)] = positions * kk * ch;
    report.per_layer_params[static_cast<size_t>(idx)] = kk * ch;
  }
  report.total_macs = 0;
  for (int64_t m : report.per_layer_macs) report.total_macs += m;
  return report;
}

VarPtr forward(const NetworkGraph& g, const VarPtr& input, bool record_gradients) {
  std::optional<NoGradGuard> guard;
  if (!record_gradients) guard.emplace();
  if (input->value.rank() != 4) {
    throw DimensionError("graph input must be rank 4, got " + input->value.shape_str());
  }
  if (input->value.dim(1) != g.input_channels) {
    throw DimensionError("graph expects " + std::to_string(g.input_channels) +
                         " input channels, got " + std::to_string(input->value.dim(1)));
  }
  const std::vector<int> order = execution_order(g);
  std::unordered_map<int, VarPtr> outputs;
  VarPtr last;
  for (int idx : order) {
    const LayerSpec& l = g.layers[static_cast<size_t>(idx)];
    VarPtr fed;
    for (int s : l.input_sources) {
      const VarPtr& src = (s == kNetworkInput) ? input : outputs.at(s);
      fed = fed ? op::concat_channels(fed, src) : src;
    }
    if (fed->value.dim(1) != l.in_ch) {
      throw DimensionError("layer " + std::to_string(l.id) + " expects " + std::to_string(l.in_ch) +
                           " input channels, got " + std::to_string(fed->value.dim(1)));
    }
    VarPtr z;
    try {
      z = (l.kind == LayerKind::conv)
              ? op::conv2d(fed, g.weights[static_cast<size_t>(idx)], l.stride, l.padding)
              : op::conv_transpose2d(fed, g.weights[static_cast<size_t>(idx)], l.stride, l.padding);
    } catch (const Error& e) {
      throw DimensionError("layer " + std::to_string(l.id) + ": " + e.what());
    }
    if (l.instance_norm) z = op::instance_norm(z);
    if (l.activation != Act::none) z = op::activation(z, l.activation, l.leaky_slope);
    outputs[l.id] = z;
    last = z;
  }
  if (!last) throw StructuralError("graph has no layers");
  return last;
}

Tensor forward(const NetworkGraph& g, const Tensor& input) {
  return forward(g, make_const(input), false)->value;
}

std::vector<int> prunable_layer_ids(const NetworkGraph& g) {
  const int output_id = g.output_layer_id();
  std::vector<int> ids;
  ids.reserve(g.layers.size());
  for (const LayerSpec& l : g.layers) {
    if (l.id != output_id) ids.push_back(l.id);
  }
  return ids;
}

}  // namespace condense
