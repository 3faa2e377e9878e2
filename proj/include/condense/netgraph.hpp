#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "condense/autodiff.hpp"
#include "condense/rng.hpp"

namespace condense {

enum class LayerKind { conv, conv_transpose };

// Id of the network input pseudo-source in LayerSpec::input_sources.
constexpr int kNetworkInput = -1;

struct LayerSpec {
  int id = 0;
  LayerKind kind = LayerKind::conv;
  int in_ch = 0, out_ch = 0;
  int kernel = 1, stride = 1, padding = 0;
  Act activation = Act::none;
  float leaky_slope = 0.2f;
  bool instance_norm = false;
  // Channel-concatenated feeds, in order; kNetworkInput means the graph input.
  std::vector<int> input_sources;
};

// Layer list plus one weight tensor per layer. Weight shape is
// (out_ch,in_ch,k,k) for conv and (in_ch,out_ch,k,k) for conv_transpose.
// Skip edges list every non-primary producer->consumer pair; the per-layer
// input_sources remain the single source of truth for connectivity.
struct NetworkGraph {
  std::vector<LayerSpec> layers;
  std::vector<VarPtr> weights;
  std::vector<std::pair<int, int>> skip_edges;
  int input_channels = 3;

  int layer_index(int id) const;
  const LayerSpec& layer(int id) const { return layers[static_cast<size_t>(layer_index(id))]; }
  const VarPtr& weight(int id) const { return weights[static_cast<size_t>(layer_index(id))]; }
  int output_layer_id() const;
};

struct MacReport {
  std::vector<int64_t> per_layer_macs;
  int64_t total_macs = 0;
  std::vector<int64_t> per_layer_params;
};

// Throws if the graph violates its structural invariants (resolvable sources,
// acyclic, channel bookkeeping, weight shapes).
void validate_graph(const NetworkGraph& g);

// Deep copy: fresh weight nodes, no shared storage with the source.
NetworkGraph clone_graph(const NetworkGraph& g);

bool structurally_equal(const NetworkGraph& a, const NetworkGraph& b);

// Encoder/decoder channel schedule: min(base * 2^level, cap).
std::vector<int> unet_channel_schedule(int base_channels, int depth, int cap);

// Strided-conv U-net with mirrored transposed-conv decoder and one skip edge
// per resolution; the last decoder layer maps to 3 channels with tanh.
NetworkGraph build_unet(int base_channels, int depth, int cap, int input_size, Rng& rng,
                        bool use_instance_norm = false);

// Patch discriminator: stride-2 conv stack then two stride-1 convs, sigmoid
// patch scores, 70x70 receptive field.
NetworkGraph build_patchgan(int input_channels, Rng& rng, int base_channels = 64);

// Receptive field of a single-chain conv stack.
int receptive_field(const NetworkGraph& g);

// Executes layers in dependency order (deterministic id tie-break).
VarPtr forward(const NetworkGraph& g, const VarPtr& input, bool record_gradients);
Tensor forward(const NetworkGraph& g, const Tensor& input);

MacReport count_macs(const NetworkGraph& g, int input_size);

// Per-layer output spatial size (square inputs), in storage order.
std::vector<int> infer_spatial(const NetworkGraph& g, int input_size);

// Deterministic execution order (indices into g.layers).
std::vector<int> execution_order(const NetworkGraph& g);

// Layers eligible for penalization: every layer of a generator graph.
// Layers eligible for pruning: all but the final output layer.
std::vector<int> prunable_layer_ids(const NetworkGraph& g);

}  // namespace condense
