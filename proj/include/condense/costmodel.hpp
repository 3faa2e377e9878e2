#pragma once

#include <functional>
#include <string>
#include <vector>

#include "condense/netgraph.hpp"

namespace condense {

enum class FactorSource { mac, latency, uniform };

std::string to_string(FactorSource s);
FactorSource factor_source_from_string(const std::string& s);

// Per-layer multiplicative factors l(i), mean-one normalized so alpha
// calibration is comparable across sources.
struct CostVector {
  std::vector<double> factors;  // storage order, one per layer
  FactorSource source = FactorSource::uniform;
};

struct DeviceProfile {
  std::vector<double> mean_ms;
  std::vector<double> std_ms;
  std::vector<int> inner_iters;  // invocations batched per sample (timer fallback)
  int repeats = 0;
  int warmup = 0;
};

struct LatencyConfig {
  int repeats = 5;   // >= 3
  int warmup = 1;    // >= 1
};

// One timed sample for layer `index`, in milliseconds.
using LayerSampler = std::function<double(int index)>;

// Monotonic nanosecond clock, injectable for hermetic tests.
using ClockFn = std::function<int64_t()>;

CostVector uniform_factors(const NetworkGraph& g);
CostVector mac_factors(const NetworkGraph& g, int input_size);

// Benchmarks each layer's forward in isolation on its representative input
// shape. Must run single-threaded with no concurrent load from this process.
// When the timer is coarser than a single invocation, samples batch multiple
// invocations (a warning is printed once) and report the per-invocation time.
CostVector latency_factors(const NetworkGraph& g, int input_size, const LatencyConfig& cfg,
                           DeviceProfile* profile = nullptr, LayerSampler sampler = {});

// Real sampler used by latency_factors when none is injected; exposed so
// tests can drive it with a fake clock.
LayerSampler make_layer_sampler(const NetworkGraph& g, int input_size, ClockFn clock,
                                std::vector<int>* inner_iters_out = nullptr);

}  // namespace condense
