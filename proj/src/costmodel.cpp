#include "condense/costmodel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace condense {

std::string to_string(FactorSource s) {
  switch (s) {
    case FactorSource::mac: return "mac";
    case FactorSource::latency: return "latency";
    case FactorSource::uniform: return "uniform";
  }
  return "?";
}

FactorSource factor_source_from_string(const std::string& s) {
  if (s == "mac") return FactorSource::mac;
  if (s == "latency") return FactorSource::latency;
  if (s == "uniform") return FactorSource::uniform;
  throw ConfigError("unknown factor source: " + s);
}

namespace {

void normalize_mean_one(std::vector<double>& factors) {
  double mean = 0.0;
  for (double f : factors) mean += f;
  mean /= static_cast<double>(factors.size());
  if (!(mean > 0.0)) throw NumericError("cost factors have non-positive mean");
  for (double& f : factors) f /= mean;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

CostVector uniform_factors(const NetworkGraph& g) {
  CostVector cv;
  cv.source = FactorSource::uniform;
  cv.factors.assign(g.layers.size(), 1.0);
  return cv;
}

CostVector mac_factors(const NetworkGraph& g, int input_size) {
  const MacReport report = count_macs(g, input_size);
  CostVector cv;
  cv.source = FactorSource::mac;
  cv.factors.reserve(report.per_layer_macs.size());
  for (int64_t m : report.per_layer_macs) cv.factors.push_back(static_cast<double>(m));
  normalize_mean_one(cv.factors);
  return cv;
}

LayerSampler make_layer_sampler(const NetworkGraph& g, int input_size, ClockFn clock,
                                std::vector<int>* inner_iters_out) {
  if (!clock) {
    clock = [] {
      return static_cast<int64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(
              std::chrono::steady_clock::now().time_since_epoch())
              .count());
    };
  }
  const std::vector<int> spatial = infer_spatial(g, input_size);
  const std::vector<int> order = execution_order(g);
  // Representative single-sample input per layer, from the producing sources'
  // spatial size; contents are arbitrary but fixed.
  std::vector<Tensor> inputs(g.layers.size());
  {
    std::vector<int> in_size(g.layers.size(), input_size);
    for (size_t i = 0; i < g.layers.size(); ++i) {
      const int src = g.layers[i].input_sources[0];
      in_size[i] = (src == kNetworkInput) ? input_size
                                          : spatial[static_cast<size_t>(g.layer_index(src))];
      inputs[i] = Tensor::full({1, g.layers[i].in_ch, in_size[i], in_size[i]}, 0.5f);
    }
  }
  auto inner = std::make_shared<std::vector<int>>(g.layers.size(), 1);
  if (inner_iters_out) inner_iters_out->assign(g.layers.size(), 1);
  auto warned = std::make_shared<bool>(false);
  return [g, inputs, inner, warned, clock, inner_iters_out](int index) -> double {
    const LayerSpec& l = g.layers[static_cast<size_t>(index)];
    const Tensor& x = inputs[static_cast<size_t>(index)];
    const Tensor& w = g.weights[static_cast<size_t>(index)]->value;
    auto run_once = [&] {
      if (l.kind == LayerKind::conv) {
        kernels::conv2d(x, w, l.stride, l.padding);
      } else {
        kernels::conv_transpose2d(x, w, l.stride, l.padding);
      }
    };
    for (;;) {
      const int n = (*inner)[static_cast<size_t>(index)];
      const int64_t t0 = clock();
      for (int i = 0; i < n; ++i) run_once();
      const int64_t elapsed = clock() - t0;
      if (elapsed > 0 || n >= 4096) {
        if (inner_iters_out) (*inner_iters_out)[static_cast<size_t>(index)] = n;
        return static_cast<double>(elapsed) / 1e6 / static_cast<double>(n);
      }
      // Timer too coarse for one invocation: batch several per sample.
      if (!*warned) {
        std::fprintf(stderr,
                     "warning: timer resolution coarser than layer latency; "
                     "batching invocations per sample\n");
        *warned = true;
      }
      (*inner)[static_cast<size_t>(index)] *= 8;
    }
  };
}

CostVector latency_factors(const NetworkGraph& g, int input_size, const LatencyConfig& cfg,
                           DeviceProfile* profile, LayerSampler sampler) {
  if (cfg.repeats < 3) throw ConfigError("latency profiling needs repeats >= 3");
  if (cfg.warmup < 1) throw ConfigError("latency profiling needs warmup >= 1");
  std::vector<int> inner(g.layers.size(), 1);
  if (!sampler) sampler = make_layer_sampler(g, input_size, {}, &inner);
  std::vector<double> medians(g.layers.size());
  DeviceProfile prof;
  prof.repeats = cfg.repeats;
  prof.warmup = cfg.warmup;
  prof.mean_ms.resize(g.layers.size());
  prof.std_ms.resize(g.layers.size());
  for (size_t i = 0; i < g.layers.size(); ++i) {
    for (int wup = 0; wup < cfg.warmup; ++wup) sampler(static_cast<int>(i));
    std::vector<double> samples(static_cast<size_t>(cfg.repeats));
    for (int r = 0; r < cfg.repeats; ++r) samples[static_cast<size_t>(r)] = sampler(static_cast<int>(i));
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(cfg.repeats);
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(cfg.repeats);
    prof.mean_ms[i] = mean;
    prof.std_ms[i] = std::sqrt(var);
    // Floor keeps factors positive even if a layer measures below resolution.
    medians[i] = std::max(median(samples), 1e-9);
  }
  prof.inner_iters = inner;
  CostVector cv;
  cv.source = FactorSource::latency;
  cv.factors = medians;
  normalize_mean_one(cv.factors);
  if (profile) *profile = prof;
  return cv;
}

}  // namespace condense
