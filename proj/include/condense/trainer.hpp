#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "condense/adam.hpp"
#include "condense/costmodel.hpp"
#include "condense/dataio.hpp"
#include "condense/netgraph.hpp"
#include "condense/penalize.hpp"

namespace condense {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 1;
  double learning_rate = 1e-4;
  uint64_t seed = 1;
  double lambda_l1 = 100.0;
  PenalizationConfig penal;
  bool halve_discriminator = true;
  int checkpoint_every = 10;  // epochs between snapshot callbacks
};

struct GanBatchLoss {
  double gan_g = 0.0;
  double gan_d = 0.0;
  double l1 = 0.0;
  double penal = 0.0;
  double total_g = 0.0;  // gan_g + lambda_l1 * l1 + alpha * penal
};

struct TrainLogRow {
  int epoch = 0;
  int step = 0;  // global step index
  GanBatchLoss loss;
  double near_zero = 0.0;
};

struct StageOneResult {
  double alpha = 0.0;
  std::vector<TrainLogRow> log;
  AdamState gen_opt;
  AdamState disc_opt;
};

// Adversarial pair: d_loss = -1/2 (mean log d_real + mean log(1 - d_fake)),
// g_loss = -mean log d_fake (non-saturating). Saturation is handled by the
// bce clamp. halve=false drops the 1/2.
std::pair<VarPtr, VarPtr> gan_losses(const VarPtr& d_real, const VarPtr& d_fake,
                                     bool halve = true);

// Fraction of channels, over prunable layers, whose gamma falls below
// rel_threshold times their layer's max gamma.
double near_zero_fraction(const NetworkGraph& g, double rel_threshold);

// Stage-I adversarial training with channel penalization. alpha is calibrated
// on the first iteration from the configured target ratio against the
// weighted l1 objective term, then frozen. Mutates generator/discriminator
// weights in place; the per-epoch callback (if any) runs every
// checkpoint_every epochs and after the last epoch.
StageOneResult stage1_train(NetworkGraph& generator, NetworkGraph& discriminator,
                            const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                            const CostVector& factors,
                            const std::function<void(int epoch)>& on_snapshot = {});

// Mean reconstruction l1 over a dataset, gradient-free.
double eval_l1(const NetworkGraph& generator, const std::vector<PairedSample>& dataset);

}  // namespace condense
