#pragma once

#include <cstdint>
#include <vector>

#include "condense/trainer.hpp"

namespace condense {

struct DistillConfig {
  double weight_gt_l1 = 100.0;
  double weight_teacher_l1 = 100.0;
  double weight_gan = 1.0;
  int epochs = 20;
  int batch_size = 1;
  double learning_rate = 1e-4;
  uint64_t seed = 2;
  bool halve_discriminator = true;
};

struct DistillLogRow {
  int epoch = 0;
  int step = 0;
  double gan_g = 0.0;
  double gan_d = 0.0;
  double l1 = 0.0;          // against ground truth
  double teacher_l1 = 0.0;  // against the frozen teacher's output
  double total = 0.0;
  double near_zero = 0.0;
};

struct StageTwoResult {
  std::vector<DistillLogRow> log;
  AdamState student_opt;
  AdamState disc_opt;
};

// Stage-II fine-tuning: the pruned student minimizes
//   weight_gt_l1 * l1(student(x), y)
// + weight_teacher_l1 * l1(student(x), teacher(x))
// + weight_gan * g_loss
// against the frozen condensed teacher. The discriminator carries over from
// Stage I and keeps training with its halved loss while weight_gan > 0.
// There is no penalization term in Stage II.
StageTwoResult stage2_finetune(NetworkGraph& student, const NetworkGraph& teacher,
                               NetworkGraph& discriminator,
                               const std::vector<PairedSample>& dataset,
                               const DistillConfig& cfg);

}  // namespace condense
