#include "condense/distill.hpp"

#include <cmath>

namespace condense {

namespace {

// Same graph up to channel counts: a student obtained from the teacher by
// pruning always satisfies this.
void check_topology_match(const NetworkGraph& student, const NetworkGraph& teacher) {
  if (student.layers.size() != teacher.layers.size() ||
      student.input_channels != teacher.input_channels ||
      student.skip_edges != teacher.skip_edges) {
    throw ConfigError("student/teacher topology mismatch");
  }
  for (size_t i = 0; i < student.layers.size(); ++i) {
    const LayerSpec& s = student.layers[i];
    const LayerSpec& t = teacher.layers[i];
    if (s.id != t.id || s.kind != t.kind || s.kernel != t.kernel || s.stride != t.stride ||
        s.padding != t.padding || s.activation != t.activation ||
        s.input_sources != t.input_sources) {
      throw ConfigError("student/teacher topology mismatch at layer " + std::to_string(s.id));
    }
  }
  const int out_id = teacher.output_layer_id();
  if (student.layer(out_id).out_ch != teacher.layer(out_id).out_ch) {
    throw ConfigError("student and teacher output channel counts differ");
  }
}

}  // namespace

StageTwoResult stage2_finetune(NetworkGraph& student, const NetworkGraph& teacher,
                               NetworkGraph& discriminator,
                               const std::vector<PairedSample>& dataset,
                               const DistillConfig& cfg) {
  if (dataset.empty()) throw ConfigError("fine-tuning dataset is empty");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.weight_gt_l1 < 0 || cfg.weight_teacher_l1 < 0 || cfg.weight_gan < 0) {
    throw ConfigError("distillation weights must be non-negative");
  }
  if (cfg.weight_gt_l1 == 0 && cfg.weight_teacher_l1 == 0 && cfg.weight_gan == 0) {
    throw ConfigError("at least one distillation weight must be positive");
  }
  check_topology_match(student, teacher);

  const bool adversarial = cfg.weight_gan > 0;
  StageTwoResult result;
  result.student_opt = AdamState::init(student.weights, cfg.learning_rate);
  result.disc_opt = AdamState::init(discriminator.weights, cfg.learning_rate);
  Rng shuffle_rng(cfg.seed);
  int step = 0;

  std::vector<int> indices(dataset.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(indices);
    for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(indices.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const Tensor*> masks, images;
      for (size_t i = start; i < end; ++i) {
        masks.push_back(&dataset[static_cast<size_t>(indices[i])].mask);
        images.push_back(&dataset[static_cast<size_t>(indices[i])].image);
      }
      VarPtr x = make_const(kernels::stack_batch(masks));
      VarPtr y = make_const(kernels::stack_batch(images));

      // Teacher inference never records gradients.
      VarPtr teacher_out = make_const(forward(teacher, x->value));
      VarPtr student_out = forward(student, x, true);

      DistillLogRow row;
      row.epoch = epoch;
      row.step = step++;

      VarPtr g_gan;
      if (adversarial) {
        VarPtr d_real = forward(discriminator, op::concat_channels(x, y), true);
        VarPtr d_fake_det = forward(discriminator, op::concat_channels(x, detach(student_out)), true);
        auto [unused_g, d_loss] = gan_losses(d_real, d_fake_det, cfg.halve_discriminator);
        zero_grad(discriminator.weights);
        backward(d_loss);
        adam_step(discriminator.weights, result.disc_opt);
        row.gan_d = static_cast<double>(d_loss->value[0]);

        VarPtr d_fake = forward(discriminator, op::concat_channels(x, student_out), true);
        g_gan = gan_losses(d_real, d_fake, cfg.halve_discriminator).first;
        row.gan_g = static_cast<double>(g_gan->value[0]);
      }

      VarPtr gt_l1 = op::l1_loss(student_out, y);
      VarPtr teach_l1 = op::l1_loss(student_out, teacher_out);
      row.l1 = static_cast<double>(gt_l1->value[0]);
      row.teacher_l1 = static_cast<double>(teach_l1->value[0]);

      VarPtr total = op::add(op::scale(gt_l1, static_cast<float>(cfg.weight_gt_l1)),
                             op::scale(teach_l1, static_cast<float>(cfg.weight_teacher_l1)));
      if (adversarial) total = op::add(total, op::scale(g_gan, static_cast<float>(cfg.weight_gan)));

      row.total = cfg.weight_gt_l1 * row.l1 + cfg.weight_teacher_l1 * row.teacher_l1 +
                  cfg.weight_gan * row.gan_g;
      if (!std::isfinite(row.total)) {
        std::string first = student_out->value.all_finite() ? "loss" : "student output";
        throw NumericError("non-finite fine-tuning loss; first non-finite tensor: " + first);
      }

      zero_grad(student.weights);
      backward(total);
      adam_step(student.weights, result.student_opt);

      row.near_zero = near_zero_fraction(student, 0.01);
      result.log.push_back(row);
    }
  }
  return result;
}

}  // namespace condense
