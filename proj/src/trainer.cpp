#include "condense/trainer.hpp"

#include <cmath>

namespace condense {

namespace {

void check_finite_or_diagnose(const GanBatchLoss& loss, const VarPtr& fake,
                              const VarPtr& d_real, const VarPtr& d_fake) {
  const bool ok = std::isfinite(loss.gan_g) && std::isfinite(loss.gan_d) &&
                  std::isfinite(loss.l1) && std::isfinite(loss.penal);
  if (ok) return;
  std::string first = "loss";
  if (fake && !fake->value.all_finite()) {
    first = "generator output";
  } else if (d_real && !d_real->value.all_finite()) {
    first = "discriminator output (real)";
  } else if (d_fake && !d_fake->value.all_finite()) {
    first = "discriminator output (fake)";
  }
  throw NumericError("non-finite training loss; first non-finite tensor: " + first);
}

}  // namespace

std::pair<VarPtr, VarPtr> gan_losses(const VarPtr& d_real, const VarPtr& d_fake, bool halve) {
  auto ones_like = [](const VarPtr& v) { return make_const(Tensor::full(v->value.shape(), 1.0f)); };
  auto zeros_like = [](const VarPtr& v) { return make_const(Tensor(v->value.shape())); };
  VarPtr g_loss = op::bce_loss(d_fake, ones_like(d_fake));
  VarPtr d_loss = op::add(op::bce_loss(d_real, ones_like(d_real)),
                          op::bce_loss(d_fake, zeros_like(d_fake)));
  d_loss = op::scale(d_loss, halve ? 0.5f : 1.0f);
  return {g_loss, d_loss};
}

double near_zero_fraction(const NetworkGraph& g, double rel_threshold) {
  if (!(rel_threshold > 0.0) || !(rel_threshold < 1.0)) {
    throw DomainError("rel_threshold must lie in (0,1)");
  }
  int64_t total = 0, below = 0;
  for (int id : prunable_layer_ids(g)) {
    const ChannelImportance ci = channel_importance(g, id);
    double max_gamma = 0.0;
    for (double v : ci.gamma) max_gamma = std::max(max_gamma, v);
    const double cutoff = rel_threshold * max_gamma;
    for (double v : ci.gamma) {
      ++total;
      if (v < cutoff) ++below;
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(below) / static_cast<double>(total);
}

StageOneResult stage1_train(NetworkGraph& generator, NetworkGraph& discriminator,
                            const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                            const CostVector& factors,
                            const std::function<void(int epoch)>& on_snapshot) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (cfg.penal.enabled && factors.factors.size() != generator.layers.size()) {
    throw ConfigError("cost factors do not cover the generator's layers");
  }

  StageOneResult result;
  result.gen_opt = AdamState::init(generator.weights, cfg.learning_rate);
  result.disc_opt = AdamState::init(discriminator.weights, cfg.learning_rate);
  Rng shuffle_rng(cfg.seed);

  double alpha = 0.0;
  bool calibrated = !cfg.penal.enabled;  // disabled penalization keeps alpha 0
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

      VarPtr fake = forward(generator, x, true);

      // Discriminator update on (real, detached fake).
      VarPtr d_real = forward(discriminator, op::concat_channels(x, y), true);
      VarPtr d_fake_det = forward(discriminator, op::concat_channels(x, detach(fake)), true);
      auto [unused_g, d_loss] = gan_losses(d_real, d_fake_det, cfg.halve_discriminator);
      zero_grad(discriminator.weights);
      backward(d_loss);
      adam_step(discriminator.weights, result.disc_opt);

      // Generator update through the freshly updated discriminator.
      VarPtr d_fake = forward(discriminator, op::concat_channels(x, fake), true);
      auto [g_gan, unused_d] = gan_losses(d_real, d_fake, cfg.halve_discriminator);
      VarPtr l1 = op::l1_loss(fake, y);
      VarPtr penal;
      if (cfg.penal.enabled) penal = penalty_node(generator, factors, cfg.penal.strategy);

      GanBatchLoss loss;
      loss.gan_g = static_cast<double>(g_gan->value[0]);
      loss.gan_d = static_cast<double>(d_loss->value[0]);
      loss.l1 = static_cast<double>(l1->value[0]);
      loss.penal = penal ? static_cast<double>(penal->value[0]) : 0.0;
      check_finite_or_diagnose(loss, fake, d_real, d_fake);

      if (!calibrated) {
        // Ratio rule against the weighted l1 objective term, first iteration.
        alpha = calibrate_alpha(loss.penal, cfg.lambda_l1 * loss.l1, cfg.penal.target_ratio,
                                cfg.penal.regime);
        calibrated = true;
      }

      VarPtr total = op::add(g_gan, op::scale(l1, static_cast<float>(cfg.lambda_l1)));
      if (penal) total = op::add(total, op::scale(penal, static_cast<float>(alpha)));
      zero_grad(generator.weights);
      backward(total);
      adam_step(generator.weights, result.gen_opt);

      loss.total_g = loss.gan_g + cfg.lambda_l1 * loss.l1 + alpha * loss.penal;
      TrainLogRow row;
      row.epoch = epoch;
      row.step = step++;
      row.loss = loss;
      row.near_zero = near_zero_fraction(generator, 0.01);
      result.log.push_back(row);
    }
    if (on_snapshot && ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)) {
      on_snapshot(epoch);
    }
  }
  result.alpha = alpha;
  return result;
}

double eval_l1(const NetworkGraph& generator, const std::vector<PairedSample>& dataset) {
  if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
  double total = 0.0;
  for (const PairedSample& s : dataset) {
    const Tensor out = forward(generator, s.mask);
    total += static_cast<double>(kernels::l1_loss(out, s.image)[0]);
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace condense
