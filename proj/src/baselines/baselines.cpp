// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "baselines/baselines.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

namespace wiper {

std::string_view baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::fine_pruning: return "fine_pruning";
    case BaselineKind::fine_tuning: return "fine_tuning";
    case BaselineKind::kd: return "kd";
  }
  return "fine_tuning";
}

std::optional<BaselineKind> parse_baseline(std::string_view name) {
  if (name == "fine_pruning") return BaselineKind::fine_pruning;
  if (name == "fine_tuning") return BaselineKind::fine_tuning;
  if (name == "kd") return BaselineKind::kd;
  return std::nullopt;
}

void BaselineConfig::validate() const {
  require(batch_size >= 1, ErrorCode::invalid_argument, "baseline: batch size must be positive");
  require(pruning_rate >= 0.0 && pruning_rate < 1.0, ErrorCode::invalid_argument,
          "baseline: pruning rate must lie in [0, 1)");
  require(kd_temperature > 0.0, ErrorCode::invalid_argument, "baseline: temperature must be positive");
  require(kd_ce_weight >= 0.0 && kd_kl_weight >= 0.0, ErrorCode::invalid_argument,
          "baseline: distillation weights must be nonnegative");
}

namespace {

TrainRecipe ft_recipe(const BaselineConfig& cfg) {
  return {cfg.epochs, cfg.batch_size, SgdOptions{cfg.ft_learning_rate, cfg.ft_momentum, cfg.ft_weight_decay}};
}

}  // namespace

template <std::floating_point T>
Model<T> fine_tuning(const Model<T>& model, const Dataset& holdout, const BaselineConfig& cfg) {
  cfg.validate();
  Model<T> out = model;
  fit(out, holdout, ft_recipe(cfg), cfg.seed);
  return out;
}

template <std::floating_point T>
Model<T> fine_pruning(const Model<T>& model, const Dataset& holdout, const BaselineConfig& cfg, PruneResult* report) {
  cfg.validate();
  require(holdout.size() > 0, ErrorCode::invalid_argument, "fine_pruning: empty holdout");
  Model<T> out = model;
  const Batch<T> all = make_batch<T>(holdout);
  std::vector<double> scores =
      cfg.pruning_metric == ImportanceMetric::am ? compute_am(out, all) : compute_bs(out, all);
  const std::vector<std::size_t> pruned = select_bad(scores, cfg.pruning_rate);
  const std::string layer = out.purified_layer();
  auto prune = [&](Model<T>& m) {
    for (std::size_t j : pruned) zero_neuron(m, NeuronId{layer, j});
  };
  prune(out);
  // Pruned columns stay removed while the rest of the network adapts.
  fit(out, holdout, ft_recipe(cfg), cfg.seed, {}, StepHook<T>(prune));
  if (report) *report = {pruned, std::move(scores)};
  return out;
}

template <std::floating_point T>
Model<T> kd_distill(const Model<T>& teacher, const Dataset& holdout, const BaselineConfig& cfg) {
  cfg.validate();
  Model<T> student = build_model<T>(teacher.architecture(), mix_seed(cfg.seed, 0x57D));
  student.set_purified_layer(teacher.purified_layer());
  require(student.parameter_count() == teacher.parameter_count(), ErrorCode::invalid_argument,
          "kd: student and teacher architectures differ");
  const T temperature = static_cast<T>(cfg.kd_temperature);
  const T ce_w = static_cast<T>(cfg.kd_ce_weight), kl_w = static_cast<T>(cfg.kd_kl_weight);
  LossHook<T> loss = [&](Graph<T>& g, const typename Model<T>::Trace& trace, const Batch<T>& batch) {
    const Tensor<T> teacher_logits = predict_logits(teacher, batch.inputs);
    const Var ce = g.scale(g.cross_entropy(trace.logits, batch.labels), ce_w);
    if (kl_w == T{0}) return ce;
    return g.add(ce, g.scale(g.soft_kl(trace.logits, teacher_logits, temperature), kl_w));
  };
  const TrainRecipe recipe{cfg.kd_epochs, cfg.batch_size, SgdOptions{cfg.kd_learning_rate, cfg.kd_momentum, 0.0}};
  fit(student, holdout, recipe, cfg.seed, loss);
  return student;
}

template <std::floating_point T>
Model<T> run_baseline(const Model<T>& model, const Dataset& holdout, const BaselineConfig& cfg) {
  switch (cfg.kind) {
    case BaselineKind::fine_pruning: return fine_pruning(model, holdout, cfg);
    case BaselineKind::fine_tuning: return fine_tuning(model, holdout, cfg);
    case BaselineKind::kd: return kd_distill(model, holdout, cfg);
  }
  return fine_tuning(model, holdout, cfg);
}

#define WIPER_INSTANTIATE(T)                                                                               \
  template Model<T> fine_tuning<T>(const Model<T>&, const Dataset&, const BaselineConfig&);                \
  template Model<T> fine_pruning<T>(const Model<T>&, const Dataset&, const BaselineConfig&, PruneResult*); \
  template Model<T> kd_distill<T>(const Model<T>&, const Dataset&, const BaselineConfig&);                 \
  template Model<T> run_baseline<T>(const Model<T>&, const Dataset&, const BaselineConfig&);

WIPER_INSTANTIATE(float)
WIPER_INSTANTIATE(double)
#undef WIPER_INSTANTIATE

}  // namespace wiper
