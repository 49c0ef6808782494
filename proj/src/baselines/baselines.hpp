// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "importance/importance.hpp"
#include "model/model.hpp"
#include "model/training.hpp"
#include "poison/dataset.hpp"

namespace wiper {

enum class BaselineKind { fine_pruning, fine_tuning, kd };

std::string_view baseline_name(BaselineKind kind);
std::optional<BaselineKind> parse_baseline(std::string_view name);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::fine_tuning;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;

  // fine-tuning recipe, shared by fine-pruning
  double ft_learning_rate = 0.1;
  double ft_momentum = 0.9;
  double ft_weight_decay = 1e-4;

  double pruning_rate = 0.1;
  ImportanceMetric pruning_metric = ImportanceMetric::am;

  double kd_ce_weight = 0.5;
  double kd_kl_weight = 0.5;
  double kd_temperature = 2.0;
  std::size_t kd_epochs = 20;
  double kd_learning_rate = 0.05;
  double kd_momentum = 0.9;

  void validate() const;
};

/// Plain supervised fine-tuning on the holdout. Returns a new model.
template <std::floating_point T>
Model<T> fine_tuning(const Model<T>& model, const Dataset& holdout, const BaselineConfig& cfg);

struct PruneResult {
  std::vector<std::size_t> pruned;  // ascending neuron indices
  std::vector<double> scores;       // metric over the holdout, before pruning
};

/// Zeroes the floor(rate * fan_in) lowest-scoring neurons of the purified
/// layer, then fine-tunes with those columns held at zero.
template <std::floating_point T>
Model<T> fine_pruning(const Model<T>& model, const Dataset& holdout, const BaselineConfig& cfg,
                      PruneResult* report = nullptr);

/// Trains a freshly initialised student of the teacher's architecture with
/// ce_weight * CE + kl_weight * KL(teacher_T || student_T).
template <std::floating_point T>
Model<T> kd_distill(const Model<T>& teacher, const Dataset& holdout, const BaselineConfig& cfg);

/// Dispatches on cfg.kind.
template <std::floating_point T>
Model<T> run_baseline(const Model<T>& model, const Dataset& holdout, const BaselineConfig& cfg);

}  // namespace wiper
