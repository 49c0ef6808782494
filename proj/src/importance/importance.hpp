// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "model/model.hpp"
#include "model/training.hpp"

namespace wiper {

/// Per-neuron scores for the purified layer, indexed by input column j.
struct ImportanceTable {
  std::vector<double> bs;
  std::vector<double> mbs;
  std::vector<double> am;
  std::vector<std::size_t> epoch_updated;
  bool mbs_initialized = false;

  ImportanceTable() = default;
  explicit ImportanceTable(std::size_t fan_in)
      : bs(fan_in, 0.0), mbs(fan_in, 0.0), am(fan_in, 0.0), epoch_updated(fan_in, 0) {}

  std::size_t size() const noexcept { return bs.size(); }
};

/// Which score ranks neurons for selection: momentum salience or activation magnitude.
enum class ImportanceMetric { bs, am };

std::string_view metric_name(ImportanceMetric metric);
std::optional<ImportanceMetric> parse_metric(std::string_view name);

/// Linear decay of the bad-set fraction over the purifying epochs.
struct Schedule {
  double beta0 = 0.5;
  std::size_t total_epochs = 10;
  double eta = 0.9;

  void validate() const;
};

/// beta0 * (1 - i / n) for 0 <= i <= n.
double beta_at(const Schedule& schedule, std::size_t epoch);

/// bs_j = -sum_c grad[c, j] * w[c, j] for a row-major [out, in] weight.
template <std::floating_point T>
std::vector<double> salience_from_grad(const Tensor<T>& weight, std::span<const T> grad);

/// Salience from a graph that already ran backward: the weight gradient is
/// rebuilt as grad(purified_output)^T * purified_input, so penalty terms
/// attached directly to the weight do not leak into the score.
template <std::floating_point T>
std::vector<double> salience_from_step(const Graph<T>& g, const typename Model<T>::Trace& trace,
                                       const Tensor<T>& weight);

/// Salience of every purified-layer neuron under the batch-mean cross-entropy.
/// The model is not modified.
template <std::floating_point T>
std::vector<double> compute_bs(const Model<T>& model, const Batch<T>& batch);

/// Mean over the batch of |a_j|.
template <std::floating_point T>
std::vector<double> compute_am(const Model<T>& model, const Batch<T>& batch);

/// mbs = eta * mbs + (1 - eta) * bs; the first call copies bs.
void update_mbs(ImportanceTable& table, double eta, std::size_t epoch);

/// Number of neurons selected at fraction beta.
std::size_t bad_set_size(double beta, std::size_t fan_in);

/// Indices of the floor(beta * n) lowest scores, ties to the lower index,
/// returned in ascending index order.
std::vector<std::size_t> select_bad(std::span<const double> scores, double beta);
std::vector<std::size_t> select_bad(const ImportanceTable& table, double beta, ImportanceMetric metric);

struct ImportanceSnapshot {
  std::size_t epoch = 0;
  ImportanceTable table;
  std::vector<std::size_t> selected;
};

/// Columns: neuron_index,bs,mbs,am,selected,epoch.
void write_importance_csv(std::ostream& out, std::span<const ImportanceSnapshot> snapshots);

}  // namespace wiper
