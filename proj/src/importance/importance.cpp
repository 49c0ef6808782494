// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "importance/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/format.hpp"

namespace wiper {

std::string_view metric_name(ImportanceMetric metric) { return metric == ImportanceMetric::bs ? "bs" : "am"; }

std::optional<ImportanceMetric> parse_metric(std::string_view name) {
  if (name == "bs") return ImportanceMetric::bs;
  if (name == "am") return ImportanceMetric::am;
  return std::nullopt;
}

void Schedule::validate() const {
  require(beta0 >= 0.0 && beta0 <= 1.0, ErrorCode::invalid_argument, "schedule: beta0 must lie in [0, 1]");
  require(total_epochs >= 1, ErrorCode::invalid_argument, "schedule: total epochs must be positive");
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::invalid_argument, "schedule: eta must lie in [0, 1]");
}

double beta_at(const Schedule& schedule, std::size_t epoch) {
  schedule.validate();
  require(epoch <= schedule.total_epochs, ErrorCode::invalid_argument, "beta_at: epoch past the schedule");
  const double i = static_cast<double>(epoch);
  const double n = static_cast<double>(schedule.total_epochs);
  return schedule.beta0 * (1.0 - i / n);
}

template <std::floating_point T>
std::vector<double> salience_from_grad(const Tensor<T>& weight, std::span<const T> grad) {
  require(weight.rank() == 2, ErrorCode::shape_mismatch, "salience: weight must be [out, in]");
  require(grad.size() == weight.size(), ErrorCode::shape_mismatch, "salience: gradient size mismatch");
  const std::size_t rows = weight.extent(0), cols = weight.extent(1);
  const auto w = weight.data();
  std::vector<double> bs(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < rows; ++c) acc += static_cast<double>(grad[c * cols + j]) * w[c * cols + j];
    require(std::isfinite(acc), ErrorCode::non_finite, "salience: non-finite gradient");
    bs[j] = -acc;
  }
  return bs;
}

template <std::floating_point T>
std::vector<double> salience_from_step(const Graph<T>& g, const typename Model<T>::Trace& trace,
                                       const Tensor<T>& weight) {
  require(g.backward_done(), ErrorCode::bad_state, "salience: graph has not run backward");
  const Tensor<T>& act = g.value(trace.purified_input);
  const auto gout = g.grad(trace.purified_output);
  const std::size_t batch = act.extent(0), cols = act.extent(1), rows = weight.extent(0);
  require(weight.extent(1) == cols, ErrorCode::shape_mismatch, "salience: activation width != fan-in");
  require(gout.size() == batch * rows, ErrorCode::bad_state, "salience: purified layer received no gradient");
  const auto a = act.data();
  std::vector<T> gw(rows * cols, T{0});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < rows; ++c) {
      const T go = gout[b * rows + c];
      if (go == T{0}) continue;
      T* row = gw.data() + c * cols;
      const T* arow = a.data() + b * cols;
      for (std::size_t j = 0; j < cols; ++j) row[j] += go * arow[j];
    }
  return salience_from_grad(weight, std::span<const T>(gw));
}

template <std::floating_point T>
std::vector<double> compute_bs(const Model<T>& model, const Batch<T>& batch) {
  require(!batch.labels.empty(), ErrorCode::invalid_argument, "compute_bs: empty batch");
  Model<T> probe = model;
  probe.zero_grad();
  Graph<T> g;
  const auto trace = probe.forward_tracked(g, g.constant_ref(batch.inputs));
  g.backward(g.cross_entropy(trace.logits, batch.labels));
  const Tensor<T>& w = probe.purified_weight();
  return salience_from_grad(w, w.grad());
}

template <std::floating_point T>
std::vector<double> compute_am(const Model<T>& model, const Batch<T>& batch) {
  require(!batch.labels.empty(), ErrorCode::invalid_argument, "compute_am: empty batch");
  const Tensor<T> act = neuron_activations(model, batch.inputs);
  const std::size_t rows = act.extent(0), cols = act.extent(1);
  const auto a = act.data();
  std::vector<double> am(cols, 0.0);
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t j = 0; j < cols; ++j) am[j] += std::abs(static_cast<double>(a[b * cols + j]));
  for (double& v : am) v /= static_cast<double>(rows);
  return am;
}

void update_mbs(ImportanceTable& table, double eta, std::size_t epoch) {
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::invalid_argument, "update_mbs: eta must lie in [0, 1]");
  require(table.mbs.size() == table.bs.size(), ErrorCode::shape_mismatch, "update_mbs: table columns disagree");
  if (!table.mbs_initialized) {
    table.mbs = table.bs;
    table.mbs_initialized = true;
  } else {
    for (std::size_t j = 0; j < table.bs.size(); ++j) table.mbs[j] = eta * table.mbs[j] + (1.0 - eta) * table.bs[j];
  }
  table.epoch_updated.assign(table.bs.size(), epoch);
}

std::size_t bad_set_size(double beta, std::size_t fan_in) {
  require(beta >= 0.0 && beta <= 1.0, ErrorCode::invalid_argument, "select_bad: beta must lie in [0, 1]");
  // The epsilon keeps products like 0.3 * 10 from flooring to 2.
  return static_cast<std::size_t>(std::floor(beta * static_cast<double>(fan_in) + 1e-9));
}

std::vector<std::size_t> select_bad(std::span<const double> scores, double beta) {
  const std::size_t k = bad_set_size(beta, scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> select_bad(const ImportanceTable& table, double beta, ImportanceMetric metric) {
  return select_bad(metric == ImportanceMetric::bs ? table.mbs : table.am, beta);
}

void write_importance_csv(std::ostream& out, std::span<const ImportanceSnapshot> snapshots) {
  out << "neuron_index,bs,mbs,am,selected,epoch\n";
  for (const auto& snap : snapshots) {
    std::vector<bool> chosen(snap.table.size(), false);
    for (std::size_t j : snap.selected)
      if (j < chosen.size()) chosen[j] = true;
    for (std::size_t j = 0; j < snap.table.size(); ++j)
      out << j << ',' << fmt_real(snap.table.bs[j]) << ',' << fmt_real(snap.table.mbs[j]) << ','
          << fmt_real(snap.table.am[j]) << ',' << (chosen[j] ? 1 : 0) << ',' << snap.epoch << '\n';
  }
}

#define WIPER_INSTANTIATE(T)                                                                                    \
  template std::vector<double> salience_from_grad<T>(const Tensor<T>&, std::span<const T>);                     \
  template std::vector<double> salience_from_step<T>(const Graph<T>&, const Model<T>::Trace&, const Tensor<T>&); \
  template std::vector<double> compute_bs<T>(const Model<T>&, const Batch<T>&);                                 \
  template std::vector<double> compute_am<T>(const Model<T>&, const Batch<T>&);

WIPER_INSTANTIATE(float)
WIPER_INSTANTIATE(double)
#undef WIPER_INSTANTIATE

}  // namespace wiper
