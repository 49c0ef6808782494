// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "importance/importance.hpp"
#include "model/model.hpp"
#include "model/training.hpp"
#include "poison/dataset.hpp"

namespace wiper {

/// Adaptive regularizer: |w| up to magnitude 1, e^{|w| - 1} beyond. Even in w.
double ar(double w);
/// sign(w) inside the knee, sign(w) e^{|w| - 1} outside, 0 at w = 0.
double ar_grad(double w);

/// Literal piecewise form: -e^{-w - 1} below -1, |w| on [-1, 1], e^{w - 1} above 1.
/// Discontinuous at -1 and negative below it; kept for comparison runs only.
double ar_literal(double w);
double ar_literal_grad(double w);

enum class RegularizerKind { ar, l1, l2 };

std::string_view regularizer_name(RegularizerKind kind);
std::optional<RegularizerKind> parse_regularizer(std::string_view name);

/// Per-entry penalty (l1: |w|, l2: w^2, ar: as above).
double regularizer_value(RegularizerKind kind, double w, bool literal_ar = false);
double regularizer_grad(RegularizerKind kind, double w, bool literal_ar = false);

template <std::floating_point T>
EntryPenalty<T> entry_penalty(RegularizerKind kind, bool literal_ar = false);

/// Unscaled sum of the penalty over every entry of the listed columns.
template <std::floating_point T>
double penalty_sum(const Tensor<T>& weight, std::span<const std::size_t> columns, RegularizerKind kind,
                   bool literal_ar = false);

/// mean CE(logits, labels) + alpha * sum over bad columns of the penalty. Biases are never penalized.
template <std::floating_point T>
Var purify_loss(Graph<T>& g, const typename Model<T>::Trace& trace, std::span<const std::size_t> labels,
                std::span<const std::size_t> bad, RegularizerKind kind, double alpha, bool literal_ar = false);

struct PurifyConfig {
  double alpha = 0.01;
  double beta0 = 0.5;
  double eta = 0.9;
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  std::size_t batch_size = 128;  // clipped to the holdout size
  RegularizerKind regularizer = RegularizerKind::ar;
  bool literal_ar = false;
  ImportanceMetric metric = ImportanceMetric::bs;
  bool freeze_selection = false;  // keep the initial bad set for the whole run
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // epochs completed, from 1
  double acc = 0.0;
  double asr = 0.0;
  double penalty_sum = 0.0;
  double beta = 0.0;
  std::size_t set_size = 0;
};

struct AccAsr {
  double acc = 0.0;
  double asr = 0.0;
};

template <std::floating_point T>
using EpochEval = std::function<AccAsr(const Model<T>&)>;

template <std::floating_point T>
struct PurifyResult {
  Model<T> model;
  std::vector<EpochRecord> curve;
  std::vector<ImportanceSnapshot> history;  // initial evaluation, then one per epoch
};

/// Neuron importance evaluation on the whole holdout, then `epochs` of
/// penalized fine-tuning with per-step salience refresh and bad-set
/// reselection. `eval`, when given, fills acc/asr of each curve entry.
template <std::floating_point T>
PurifyResult<T> wiper_purify(const Model<T>& model, const Dataset& holdout, const PurifyConfig& config,
                             const EpochEval<T>& eval = {});

/// Curve CSV: epoch,acc,asr,penalty_sum,beta,set_size.
void write_curve_csv(std::ostream& out, std::span<const EpochRecord> curve);

}  // namespace wiper
