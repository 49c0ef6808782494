// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "purifier/purifier.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "autodiff/sgd.hpp"
#include "core/error.hpp"
#include "core/format.hpp"
#include "core/rng.hpp"

namespace wiper {

namespace {

double sign(double w) { return w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0); }

}  // namespace

double ar(double w) {
  const double m = std::abs(w);
  return m <= 1.0 ? m : std::exp(m - 1.0);
}

double ar_grad(double w) {
  const double m = std::abs(w);
  return m <= 1.0 ? sign(w) : sign(w) * std::exp(m - 1.0);
}

double ar_literal(double w) {
  if (w < -1.0) return -std::exp(-w - 1.0);
  return w > 1.0 ? std::exp(w - 1.0) : std::abs(w);
}

double ar_literal_grad(double w) {
  if (w < -1.0) return std::exp(-w - 1.0);
  return w > 1.0 ? std::exp(w - 1.0) : sign(w);
}

std::string_view regularizer_name(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::ar: return "ar";
    case RegularizerKind::l1: return "l1";
    case RegularizerKind::l2: return "l2";
  }
  return "ar";
}

std::optional<RegularizerKind> parse_regularizer(std::string_view name) {
  if (name == "ar") return RegularizerKind::ar;
  if (name == "l1") return RegularizerKind::l1;
  if (name == "l2") return RegularizerKind::l2;
  return std::nullopt;
}

double regularizer_value(RegularizerKind kind, double w, bool literal_ar) {
  switch (kind) {
    case RegularizerKind::ar: return literal_ar ? ar_literal(w) : ar(w);
    case RegularizerKind::l1: return std::abs(w);
    case RegularizerKind::l2: return w * w;
  }
  return 0.0;
}

double regularizer_grad(RegularizerKind kind, double w, bool literal_ar) {
  switch (kind) {
    case RegularizerKind::ar: return literal_ar ? ar_literal_grad(w) : ar_grad(w);
    case RegularizerKind::l1: return sign(w);
    case RegularizerKind::l2: return 2.0 * w;
  }
  return 0.0;
}

template <std::floating_point T>
EntryPenalty<T> entry_penalty(RegularizerKind kind, bool literal_ar) {
  return {[=](T w) { return static_cast<T>(regularizer_value(kind, static_cast<double>(w), literal_ar)); },
          [=](T w) { return static_cast<T>(regularizer_grad(kind, static_cast<double>(w), literal_ar)); }};
}

template <std::floating_point T>
double penalty_sum(const Tensor<T>& weight, std::span<const std::size_t> columns, RegularizerKind kind,
                   bool literal_ar) {
  require(weight.rank() == 2, ErrorCode::shape_mismatch, "penalty_sum: weight must be [out, in]");
  const std::size_t rows = weight.extent(0), cols = weight.extent(1);
  double total = 0.0;
  for (std::size_t j : columns) {
    require(j < cols, ErrorCode::invalid_argument, "penalty_sum: column out of range");
    for (std::size_t c = 0; c < rows; ++c) total += regularizer_value(kind, weight[c * cols + j], literal_ar);
  }
  return total;
}

template <std::floating_point T>
Var purify_loss(Graph<T>& g, const typename Model<T>::Trace& trace, std::span<const std::size_t> labels,
                std::span<const std::size_t> bad, RegularizerKind kind, double alpha, bool literal_ar) {
  require(alpha >= 0.0, ErrorCode::invalid_argument, "purify_loss: alpha must be nonnegative");
  const Var ce = g.cross_entropy(trace.logits, labels);
  if (bad.empty() || alpha == 0.0) return ce;
  const Var pen =
      g.column_penalty(trace.purified_weight, bad, entry_penalty<T>(kind, literal_ar), static_cast<T>(alpha));
  return g.add(ce, pen);
}

void PurifyConfig::validate() const {
  require(alpha >= 0.0, ErrorCode::invalid_argument, "purify: alpha must be nonnegative");
  require(beta0 >= 0.0 && beta0 <= 1.0, ErrorCode::invalid_argument, "purify: beta0 must lie in [0, 1]");
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::invalid_argument, "purify: eta must lie in [0, 1]");
  require(learning_rate > 0.0, ErrorCode::invalid_argument, "purify: learning rate must be positive");
  require(batch_size >= 1, ErrorCode::invalid_argument, "purify: batch size must be positive");
}

template <std::floating_point T>
PurifyResult<T> wiper_purify(const Model<T>& model, const Dataset& holdout, const PurifyConfig& config,
                             const EpochEval<T>& eval) {
  config.validate();
  PurifyResult<T> result{model, {}, {}};
  if (config.epochs == 0) return result;
  require(holdout.size() > 0, ErrorCode::invalid_argument, "purify: empty holdout");

  Model<T>& net = result.model;
  const Schedule schedule{config.beta0, config.epochs, config.eta};
  const std::size_t batch_size = std::min(config.batch_size, holdout.size());

  // Importance over the whole holdout, then the initial bad set.
  ImportanceTable table(net.fan_in());
  {
    const Batch<T> all = make_batch<T>(holdout);
    table.bs = compute_bs(net, all);
    table.am = compute_am(net, all);
    update_mbs(table, config.eta, 0);
  }
  std::vector<std::size_t> bad = select_bad(table, config.beta0, config.metric);
  result.history.push_back({0, table, bad});

  Sgd<T> opt(SgdOptions{config.learning_rate, 0.0, 0.0});
  Rng rng(config.seed);
  auto params = net.param_ptrs();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double beta = beta_at(schedule, epoch);
    for (const auto& idx : shuffled_batches(holdout.size(), batch_size, rng)) {
      const Batch<T> batch = make_batch<T>(holdout, idx);
      net.zero_grad();
      Graph<T> g;
      const auto trace = net.forward_tracked(g, g.constant_ref(batch.inputs));
      const Var loss = purify_loss(g, trace, batch.labels, bad, config.regularizer, config.alpha, config.literal_ar);
      try {
        g.backward(loss);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::non_finite) throw;
        fail(ErrorCode::non_finite, "purify: diverged in epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      // Scores use the pre-step weights and the CE part of this step's gradient.
      table.bs = salience_from_step(g, trace, net.purified_weight());
      if (config.metric == ImportanceMetric::am) {
        const Tensor<T>& act = g.value(trace.purified_input);
        const std::size_t rows = act.extent(0), cols = act.extent(1);
        std::fill(table.am.begin(), table.am.end(), 0.0);
        for (std::size_t b = 0; b < rows; ++b)
          for (std::size_t j = 0; j < cols; ++j) table.am[j] += std::abs(static_cast<double>(act[b * cols + j]));
        for (double& v : table.am) v /= static_cast<double>(rows);
      }
      opt.step(params);
      update_mbs(table, config.eta, epoch + 1);
      if (!config.freeze_selection) bad = select_bad(table, beta, config.metric);
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.beta = beta;
    rec.set_size = bad.size();
    rec.penalty_sum = penalty_sum(net.purified_weight(), bad, config.regularizer, config.literal_ar);
    if (eval) {
      const AccAsr m = eval(net);
      rec.acc = m.acc;
      rec.asr = m.asr;
    }
    result.curve.push_back(rec);
    result.history.push_back({epoch + 1, table, bad});
  }
  net.zero_grad();
  for (auto* p : params) p->drop_grad();
  return result;
}

void write_curve_csv(std::ostream& out, std::span<const EpochRecord> curve) {
  out << "epoch,acc,asr,penalty_sum,beta,set_size\n";
  for (const auto& r : curve)
    out << r.epoch << ',' << fmt_real(r.acc) << ',' << fmt_real(r.asr) << ',' << fmt_real(r.penalty_sum) << ','
        << fmt_real(r.beta) << ',' << r.set_size << '\n';
}

#define WIPER_INSTANTIATE(T)                                                                                      \
  template EntryPenalty<T> entry_penalty<T>(RegularizerKind, bool);                                               \
  template double penalty_sum<T>(const Tensor<T>&, std::span<const std::size_t>, RegularizerKind, bool);          \
  template Var purify_loss<T>(Graph<T>&, const Model<T>::Trace&, std::span<const std::size_t>,                    \
                              std::span<const std::size_t>, RegularizerKind, double, bool);                       \
  template PurifyResult<T> wiper_purify<T>(const Model<T>&, const Dataset&, const PurifyConfig&, const EpochEval<T>&);

WIPER_INSTANTIATE(float)
WIPER_INSTANTIATE(double)
#undef WIPER_INSTANTIATE

}  // namespace wiper
