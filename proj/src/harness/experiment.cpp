// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "core/error.hpp"
#include "core/format.hpp"
#include "core/rng.hpp"

namespace wiper {

namespace {

SyntheticSpec synthetic_spec(const DataConfig& data, std::size_t per_class, std::uint64_t seed) {
  SyntheticSpec s;
  s.classes = data.classes;
  s.per_class = per_class;
  s.height = data.input.height;
  s.width = data.input.width;
  s.channels = data.input.channels;
  s.noise = data.noise;
  s.contrast = data.contrast;
  s.seed = seed;
  return s;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

Dataset make_train_set(const DataConfig& data) {
  return gen_synthetic(synthetic_spec(data, data.train_per_class, data.seed), Split::train);
}

Dataset make_test_set(const DataConfig& data) {
  return gen_synthetic(synthetic_spec(data, data.test_per_class, mix_seed(data.seed, 0x7E57)), Split::test);
}

Dataset make_holdout(const DataConfig& data, double ratio) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorCode::config, "holdout ratio must lie in (0, 1]");
  const auto per_class = static_cast<std::size_t>(
      std::max(1.0, std::floor(ratio * static_cast<double>(data.train_per_class) + 0.5)));
  return gen_synthetic(synthetic_spec(data, per_class, mix_seed(data.seed, 0x401D)), Split::holdout);
}

Scenario make_scenario(const DataConfig& data) {
  return {make_train_set(data), make_test_set(data), make_holdout(data, data.holdout_ratio)};
}

double accuracy_pct(std::span<const std::size_t> predictions, std::span<const std::uint32_t> labels) {
  require(!labels.empty(), ErrorCode::invalid_argument, "evaluate: empty test set");
  require(predictions.size() == labels.size(), ErrorCode::shape_mismatch, "evaluate: prediction count mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

double asr_pct(std::span<const std::size_t> predictions, std::span<const std::uint32_t> labels, std::uint32_t target) {
  require(predictions.size() == labels.size(), ErrorCode::shape_mismatch, "evaluate: prediction count mismatch");
  std::size_t eligible = 0, hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == target) continue;
    ++eligible;
    hit += predictions[i] == target;
  }
  require(eligible > 0, ErrorCode::invalid_argument, "evaluate: no triggered samples outside the target class");
  return 100.0 * static_cast<double>(hit) / static_cast<double>(eligible);
}

template <std::floating_point T>
Evaluation evaluate(const Model<T>& model, const Dataset& clean, const Dataset& triggered, std::uint32_t target) {
  Evaluation e;
  e.clean_predictions = predict(model, clean);
  e.triggered_predictions = predict(model, triggered);
  e.acc = accuracy_pct(e.clean_predictions, clean.labels);
  e.asr = asr_pct(e.triggered_predictions, triggered.labels, target);
  return e;
}

void write_prediction_dump(std::ostream& out, const Dataset& clean, const Dataset& triggered, const Evaluation& eval) {
  out << "split,index,label,prediction\n";
  for (std::size_t i = 0; i < clean.size(); ++i)
    out << "clean," << i << ',' << clean.labels[i] << ',' << eval.clean_predictions[i] << '\n';
  for (std::size_t i = 0; i < triggered.size(); ++i)
    out << "triggered," << i << ',' << triggered.labels[i] << ',' << eval.triggered_predictions[i] << '\n';
}

AccAsr recompute_from_dump(std::istream& in, std::uint32_t target) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::format, "prediction dump: missing header");
  std::vector<std::size_t> cp, tp;
  std::vector<std::uint32_t> cl, tl;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string split, index, label, pred;
    if (!std::getline(ss, split, ',') || !std::getline(ss, index, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, pred))
      fail(ErrorCode::format, "prediction dump: malformed row '" + line + "'");
    const auto l = static_cast<std::uint32_t>(std::stoul(label));
    const auto p = static_cast<std::size_t>(std::stoul(pred));
    if (split == "clean") {
      cl.push_back(l);
      cp.push_back(p);
    } else if (split == "triggered") {
      tl.push_back(l);
      tp.push_back(p);
    } else {
      fail(ErrorCode::format, "prediction dump: unknown split '" + split + "'");
    }
  }
  return {accuracy_pct(cp, cl), asr_pct(tp, tl, target)};
}

void write_report_json(std::ostream& out, const EvalReport& report) {
  nlohmann::ordered_json j;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["acc"] = report.acc;
  j["asr"] = report.asr;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs)
    j["epochs"].push_back(
        {{"epoch", e.epoch}, {"acc", e.acc}, {"asr", e.asr}, {"penalty_sum", e.penalty_sum}, {"beta", e.beta}});
  j["wall_ms"] = report.wall_ms;
  out << j.dump(2) << '\n';
}

EvalReport read_report_json(std::istream& in) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(in);
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.acc = j.at("acc").get<double>();
    r.asr = j.at("asr").get<double>();
    for (const auto& e : j.at("epochs")) {
      EpochRecord rec;
      rec.epoch = e.at("epoch").get<std::size_t>();
      rec.acc = e.at("acc").get<double>();
      rec.asr = e.at("asr").get<double>();
      rec.penalty_sum = e.at("penalty_sum").get<double>();
      rec.beta = e.at("beta").get<double>();
      r.epochs.push_back(rec);
    }
    r.wall_ms = j.at("wall_ms").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("report: ") + e.what());
  }
  return r;
}

std::string CellCoords::key() const {
  return "defense=" + std::string(defense_name(defense)) + ";attack=" + std::string(attack_name(attack)) +
         ";alpha=" + fmt_real(alpha) + ";data_ratio=" + fmt_real(data_ratio) + ";layer=" + layer +
         ";regularizer=" + std::string(regularizer_name(regularizer)) + ";metric=" + std::string(metric_name(metric)) +
         ";rep=" + std::to_string(replicate);
}

CellCoords single_cell(const ExperimentConfig& cfg) {
  CellCoords c;
  c.defense = cfg.defense;
  c.attack = cfg.poison.attack;
  c.alpha = cfg.purify.alpha;
  c.data_ratio = cfg.data.holdout_ratio;
  c.layer = cfg.purified_layer;
  c.regularizer = cfg.purify.regularizer;
  c.metric = cfg.defense == DefenseKind::fine_pruning ? cfg.baseline.pruning_metric : cfg.purify.metric;
  return c;
}

ExperimentConfig apply_cell(const ExperimentConfig& cfg, const CellCoords& cell) {
  ExperimentConfig out = cfg;
  out.defense = cell.defense;
  out.poison.attack = cell.attack;
  out.purify.alpha = cell.alpha;
  out.data.holdout_ratio = cell.data_ratio;
  out.purified_layer = cell.layer;
  out.purify.regularizer = cell.regularizer;
  if (cell.defense == DefenseKind::fine_pruning) out.baseline.pruning_metric = cell.metric;
  else out.purify.metric = cell.metric;
  return out;
}

std::uint64_t victim_seed(std::uint64_t master, AttackKind attack, std::size_t replicate) {
  return master ^ fnv1a("attack=" + std::string(attack_name(attack)) + ";rep=" + std::to_string(replicate));
}

std::uint64_t cell_seed(std::uint64_t master, const CellCoords& cell) { return master ^ fnv1a(cell.key()); }

TriggerKit make_kit(const ExperimentConfig& cfg, std::optional<Patch> trojan_patch) {
  const auto& in = cfg.data.input;
  return make_trigger_kit(cfg.poison_spec(), in.height, in.width, in.channels, std::move(trojan_patch));
}

template <std::floating_point T>
Victim<T> train_victim(const ExperimentConfig& cfg, const Scenario& scenario, std::uint64_t seed) {
  const std::uint64_t init_seed = mix_seed(seed, 1);
  const std::uint64_t order_seed = mix_seed(seed, 2);
  Model<T> twin = build_model<T>(cfg.model_arch(), init_seed);
  twin.set_purified_layer(cfg.purified_layer);
  fit(twin, scenario.train, cfg.victim.recipe, order_seed);

  std::optional<Patch> trojan;
  if (cfg.poison.attack == AttackKind::trojannn) {
    // The attacker reverse-engineers its trigger from a clean model trained on its own data.
    const std::size_t m = std::min<std::size_t>(scenario.train.size(), 200);
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    trojan = synthesize_trojan_trigger(twin, subset(scenario.train, idx), cfg.poison_spec()).patch;
  }
  TriggerKit kit = make_kit(cfg, trojan);
  PoisonedData pd = poison_dataset(scenario.train, kit);
  Dataset triggered = make_triggered_testset(scenario.test, kit);

  Model<T> model = build_model<T>(cfg.model_arch(), init_seed);
  model.set_purified_layer(cfg.purified_layer);
  fit(model, pd.data, cfg.victim.recipe, order_seed);

  const std::uint32_t target = kit.spec.target_label;
  Victim<T> v{std::move(model), std::move(twin), std::move(kit), std::move(pd.record), std::move(pd.data),
              std::move(triggered), {}, 0.0, false, {}};
  v.before = evaluate(v.model, scenario.test, v.triggered_test, target);
  v.twin_acc = accuracy_pct(predict(v.twin, scenario.test), scenario.test.labels);
  const double gap = v.twin_acc - v.before.acc;
  v.calibrated = v.before.asr >= cfg.victim.min_asr && gap <= cfg.victim.max_acc_gap;
  v.calibration_note = "asr " + fmt_fixed(v.before.asr, 2) + " (need >= " + fmt_fixed(cfg.victim.min_asr, 2) +
                       "), acc gap " + fmt_fixed(gap, 2) + " (need <= " + fmt_fixed(cfg.victim.max_acc_gap, 2) + ")";
  return v;
}

template <std::floating_point T>
void require_calibrated(const Victim<T>& victim) {
  require(victim.calibrated, ErrorCode::calibration, "victim calibration failed: " + victim.calibration_note);
}

template <std::floating_point T>
DefenseOutcome<T> run_defense(const ExperimentConfig& cfg, const Model<T>& model, const Dataset& holdout,
                              std::uint64_t seed, const EpochEval<T>& eval) {
  Model<T> start = model;
  start.set_purified_layer(cfg.purified_layer);
  switch (cfg.defense) {
    case DefenseKind::none: return {std::move(start), {}, {}};
    case DefenseKind::wiper: {
      PurifyConfig pc = cfg.purify;
      pc.seed = seed;
      auto res = wiper_purify(start, holdout, pc, eval);
      return {std::move(res.model), std::move(res.curve), std::move(res.history)};
    }
    case DefenseKind::fine_pruning:
    case DefenseKind::fine_tuning:
    case DefenseKind::kd: {
      BaselineConfig bc = cfg.baseline;
      bc.seed = seed;
      bc.kind = cfg.defense == DefenseKind::fine_pruning  ? BaselineKind::fine_pruning
                : cfg.defense == DefenseKind::fine_tuning ? BaselineKind::fine_tuning
                                                          : BaselineKind::kd;
      return {run_baseline(start, holdout, bc), {}, {}};
    }
  }
  return {std::move(start), {}, {}};
}

std::optional<std::size_t> epochs_to_asr(std::span<const EpochRecord> curve, double threshold) {
  for (const auto& r : curve)
    if (r.asr < threshold) return r.epoch;
  return std::nullopt;
}

std::vector<CellCoords> matrix_cells(const ExperimentConfig& cfg) {
  const auto& m = cfg.matrix;
  const CellCoords base = single_cell(cfg);
  const std::vector<DefenseKind> defenses = m.defenses.empty() ? std::vector{cfg.defense} : m.defenses;
  const std::vector<AttackKind> attacks = m.attacks.empty() ? std::vector{cfg.poison.attack} : m.attacks;
  const std::vector<double> alphas = m.alphas.empty() ? std::vector{cfg.purify.alpha} : m.alphas;
  const std::vector<double> ratios = m.data_ratios.empty() ? std::vector{cfg.data.holdout_ratio} : m.data_ratios;
  const std::vector<std::string> layers = m.layers.empty() ? std::vector{cfg.purified_layer} : m.layers;
  const std::vector<RegularizerKind> regs =
      m.regularizers.empty() ? std::vector{cfg.purify.regularizer} : m.regularizers;
  require(m.replicates >= 1, ErrorCode::config, "matrix.replicates must be positive");

  std::vector<CellCoords> cells;
  for (std::size_t rep = 0; rep < m.replicates; ++rep)
    for (AttackKind attack : attacks)
      for (DefenseKind defense : defenses) {
        std::vector<ImportanceMetric> metrics = m.metrics;
        if (metrics.empty())
          metrics = {defense == DefenseKind::fine_pruning ? cfg.baseline.pruning_metric : cfg.purify.metric};
        for (double alpha : alphas)
          for (double ratio : ratios)
            for (const auto& layer : layers)
              for (RegularizerKind reg : regs)
                for (ImportanceMetric metric : metrics) {
                  CellCoords c = base;
                  c.defense = defense;
                  c.attack = attack;
                  c.alpha = alpha;
                  c.data_ratio = ratio;
                  c.layer = layer;
                  c.regularizer = reg;
                  c.metric = metric;
                  c.replicate = rep;
                  cells.push_back(std::move(c));
                }
      }
  return cells;
}

namespace {

template <std::floating_point T>
std::vector<CellResult> run_matrix_typed(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const auto cells = matrix_cells(cfg);
  const Dataset train = make_train_set(cfg.data);
  const Dataset test = make_test_set(cfg.data);
  std::map<double, Dataset> holdouts;
  std::map<std::pair<AttackKind, std::size_t>, Victim<T>> victims;
  const std::string hash = config_hash(cfg);
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(out_dir / "cells");

  std::vector<CellResult> results;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    CellResult r;
    r.index = i;
    r.coords = cells[i];
    r.seed = cell_seed(cfg.seed, cells[i]);
    try {
      const ExperimentConfig cc = apply_cell(cfg, cells[i]);
      const auto vkey = std::make_pair(cells[i].attack, cells[i].replicate);
      auto it = victims.find(vkey);
      if (it == victims.end()) {
        const Scenario sc{train, test, {}};
        it = victims.emplace(vkey, train_victim<T>(cc, sc, victim_seed(cfg.seed, cells[i].attack, cells[i].replicate)))
                 .first;
      }
      const Victim<T>& v = it->second;
      auto hit = holdouts.find(cells[i].data_ratio);
      if (hit == holdouts.end()) hit = holdouts.emplace(cells[i].data_ratio, make_holdout(cc.data, cells[i].data_ratio)).first;

      const std::uint32_t target = v.kit.spec.target_label;
      EpochEval<T> eval = [&](const Model<T>& m) {
        const Evaluation e = evaluate(m, test, v.triggered_test, target);
        return AccAsr{e.acc, e.asr};
      };
      auto outcome = run_defense(cc, v.model, hit->second, r.seed, eval);
      const Evaluation after = evaluate(outcome.model, test, v.triggered_test, target);
      r.acc_before = v.before.acc;
      r.asr_before = v.before.asr;
      r.twin_acc = v.twin_acc;
      r.acc = after.acc;
      r.asr = after.asr;
      r.curve = std::move(outcome.curve);
      r.epochs_to_asr10 = epochs_to_asr(r.curve, 10.0);
      if (cc.victim.calibrate && !v.calibrated) r.status = "calibration_failed";
      r.wall_ms = elapsed_ms(t0);
      if (write) {
        const auto dir = out_dir / "cells" / std::to_string(i);
        std::filesystem::create_directories(dir);
        std::ofstream rep(dir / "report.json", std::ios::trunc);
        write_report_json(rep, EvalReport{hash, r.seed, r.acc, r.asr, r.curve, r.wall_ms});
        std::ofstream pred(dir / "predictions.csv", std::ios::trunc);
        write_prediction_dump(pred, test, v.triggered_test, after);
        std::ofstream curve(dir / "curve.csv", std::ios::trunc);
        write_curve_csv(curve, r.curve);
      }
    } catch (const std::exception& e) {
      r.status = std::string("error: ") + e.what();
      r.wall_ms = elapsed_ms(t0);
    }
    results.push_back(std::move(r));
  }
  if (write) {
    std::ofstream agg(out_dir / "matrix.csv", std::ios::trunc);
    write_matrix_csv(agg, results);
    std::ofstream sum(out_dir / "summary.csv", std::ios::trunc);
    write_summary_csv(sum, results);
  }
  return results;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::vector<CellResult> run_matrix(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  return cfg.precision == Precision::f32 ? run_matrix_typed<float>(cfg, out_dir)
                                         : run_matrix_typed<double>(cfg, out_dir);
}

void write_matrix_csv(std::ostream& out, std::span<const CellResult> cells) {
  out << "cell,defense,attack,alpha,data_ratio,layer,regularizer,metric,replicate,seed,status,"
         "acc_before,asr_before,twin_acc,acc,asr,epochs_to_asr10\n";
  for (const auto& r : cells) {
    const auto& c = r.coords;
    out << r.index << ',' << defense_name(c.defense) << ',' << attack_name(c.attack) << ',' << fmt_real(c.alpha) << ','
        << fmt_real(c.data_ratio) << ',' << csv_field(c.layer) << ',' << regularizer_name(c.regularizer) << ','
        << metric_name(c.metric) << ',' << c.replicate << ',' << r.seed << ',' << csv_field(r.status) << ','
        << fmt_real(r.acc_before) << ',' << fmt_real(r.asr_before) << ',' << fmt_real(r.twin_acc) << ','
        << fmt_real(r.acc) << ',' << fmt_real(r.asr) << ','
        << (r.epochs_to_asr10 ? std::to_string(*r.epochs_to_asr10) : r.curve.empty() ? "" : "never") << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const CellResult> cells) {
  struct Acc {
    std::size_t n = 0;
    double acc = 0, asr = 0, acc_before = 0, asr_before = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> groups;
  for (const auto& r : cells) {
    if (r.status.rfind("error", 0) == 0) continue;
    CellCoords c = r.coords;
    c.replicate = 0;
    const std::string key = std::string(defense_name(c.defense)) + ',' + std::string(attack_name(c.attack)) + ',' +
                            fmt_real(c.alpha) + ',' + fmt_real(c.data_ratio) + ',' + csv_field(c.layer) + ',' +
                            std::string(regularizer_name(c.regularizer)) + ',' + std::string(metric_name(c.metric));
    if (!groups.contains(key)) order.push_back(key);
    auto& g = groups[key];
    ++g.n;
    g.acc += r.acc;
    g.asr += r.asr;
    g.acc_before += r.acc_before;
    g.asr_before += r.asr_before;
  }
  out << "defense,attack,alpha,data_ratio,layer,regularizer,metric,replicates,"
         "mean_acc_before,mean_asr_before,mean_acc,mean_asr\n";
  for (const auto& key : order) {
    const auto& g = groups[key];
    const double n = static_cast<double>(g.n);
    out << key << ',' << g.n << ',' << fmt_real(g.acc_before / n) << ',' << fmt_real(g.asr_before / n) << ','
        << fmt_real(g.acc / n) << ',' << fmt_real(g.asr / n) << '\n';
  }
}

#define WIPER_INSTANTIATE(T)                                                                                  \
  template Evaluation evaluate<T>(const Model<T>&, const Dataset&, const Dataset&, std::uint32_t);            \
  template Victim<T> train_victim<T>(const ExperimentConfig&, const Scenario&, std::uint64_t);                \
  template void require_calibrated<T>(const Victim<T>&);                                                      \
  template DefenseOutcome<T> run_defense<T>(const ExperimentConfig&, const Model<T>&, const Dataset&,         \
                                            std::uint64_t, const EpochEval<T>&);

WIPER_INSTANTIATE(float)
WIPER_INSTANTIATE(double)
#undef WIPER_INSTANTIATE

}  // namespace wiper
