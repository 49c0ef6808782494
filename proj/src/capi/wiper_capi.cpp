// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "wiper/wiper.h"

#include <chrono>
#include <cstring>
#include <fstream>
#include <new>
#include <string>
#include <variant>

#include "core/error.hpp"
#include "harness/experiment.hpp"

struct wiper_config {
  wiper::ExperimentConfig cfg;
};

struct wiper_dataset {
  wiper::Dataset ds;
};

struct wiper_model {
  std::variant<wiper::Model<float>, wiper::Model<double>> m;
};

namespace {

using namespace wiper;

thread_local std::string g_last_error;

wiper_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return WIPER_ERR_INVALID_ARGUMENT;
    case ErrorCode::shape_mismatch: return WIPER_ERR_SHAPE;
    case ErrorCode::non_finite: return WIPER_ERR_NON_FINITE;
    case ErrorCode::bad_state: return WIPER_ERR_STATE;
    case ErrorCode::io: return WIPER_ERR_IO;
    case ErrorCode::format: return WIPER_ERR_FORMAT;
    case ErrorCode::config: return WIPER_ERR_CONFIG;
    case ErrorCode::calibration: return WIPER_ERR_CALIBRATION;
  }
  return WIPER_ERR_INTERNAL;
}

template <typename F>
wiper_status guard(F&& body) {
  g_last_error.clear();
  try {
    body();
    return WIPER_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return WIPER_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::invalid_argument, std::string(what) + " must not be null");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
  return out;
}

Patch patch_from(const wiper_dataset* p) {
  need(p, "trojan patch");
  const Dataset& d = p->ds;
  require(d.size() == 1 && d.height == d.width, ErrorCode::format, "trojan patch must be one square image");
  return {d.height, d.channels, d.pixels};
}

std::optional<Patch> optional_patch(const ExperimentConfig& cfg, const wiper_dataset* p) {
  if (cfg.poison.attack != AttackKind::trojannn) return std::nullopt;
  require(p != nullptr, ErrorCode::invalid_argument, "trojannn needs its synthesised trigger patch");
  return patch_from(p);
}

Dataset patch_dataset(const Patch& patch, std::size_t classes) {
  Dataset d;
  d.height = d.width = patch.size;
  d.channels = patch.channels;
  d.classes = classes;
  d.pixels = patch.pixels;
  d.labels = {0};
  return d;
}

template <typename T>
Model<T> load_model(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  Model<T> m = build_model<T>(cfg.model_arch(), 0);
  m.set_purified_layer(cfg.purified_layer);
  m.load_params(load_checkpoint<T>(path));
  return m;
}

void emit_report(const std::filesystem::path& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                 const Evaluation& eval, const std::vector<EpochRecord>& curve, double wall_ms) {
  auto out = open_out(dir / "report.json");
  write_report_json(out, EvalReport{config_hash(cfg), seed, eval.acc, eval.asr, curve, wall_ms});
}

double since_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

extern "C" {

const char* wiper_last_error(void) { return g_last_error.c_str(); }

const char* wiper_status_name(wiper_status status) {
  switch (status) {
    case WIPER_OK: return "ok";
    case WIPER_ERR_INVALID_ARGUMENT: return "invalid argument";
    case WIPER_ERR_CONFIG: return "config error";
    case WIPER_ERR_CALIBRATION: return "calibration failure";
    case WIPER_ERR_IO: return "i/o error";
    case WIPER_ERR_FORMAT: return "format error";
    case WIPER_ERR_SHAPE: return "shape mismatch";
    case WIPER_ERR_NON_FINITE: return "non-finite value";
    case WIPER_ERR_STATE: return "bad state";
    case WIPER_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* wiper_version(void) { return "0.1.0"; }

wiper_status wiper_config_create(wiper_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new wiper_config{};
  });
}

wiper_status wiper_config_load(const char* path, wiper_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new wiper_config{load_config(path)};
  });
}

wiper_status wiper_config_clone(const wiper_config* cfg, wiper_config** out) {
  return guard([&] {
    need(cfg, "config");
    need(out, "out");
    *out = new wiper_config{cfg->cfg};
  });
}

void wiper_config_free(wiper_config* cfg) { delete cfg; }

wiper_status wiper_config_set(wiper_config* cfg, const char* key, const char* value) {
  return guard([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    set_config_value(cfg->cfg, key, value);
  });
}

wiper_status wiper_config_get(const wiper_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(cfg, "config");
    need(key, "key");
    const std::string v = get_config_value(cfg->cfg, key);
    if (needed) *needed = v.size() + 1;
    if (buf && cap > v.size()) std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

wiper_status wiper_config_save(const wiper_config* cfg, const char* path) {
  return guard([&] {
    need(cfg, "config");
    need(path, "path");
    save_config(path, cfg->cfg);
  });
}

wiper_status wiper_config_hash(const wiper_config* cfg, char out[17]) {
  return guard([&] {
    need(cfg, "config");
    need(out, "out");
    const std::string h = config_hash(cfg->cfg);
    std::memcpy(out, h.c_str(), 17);
  });
}

wiper_status wiper_dataset_generate(const wiper_config* cfg, wiper_split split, wiper_dataset** out) {
  return guard([&] {
    need(cfg, "config");
    need(out, "out");
    const DataConfig& d = cfg->cfg.data;
    switch (split) {
      case WIPER_SPLIT_TRAIN: *out = new wiper_dataset{make_train_set(d)}; return;
      case WIPER_SPLIT_HOLDOUT: *out = new wiper_dataset{make_holdout(d, d.holdout_ratio)}; return;
      case WIPER_SPLIT_TEST: *out = new wiper_dataset{make_test_set(d)}; return;
    }
    fail(ErrorCode::invalid_argument, "unknown split");
  });
}

wiper_status wiper_dataset_load(const char* path, wiper_dataset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new wiper_dataset{load_dataset(path)};
  });
}

wiper_status wiper_dataset_save(const wiper_dataset* ds, const char* path) {
  return guard([&] {
    need(ds, "dataset");
    need(path, "path");
    save_dataset(path, ds->ds);
  });
}

wiper_status wiper_dataset_export_csv(const wiper_dataset* ds, const char* path) {
  return guard([&] {
    need(ds, "dataset");
    need(path, "path");
    auto out = open_out(path);
    export_csv(out, ds->ds);
  });
}

wiper_status wiper_dataset_import_csv(const char* path, size_t height, size_t width, size_t channels, size_t classes,
                                      wiper_dataset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, std::string("cannot open ") + path);
    *out = new wiper_dataset{import_csv(in, height, width, channels, classes)};
  });
}

wiper_status wiper_dataset_info_get(const wiper_dataset* ds, wiper_dataset_info* out) {
  return guard([&] {
    need(ds, "dataset");
    need(out, "out");
    *out = {ds->ds.size(), ds->ds.height, ds->ds.width, ds->ds.channels, ds->ds.classes};
  });
}

void wiper_dataset_free(wiper_dataset* ds) { delete ds; }

wiper_status wiper_trojan_synthesize(const wiper_config* cfg, const wiper_model* reference,
                                     const wiper_dataset* synthesis_set, wiper_dataset** patch_out) {
  return guard([&] {
    need(cfg, "config");
    need(reference, "reference model");
    need(synthesis_set, "synthesis set");
    need(patch_out, "out");
    const PoisonSpec spec = cfg->cfg.poison_spec();
    const TrojanResult r =
        std::visit([&](const auto& m) { return synthesize_trojan_trigger(m, synthesis_set->ds, spec); }, reference->m);
    *patch_out = new wiper_dataset{patch_dataset(r.patch, cfg->cfg.data.classes)};
  });
}

wiper_status wiper_dataset_poison(const wiper_config* cfg, const wiper_dataset* clean,
                                  const wiper_dataset* trojan_patch, wiper_dataset** poisoned_out,
                                  size_t* poisoned_count) {
  return guard([&] {
    need(cfg, "config");
    need(clean, "dataset");
    need(poisoned_out, "out");
    const TriggerKit kit = make_kit(cfg->cfg, optional_patch(cfg->cfg, trojan_patch));
    PoisonedData pd = poison_dataset(clean->ds, kit);
    if (poisoned_count) *poisoned_count = pd.record.indices.size();
    *poisoned_out = new wiper_dataset{std::move(pd.data)};
  });
}

wiper_status wiper_dataset_trigger(const wiper_config* cfg, const wiper_dataset* clean,
                                   const wiper_dataset* trojan_patch, wiper_dataset** triggered_out) {
  return guard([&] {
    need(cfg, "config");
    need(clean, "dataset");
    need(triggered_out, "out");
    const TriggerKit kit = make_kit(cfg->cfg, optional_patch(cfg->cfg, trojan_patch));
    *triggered_out = new wiper_dataset{make_triggered_testset(clean->ds, kit)};
  });
}

wiper_status wiper_model_build(const wiper_config* cfg, uint64_t seed, wiper_model** out) {
  return guard([&] {
    need(cfg, "config");
    need(out, "out");
    const ExperimentConfig& c = cfg->cfg;
    if (c.precision == Precision::f32) {
      auto m = build_model<float>(c.model_arch(), seed);
      m.set_purified_layer(c.purified_layer);
      *out = new wiper_model{std::move(m)};
    } else {
      auto m = build_model<double>(c.model_arch(), seed);
      m.set_purified_layer(c.purified_layer);
      *out = new wiper_model{std::move(m)};
    }
  });
}

wiper_status wiper_model_load(const wiper_config* cfg, const char* path, wiper_model** out) {
  return guard([&] {
    need(cfg, "config");
    need(path, "path");
    need(out, "out");
    if (cfg->cfg.precision == Precision::f32) *out = new wiper_model{load_model<float>(cfg->cfg, path)};
    else *out = new wiper_model{load_model<double>(cfg->cfg, path)};
  });
}

wiper_status wiper_model_save(const wiper_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    std::visit([&](const auto& m) { save_checkpoint(path, m.params()); }, model->m);
  });
}

wiper_status wiper_model_fan_in(const wiper_model* model, size_t* out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = std::visit([](const auto& m) { return m.fan_in(); }, model->m);
  });
}

void wiper_model_free(wiper_model* model) { delete model; }

wiper_status wiper_train_victim(const wiper_config* cfg, const char* out_dir, wiper_model** victim_out,
                                wiper_victim_info* info) {
  return guard([&] {
    need(cfg, "config");
    need(victim_out, "out");
    const ExperimentConfig& c = cfg->cfg;
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario sc{make_train_set(c.data), make_test_set(c.data), {}};
    const std::uint64_t seed = victim_seed(c.seed, c.poison.attack, 0);

    auto finish = [&](auto victim) {
      if (info) *info = {{victim.before.acc, victim.before.asr}, victim.twin_acc, victim.calibrated ? 1 : 0,
                         victim.record.indices.size()};
      if (out_dir) {
        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        save_checkpoint(dir / "victim.wipr", victim.model.params());
        save_checkpoint(dir / "twin.wipr", victim.twin.params());
        if (c.poison.attack == AttackKind::trojannn)
          save_dataset(dir / "trigger.dsk", patch_dataset(victim.kit.patch, c.data.classes));
        auto pred = open_out(dir / "predictions.csv");
        write_prediction_dump(pred, sc.test, victim.triggered_test, victim.before);
        emit_report(dir, c, seed, victim.before, {}, since_ms(t0));
      }
      const bool ok = victim.calibrated;
      const std::string note = victim.calibration_note;
      *victim_out = new wiper_model{std::move(victim.model)};
      if (c.victim.calibrate && !ok) fail(ErrorCode::calibration, "victim calibration failed: " + note);
    };
    if (c.precision == Precision::f32) finish(train_victim<float>(c, sc, seed));
    else finish(train_victim<double>(c, sc, seed));
  });
}

wiper_status wiper_defend(const wiper_config* cfg, const wiper_model* victim, const wiper_dataset* holdout,
                          const wiper_dataset* trojan_patch, const char* out_dir, wiper_model** out,
                          wiper_eval* after) {
  return guard([&] {
    need(cfg, "config");
    need(victim, "victim");
    const ExperimentConfig& c = cfg->cfg;
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset hold = holdout ? holdout->ds : make_holdout(c.data, c.data.holdout_ratio);
    const TriggerKit kit = make_kit(c, optional_patch(c, trojan_patch));
    const Dataset test = make_test_set(c.data);
    const Dataset triggered = make_triggered_testset(test, kit);
    const std::uint32_t target = kit.spec.target_label;
    const std::uint64_t seed = cell_seed(c.seed, single_cell(c));

    std::visit(
        [&](const auto& model) {
          using T = typename std::decay_t<decltype(model)>::value_type;
          EpochEval<T> eval = [&](const Model<T>& m) {
            const Evaluation e = evaluate(m, test, triggered, target);
            return AccAsr{e.acc, e.asr};
          };
          auto outcome = run_defense(c, model, hold, seed, eval);
          const Evaluation e = evaluate(outcome.model, test, triggered, target);
          if (after) *after = {e.acc, e.asr};
          if (out_dir) {
            const std::filesystem::path dir(out_dir);
            std::filesystem::create_directories(dir);
            save_checkpoint(dir / "model.wipr", outcome.model.params());
            auto pred = open_out(dir / "predictions.csv");
            write_prediction_dump(pred, test, triggered, e);
            auto curve = open_out(dir / "curve.csv");
            write_curve_csv(curve, outcome.curve);
            if (!outcome.history.empty()) {
              auto imp = open_out(dir / "importance.csv");
              write_importance_csv(imp, outcome.history);
            }
            emit_report(dir, c, seed, e, outcome.curve, since_ms(t0));
          }
          if (out) *out = new wiper_model{std::move(outcome.model)};
        },
        victim->m);
  });
}

wiper_status wiper_evaluate(const wiper_config* cfg, const wiper_model* model, const wiper_dataset* test,
                            const wiper_dataset* triggered, const wiper_dataset* trojan_patch, const char* dump_path,
                            wiper_eval* out) {
  return guard([&] {
    need(cfg, "config");
    need(model, "model");
    const ExperimentConfig& c = cfg->cfg;
    const Dataset clean = test ? test->ds : make_test_set(c.data);
    const std::uint32_t target = c.poison.target_label;
    const Dataset trig =
        triggered ? triggered->ds : make_triggered_testset(clean, make_kit(c, optional_patch(c, trojan_patch)));
    const Evaluation e = std::visit([&](const auto& m) { return evaluate(m, clean, trig, target); }, model->m);
    if (out) *out = {e.acc, e.asr};
    if (dump_path) {
      auto dump = open_out(dump_path);
      write_prediction_dump(dump, clean, trig, e);
    }
  });
}

wiper_status wiper_importance_dump(const wiper_config* cfg, const wiper_model* model, const wiper_dataset* holdout,
                                   const char* csv_path) {
  return guard([&] {
    need(cfg, "config");
    need(model, "model");
    need(csv_path, "path");
    const ExperimentConfig& c = cfg->cfg;
    const Dataset hold = holdout ? holdout->ds : make_holdout(c.data, c.data.holdout_ratio);
    ImportanceSnapshot snap = std::visit(
        [&](const auto& m) {
          using T = typename std::decay_t<decltype(m)>::value_type;
          auto probe = m;
          probe.set_purified_layer(c.purified_layer);
          const Batch<T> batch = make_batch<T>(hold);
          ImportanceTable table(probe.fan_in());
          table.bs = compute_bs(probe, batch);
          table.am = compute_am(probe, batch);
          update_mbs(table, c.purify.eta, 0);
          auto selected = select_bad(table, c.purify.beta0, c.purify.metric);
          return ImportanceSnapshot{0, std::move(table), std::move(selected)};
        },
        model->m);
    auto out = open_out(csv_path);
    write_importance_csv(out, std::span(&snap, 1));
  });
}

wiper_status wiper_run_matrix(const wiper_config* cfg, const char* out_dir, wiper_matrix_info* info) {
  return guard([&] {
    need(cfg, "config");
    need(out_dir, "output directory");
    const auto cells = run_matrix(cfg->cfg, out_dir);
    std::size_t failed = 0;
    for (const auto& r : cells) failed += r.status != "ok";
    if (info) *info = {cells.size(), failed};
  });
}

wiper_status wiper_recompute_from_dump(const char* path, uint32_t target_label, wiper_eval* out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, std::string("cannot open ") + path);
    const AccAsr r = recompute_from_dump(in, target_label);
    *out = {r.acc, r.asr};
  });
}

}  // extern "C"
