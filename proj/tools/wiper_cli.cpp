// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

// Experiment CLI. Talks to the library only through wiper/wiper.h.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wiper/wiper.h"

namespace {

namespace fs = std::filesystem;

using ConfigPtr = std::unique_ptr<wiper_config, decltype(&wiper_config_free)>;
using DatasetPtr = std::unique_ptr<wiper_dataset, decltype(&wiper_dataset_free)>;
using ModelPtr = std::unique_ptr<wiper_model, decltype(&wiper_model_free)>;

// Thrown to unwind with the status of a failed library call.
struct Failure {
  wiper_status status;
};

void check(wiper_status s) {
  if (s == WIPER_OK) return;
  std::fprintf(stderr, "wiper: %s: %s\n", wiper_status_name(s), wiper_last_error());
  throw Failure{s};
}

int exit_code(wiper_status s) {
  switch (s) {
    case WIPER_OK: return 0;
    case WIPER_ERR_CONFIG: return 2;
    case WIPER_ERR_CALIBRATION: return 3;
    default: return 1;
  }
}

struct Globals {
  std::string config_path;
  std::string seed;
  std::string out;
  std::string precision;
  std::vector<std::string> sets;
};

ConfigPtr make_config(const Globals& g) {
  wiper_config* raw = nullptr;
  check(g.config_path.empty() ? wiper_config_create(&raw) : wiper_config_load(g.config_path.c_str(), &raw));
  ConfigPtr cfg(raw, wiper_config_free);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "wiper: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{WIPER_ERR_CONFIG};
    }
    check(wiper_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (!g.seed.empty()) check(wiper_config_set(cfg.get(), "run.seed", g.seed.c_str()));
  if (!g.out.empty()) check(wiper_config_set(cfg.get(), "run.out", g.out.c_str()));
  if (!g.precision.empty()) check(wiper_config_set(cfg.get(), "run.precision", g.precision.c_str()));
  return cfg;
}

std::string config_value(const wiper_config* cfg, const char* key) {
  std::size_t needed = 0;
  check(wiper_config_get(cfg, key, nullptr, 0, &needed));
  std::string buf(needed, '\0');
  check(wiper_config_get(cfg, key, buf.data(), buf.size(), &needed));
  buf.resize(needed - 1);
  return buf;
}

fs::path out_dir(const wiper_config* cfg) {
  fs::path dir = config_value(cfg, "run.out");
  fs::create_directories(dir);
  return dir;
}

DatasetPtr load_dataset(const std::string& path) {
  wiper_dataset* raw = nullptr;
  if (!path.empty()) check(wiper_dataset_load(path.c_str(), &raw));
  return DatasetPtr(raw, wiper_dataset_free);
}

ModelPtr load_model(const wiper_config* cfg, const std::string& path) {
  wiper_model* raw = nullptr;
  check(wiper_model_load(cfg, path.c_str(), &raw));
  return ModelPtr(raw, wiper_model_free);
}

void save_config_copy(const wiper_config* cfg, const fs::path& dir) {
  check(wiper_config_save(cfg, (dir / "config.txt").string().c_str()));
}

void print_eval(const char* label, const wiper_eval& e) {
  std::printf("%s acc=%.2f asr=%.2f\n", label, e.acc, e.asr);
}

void cmd_gen_data(const Globals& g, const std::string& split, bool csv) {
  auto cfg = make_config(g);
  const fs::path dir = out_dir(cfg.get());
  const std::vector<std::pair<std::string, wiper_split>> all{
      {"train", WIPER_SPLIT_TRAIN}, {"holdout", WIPER_SPLIT_HOLDOUT}, {"test", WIPER_SPLIT_TEST}};
  for (const auto& [name, s] : all) {
    if (split != "all" && split != name) continue;
    wiper_dataset* raw = nullptr;
    check(wiper_dataset_generate(cfg.get(), s, &raw));
    DatasetPtr ds(raw, wiper_dataset_free);
    const fs::path file = dir / (name + ".dsk");
    check(wiper_dataset_save(ds.get(), file.string().c_str()));
    if (csv) check(wiper_dataset_export_csv(ds.get(), (dir / (name + ".csv")).string().c_str()));
    wiper_dataset_info info{};
    check(wiper_dataset_info_get(ds.get(), &info));
    std::printf("%s: %zu samples -> %s\n", name.c_str(), info.size, file.string().c_str());
  }
}

void cmd_train(const Globals& g) {
  auto cfg = make_config(g);
  const fs::path dir = out_dir(cfg.get());
  save_config_copy(cfg.get(), dir);
  wiper_model* raw = nullptr;
  wiper_victim_info info{};
  const wiper_status s = wiper_train_victim(cfg.get(), dir.string().c_str(), &raw, &info);
  ModelPtr model(raw, wiper_model_free);
  if (raw) {
    print_eval("victim", info.before);
    std::printf("twin acc=%.2f poisoned=%zu calibrated=%s\n", info.twin_acc, info.poisoned_count,
                info.calibrated ? "yes" : "no");
  }
  check(s);
}

void cmd_poison(const Globals& g, const std::string& input, const std::string& patch_path,
                const std::string& reference) {
  auto cfg = make_config(g);
  const fs::path dir = out_dir(cfg.get());
  DatasetPtr clean = load_dataset(input);
  if (!clean) {
    wiper_dataset* raw = nullptr;
    check(wiper_dataset_generate(cfg.get(), WIPER_SPLIT_TRAIN, &raw));
    clean.reset(raw);
  }
  DatasetPtr patch = load_dataset(patch_path);
  if (!patch && config_value(cfg.get(), "poison.attack") == "trojannn") {
    if (reference.empty()) {
      std::fprintf(stderr, "wiper: trojannn needs --patch or --reference\n");
      throw Failure{WIPER_ERR_INVALID_ARGUMENT};
    }
    ModelPtr ref = load_model(cfg.get(), reference);
    wiper_dataset* raw = nullptr;
    check(wiper_trojan_synthesize(cfg.get(), ref.get(), clean.get(), &raw));
    patch.reset(raw);
    check(wiper_dataset_save(patch.get(), (dir / "trigger.dsk").string().c_str()));
  }
  wiper_dataset* raw = nullptr;
  std::size_t count = 0;
  check(wiper_dataset_poison(cfg.get(), clean.get(), patch.get(), &raw, &count));
  DatasetPtr poisoned(raw, wiper_dataset_free);
  check(wiper_dataset_save(poisoned.get(), (dir / "poisoned.dsk").string().c_str()));

  wiper_dataset* test_raw = nullptr;
  check(wiper_dataset_generate(cfg.get(), WIPER_SPLIT_TEST, &test_raw));
  DatasetPtr test(test_raw, wiper_dataset_free);
  wiper_dataset* trig_raw = nullptr;
  check(wiper_dataset_trigger(cfg.get(), test.get(), patch.get(), &trig_raw));
  DatasetPtr triggered(trig_raw, wiper_dataset_free);
  check(wiper_dataset_save(triggered.get(), (dir / "triggered_test.dsk").string().c_str()));
  std::printf("poisoned %zu samples -> %s\n", count, (dir / "poisoned.dsk").string().c_str());
}

void cmd_defend(const Globals& g, const std::string& defense, const std::string& model_path,
                const std::string& holdout_path, const std::string& patch_path) {
  auto cfg = make_config(g);
  if (!defense.empty()) check(wiper_config_set(cfg.get(), "defense.kind", defense.c_str()));
  const fs::path dir = out_dir(cfg.get());
  save_config_copy(cfg.get(), dir);
  ModelPtr victim = load_model(cfg.get(), model_path);
  DatasetPtr holdout = load_dataset(holdout_path);
  DatasetPtr patch = load_dataset(patch_path);
  wiper_eval before{}, after{};
  check(wiper_evaluate(cfg.get(), victim.get(), nullptr, nullptr, patch.get(), nullptr, &before));
  check(wiper_defend(cfg.get(), victim.get(), holdout.get(), patch.get(), dir.string().c_str(), nullptr, &after));
  print_eval("before", before);
  print_eval("after", after);
}

void cmd_eval(const Globals& g, const std::string& model_path, const std::string& test_path,
              const std::string& triggered_path, const std::string& patch_path, const std::string& dump) {
  auto cfg = make_config(g);
  ModelPtr model = load_model(cfg.get(), model_path);
  DatasetPtr test = load_dataset(test_path);
  DatasetPtr triggered = load_dataset(triggered_path);
  DatasetPtr patch = load_dataset(patch_path);
  wiper_eval e{};
  check(wiper_evaluate(cfg.get(), model.get(), test.get(), triggered.get(), patch.get(),
                       dump.empty() ? nullptr : dump.c_str(), &e));
  print_eval("eval", e);
}

void cmd_matrix(const Globals& g) {
  auto cfg = make_config(g);
  const fs::path dir = out_dir(cfg.get());
  save_config_copy(cfg.get(), dir);
  wiper_matrix_info info{};
  check(wiper_run_matrix(cfg.get(), dir.string().c_str(), &info));
  std::printf("matrix: %zu cells, %zu failed -> %s\n", info.cells, info.failed, (dir / "matrix.csv").string().c_str());
}

void cmd_importance(const Globals& g, const std::string& model_path, const std::string& holdout_path,
                    const std::string& csv) {
  auto cfg = make_config(g);
  ModelPtr model = load_model(cfg.get(), model_path);
  DatasetPtr holdout = load_dataset(holdout_path);
  const fs::path path = csv.empty() ? out_dir(cfg.get()) / "importance.csv" : fs::path(csv);
  check(wiper_importance_dump(cfg.get(), model.get(), holdout.get(), path.string().c_str()));
  std::printf("importance -> %s\n", path.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wiper: backdoor attack and defense lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (run.seed)");
  app.add_option("--out", g.out, "output directory (run.out)");
  app.add_option("--precision", g.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--set", g.sets, "override one config key, key=value (repeatable)");

  std::string split = "all";
  bool csv = false;
  auto* gen = app.add_subcommand("gen-data", "write the synthetic train/holdout/test splits");
  gen->add_option("--split", split, "train, holdout, test or all")
      ->check(CLI::IsMember({"train", "holdout", "test", "all"}));
  gen->add_flag("--csv", csv, "also export CSV");

  auto* train = app.add_subcommand("train", "train the poisoned victim and its clean twin");

  std::string input, patch, reference;
  auto* poison = app.add_subcommand("poison", "poison a dataset and build the triggered test set");
  poison->add_option("--input", input, "clean DSK1 dataset (default: generated train split)");
  poison->add_option("--patch", patch, "trojannn trigger patch");
  poison->add_option("--reference", reference, "clean model to synthesise a trojannn trigger from");

  std::string model, holdout, defense;
  auto* purify = app.add_subcommand("purify", "run the WIPER purifier");
  purify->add_option("--model", model, "victim checkpoint")->required();
  purify->add_option("--holdout", holdout, "clean holdout (default: generated)");
  purify->add_option("--patch", patch, "trojannn trigger patch");

  auto* defend = app.add_subcommand("defend", "run a baseline defense");
  defend->add_option("--defense", defense, "fine_pruning, fine_tuning or kd")
      ->check(CLI::IsMember({"fine_pruning", "fine_tuning", "kd"}));
  defend->add_option("--model", model, "victim checkpoint")->required();
  defend->add_option("--holdout", holdout, "clean holdout (default: generated)");
  defend->add_option("--patch", patch, "trojannn trigger patch");

  std::string test, triggered, dump;
  auto* eval = app.add_subcommand("eval", "clean accuracy and attack success rate");
  eval->add_option("--model", model, "checkpoint")->required();
  eval->add_option("--test", test, "clean test set (default: generated)");
  eval->add_option("--triggered", triggered, "triggered test set (default: built from config)");
  eval->add_option("--patch", patch, "trojannn trigger patch");
  eval->add_option("--dump", dump, "write per-sample predictions here");

  auto* matrix = app.add_subcommand("matrix", "sweep defenses x attacks (and optional axes)");

  std::string csv_path;
  auto* importance = app.add_subcommand("importance-dump", "per-neuron BS/AM table of the purified layer");
  importance->add_option("--model", model, "checkpoint")->required();
  importance->add_option("--holdout", holdout, "clean holdout (default: generated)");
  importance->add_option("--csv", csv_path, "output file (default: <out>/importance.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) cmd_gen_data(g, split, csv);
    else if (train->parsed()) cmd_train(g);
    else if (poison->parsed()) cmd_poison(g, input, patch, reference);
    else if (purify->parsed()) cmd_defend(g, "wiper", model, holdout, patch);
    else if (defend->parsed()) cmd_defend(g, defense, model, holdout, patch);
    else if (eval->parsed()) cmd_eval(g, model, test, triggered, patch, dump);
    else if (matrix->parsed()) cmd_matrix(g);
    else if (importance->parsed()) cmd_importance(g, model, holdout, csv_path);
  } catch (const Failure& f) {
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "wiper: %s\n", e.what());
    return 1;
  }
  return 0;
}
