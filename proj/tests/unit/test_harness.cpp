// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "harness/config.hpp"
#include "harness/experiment.hpp"
#include "support/support.hpp"

namespace wiper {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wiper_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Config, RoundTripsThroughCanonicalText) {
  ExperimentConfig cfg;
  set_config_value(cfg, "purify.alpha", "0.25");
  set_config_value(cfg, "poison.attack", "blend");
  set_config_value(cfg, "matrix.alphas", "0.001,0.01,0.1");
  set_config_value(cfg, "model.arch", "mlp");
  set_config_value(cfg, "model.hidden", "64,32");
  const std::string text = serialize_config(cfg);
  std::istringstream in(text);
  const ExperimentConfig back = parse_config(in);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_EQ(back.purify.alpha, 0.25);
  EXPECT_EQ(back.matrix.alphas.size(), 3u);
  EXPECT_EQ(back.arch.hidden, (std::vector<std::size_t>{64, 32}));
}

TEST(Config, EveryKeyIsSerialisedOnce) {
  const ExperimentConfig cfg;
  const auto keys = config_keys();
  std::istringstream in(serialize_config(cfg));
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    ASSERT_LT(i, keys.size());
    EXPECT_EQ(line.substr(0, line.find('=')), keys[i]);
    ++i;
  }
  EXPECT_EQ(i, keys.size());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  ExperimentConfig cfg;
  try {
    set_config_value(cfg, "purify.alpah", "1");
    FAIL() << "unknown key accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_THROW(set_config_value(cfg, "purify.alpha", "abc"), Error);
  EXPECT_THROW(set_config_value(cfg, "purify.regularizer", "l3"), Error);
  EXPECT_THROW(set_config_value(cfg, "data.classes", "-2"), Error);
  std::istringstream in("# comment\n\npurify.alpha = 0.5\nnot a pair\n");
  EXPECT_THROW(parse_config(in), Error);
}

TEST(Config, CommentsAndBlankLinesIgnored) {
  std::istringstream in("# comment\n\npurify.alpha=0.5\n");
  EXPECT_EQ(parse_config(in).purify.alpha, 0.5);
}

TEST(Config, HashIs16HexAndSensitive) {
  ExperimentConfig a, b;
  const auto h = config_hash(a);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(config_hash(b), h);
  set_config_value(b, "run.seed", "2");
  EXPECT_NE(config_hash(b), h);
}

TEST(Config, InjectionRateFollowsTheAttack) {
  ExperimentConfig cfg;
  EXPECT_EQ(cfg.effective_injection_rate(), 0.05);
  set_config_value(cfg, "poison.attack", "sig");
  EXPECT_EQ(cfg.effective_injection_rate(), 0.1);
  set_config_value(cfg, "poison.injection_rate", "0.2");
  EXPECT_EQ(cfg.poison_spec().injection_rate, 0.2);
}

TEST(Config, ModelShapeComesFromData) {
  ExperimentConfig cfg;
  set_config_value(cfg, "data.classes", "4");
  set_config_value(cfg, "data.height", "12");
  const Architecture arch = cfg.model_arch();
  EXPECT_EQ(arch.classes, 4u);
  EXPECT_EQ(arch.input.height, 12u);
}

TEST(Metrics, AlwaysTargetClassifier) {
  // 10 balanced classes, target 0: every prediction is 0.
  std::vector<std::uint32_t> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 10);
  const std::vector<std::size_t> pred(100, 0);
  EXPECT_EQ(accuracy_pct(pred, labels), 10.0);
  EXPECT_EQ(asr_pct(pred, labels, 0), 100.0);
}

TEST(Metrics, ThroughputExample) {
  std::vector<std::uint32_t> labels(500, 3);
  std::vector<std::size_t> pred(500, 3);
  for (int i = 0; i < 50; ++i) pred[i] = 1;
  EXPECT_EQ(accuracy_pct(pred, labels), 90.0);
  EXPECT_EQ(asr_pct(pred, labels, 1), 10.0);
}

TEST(Metrics, AsrExcludesTargetSamples) {
  const std::vector<std::uint32_t> labels{0, 0, 1, 2};
  const std::vector<std::size_t> pred{0, 0, 0, 2};
  EXPECT_EQ(asr_pct(pred, labels, 0), 50.0);
  EXPECT_THROW(asr_pct(std::vector<std::size_t>{0}, std::vector<std::uint32_t>{0}, 0), Error);
  EXPECT_THROW(accuracy_pct(std::vector<std::size_t>{}, std::vector<std::uint32_t>{}), Error);
}

TEST(Splits, HoldoutIsDisjointFromTraining) {
  const DataConfig d = testing::small_data(20);
  const Dataset train = make_train_set(d);
  const Dataset holdout = make_holdout(d, 0.25);
  EXPECT_EQ(holdout.size(), 50u);
  for (std::size_t i = 0; i < holdout.size(); ++i)
    for (std::size_t k = 0; k < train.size(); ++k)
      ASSERT_FALSE(std::equal(holdout.image(i).begin(), holdout.image(i).end(), train.image(k).begin()));
  EXPECT_THROW(make_holdout(d, 0.0), Error);
  EXPECT_THROW(make_holdout(d, 1.5), Error);
  EXPECT_EQ(make_holdout(d, 0.25), holdout);
}

TEST(Seeds, DerivedFromMasterAndKey) {
  CellCoords a, b;
  b.defense = DefenseKind::fine_pruning;
  EXPECT_NE(cell_seed(1, a), cell_seed(1, b));
  EXPECT_EQ(cell_seed(1, a), cell_seed(1, a));
  EXPECT_EQ(cell_seed(1, a), 1 ^ fnv1a(a.key()));
  EXPECT_EQ(victim_seed(5, AttackKind::badnet, 0), 5 ^ fnv1a("attack=badnet;rep=0"));
  EXPECT_NE(victim_seed(5, AttackKind::badnet, 0), victim_seed(5, AttackKind::badnet, 1));
}

TEST(Matrix, CellCounts) {
  ExperimentConfig cfg;
  cfg.matrix.defenses = {DefenseKind::wiper, DefenseKind::fine_pruning};
  cfg.matrix.attacks = {AttackKind::badnet, AttackKind::blend, AttackKind::sig};
  EXPECT_EQ(matrix_cells(cfg).size(), 6u);
  cfg.matrix.alphas = {0.001, 0.01, 0.1, 1.0, 10.0};
  EXPECT_EQ(matrix_cells(cfg).size(), 30u);
  cfg.matrix.replicates = 2;
  const auto cells = matrix_cells(cfg);
  EXPECT_EQ(cells.size(), 60u);
  EXPECT_EQ(cells.front().replicate, 0u);
  EXPECT_EQ(cells.back().replicate, 1u);
}

TEST(Matrix, EpochsToAsr) {
  std::vector<EpochRecord> curve(3);
  for (std::size_t i = 0; i < 3; ++i) curve[i].epoch = i + 1;
  curve[0].asr = 80;
  curve[1].asr = 9.9;
  curve[2].asr = 5;
  EXPECT_EQ(epochs_to_asr(curve, 10.0), 2u);
  curve[1].asr = 10.0;
  EXPECT_EQ(epochs_to_asr(curve, 10.0), 3u);
  EXPECT_FALSE(epochs_to_asr(curve, 1.0).has_value());
}

TEST(Reports, DumpRecomputesTheMetrics) {
  const DataConfig d = testing::small_data(5);
  const Dataset clean = make_test_set(d);
  const TriggerKit kit = make_trigger_kit(PoisonSpec{}, 16, 16, 1);
  const Dataset trig = make_triggered_testset(clean, kit);
  const auto m = build_desk_cnn<double>(d.input, d.classes, 3);
  const Evaluation ev = evaluate(m, clean, trig, 0);
  std::stringstream dump;
  write_prediction_dump(dump, clean, trig, ev);
  const AccAsr back = recompute_from_dump(dump, 0);
  EXPECT_EQ(back.acc, ev.acc);
  EXPECT_EQ(back.asr, ev.asr);
}

TEST(Reports, JsonRoundTrip) {
  EvalReport r;
  r.config_hash = "0123456789abcdef";
  r.seed = 42;
  r.acc = 97.25;
  r.asr = 1.0 / 3.0;
  r.epochs = {EpochRecord{1, 90, 50, 12.5, 0.5, 0}, EpochRecord{2, 91, 4, 10, 0.25, 0}};
  r.wall_ms = 12.5;
  std::stringstream s;
  write_report_json(s, r);
  const EvalReport back = read_report_json(s);
  EXPECT_EQ(back.config_hash, r.config_hash);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.asr, r.asr);
  ASSERT_EQ(back.epochs.size(), 2u);
  EXPECT_EQ(back.epochs[1].penalty_sum, 10.0);
  EXPECT_EQ(back.epochs[1].beta, 0.25);
}

ExperimentConfig tiny_matrix() {
  ExperimentConfig cfg;
  set_config_value(cfg, "data.train_per_class", "20");
  set_config_value(cfg, "data.test_per_class", "10");
  set_config_value(cfg, "data.holdout_ratio", "0.2");
  set_config_value(cfg, "victim.epochs", "1");
  set_config_value(cfg, "victim.calibrate", "false");
  set_config_value(cfg, "purify.epochs", "2");
  set_config_value(cfg, "baseline.epochs", "1");
  set_config_value(cfg, "matrix.attacks", "badnet");
  set_config_value(cfg, "matrix.defenses", "wiper,fine_pruning");
  return cfg;
}

TEST(Matrix, ReproducibleOutputs) {
  const ExperimentConfig cfg = tiny_matrix();
  const fs::path a = scratch("matrix_a"), b = scratch("matrix_b");
  const auto ra = run_matrix(cfg, a);
  run_matrix(cfg, b);
  ASSERT_EQ(ra.size(), 2u);
  for (const auto& c : ra) EXPECT_EQ(c.status, "ok") << c.status;
  EXPECT_EQ(slurp(a / "matrix.csv"), slurp(b / "matrix.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  EXPECT_TRUE(fs::exists(a / "cells" / "0" / "report.json"));
  EXPECT_TRUE(fs::exists(a / "cells" / "0" / "predictions.csv"));
  std::ifstream dump(a / "cells" / "1" / "predictions.csv");
  const AccAsr re = recompute_from_dump(dump, 0);
  EXPECT_EQ(re.acc, ra[1].acc);
  EXPECT_EQ(re.asr, ra[1].asr);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Matrix, CalibrationFailureIsRecorded) {
  ExperimentConfig cfg = tiny_matrix();
  set_config_value(cfg, "victim.calibrate", "true");
  set_config_value(cfg, "victim.min_asr", "101");
  set_config_value(cfg, "matrix.defenses", "wiper");
  const auto cells = run_matrix(cfg);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].status, "calibration_failed");
}

int run_cli(const std::string& args) {
  const char* cli = std::getenv("WIPER_CLI");
  if (cli == nullptr) return -1;
  const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

TEST(Cli, ExitCodes) {
  if (std::getenv("WIPER_CLI") == nullptr) GTEST_SKIP() << "WIPER_CLI not set";
  const fs::path dir = scratch("cli");
  const std::string out = " --out " + dir.string();
  EXPECT_EQ(run_cli("--set purify.alpah=1 gen-data" + out), 2);
  EXPECT_EQ(run_cli("--set purify.alpha=abc gen-data" + out), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "missing.cfg").string() + " gen-data"), 2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("--set data.train_per_class=5 gen-data --split all" + out), 0);
  EXPECT_TRUE(fs::exists(dir / "train.dsk"));
  EXPECT_TRUE(fs::exists(dir / "holdout.dsk"));
  EXPECT_TRUE(fs::exists(dir / "test.dsk"));
  EXPECT_EQ(run_cli("eval --model " + (dir / "missing.wipr").string() + out), 1);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace wiper
