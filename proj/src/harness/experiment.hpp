// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "harness/config.hpp"

namespace wiper {

struct Scenario {
  Dataset train;
  Dataset test;
  Dataset holdout;
};

/// Clean splits. Each split draws its own noise stream, so the holdout never
/// shares samples with the training set.
Dataset make_train_set(const DataConfig& data);
Dataset make_test_set(const DataConfig& data);
Dataset make_holdout(const DataConfig& data, double ratio);
Scenario make_scenario(const DataConfig& data);

/// Percentage of predictions equal to the labels.
double accuracy_pct(std::span<const std::size_t> predictions, std::span<const std::uint32_t> labels);
/// Percentage of samples whose true label is not `target` that were predicted as `target`.
double asr_pct(std::span<const std::size_t> predictions, std::span<const std::uint32_t> labels, std::uint32_t target);

struct Evaluation {
  double acc = 0.0;
  double asr = 0.0;
  std::vector<std::size_t> clean_predictions;
  std::vector<std::size_t> triggered_predictions;
};

template <std::floating_point T>
Evaluation evaluate(const Model<T>& model, const Dataset& clean, const Dataset& triggered, std::uint32_t target);

/// Columns: split,index,label,prediction (split is "clean" or "triggered").
void write_prediction_dump(std::ostream& out, const Dataset& clean, const Dataset& triggered, const Evaluation& eval);
AccAsr recompute_from_dump(std::istream& in, std::uint32_t target);

struct EvalReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  double acc = 0.0;
  double asr = 0.0;
  std::vector<EpochRecord> epochs;
  double wall_ms = 0.0;
};

void write_report_json(std::ostream& out, const EvalReport& report);
EvalReport read_report_json(std::istream& in);

/// Coordinates of one matrix cell. `key()` is the string hashed into the cell seed.
struct CellCoords {
  DefenseKind defense = DefenseKind::wiper;
  AttackKind attack = AttackKind::badnet;
  double alpha = 0.01;
  double data_ratio = 0.05;
  std::string layer = "fc";
  RegularizerKind regularizer = RegularizerKind::ar;
  ImportanceMetric metric = ImportanceMetric::bs;
  std::size_t replicate = 0;

  std::string key() const;
};

/// Coordinates of the single run described by `cfg` (replicate 0).
CellCoords single_cell(const ExperimentConfig& cfg);
/// `cfg` with the cell's axis values substituted.
ExperimentConfig apply_cell(const ExperimentConfig& cfg, const CellCoords& cell);

/// master xor fnv1a("attack=<a>;rep=<r>"): shared by every defense of that attack.
std::uint64_t victim_seed(std::uint64_t master, AttackKind attack, std::size_t replicate);
/// master xor fnv1a(cell.key()).
std::uint64_t cell_seed(std::uint64_t master, const CellCoords& cell);

template <std::floating_point T>
struct Victim {
  Model<T> model;
  Model<T> twin;  // same seed and recipe, trained on the clean set
  TriggerKit kit;
  PoisonRecord record;
  Dataset poisoned_train;
  Dataset triggered_test;
  Evaluation before;
  double twin_acc = 0.0;
  bool calibrated = false;
  std::string calibration_note;
};

/// Trains the unpoisoned twin, then the poisoned victim (trojannn synthesises
/// its trigger against the twin). Calibration is recorded, not enforced.
template <std::floating_point T>
Victim<T> train_victim(const ExperimentConfig& cfg, const Scenario& scenario, std::uint64_t seed);

/// Throws ErrorCode::calibration when the victim missed its calibration targets.
template <std::floating_point T>
void require_calibrated(const Victim<T>& victim);

/// Same kit the victim was trained with, rebuilt from config (and the trojan patch if any).
TriggerKit make_kit(const ExperimentConfig& cfg, std::optional<Patch> trojan_patch = std::nullopt);

template <std::floating_point T>
struct DefenseOutcome {
  Model<T> model;
  std::vector<EpochRecord> curve;
  std::vector<ImportanceSnapshot> history;
};

/// Runs cfg.defense on `model` using `holdout`. `eval` fills the purifying curve.
template <std::floating_point T>
DefenseOutcome<T> run_defense(const ExperimentConfig& cfg, const Model<T>& model, const Dataset& holdout,
                              std::uint64_t seed, const EpochEval<T>& eval = {});

/// First curve epoch with asr < threshold.
std::optional<std::size_t> epochs_to_asr(std::span<const EpochRecord> curve, double threshold);

struct CellResult {
  std::size_t index = 0;
  CellCoords coords;
  std::uint64_t seed = 0;
  std::string status = "ok";
  double acc_before = 0.0;
  double asr_before = 0.0;
  double twin_acc = 0.0;
  double acc = 0.0;
  double asr = 0.0;
  std::optional<std::size_t> epochs_to_asr10;
  std::vector<EpochRecord> curve;
  double wall_ms = 0.0;
};

/// Cartesian sweep. Failed cells are recorded with their error and the sweep continues.
/// With a non-empty `out_dir`, writes matrix.csv, summary.csv and cells/<index>/{report.json,
/// predictions.csv, curve.csv}.
std::vector<CellResult> run_matrix(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});

std::vector<CellCoords> matrix_cells(const ExperimentConfig& cfg);

/// Per-cell rows; excludes wall time so reruns are byte-identical.
void write_matrix_csv(std::ostream& out, std::span<const CellResult> cells);
/// Mean over replicates of every other coordinate combination.
void write_summary_csv(std::ostream& out, std::span<const CellResult> cells);

}  // namespace wiper
