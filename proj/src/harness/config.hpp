// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "baselines/baselines.hpp"
#include "model/model.hpp"
#include "poison/attacks.hpp"
#include "purifier/purifier.hpp"

namespace wiper {

enum class DefenseKind { none, wiper, fine_pruning, fine_tuning, kd };

std::string_view defense_name(DefenseKind kind);
std::optional<DefenseKind> parse_defense(std::string_view name);

enum class Precision { f32, f64 };

std::string_view precision_name(Precision p);
std::optional<Precision> parse_precision(std::string_view name);

struct DataConfig {
  std::size_t classes = 10;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 100;
  InputSpec input{};
  double noise = 25.0;
  double contrast = 180.0;
  std::uint64_t seed = 11;
  double holdout_ratio = 0.05;  // of the training set size
};

struct VictimConfig {
  TrainRecipe recipe{4, 64, SgdOptions{0.05, 0.9, 0.0}};
  bool calibrate = true;
  double min_asr = 95.0;
  double max_acc_gap = 2.0;
};

/// Optional sweep axes; an empty list means "use the single-run value".
struct MatrixConfig {
  std::vector<DefenseKind> defenses{DefenseKind::wiper, DefenseKind::fine_pruning};
  std::vector<AttackKind> attacks{AttackKind::badnet, AttackKind::blend, AttackKind::sig};
  std::vector<double> alphas;
  std::vector<double> data_ratios;
  std::vector<std::string> layers;
  std::vector<RegularizerKind> regularizers;
  std::vector<ImportanceMetric> metrics;
  std::size_t replicates = 1;
};

struct ExperimentConfig {
  DataConfig data;
  Architecture arch{};  // kind and hidden widths; shape comes from data
  std::string purified_layer = "fc";
  VictimConfig victim;
  PoisonSpec poison;
  std::optional<double> injection_rate;  // unset: the attack's published rate
  DefenseKind defense = DefenseKind::wiper;
  PurifyConfig purify = desk_purify_defaults();
  BaselineConfig baseline;
  MatrixConfig matrix;
  std::uint64_t seed = 1;
  Precision precision = Precision::f64;
  std::filesystem::path out_dir = "out";

  /// Purifying defaults sized for the 250-sample desk holdout.
  static PurifyConfig desk_purify_defaults();

  /// 0.1 for sig, 0.05 for every other attack.
  double effective_injection_rate() const;
  /// PoisonSpec with the effective injection rate filled in.
  PoisonSpec poison_spec() const;
  /// `arch` with input shape and class count taken from `data`.
  Architecture model_arch() const;
};

/// Applies one `key=value` assignment. Throws ErrorCode::config on unknown keys or bad values.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& cfg, std::string_view key);
/// Every key in canonical order.
std::vector<std::string> config_keys();

/// Blank lines and lines starting with '#' are ignored.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical serialisation: every key, one per line, in config_keys() order.
std::string serialize_config(const ExperimentConfig& cfg);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical serialisation.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace wiper
