// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <gtest/gtest.h>

#include "baselines/baselines.hpp"
#include "support/support.hpp"

namespace wiper {
namespace {

class Baselines : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const DataConfig d = testing::small_data(30, 13);
    model_ = std::make_unique<Model<double>>(build_desk_cnn<double>(d.input, d.classes, 5));
    fit(*model_, make_train_set(d), TrainRecipe{2, 32, SgdOptions{0.05, 0.9, 0.0}}, 6);
    holdout_ = std::make_unique<Dataset>(make_holdout(d, 0.2));
    test_ = std::make_unique<Dataset>(make_test_set(d));
  }
  static void TearDownTestSuite() {
    model_.reset();
    holdout_.reset();
    test_.reset();
  }

  static BaselineConfig quick(BaselineKind kind) {
    BaselineConfig cfg;
    cfg.kind = kind;
    cfg.epochs = 2;
    cfg.kd_epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 3;
    return cfg;
  }

  static std::unique_ptr<Model<double>> model_;
  static std::unique_ptr<Dataset> holdout_;
  static std::unique_ptr<Dataset> test_;
};

std::unique_ptr<Model<double>> Baselines::model_;
std::unique_ptr<Dataset> Baselines::holdout_;
std::unique_ptr<Dataset> Baselines::test_;

TEST_F(Baselines, InputModelIsNotModified) {
  const Model<double> before = *model_;
  for (auto kind : {BaselineKind::fine_tuning, BaselineKind::fine_pruning, BaselineKind::kd}) {
    const auto out = run_baseline(*model_, *holdout_, quick(kind));
    for (std::size_t i = 0; i < before.params().size(); ++i)
      EXPECT_EQ(model_->params()[i].tensor, before.params()[i].tensor) << baseline_name(kind);
    EXPECT_NE(out.params()[0].tensor, before.params()[0].tensor) << baseline_name(kind);
  }
}

TEST_F(Baselines, FineTuningKeepsCleanAccuracy) {
  const auto out = fine_tuning(*model_, *holdout_, quick(BaselineKind::fine_tuning));
  const double before = accuracy_pct(predict(*model_, *test_), test_->labels);
  const double after = accuracy_pct(predict(out, *test_), test_->labels);
  EXPECT_GE(after, before - 10.0);
}

TEST_F(Baselines, PruningCountsAgreeAcrossMetrics) {
  auto cfg = quick(BaselineKind::fine_pruning);
  cfg.epochs = 1;
  PruneResult am, bs;
  cfg.pruning_metric = ImportanceMetric::am;
  fine_pruning(*model_, *holdout_, cfg, &am);
  cfg.pruning_metric = ImportanceMetric::bs;
  fine_pruning(*model_, *holdout_, cfg, &bs);
  EXPECT_EQ(am.pruned.size(), bad_set_size(0.1, 256));
  EXPECT_EQ(bs.pruned.size(), am.pruned.size());
  EXPECT_EQ(am.scores, compute_am(*model_, make_batch<double>(*holdout_)));
}

TEST_F(Baselines, PrunedColumnsStayZero) {
  auto cfg = quick(BaselineKind::fine_pruning);
  PruneResult report;
  const auto out = fine_pruning(*model_, *holdout_, cfg, &report);
  const auto& w = out.purified_weight();
  const std::size_t fan_in = w.extent(1);
  ASSERT_FALSE(report.pruned.empty());
  for (std::size_t j : report.pruned)
    for (std::size_t c = 0; c < w.extent(0); ++c) EXPECT_EQ(w[c * fan_in + j], 0.0) << j;
  EXPECT_TRUE(std::is_sorted(report.pruned.begin(), report.pruned.end()));
}

TEST_F(Baselines, ZeroRatePrunesNothing) {
  auto cfg = quick(BaselineKind::fine_pruning);
  cfg.pruning_rate = 0.0;
  cfg.epochs = 1;
  PruneResult report;
  const auto pruned = fine_pruning(*model_, *holdout_, cfg, &report);
  EXPECT_TRUE(report.pruned.empty());
  const auto tuned = fine_tuning(*model_, *holdout_, cfg);
  for (std::size_t i = 0; i < tuned.params().size(); ++i) EXPECT_EQ(pruned.params()[i].tensor, tuned.params()[i].tensor);
}

TEST_F(Baselines, DistillationLearnsFromTheTeacher) {
  auto cfg = quick(BaselineKind::kd);
  cfg.kd_epochs = 10;
  const auto student = kd_distill(*model_, *holdout_, cfg);
  EXPECT_EQ(student.architecture(), model_->architecture());
  EXPECT_GE(accuracy_pct(predict(student, *test_), test_->labels), 50.0);
}

TEST(BaselinePlanted, SalienceRankedPruningRemovesThePlantedUnit) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto planted = testing::make_planted_model(seed);
    ASSERT_TRUE(planted.separable);
    const Dataset holdout = make_holdout(testing::small_data(40, mix_seed(seed, 0xDA7A)), 0.25);
    BaselineConfig cfg;
    cfg.kind = BaselineKind::fine_pruning;
    cfg.pruning_metric = ImportanceMetric::bs;
    cfg.pruning_rate = 0.5;
    cfg.epochs = 0;
    PruneResult report;
    const auto out = fine_pruning(planted.model, holdout, cfg, &report);
    EXPECT_TRUE(std::binary_search(report.pruned.begin(), report.pruned.end(), planted.planted)) << seed;
    const Dataset trig = make_triggered_testset(holdout, planted.kit);
    EXPECT_LT(asr_pct(predict(out, trig), trig.labels, 0), 50.0) << seed;
  }
}

TEST(BaselineConfig, Validation) {
  BaselineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.pruning_rate = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.kd_temperature = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(parse_baseline("kd"), BaselineKind::kd);
  EXPECT_FALSE(parse_baseline("prune").has_value());
}

}  // namespace
}  // namespace wiper
