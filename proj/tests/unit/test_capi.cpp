// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library through its C header only.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "wiper/wiper.h"

namespace {

namespace fs = std::filesystem;

fs::path scratch(const char* name) {
  const fs::path dir = fs::temp_directory_path() / (std::string("wiper_capi_") + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

wiper_config* small_config() {
  wiper_config* cfg = nullptr;
  EXPECT_EQ(wiper_config_create(&cfg), WIPER_OK);
  EXPECT_EQ(wiper_config_set(cfg, "data.train_per_class", "20"), WIPER_OK);
  EXPECT_EQ(wiper_config_set(cfg, "data.test_per_class", "10"), WIPER_OK);
  EXPECT_EQ(wiper_config_set(cfg, "data.holdout_ratio", "0.2"), WIPER_OK);
  return cfg;
}

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(wiper_status_name(WIPER_OK), "ok");
  EXPECT_NE(std::strlen(wiper_status_name(WIPER_ERR_CONFIG)), 0u);
  EXPECT_NE(std::strlen(wiper_version()), 0u);
}

TEST(CApi, NullArgumentsAreRejected) {
  EXPECT_EQ(wiper_config_create(nullptr), WIPER_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::strlen(wiper_last_error()), 0u);
  wiper_dataset_info info;
  EXPECT_EQ(wiper_dataset_info_get(nullptr, &info), WIPER_ERR_INVALID_ARGUMENT);
  wiper_config_free(nullptr);
  wiper_dataset_free(nullptr);
  wiper_model_free(nullptr);
}

TEST(CApi, ConfigSetGetAndErrors) {
  wiper_config* cfg = small_config();
  EXPECT_EQ(wiper_config_set(cfg, "purify.alpha", "0.5"), WIPER_OK);
  EXPECT_STREQ(wiper_last_error(), "");
  char buf[4];
  size_t needed = 0;
  EXPECT_EQ(wiper_config_get(cfg, "purify.alpha", buf, sizeof buf, &needed), WIPER_OK);
  EXPECT_STREQ(buf, "0.5");
  EXPECT_EQ(needed, 4u);
  EXPECT_EQ(wiper_config_get(cfg, "purify.regularizer", buf, 2, &needed), WIPER_OK);
  EXPECT_STREQ(buf, "0.5");  // too small: untouched
  EXPECT_EQ(needed, 3u);

  EXPECT_EQ(wiper_config_set(cfg, "no.such.key", "1"), WIPER_ERR_CONFIG);
  EXPECT_NE(std::string(wiper_last_error()).find("no.such.key"), std::string::npos);
  EXPECT_EQ(wiper_config_set(cfg, "purify.alpha", "x"), WIPER_ERR_CONFIG);

  char h1[17], h2[17];
  wiper_config* copy = nullptr;
  ASSERT_EQ(wiper_config_clone(cfg, &copy), WIPER_OK);
  ASSERT_EQ(wiper_config_hash(cfg, h1), WIPER_OK);
  ASSERT_EQ(wiper_config_hash(copy, h2), WIPER_OK);
  EXPECT_STREQ(h1, h2);
  EXPECT_EQ(std::strlen(h1), 16u);
  wiper_config_set(copy, "run.seed", "9");
  wiper_config_hash(copy, h2);
  EXPECT_STRNE(h1, h2);

  const fs::path dir = scratch("config");
  const std::string path = (dir / "c.txt").string();
  ASSERT_EQ(wiper_config_save(cfg, path.c_str()), WIPER_OK);
  wiper_config* loaded = nullptr;
  ASSERT_EQ(wiper_config_load(path.c_str(), &loaded), WIPER_OK);
  wiper_config_hash(loaded, h2);
  EXPECT_STREQ(h1, h2);
  EXPECT_EQ(wiper_config_load((dir / "missing").string().c_str(), &loaded), WIPER_ERR_IO);

  wiper_config_free(loaded);
  wiper_config_free(copy);
  wiper_config_free(cfg);
  fs::remove_all(dir);
}

TEST(CApi, DatasetRoundTripsAndPoisoning) {
  wiper_config* cfg = small_config();
  wiper_dataset* train = nullptr;
  ASSERT_EQ(wiper_dataset_generate(cfg, WIPER_SPLIT_TRAIN, &train), WIPER_OK);
  wiper_dataset_info info;
  ASSERT_EQ(wiper_dataset_info_get(train, &info), WIPER_OK);
  EXPECT_EQ(info.size, 200u);
  EXPECT_EQ(info.height, 16u);
  EXPECT_EQ(info.classes, 10u);

  const fs::path dir = scratch("dataset");
  const std::string dsk = (dir / "train.dsk").string(), csv = (dir / "train.csv").string();
  ASSERT_EQ(wiper_dataset_save(train, dsk.c_str()), WIPER_OK);
  ASSERT_EQ(wiper_dataset_export_csv(train, csv.c_str()), WIPER_OK);
  wiper_dataset* back = nullptr;
  ASSERT_EQ(wiper_dataset_load(dsk.c_str(), &back), WIPER_OK);
  wiper_dataset* from_csv = nullptr;
  ASSERT_EQ(wiper_dataset_import_csv(csv.c_str(), 16, 16, 1, 10, &from_csv), WIPER_OK);
  const std::string dsk2 = (dir / "again.dsk").string(), dsk3 = (dir / "csv.dsk").string();
  wiper_dataset_save(back, dsk2.c_str());
  wiper_dataset_save(from_csv, dsk3.c_str());
  EXPECT_EQ(fs::file_size(dsk), fs::file_size(dsk2));
  EXPECT_EQ(fs::file_size(dsk), fs::file_size(dsk3));

  {
    std::FILE* f = std::fopen((dir / "bad.dsk").string().c_str(), "wb");
    std::fputs("NOPE", f);
    std::fclose(f);
  }
  wiper_dataset* bad = nullptr;
  EXPECT_EQ(wiper_dataset_load((dir / "bad.dsk").string().c_str(), &bad), WIPER_ERR_FORMAT);
  EXPECT_EQ(bad, nullptr);

  wiper_dataset* poisoned = nullptr;
  size_t count = 0;
  ASSERT_EQ(wiper_dataset_poison(cfg, train, nullptr, &poisoned, &count), WIPER_OK);
  EXPECT_EQ(count, 10u);
  wiper_dataset* triggered = nullptr;
  ASSERT_EQ(wiper_dataset_trigger(cfg, train, nullptr, &triggered), WIPER_OK);
  wiper_dataset_info_get(triggered, &info);
  EXPECT_EQ(info.size, 180u);

  wiper_config_set(cfg, "poison.attack", "trojannn");
  wiper_dataset* none = nullptr;
  EXPECT_NE(wiper_dataset_poison(cfg, train, nullptr, &none, &count), WIPER_OK);

  wiper_dataset_free(triggered);
  wiper_dataset_free(poisoned);
  wiper_dataset_free(from_csv);
  wiper_dataset_free(back);
  wiper_dataset_free(train);
  wiper_config_free(cfg);
  fs::remove_all(dir);
}

TEST(CApi, ModelsAndImportanceDump) {
  wiper_config* cfg = small_config();
  wiper_model* m = nullptr;
  ASSERT_EQ(wiper_model_build(cfg, 3, &m), WIPER_OK);
  size_t fan_in = 0;
  ASSERT_EQ(wiper_model_fan_in(m, &fan_in), WIPER_OK);
  EXPECT_EQ(fan_in, 256u);

  const fs::path dir = scratch("model");
  const std::string path = (dir / "m.wipr").string();
  ASSERT_EQ(wiper_model_save(m, path.c_str()), WIPER_OK);
  wiper_model* back = nullptr;
  ASSERT_EQ(wiper_model_load(cfg, path.c_str(), &back), WIPER_OK);
  wiper_eval a, b;
  const std::string dump = (dir / "pred.csv").string();
  ASSERT_EQ(wiper_evaluate(cfg, m, nullptr, nullptr, nullptr, dump.c_str(), &a), WIPER_OK);
  ASSERT_EQ(wiper_evaluate(cfg, back, nullptr, nullptr, nullptr, nullptr, &b), WIPER_OK);
  EXPECT_EQ(a.acc, b.acc);
  EXPECT_EQ(a.asr, b.asr);
  wiper_eval re;
  ASSERT_EQ(wiper_recompute_from_dump(dump.c_str(), 0, &re), WIPER_OK);
  EXPECT_EQ(re.acc, a.acc);
  EXPECT_EQ(re.asr, a.asr);

  const std::string csv = (dir / "importance.csv").string();
  ASSERT_EQ(wiper_importance_dump(cfg, m, nullptr, csv.c_str()), WIPER_OK);
  EXPECT_GT(fs::file_size(csv), 0u);

  wiper_config* other = small_config();
  wiper_config_set(other, "data.classes", "2");
  wiper_model* wrong = nullptr;
  EXPECT_EQ(wiper_model_load(other, path.c_str(), &wrong), WIPER_ERR_SHAPE);

  wiper_config_free(other);
  wiper_model_free(back);
  wiper_model_free(m);
  wiper_config_free(cfg);
  fs::remove_all(dir);
}

TEST(CApi, TrainAndDefendEndToEnd) {
  wiper_config* cfg = small_config();
  wiper_config_set(cfg, "victim.epochs", "1");
  wiper_config_set(cfg, "victim.calibrate", "false");
  wiper_config_set(cfg, "purify.epochs", "1");
  const fs::path dir = scratch("pipeline");
  wiper_model* victim = nullptr;
  wiper_victim_info vinfo;
  ASSERT_EQ(wiper_train_victim(cfg, dir.string().c_str(), &victim, &vinfo), WIPER_OK) << wiper_last_error();
  EXPECT_EQ(vinfo.poisoned_count, 10u);
  EXPECT_TRUE(fs::exists(dir / "victim.wipr"));
  EXPECT_TRUE(fs::exists(dir / "twin.wipr"));

  wiper_model* purified = nullptr;
  wiper_eval after;
  const fs::path ddir = dir / "defend";
  ASSERT_EQ(wiper_defend(cfg, victim, nullptr, nullptr, ddir.string().c_str(), &purified, &after), WIPER_OK)
      << wiper_last_error();
  EXPECT_TRUE(fs::exists(ddir / "curve.csv"));
  EXPECT_TRUE(fs::exists(ddir / "importance.csv"));
  EXPECT_GE(after.acc, 0.0);
  EXPECT_LE(after.asr, 100.0);

  wiper_config_set(cfg, "victim.calibrate", "true");
  wiper_config_set(cfg, "victim.min_asr", "101");
  wiper_model* second = nullptr;
  EXPECT_EQ(wiper_train_victim(cfg, nullptr, &second, &vinfo), WIPER_ERR_CALIBRATION);
  EXPECT_EQ(vinfo.calibrated, 0);
  EXPECT_NE(second, nullptr);

  wiper_model_free(second);
  wiper_model_free(purified);
  wiper_model_free(victim);
  wiper_config_free(cfg);
  fs::remove_all(dir);
}

}  // namespace
