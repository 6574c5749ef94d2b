#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "semifair/data.hpp"

using namespace semifair;
using namespace semifair::data;
namespace fs = std::filesystem;

namespace {

const fs::path kDataDir = SEMIFAIR_DATA_DIR;

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / ("semifair_test_" + name);
  std::ofstream(p) << content;
  return p;
}

const char* kToyRows =
    "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K\n"
    "50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, >50K\n"
    "38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, White, Female, 0, 0, 40, ?, <=50K\n"
    "53, ?, 234721, 11th, 7, Married-civ-spouse, Handlers-cleaners, Husband, Black, Male, 0, 0, 40, United-States, <=50K\n";

std::vector<Sample> synthetic_samples(std::size_t n) {
  std::vector<Sample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].x = {static_cast<double>(i)};
    out[i].y = static_cast<int>(i % 2);
    out[i].z = static_cast<int>((i / 2) % 2);
  }
  return out;
}

}  // namespace

TEST_CASE("canonical Adult files have the documented sizes") {
  if (!fs::exists(kDataDir / "adult.data")) {
    MESSAGE("Adult files not present; skipping");
    return;
  }
  auto [train, test] = load_adult(kDataDir / "adult.data", kDataDir / "adult.test");
  CHECK(train.size() == 32561);
  CHECK(test.size() == 16281);
  // Trailing period on test labels is stripped.
  CHECK((test.front().fields[14] == "<=50K" || test.front().fields[14] == ">50K"));

  auto [train_s, stats] = preprocess(train);
  auto [test_s, stats2] = preprocess(test, stats);
  CHECK(train_s.front().x.size() == test_s.front().x.size());
  CHECK(train_s.front().x.size() == stats.feature_dim());
  CHECK(stats2.feature_dim() == stats.feature_dim());
  // Standardized numerics on train: zero mean, unit (population) variance.
  for (std::size_t j = 0; j < stats.numeric.size(); ++j) {
    std::size_t col = 0;
    auto names = stats.feature_names();
    const std::string name = adult_schema()[stats.numeric[j].column].name;
    col = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
    double m = 0.0, ss = 0.0;
    for (const auto& s : train_s) m += s.x[col];
    m /= static_cast<double>(train_s.size());
    for (const auto& s : train_s) ss += (s.x[col] - m) * (s.x[col] - m);
    const double sd = std::sqrt(ss / static_cast<double>(train_s.size()));
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(sd - 1.0) < 1e-9);
  }
}

TEST_CASE("empty file loads zero records") {
  auto p = write_temp("empty.csv", "");
  CHECK(load_adult_file(p).empty());
}

TEST_CASE("row with 13 fields is a schema error naming the line") {
  auto p = write_temp("short.csv",
                      std::string(kToyRows) +
                          "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40\n");
  try {
    load_adult_file(p);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
}

TEST_CASE("malformed numeric cell is a parse error with line number") {
  auto p = write_temp("bad.csv",
                      "abc, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K\n");
  try {
    load_adult_file(p);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("preprocess encodes, imputes and moves sex into z") {
  auto recs = load_adult_file(write_temp("toy.csv", kToyRows));
  REQUIRE(recs.size() == 4);
  CHECK(recs[3].missing(1));
  auto [samples, stats] = preprocess(recs);
  CHECK(samples[0].z == 0);
  CHECK(samples[2].z == 1);
  CHECK(samples[1].y == 1);
  CHECK(samples[0].y == 0);
  // race has two categories in this toy set -> two-wide block.
  auto race = std::find_if(stats.categorical.begin(), stats.categorical.end(),
                           [](const auto& c) { return c.column == 8; });
  REQUIRE(race != stats.categorical.end());
  CHECK(race->vocabulary.size() == 2);
  // sex is not a feature by default.
  for (const auto& c : stats.categorical) CHECK(c.column != 9);
  for (const auto& n : stats.feature_names()) CHECK(n.find("sex") == std::string::npos);
  // missing workclass imputed with the train mode -> exactly one hot entry in block.
  auto names = stats.feature_names();
  double wc_sum = 0.0;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j].rfind("workclass=", 0) == 0) wc_sum += samples[3].x[j];
  }
  CHECK(wc_sum == 1.0);
  // Re-including the sensitive column adds its block.
  auto [with_sex, stats_sex] = preprocess(recs, std::nullopt, {.include_sensitive_feature = true});
  CHECK(stats_sex.feature_dim() == stats.feature_dim() + 2);
}

TEST_CASE("numeric value equal to the train mean standardizes to zero") {
  Stats stats;
  stats.numeric = {{0, 38.6, 13.6}, {2, 0, 1}, {4, 0, 1}, {10, 0, 1}, {11, 0, 1}, {12, 0, 1}};
  RawRecord r;
  r.fields = {"38.6", "?", "0", "?", "0", "?", "?", "?", "?", "Male", "0", "0", "0", "?", "<=50K"};
  auto [samples, st] = preprocess({r}, stats);
  CHECK(samples[0].x[0] == 0.0);
}

TEST_CASE("unseen category at test time encodes as a zero block") {
  auto recs = load_adult_file(write_temp("toy2.csv", kToyRows));
  auto [train, stats] = preprocess(recs);
  RawRecord odd = recs[0];
  odd.fields[8] = "Martian";
  auto [test, st] = preprocess({odd}, stats);
  auto names = stats.feature_names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j].rfind("race=", 0) == 0) CHECK(test[0].x[j] == 0.0);
  }
}

TEST_CASE("Stats JSON round trip") {
  auto recs = load_adult_file(write_temp("toy3.csv", kToyRows));
  auto [train, stats] = preprocess(recs);
  nlohmann::json j = stats;
  Stats back = j.get<Stats>();
  auto [again, st] = preprocess(recs, back);
  for (std::size_t i = 0; i < train.size(); ++i) CHECK(again[i].x == train[i].x);
}

TEST_CASE("split_and_mask sizes, partition and determinism") {
  // 1111 samples with val_frac 0.1 -> 111 validation, 1000 remain.
  auto samples = synthetic_samples(1111);
  auto split = split_and_mask(samples, 0.1, 0.2, 7);
  CHECK(split.validation.size() == 111);
  CHECK(split.train_labeled.size() == 200);
  CHECK(split.train_unlabeled.size() == 800);

  std::set<std::size_t> seen;
  for (auto* idx : {&split.labeled_index, &split.unlabeled_index, &split.validation_index}) {
    for (std::size_t i : *idx) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == samples.size());

  // Training-visible view never contains an unlabeled attribute.
  for (const auto& s : split.train_unlabeled) CHECK(s.z == kAbsent);
  for (const auto& s : split.train_labeled) CHECK(s.z != kAbsent);
  for (std::size_t i = 0; i < split.train_unlabeled.size(); ++i) {
    CHECK(split.shadow_attribute(i) == samples[split.unlabeled_index[i]].z);
  }

  auto again = split_and_mask(samples, 0.1, 0.2, 7);
  CHECK(again.labeled_index == split.labeled_index);
  CHECK(again.unlabeled_index == split.unlabeled_index);
  CHECK(again.validation_index == split.validation_index);
  auto other = split_and_mask(samples, 0.1, 0.2, 8);
  CHECK(other.labeled_index != split.labeled_index);

  // Validation and the train union do not depend on the label ratio.
  auto half = split_and_mask(samples, 0.1, 0.5, 7);
  CHECK(half.validation_index == split.validation_index);
  auto a = split.train_all();
  auto b = half.train_all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].x == b[i].x);
}

TEST_CASE("split_and_mask boundaries") {
  auto samples = synthetic_samples(100);
  auto full = split_and_mask(samples, 0.1, 1.0, 1);
  CHECK(full.train_unlabeled.empty());
  CHECK(full.train_labeled.size() == 90);
  CHECK_THROWS_AS(split_and_mask(samples, 0.1, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_and_mask(samples, 0.0, 0.5, 1), ConfigError);
  CHECK_THROWS_AS(split_and_mask(samples, 1.0, 0.5, 1), ConfigError);
}

TEST_CASE("shadow reads inside a training scope are counted") {
  auto split = split_and_mask(synthetic_samples(100), 0.1, 0.5, 1);
  reset_shadow_read_counter();
  split.shadow_attribute(0);
  CHECK(shadow_reads_during_training() == 0);
  {
    TrainingScope scope;
    split.shadow_attribute(0);
  }
  CHECK(shadow_reads_during_training() == 1);
  reset_shadow_read_counter();
}

TEST_CASE("batches: step count, cycling and determinism") {
  auto plan = batches(200, 800, 100, 3, 0);
  CHECK(plan.size() == 8);
  std::vector<int> labeled_hits(200, 0);
  std::set<std::size_t> unlabeled_seen;
  for (const auto& step : plan) {
    CHECK(step.labeled.size() == 100);
    CHECK(step.unlabeled.size() == 100);
    for (auto i : step.labeled) ++labeled_hits[i];
    for (auto i : step.unlabeled) unlabeled_seen.insert(i);
  }
  for (int h : labeled_hits) CHECK(h == 4);
  CHECK(unlabeled_seen.size() == 800);

  auto again = batches(200, 800, 100, 3, 0);
  for (std::size_t s = 0; s < plan.size(); ++s) {
    CHECK(plan[s].labeled == again[s].labeled);
    CHECK(plan[s].unlabeled == again[s].unlabeled);
  }
  auto next_epoch = batches(200, 800, 100, 3, 1);
  CHECK(next_epoch[0].unlabeled != plan[0].unlabeled);

  auto no_unlabeled = batches(90, 0, 32, 3, 0);
  CHECK(no_unlabeled.size() == 3);
  for (const auto& step : no_unlabeled) CHECK(step.unlabeled.empty());
  CHECK(no_unlabeled.back().labeled.size() == 26);
  CHECK_THROWS_AS(batches(10, 10, 0, 1, 0), ConfigError);
}

TEST_CASE("gather builds dense batches") {
  auto samples = synthetic_samples(5);
  auto b = gather(samples, {4, 1});
  CHECK(b.x.rows() == 2);
  CHECK(b.x.at(0, 0) == 4.0);
  CHECK(b.y == std::vector<int>{0, 1});
  CHECK(b.fully_labeled());
}

TEST_CASE("binary cache round trip keyed by seed") {
  auto samples = synthetic_samples(10);
  auto p = fs::temp_directory_path() / "semifair_cache.bin";
  save_cache(p, samples, 42);
  auto back = load_cache(p, 42);
  REQUIRE(back.has_value());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK((*back)[i].x == samples[i].x);
    CHECK((*back)[i].z == samples[i].z);
  }
  CHECK_FALSE(load_cache(p, 43).has_value());
}
