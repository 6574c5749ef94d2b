/*
 * Copyright 2026 The semifair Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "semifair/tensor.hpp"

namespace semifair::data {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ColumnKind { kNumeric, kCategorical, kSensitive, kLabel };

struct Column {
  const char* name;
  ColumnKind kind;
};

inline constexpr std::size_t kAdultColumns = 15;

/// Column layout of the Adult census files, in file order.
const std::array<Column, kAdultColumns>& adult_schema();
std::uint64_t schema_hash();

/// One parsed line. Cells are whitespace-trimmed; "?" marks a missing value.
struct RawRecord {
  std::array<std::string, kAdultColumns> fields;
  std::size_t line = 0;

  bool missing(std::size_t col) const { return fields[col] == "?"; }
};

/// Parses one Adult-format file. Blank lines and "|"-prefixed header lines
/// are skipped; a trailing "." on the income label is tolerated.
std::vector<RawRecord> load_adult_file(const std::filesystem::path& path);
std::pair<std::vector<RawRecord>, std::vector<RawRecord>> load_adult(
    const std::filesystem::path& train_path,
    const std::filesystem::path& test_path);

inline constexpr int kAbsent = -1;

struct Sample {
  std::vector<double> x;
  int y = 0;
  /// Sensitive attribute (0 = male, 1 = female) or kAbsent.
  int z = kAbsent;
};

/// Train-time preprocessing state reused verbatim at test time.
struct Stats {
  struct Categorical {
    std::size_t column = 0;
    std::vector<std::string> vocabulary;  // sorted
    std::string mode;
  };
  struct Numeric {
    std::size_t column = 0;
    double mean = 0.0;
    double std = 1.0;
  };
  std::vector<Categorical> categorical;
  std::vector<Numeric> numeric;
  bool include_sensitive_feature = false;

  std::size_t feature_dim() const;
  std::vector<std::string> feature_names() const;
};

void to_json(nlohmann::json& j, const Stats& s);
void from_json(const nlohmann::json& j, Stats& s);

struct PreprocessOptions {
  /// Keep the sex column as a one-hot feature (ablation only).
  bool include_sensitive_feature = false;
};

/// One-hot encodes categoricals and standardizes numerics. When `stats` is
/// given it is applied unchanged (test time); otherwise it is fitted on
/// `records`. Missing cells take the train mode / mean; unseen categories
/// encode as an all-zero block.
std::pair<std::vector<Sample>, Stats> preprocess(
    const std::vector<RawRecord>& records,
    const std::optional<Stats>& stats = std::nullopt,
    const PreprocessOptions& options = {});

/// Train partition with sensitive-attribute masking.
///
/// Samples in `train_unlabeled` carry z == kAbsent. Their true attributes are
/// held privately and only reachable through shadow_attribute(), whose calls
/// are counted (see TrainingScope).
class DatasetSplit {
 public:
  std::vector<Sample> train_labeled;
  std::vector<Sample> train_unlabeled;
  std::vector<Sample> validation;
  std::vector<Sample> test;

  /// Positions in the input sample list for each partition.
  std::vector<std::size_t> labeled_index;
  std::vector<std::size_t> unlabeled_index;
  std::vector<std::size_t> validation_index;

  double label_ratio = 0.0;
  std::uint64_t seed = 0;

  /// True attribute of train_unlabeled[i]; for evaluation code only.
  int shadow_attribute(std::size_t i) const;
  std::size_t feature_dim() const;

  /// Labeled and unlabeled samples in original input order (attributes of the
  /// unlabeled part stay masked). Independent of the label ratio.
  std::vector<Sample> train_all() const;

 private:
  friend DatasetSplit split_and_mask(const std::vector<Sample>&, double,
                                     double, std::uint64_t);
  std::vector<int> shadow_z_;
};

/// Deterministic shuffle by seed; the validation block is carved first, then
/// floor(label_ratio * N) of the remainder keep their attribute.
DatasetSplit split_and_mask(const std::vector<Sample>& samples, double val_frac,
                            double label_ratio, std::uint64_t seed);

/// Marks a region in which reading shadow attributes counts as a leak.
class TrainingScope {
 public:
  TrainingScope();
  ~TrainingScope();
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;

  static bool active();
};

/// Number of shadow_attribute() calls made inside a TrainingScope.
std::uint64_t shadow_reads_during_training();
void reset_shadow_read_counter();

/// Index lists for one optimization step.
struct StepIndices {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

/// One labeled and one unlabeled mini-batch per step, each set shuffled
/// independently per epoch and the shorter one cycled. The step count is
/// ceil(max(|L|, |U|) / batch_size).
std::vector<StepIndices> batches(std::size_t n_labeled, std::size_t n_unlabeled,
                                 std::size_t batch_size, std::uint64_t seed,
                                 std::uint64_t epoch);
std::vector<StepIndices> batches(const DatasetSplit& split,
                                 std::size_t batch_size, std::uint64_t seed,
                                 std::uint64_t epoch);

/// Shuffled mini-batches over a single set.
std::vector<std::vector<std::size_t>> single_batches(std::size_t n,
                                                     std::size_t batch_size,
                                                     std::uint64_t seed,
                                                     std::uint64_t epoch);

/// Dense view of a subset of samples.
struct Batch {
  Tensor x;
  std::vector<int> y;
  std::vector<int> z;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  /// Every z observed.
  bool fully_labeled() const;
  /// No z observed.
  bool fully_unlabeled() const;
};

Batch gather(const std::vector<Sample>& samples,
             const std::vector<std::size_t>& index);
Batch gather_all(const std::vector<Sample>& samples);

/// Toy data with the attribute planted in feature 0 and a label that ignores
/// it: x_0 = signal * (2z - 1) + noise * N(0,1), other features N(0,1),
/// y = [x_1 + 0.5 x_2 > 0], z ~ Bernoulli(z_rate).
struct SyntheticOptions {
  std::size_t n = 2000;
  std::size_t dim = 8;
  double signal = 1.0;
  double noise = 0.1;
  double z_rate = 0.5;
};

std::vector<Sample> make_synthetic(const SyntheticOptions& options, std::uint64_t seed);

/// Binary cache of preprocessed samples keyed by (schema hash, seed).
void save_cache(const std::filesystem::path& path,
                const std::vector<Sample>& samples, std::uint64_t seed);
std::optional<std::vector<Sample>> load_cache(const std::filesystem::path& path,
                                              std::uint64_t seed);

/// Stable 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace semifair::data
