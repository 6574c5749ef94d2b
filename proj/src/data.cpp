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

#include "semifair/data.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "semifair/random.hpp"

namespace semifair::data {

namespace {

constexpr std::size_t kSexColumn = 9;
constexpr std::size_t kIncomeColumn = 14;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

int income_label(const RawRecord& r) {
  const std::string& v = r.fields[kIncomeColumn];
  if (v == ">50K") return 1;
  if (v == "<=50K") return 0;
  throw ParseError("line " + std::to_string(r.line) + ": unknown income label '" +
                   v + "'");
}

int sex_label(const RawRecord& r) {
  const std::string& v = r.fields[kSexColumn];
  if (v == "Male") return 0;
  if (v == "Female") return 1;
  throw ParseError("line " + std::to_string(r.line) + ": unknown sex value '" + v +
                   "'");
}

std::atomic<std::uint64_t> g_shadow_reads{0};
thread_local int t_training_depth = 0;

}  // namespace

const std::array<Column, kAdultColumns>& adult_schema() {
  static const std::array<Column, kAdultColumns> schema = {{
      {"age", ColumnKind::kNumeric},
      {"workclass", ColumnKind::kCategorical},
      {"fnlwgt", ColumnKind::kNumeric},
      {"education", ColumnKind::kCategorical},
      {"education-num", ColumnKind::kNumeric},
      {"marital-status", ColumnKind::kCategorical},
      {"occupation", ColumnKind::kCategorical},
      {"relationship", ColumnKind::kCategorical},
      {"race", ColumnKind::kCategorical},
      {"sex", ColumnKind::kSensitive},
      {"capital-gain", ColumnKind::kNumeric},
      {"capital-loss", ColumnKind::kNumeric},
      {"hours-per-week", ColumnKind::kNumeric},
      {"native-country", ColumnKind::kCategorical},
      {"income", ColumnKind::kLabel},
  }};
  return schema;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t schema_hash() {
  std::uint64_t h = fnv1a("adult-schema-v1");
  for (const Column& c : adult_schema()) {
    h = fnv1a(c.name, h);
    h = fnv1a(std::to_string(static_cast<int>(c.kind)), h);
  }
  return h;
}

// ---- loading ------------------------------------------------------------

std::vector<RawRecord> load_adult_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open Adult file '" + path.string() + "'");
  }
  const auto& schema = adult_schema();
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '|') continue;
    RawRecord rec;
    rec.line = line_no;
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = view.find(',', start);
      const std::string_view cell =
          trim(view.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                  : comma - start));
      if (col < kAdultColumns) rec.fields[col] = std::string(cell);
      ++col;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (col != kAdultColumns) {
      throw SchemaError(path.string() + " line " + std::to_string(line_no) +
                        ": expected " + std::to_string(kAdultColumns) +
                        " fields, got " + std::to_string(col));
    }
    std::string& label = rec.fields[kIncomeColumn];
    if (!label.empty() && label.back() == '.') label.pop_back();
    for (std::size_t c = 0; c < kAdultColumns; ++c) {
      if (schema[c].kind != ColumnKind::kNumeric || rec.missing(c)) continue;
      double v;
      if (!parse_double(rec.fields[c], v)) {
        throw ParseError(path.string() + " line " + std::to_string(line_no) +
                         ": column '" + schema[c].name + "' is not numeric: '" +
                         rec.fields[c] + "'");
      }
    }
    income_label(rec);
    sex_label(rec);
    records.push_back(std::move(rec));
  }
  if (records.empty()) {
    std::clog << "warning: no records in " << path.string() << "\n";
  }
  return records;
}

std::pair<std::vector<RawRecord>, std::vector<RawRecord>> load_adult(
    const std::filesystem::path& train_path,
    const std::filesystem::path& test_path) {
  return {load_adult_file(train_path), load_adult_file(test_path)};
}

// ---- preprocessing ------------------------------------------------------

std::size_t Stats::feature_dim() const {
  std::size_t d = numeric.size();
  for (const auto& c : categorical) d += c.vocabulary.size();
  return d;
}

std::vector<std::string> Stats::feature_names() const {
  const auto& schema = adult_schema();
  std::vector<std::string> names;
  // Same column walk as encoding: schema order.
  for (std::size_t col = 0; col < kAdultColumns; ++col) {
    for (const auto& n : numeric) {
      if (n.column == col) names.emplace_back(schema[col].name);
    }
    for (const auto& c : categorical) {
      if (c.column != col) continue;
      for (const auto& v : c.vocabulary) {
        names.push_back(std::string(schema[col].name) + "=" + v);
      }
    }
  }
  return names;
}

void to_json(nlohmann::json& j, const Stats& s) {
  j = nlohmann::json::object();
  j["include_sensitive_feature"] = s.include_sensitive_feature;
  auto& cats = j["categorical"] = nlohmann::json::array();
  for (const auto& c : s.categorical) {
    cats.push_back({{"column", c.column}, {"vocabulary", c.vocabulary}, {"mode", c.mode}});
  }
  auto& nums = j["numeric"] = nlohmann::json::array();
  for (const auto& n : s.numeric) {
    nums.push_back({{"column", n.column}, {"mean", n.mean}, {"std", n.std}});
  }
}

void from_json(const nlohmann::json& j, Stats& s) {
  s = Stats{};
  s.include_sensitive_feature = j.at("include_sensitive_feature").get<bool>();
  for (const auto& c : j.at("categorical")) {
    s.categorical.push_back({c.at("column").get<std::size_t>(),
                             c.at("vocabulary").get<std::vector<std::string>>(),
                             c.at("mode").get<std::string>()});
  }
  for (const auto& n : j.at("numeric")) {
    s.numeric.push_back({n.at("column").get<std::size_t>(), n.at("mean").get<double>(),
                         n.at("std").get<double>()});
  }
}

namespace {

Stats fit_stats(const std::vector<RawRecord>& records, const PreprocessOptions& opts) {
  const auto& schema = adult_schema();
  Stats stats;
  stats.include_sensitive_feature = opts.include_sensitive_feature;
  for (std::size_t col = 0; col < kAdultColumns; ++col) {
    const ColumnKind kind = schema[col].kind;
    if (kind == ColumnKind::kNumeric) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : records) {
        if (r.missing(col)) continue;
        double v;
        parse_double(r.fields[col], v);
        sum += v;
        ++n;
      }
      const double mean = n ? sum / static_cast<double>(n) : 0.0;
      // Population variance of the imputed column (missing cells take the mean
      // and contribute zero deviation).
      double ss = 0.0;
      for (const auto& r : records) {
        if (r.missing(col)) continue;
        double v;
        parse_double(r.fields[col], v);
        ss += (v - mean) * (v - mean);
      }
      double sd = records.empty() ? 1.0 : std::sqrt(ss / static_cast<double>(records.size()));
      if (!(sd > 0.0)) sd = 1.0;
      stats.numeric.push_back({col, mean, sd});
    } else if (kind == ColumnKind::kCategorical ||
               (kind == ColumnKind::kSensitive && opts.include_sensitive_feature)) {
      std::map<std::string, std::size_t> counts;
      for (const auto& r : records) {
        if (!r.missing(col)) ++counts[r.fields[col]];
      }
      Stats::Categorical c;
      c.column = col;
      std::size_t best = 0;
      for (const auto& [value, count] : counts) {
        c.vocabulary.push_back(value);
        if (count > best) {
          best = count;
          c.mode = value;
        }
      }
      stats.categorical.push_back(std::move(c));
    }
  }
  return stats;
}

}  // namespace

std::pair<std::vector<Sample>, Stats> preprocess(
    const std::vector<RawRecord>& records, const std::optional<Stats>& stats_in,
    const PreprocessOptions& options) {
  Stats stats = stats_in ? *stats_in : fit_stats(records, options);
  const std::size_t d = stats.feature_dim();

  // Column -> encoder lookup in schema order.
  struct Slot {
    const Stats::Numeric* num = nullptr;
    const Stats::Categorical* cat = nullptr;
    std::size_t offset = 0;
  };
  std::vector<Slot> slots;
  std::size_t offset = 0;
  for (std::size_t col = 0; col < kAdultColumns; ++col) {
    for (const auto& n : stats.numeric) {
      if (n.column == col) {
        slots.push_back({&n, nullptr, offset});
        offset += 1;
      }
    }
    for (const auto& c : stats.categorical) {
      if (c.column == col) {
        slots.push_back({nullptr, &c, offset});
        offset += c.vocabulary.size();
      }
    }
  }

  std::vector<Sample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    Sample s;
    s.x.assign(d, 0.0);
    for (const Slot& slot : slots) {
      if (slot.num) {
        double v = slot.num->mean;
        if (!r.missing(slot.num->column)) parse_double(r.fields[slot.num->column], v);
        s.x[slot.offset] = (v - slot.num->mean) / slot.num->std;
      } else {
        const std::string& raw =
            r.missing(slot.cat->column) ? slot.cat->mode : r.fields[slot.cat->column];
        const auto& vocab = slot.cat->vocabulary;
        auto it = std::lower_bound(vocab.begin(), vocab.end(), raw);
        if (it != vocab.end() && *it == raw) {
          s.x[slot.offset + static_cast<std::size_t>(it - vocab.begin())] = 1.0;
        }
      }
    }
    s.y = income_label(r);
    s.z = sex_label(r);
    samples.push_back(std::move(s));
  }
  return {std::move(samples), std::move(stats)};
}

// ---- splitting ----------------------------------------------------------

TrainingScope::TrainingScope() { ++t_training_depth; }
TrainingScope::~TrainingScope() { --t_training_depth; }
bool TrainingScope::active() { return t_training_depth > 0; }

std::uint64_t shadow_reads_during_training() { return g_shadow_reads.load(); }
void reset_shadow_read_counter() { g_shadow_reads.store(0); }

int DatasetSplit::shadow_attribute(std::size_t i) const {
  if (TrainingScope::active()) ++g_shadow_reads;
  return shadow_z_.at(i);
}

std::size_t DatasetSplit::feature_dim() const {
  for (const auto* set : {&train_labeled, &train_unlabeled, &validation, &test}) {
    if (!set->empty()) return set->front().x.size();
  }
  return 0;
}

std::vector<Sample> DatasetSplit::train_all() const {
  std::vector<std::pair<std::size_t, const Sample*>> order;
  for (std::size_t i = 0; i < train_labeled.size(); ++i) {
    order.emplace_back(labeled_index[i], &train_labeled[i]);
  }
  for (std::size_t i = 0; i < train_unlabeled.size(); ++i) {
    order.emplace_back(unlabeled_index[i], &train_unlabeled[i]);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Sample> out;
  out.reserve(order.size());
  for (const auto& [idx, s] : order) {
    out.push_back(*s);
    out.back().z = kAbsent;
  }
  return out;
}

DatasetSplit split_and_mask(const std::vector<Sample>& samples, double val_frac,
                            double label_ratio, std::uint64_t seed) {
  if (!(val_frac > 0.0 && val_frac < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1), got " +
                      std::to_string(val_frac));
  }
  if (!(label_ratio > 0.0 && label_ratio <= 1.0)) {
    throw ConfigError("label ratio must lie in (0, 1], got " +
                      std::to_string(label_ratio) +
                      " (at least some attribute labels are required)");
  }
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng({seed, 0x5eed5eedULL});
  shuffle_in_place(order, rng);

  const auto n_val = static_cast<std::size_t>(
      std::floor(val_frac * static_cast<double>(samples.size())));
  const std::size_t n_rest = samples.size() - n_val;
  const auto n_labeled = static_cast<std::size_t>(
      std::floor(label_ratio * static_cast<double>(n_rest)));

  DatasetSplit split;
  split.label_ratio = label_ratio;
  split.seed = seed;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t idx = order[k];
    if (k < n_val) {
      split.validation.push_back(samples[idx]);
      split.validation_index.push_back(idx);
    } else if (k < n_val + n_labeled) {
      split.train_labeled.push_back(samples[idx]);
      split.labeled_index.push_back(idx);
    } else {
      Sample masked = samples[idx];
      split.shadow_z_.push_back(masked.z);
      masked.z = kAbsent;
      split.train_unlabeled.push_back(std::move(masked));
      split.unlabeled_index.push_back(idx);
    }
  }
  return split;
}

// ---- batching -----------------------------------------------------------

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch, std::uint64_t stream) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng = make_rng({seed, epoch, stream});
  shuffle_in_place(p, rng);
  return p;
}

}  // namespace

std::vector<StepIndices> batches(std::size_t n_labeled, std::size_t n_unlabeled,
                                 std::size_t batch_size, std::uint64_t seed,
                                 std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  const std::size_t longest = std::max(n_labeled, n_unlabeled);
  const std::size_t steps = (longest + batch_size - 1) / batch_size;
  const auto pl = permutation(n_labeled, seed, epoch, 1);
  const auto pu = permutation(n_unlabeled, seed, epoch, 2);

  // The longer set is walked once (last batch may be partial); the shorter
  // one wraps around its permutation to fill full batches.
  auto take = [&](const std::vector<std::size_t>& perm, std::size_t step) {
    std::vector<std::size_t> out;
    const std::size_t n = perm.size();
    if (n == 0) return out;
    const std::size_t begin = step * batch_size;
    if (n == longest) {
      const std::size_t end = std::min(begin + batch_size, n);
      out.assign(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                 perm.begin() + static_cast<std::ptrdiff_t>(end));
    } else {
      const std::size_t count = std::min(batch_size, n);
      for (std::size_t k = 0; k < count; ++k) out.push_back(perm[(begin + k) % n]);
    }
    return out;
  };

  std::vector<StepIndices> plan(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    plan[s].labeled = take(pl, s);
    plan[s].unlabeled = take(pu, s);
  }
  return plan;
}

std::vector<StepIndices> batches(const DatasetSplit& split, std::size_t batch_size,
                                 std::uint64_t seed, std::uint64_t epoch) {
  return batches(split.train_labeled.size(), split.train_unlabeled.size(),
                 batch_size, seed, epoch);
}

std::vector<std::vector<std::size_t>> single_batches(std::size_t n,
                                                     std::size_t batch_size,
                                                     std::uint64_t seed,
                                                     std::uint64_t epoch) {
  std::vector<std::vector<std::size_t>> out;
  for (auto& step : batches(n, 0, batch_size, seed, epoch)) {
    out.push_back(std::move(step.labeled));
  }
  return out;
}

bool Batch::fully_labeled() const {
  return std::none_of(z.begin(), z.end(), [](int v) { return v == kAbsent; });
}

bool Batch::fully_unlabeled() const {
  return std::all_of(z.begin(), z.end(), [](int v) { return v == kAbsent; });
}

Batch gather(const std::vector<Sample>& samples,
             const std::vector<std::size_t>& index) {
  Batch b;
  const std::size_t d = samples.empty() ? 0 : samples.front().x.size();
  std::vector<double> data;
  data.reserve(index.size() * d);
  for (std::size_t i : index) {
    const Sample& s = samples.at(i);
    data.insert(data.end(), s.x.begin(), s.x.end());
    b.y.push_back(s.y);
    b.z.push_back(s.z);
  }
  b.x = Tensor({index.size(), d}, std::move(data));
  return b;
}

Batch gather_all(const std::vector<Sample>& samples) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gather(samples, idx);
}

std::vector<Sample> make_synthetic(const SyntheticOptions& options, std::uint64_t seed) {
  if (options.dim < 3) throw ConfigError("synthetic data needs at least 3 features");
  Rng rng = make_rng({seed, 0x73796e7468ULL});
  std::vector<Sample> out(options.n);
  for (Sample& s : out) {
    s.z = uniform01(rng) < options.z_rate ? 1 : 0;
    s.x.resize(options.dim);
    for (double& v : s.x) v = standard_normal(rng);
    s.x[0] = options.signal * (2.0 * s.z - 1.0) + options.noise * s.x[0];
    s.y = s.x[1] + 0.5 * s.x[2] > 0.0 ? 1 : 0;
  }
  return out;
}

// ---- cache --------------------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'S', 'F', 'C', 'A', 'C', 'H', 'E', '1'};

template <typename T>
void write_le(std::ostream& out, T v) {
  // Targets are little-endian; the format is defined as little-endian.
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void save_cache(const std::filesystem::path& path,
                const std::vector<Sample>& samples, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write cache '" + path.string() + "'");
  out.write(kCacheMagic, sizeof(kCacheMagic));
  write_le<std::uint64_t>(out, schema_hash());
  write_le<std::uint64_t>(out, seed);
  write_le<std::uint64_t>(out, samples.size());
  write_le<std::uint64_t>(out, samples.empty() ? 0 : samples.front().x.size());
  for (const Sample& s : samples) {
    write_le<std::int32_t>(out, s.y);
    write_le<std::int32_t>(out, s.z);
    for (double v : s.x) write_le<double>(out, v);
  }
}

std::optional<std::vector<Sample>> load_cache(const std::filesystem::path& path,
                                              std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCacheMagic, 8) != 0) {
    return std::nullopt;
  }
  std::uint64_t hash = 0, stored_seed = 0, n = 0, d = 0;
  if (!read_le(in, hash) || !read_le(in, stored_seed) || !read_le(in, n) ||
      !read_le(in, d)) {
    return std::nullopt;
  }
  if (hash != schema_hash() || stored_seed != seed) return std::nullopt;
  std::vector<Sample> samples(n);
  for (Sample& s : samples) {
    std::int32_t y, z;
    if (!read_le(in, y) || !read_le(in, z)) return std::nullopt;
    s.y = y;
    s.z = z;
    s.x.resize(d);
    for (double& v : s.x) {
      if (!read_le(in, v)) return std::nullopt;
    }
  }
  return samples;
}

}  // namespace semifair::data
