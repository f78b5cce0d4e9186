/*
 * Copyright 2026 The XMTR Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Tabular multi-target regression data: CSV ingestion with a missing-value
// policy, CSV export, and deterministic k-fold plans.
//
// CSV dialect: comma separated, first row is the header, "." decimal
// separator, optional double-quoted fields. An empty cell (or a literal NaN)
// is a missing value. Every non-target column must be numeric; categorical
// columns are rejected.

#ifndef XMTR_DATASET_HPP_
#define XMTR_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xmtr/common.hpp"

namespace xmtr {

enum class MissingPolicy { kZeroFill, kDropRow, kError };

struct Dataset {
  Matrix features;  // n x d
  Matrix targets;   // n x m
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;

  std::size_t rows() const noexcept { return features.rows(); }
  std::size_t num_features() const noexcept { return features.cols(); }
  std::size_t num_targets() const noexcept { return targets.cols(); }

  // Throws kDataError when any invariant is broken.
  void Validate() const {
    Require(rows() >= 1, ErrorCode::kDataError, "dataset has no rows");
    Require(targets.rows() == rows(), ErrorCode::kDataError,
            "feature and target row counts differ");
    Require(num_features() >= 1, ErrorCode::kDataError, "dataset has no features");
    Require(num_targets() >= 1, ErrorCode::kDataError, "dataset has no targets");
    Require(feature_names.size() == num_features() &&
                target_names.size() == num_targets(),
            ErrorCode::kDataError, "column name count does not match data width");
    std::set<std::string> seen;
    for (const auto& n : feature_names) {
      Require(seen.insert(n).second, ErrorCode::kDataError,
              "duplicate feature name '" + n + "'");
    }
    seen.clear();
    for (const auto& n : target_names) {
      Require(seen.insert(n).second, ErrorCode::kDataError,
              "duplicate target name '" + n + "'");
    }
    for (double v : features.data()) {
      Require(std::isfinite(v), ErrorCode::kDataError, "non-finite feature value");
    }
    for (double v : targets.data()) {
      Require(std::isfinite(v), ErrorCode::kDataError, "non-finite target value");
    }
  }

  Dataset Subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.features = Matrix(indices.size(), num_features());
    out.targets = Matrix(indices.size(), num_targets());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::copy_n(features.row(indices[i]).begin(), num_features(),
                  out.features.row(i).begin());
      std::copy_n(targets.row(indices[i]).begin(), num_targets(),
                  out.targets.row(i).begin());
    }
    out.feature_names = feature_names;
    out.target_names = target_names;
    return out;
  }
};

namespace internal {

// Splits one CSV record. Handles double-quoted fields with "" escapes; does
// not support newlines inside quoted fields.
inline std::vector<std::string> SplitCsvRecord(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string QuoteCsv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable ReadCsvTable(std::istream& in) {
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!have_header) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (Trim(line).empty()) continue;
      if (line.starts_with('#')) continue;  // effective-config echo lines
      table.header = SplitCsvRecord(line);
      for (auto& h : table.header) h = std::string(Trim(h));
      have_header = true;
      continue;
    }
    if (Trim(line).empty()) continue;
    auto fields = SplitCsvRecord(line);
    Require(fields.size() == table.header.size(), ErrorCode::kDataError,
            "line " + std::to_string(line_no) + ": expected " +
                std::to_string(table.header.size()) + " fields, found " +
                std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  Require(have_header, ErrorCode::kDataError, "CSV has no header row");
  return table;
}

inline CsvTable ReadCsvFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kNotFound, "cannot open '" + path.string() + "'");
  return ReadCsvTable(in);
}

enum class CellState { kValue, kMissing, kNonNumeric };

inline CellState ParseCell(const std::string& cell, double& out) {
  const auto t = Trim(cell);
  if (t.empty()) return CellState::kMissing;
  if (!ParseDouble(t, out)) return CellState::kNonNumeric;
  if (std::isnan(out)) return CellState::kMissing;
  if (!std::isfinite(out)) return CellState::kNonNumeric;
  return CellState::kValue;
}

// Extracts the named columns (in the given order) as a numeric matrix,
// applying the missing-value policy. `missing_row` flags rows that had a
// missing cell so kDropRow can drop them from paired extractions alike.
inline Matrix ExtractColumns(const CsvTable& table, const std::vector<std::size_t>& cols,
                             MissingPolicy policy, std::vector<bool>& missing_row) {
  Matrix out(table.rows.size(), cols.size());
  missing_row.assign(table.rows.size(), false);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      double v = 0.0;
      switch (ParseCell(table.rows[r][cols[c]], v)) {
        case CellState::kValue:
          out(r, c) = v;
          break;
        case CellState::kMissing:
          Require(policy != MissingPolicy::kError, ErrorCode::kDataError,
                  "missing value in column '" + table.header[cols[c]] + "' at row " +
                      std::to_string(r + 1));
          out(r, c) = 0.0;
          missing_row[r] = true;
          break;
        case CellState::kNonNumeric:
          Fail(ErrorCode::kDataError,
               "column '" + table.header[cols[c]] + "' is not numeric (value '" +
                   table.rows[r][cols[c]] +
                   "'); categorical features are not supported");
      }
    }
  }
  return out;
}

inline Matrix DropRows(const Matrix& m, const std::vector<bool>& drop) {
  Matrix out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!drop[r]) out.AppendRow(m.row(r));
  }
  if (out.rows() == 0) out = Matrix(0, m.cols());
  return out;
}

}  // namespace internal

inline Dataset ReadCsv(std::istream& in, const std::vector<std::string>& target_columns,
                       MissingPolicy policy) {
  const auto table = internal::ReadCsvTable(in);
  Require(!target_columns.empty(), ErrorCode::kInvalidArgument,
          "at least one target column is required");

  std::vector<std::size_t> target_idx;
  for (const auto& name : target_columns) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    Require(it != table.header.end(), ErrorCode::kNotFound,
            "unknown target column '" + name + "'");
    target_idx.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  std::vector<std::size_t> feature_idx;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (std::find(target_idx.begin(), target_idx.end(), c) == target_idx.end()) {
      feature_idx.push_back(c);
    }
  }

  Dataset ds;
  for (auto c : feature_idx) ds.feature_names.push_back(table.header[c]);
  ds.target_names = target_columns;

  std::vector<bool> miss_f, miss_t;
  ds.features = internal::ExtractColumns(table, feature_idx, policy, miss_f);
  ds.targets = internal::ExtractColumns(table, target_idx, policy, miss_t);
  if (policy == MissingPolicy::kDropRow) {
    std::vector<bool> drop(miss_f.size());
    for (std::size_t r = 0; r < drop.size(); ++r) drop[r] = miss_f[r] || miss_t[r];
    ds.features = internal::DropRows(ds.features, drop);
    ds.targets = internal::DropRows(ds.targets, drop);
    Require(ds.rows() > 0, ErrorCode::kDataError,
            "no rows left after dropping rows with missing values");
  }
  ds.Validate();
  return ds;
}

// Loads a dataset: targets are `target_columns` in the given order, features
// are the remaining columns in header order.
inline Dataset LoadCsv(const std::filesystem::path& path,
                       const std::vector<std::string>& target_columns,
                       MissingPolicy policy = MissingPolicy::kZeroFill) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kNotFound, "cannot open '" + path.string() + "'");
  return ReadCsv(in, target_columns, policy);
}

// Loads only the named feature columns, in the given order. Used to pull
// instances to explain from a CSV that may or may not carry target columns.
inline Matrix LoadFeatureColumns(const std::filesystem::path& path,
                                 const std::vector<std::string>& feature_names,
                                 MissingPolicy policy = MissingPolicy::kZeroFill) {
  const auto table = internal::ReadCsvFile(path);
  std::vector<std::size_t> idx;
  for (const auto& name : feature_names) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    Require(it != table.header.end(), ErrorCode::kNotFound,
            "feature column '" + name + "' not found in '" + path.string() + "'");
    idx.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  std::vector<bool> missing;
  auto m = internal::ExtractColumns(table, idx, policy, missing);
  if (policy == MissingPolicy::kDropRow) m = internal::DropRows(m, missing);
  return m;
}

// Writes features then targets. Values use the shortest round-trip decimal
// form so that a reload is bit-exact.
inline void WriteCsv(const Dataset& ds, std::ostream& out) {
  bool first = true;
  for (const auto* names : {&ds.feature_names, &ds.target_names}) {
    for (const auto& n : *names) {
      if (!first) out << ',';
      out << internal::QuoteCsv(n);
      first = false;
    }
  }
  out << '\n';
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    first = true;
    for (const auto* m : {&ds.features, &ds.targets}) {
      for (double v : m->row(r)) {
        if (!first) out << ',';
        out << FormatExact(v);
        first = false;
      }
    }
    out << '\n';
  }
}

inline void SaveCsv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  Require(out.good(), ErrorCode::kNotFound, "cannot write '" + path.string() + "'");
  WriteCsv(ds, out);
}

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // fold index per row

  std::vector<std::size_t> TestIndices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> TrainIndices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> FoldSizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
  }
};

// Shuffles row ids with the seed and deals them round-robin into k folds, so
// fold sizes differ by at most one.
inline FoldPlan KFold(std::size_t n, std::size_t k, std::uint64_t seed) {
  Require(k >= 2 && k <= n, ErrorCode::kInvalidArgument,
          "fold count must satisfy 2 <= k <= n (k=" + std::to_string(k) +
              ", n=" + std::to_string(n) + ")");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(DeriveSeed(seed, 0x6b666f6c64ULL));
  rng.Shuffle(order);
  FoldPlan plan;
  plan.k = k;
  plan.assignments.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.assignments[order[i]] = i % k;
  return plan;
}

}  // namespace xmtr

#endif  // XMTR_DATASET_HPP_
