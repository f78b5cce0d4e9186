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

// Rule quality metrics, the cross-validated explanation experiment, a
// synthetic data generator and the allowed-error scalability benchmark.

#ifndef XMTR_EVALUATION_HPP_
#define XMTR_EVALUATION_HPP_

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xmtr/common.hpp"
#include "xmtr/dataset.hpp"
#include "xmtr/forest.hpp"
#include "xmtr/reducer.hpp"

namespace xmtr {

// Fraction of rows inside every antecedent interval (closed bounds).
inline double Coverage(const Rule& rule, const Dataset& data) {
  Require(data.rows() > 0, ErrorCode::kDataError, "coverage needs a non-empty dataset");
  std::size_t covered = 0;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    if (rule.Covers(data.features.row(r))) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(data.rows());
}

namespace internal {

template <typename Reference>
std::optional<double> CoveredMae(const Rule& rule, const Dataset& data, Reference&& ref) {
  Require(data.rows() > 0, ErrorCode::kDataError, "rule precision needs a non-empty dataset");
  double sum = 0.0;
  std::size_t covered = 0;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto x = data.features.row(r);
    if (!rule.Covers(x)) continue;
    ++covered;
    const std::vector<double> truth = ref(r, x);
    double row_err = 0.0;
    for (const auto& c : rule.consequent) row_err += std::abs(c.value - truth[c.target]);
    sum += row_err / static_cast<double>(rule.consequent.size());
  }
  if (covered == 0) return std::nullopt;
  return sum / static_cast<double>(covered);
}

}  // namespace internal

// MAE between the rule's consequent and the forest's prediction over the
// covered rows; absent when no row is covered.
inline std::optional<double> RulePrecision(const Rule& rule, const Dataset& data,
                                           const Forest& forest) {
  return internal::CoveredMae(rule, data, [&](std::size_t, std::span<const double> x) {
    return forest.Predict(x);
  });
}

// Same, measured against the ground-truth targets.
inline std::optional<double> RulePrecisionTruth(const Rule& rule, const Dataset& data) {
  return internal::CoveredMae(rule, data, [&](std::size_t r, std::span<const double>) {
    const auto row = data.targets.row(r);
    return std::vector<double>(row.begin(), row.end());
  });
}

inline std::size_t RuleLength(const Rule& rule) { return rule.antecedent.size(); }

struct MetricReport {
  std::string label;
  AllowedError allowed;
  double coverage = 0.0;
  std::optional<double> rule_precision_mae;    // vs model
  std::optional<double> rule_precision_truth;  // vs targets
  double rule_length = 0.0;
  double kept_paths = 0.0;
  std::size_t instances = 0;
};

struct ExperimentReport {
  std::vector<MetricReport> rows;  // one per allowed error, input order
  MaeReport forest_mae;            // cross-validated model error
  std::size_t instances = 0;       // test instances explained (== n)
};

struct ExperimentOptions {
  double min_support = kDefaultMinSupport;
  ReduceOptions reduce;
  unsigned threads = 1;
};

inline std::string DescribeAllowed(const AllowedError& a) {
  std::string s;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (i) s += ';';
    s += FormatExact(a.values[i]);
  }
  return s;
}

// k-fold loop: fit on the training split, explain every test row under each
// budget, score each rule on the test split, average over all test rows.
inline ExperimentReport RunExperiment(const Dataset& data, const ForestConfig& config,
                                      const std::vector<AllowedError>& allowed_errors,
                                      std::size_t k, std::uint64_t seed,
                                      const ExperimentOptions& options = {}) {
  data.Validate();
  Require(!allowed_errors.empty(), ErrorCode::kInvalidArgument,
          "at least one allowed error is required");
  for (const auto& a : allowed_errors) a.Validate(data.num_targets());
  const auto plan = KFold(data.rows(), k, seed);
  const std::size_t budgets = allowed_errors.size();
  const std::size_t m = data.num_targets();

  struct Cell {
    double coverage = 0.0;
    std::optional<double> precision, truth;
    double length = 0.0, kept = 0.0;
  };
  // Indexed by row so the aggregation order never depends on threading.
  std::vector<std::vector<Cell>> cells(data.rows(), std::vector<Cell>(budgets));
  std::vector<std::size_t> visits(data.rows(), 0);
  std::vector<double> abs_err(m, 0.0);

  for (std::size_t fold = 0; fold < k; ++fold) {
    const auto test_idx = plan.TestIndices(fold);
    const auto train = data.Subset(plan.TrainIndices(fold));
    const auto test = data.Subset(test_idx);
    const auto forest = Fit(train, config, options.threads);
    for (std::size_t r = 0; r < test.rows(); ++r) {
      const auto p = forest.Predict(test.features.row(r));
      for (std::size_t t = 0; t < m; ++t) abs_err[t] += std::abs(p[t] - test.targets(r, t));
    }
    ParallelFor(test_idx.size(), options.threads, [&](std::size_t j) {
      const auto prepared = Prepare(forest, test.features.row(j), options.min_support);
      for (std::size_t b = 0; b < budgets; ++b) {
        const auto e = ExplainPrepared(prepared, forest, allowed_errors[b], options.reduce);
        auto& cell = cells[test_idx[j]][b];
        cell.coverage = Coverage(e.rule, test);
        cell.precision = RulePrecision(e.rule, test, forest);
        cell.truth = RulePrecisionTruth(e.rule, test);
        cell.length = static_cast<double>(RuleLength(e.rule));
        cell.kept = static_cast<double>(e.reduction.kept.size());
      }
      ++visits[test_idx[j]];
    });
  }
  for (auto v : visits) {
    Require(v == 1, ErrorCode::kInternal, "a row was not explained exactly once");
  }

  ExperimentReport report;
  report.instances = data.rows();
  report.forest_mae.per_target = abs_err;
  for (auto& v : report.forest_mae.per_target) v /= static_cast<double>(data.rows());
  for (double v : report.forest_mae.per_target) report.forest_mae.mean += v;
  report.forest_mae.mean /= static_cast<double>(m);

  for (std::size_t b = 0; b < budgets; ++b) {
    MetricReport row;
    row.label = "XMTR (#" + std::to_string(b + 1) + ")";
    row.allowed = allowed_errors[b];
    double prec_sum = 0.0, truth_sum = 0.0;
    std::size_t prec_n = 0, truth_n = 0;
    for (std::size_t r = 0; r < data.rows(); ++r) {
      const auto& c = cells[r][b];
      row.coverage += c.coverage;
      row.rule_length += c.length;
      row.kept_paths += c.kept;
      if (c.precision) {
        prec_sum += *c.precision;
        ++prec_n;
      }
      if (c.truth) {
        truth_sum += *c.truth;
        ++truth_n;
      }
    }
    const auto n = static_cast<double>(data.rows());
    row.coverage /= n;
    row.rule_length /= n;
    row.kept_paths /= n;
    if (prec_n) row.rule_precision_mae = prec_sum / static_cast<double>(prec_n);
    if (truth_n) row.rule_precision_truth = truth_sum / static_cast<double>(truth_n);
    row.instances = data.rows();
    report.rows.push_back(row);
  }
  return report;
}

// One row per allowed error; metrics printed with 4 decimals.
inline void WriteExperimentCsv(const ExperimentReport& report, std::ostream& out) {
  out << "technique,allowed_error,coverage,rule_precision_mae,rule_precision_truth_mae,"
         "rule_length,kept_paths,instances\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? FormatFixed(*v, 4) : std::string();
  };
  for (const auto& r : report.rows) {
    out << r.label << ',' << DescribeAllowed(r.allowed) << ',' << FormatFixed(r.coverage, 4)
        << ',' << opt(r.rule_precision_mae) << ',' << opt(r.rule_precision_truth) << ','
        << FormatFixed(r.rule_length, 4) << ',' << FormatFixed(r.kept_paths, 4) << ','
        << r.instances << '\n';
  }
}

// Features ~ N(0, 1); targets = features * W + noise * N(0, 1) with
// W ~ N(0, 1) of shape d x m. Columns are named f0.., t0...
inline Dataset MakeSynthetic(std::size_t n, std::size_t d, std::size_t m, double noise,
                             std::uint64_t seed) {
  Require(n >= 1 && d >= 1 && m >= 1, ErrorCode::kInvalidArgument,
          "synthetic shape must be positive");
  Require(noise >= 0.0, ErrorCode::kInvalidArgument, "noise must be non-negative");
  Rng rng(DeriveSeed(seed, 0x73796e7468ULL));
  Matrix weights(d, m);
  for (std::size_t f = 0; f < d; ++f) {
    for (std::size_t t = 0; t < m; ++t) weights(f, t) = rng.Normal();
  }
  Dataset ds;
  ds.features = Matrix(n, d);
  ds.targets = Matrix(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < d; ++f) ds.features(r, f) = rng.Normal();
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t t = 0; t < m; ++t) {
      double v = 0.0;
      for (std::size_t f = 0; f < d; ++f) v += ds.features(r, f) * weights(f, t);
      ds.targets(r, t) = v + noise * rng.Normal();
    }
  }
  for (std::size_t f = 0; f < d; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  for (std::size_t t = 0; t < m; ++t) ds.target_names.push_back("t" + std::to_string(t));
  return ds;
}

// Rescales every target column to zero mean and unit (population) variance.
// Constant columns are only centered.
inline void StandardizeTargets(Dataset& ds) {
  for (std::size_t t = 0; t < ds.num_targets(); ++t) {
    double mean = 0.0;
    for (std::size_t r = 0; r < ds.rows(); ++r) mean += ds.targets(r, t);
    mean /= static_cast<double>(ds.rows());
    double var = 0.0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      const double dv = ds.targets(r, t) - mean;
      var += dv * dv;
    }
    const double sd = std::sqrt(var / static_cast<double>(ds.rows()));
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      ds.targets(r, t) = sd > 0.0 ? (ds.targets(r, t) - mean) / sd : ds.targets(r, t) - mean;
    }
  }
}

struct BenchRow {
  double allowed_error = 0.0;
  double mean_time_seconds = 0.0;
  double mean_kept_paths = 0.0;
};

struct BenchOptions {
  double min_support = kDefaultMinSupport;
  ReduceOptions reduce;
  unsigned fit_threads = 1;
};

// Rows sampled for explanation: `count` distinct rows (all rows if fewer).
inline std::vector<std::size_t> SampleRows(std::size_t n, std::size_t count,
                                           std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(DeriveSeed(seed, 0x62656e6368ULL));
  rng.Shuffle(idx);
  idx.resize(std::min(n, count));
  return idx;
}

// Fits once, then times the full explanation pipeline (path extraction,
// mining, reduction, rule composition) for each sampled row under each
// global allowed error. Single-threaded so timings are comparable.
inline std::vector<BenchRow> ScalabilityBench(const Dataset& data, const ForestConfig& config,
                                              const std::vector<double>& allowed_errors,
                                              std::size_t instances, std::uint64_t seed,
                                              const BenchOptions& options = {}) {
  Require(!allowed_errors.empty(), ErrorCode::kInvalidArgument,
          "at least one allowed error is required");
  Require(std::is_sorted(allowed_errors.begin(), allowed_errors.end()),
          ErrorCode::kInvalidArgument, "allowed errors must be ascending");
  Require(instances >= 1, ErrorCode::kInvalidArgument, "instances must be >= 1");
  const auto forest = Fit(data, config, options.fit_threads);
  const auto rows = SampleRows(data.rows(), instances, seed);

  std::vector<BenchRow> out;
  for (double a : allowed_errors) {
    const auto allowed = AllowedError::Global(a);
    double seconds = 0.0, kept = 0.0;
    for (auto r : rows) {
      const auto start = std::chrono::steady_clock::now();
      ExplainOptions eo;
      eo.allowed = allowed;
      eo.min_support = options.min_support;
      eo.reduce = options.reduce;
      const auto e = Explain(forest, data.features.row(r), eo);
      const auto stop = std::chrono::steady_clock::now();
      seconds += std::chrono::duration<double>(stop - start).count();
      kept += static_cast<double>(e.reduction.kept.size());
    }
    const auto count = static_cast<double>(rows.size());
    out.push_back({a, seconds / count, kept / count});
  }
  return out;
}

inline void WriteBenchCsv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "allowed_error,mean_time_seconds,mean_kept_paths\n";
  for (const auto& r : rows) {
    out << FormatExact(r.allowed_error) << ',' << FormatFixed(r.mean_time_seconds, 6) << ','
        << FormatFixed(r.mean_kept_paths, 2) << '\n';
  }
}

}  // namespace xmtr

#endif  // XMTR_EVALUATION_HPP_
