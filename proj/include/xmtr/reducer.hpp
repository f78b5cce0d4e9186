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

// Path reduction under an allowed-error budget, and rule composition.
//
// A reduction keeps the trees K whose path features all lie in a growing
// feature set and excludes the rest (E). An excluded tree may predict anything
// between its lowest and highest leaf, so it is accounted for by substituting
// one of those extremes:
//
//   local_error[t] = 1/|T| * sum_i |preds[i][t] - r_preds[i][t]|
//   adjusted[t]    = 1/|T| * (sum_{k in K} p_k[t] + sum_{e in E} r_preds[e][t])
//
// where r_preds[i] = p_i for kept trees and the substituted extreme for
// excluded ones. By default the extreme is chosen per target with one shared
// direction for all excluded trees (all lowest leaves or all highest leaves,
// whichever moves the forest prediction farthest). Then local_error equals
// |adjusted - predict| and bounds the worst-case shift of the forest output
// over every input that keeps the kept trees in their leaves.

#ifndef XMTR_REDUCER_HPP_
#define XMTR_REDUCER_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "xmtr/common.hpp"
#include "xmtr/dataset.hpp"
#include "xmtr/forest.hpp"
#include "xmtr/pathminer.hpp"

namespace xmtr {

enum class Scheme {
  kGlobalMean,  // mean over targets of local_errors <= one shared value
  kPerTarget,   // local_errors[t] <= values[t] for every target
};

struct AllowedError {
  Scheme scheme = Scheme::kGlobalMean;
  std::vector<double> values;  // one value for kGlobalMean, m for kPerTarget

  static AllowedError Global(double value) { return {Scheme::kGlobalMean, {value}}; }
  static AllowedError PerTarget(std::vector<double> values) {
    return {Scheme::kPerTarget, std::move(values)};
  }

  double Mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }

  void Validate(std::size_t num_targets) const {
    for (double v : values) {
      Require(v >= 0.0 && !std::isnan(v), ErrorCode::kInvalidArgument,
              "allowed error must be non-negative");
    }
    if (scheme == Scheme::kGlobalMean) {
      Require(values.size() == 1, ErrorCode::kInvalidArgument,
              "global allowed error takes exactly one value");
    } else {
      Require(values.size() == num_targets, ErrorCode::kInvalidArgument,
              "per-target allowed error needs " + std::to_string(num_targets) +
                  " values, got " + std::to_string(values.size()));
    }
  }

  // True when the per-target errors satisfy this budget.
  bool Accepts(std::span<const double> local_errors) const {
    if (scheme == Scheme::kGlobalMean) {
      double s = 0.0;
      for (double e : local_errors) s += e;
      return s / static_cast<double>(local_errors.size()) <= values[0];
    }
    for (std::size_t t = 0; t < local_errors.size(); ++t) {
      if (local_errors[t] > values[t]) return false;
    }
    return true;
  }
};

enum class ExtremeChoice {
  // One direction per target for all excluded trees (default).
  kSharedDirection,
  // Each excluded tree independently takes the leaf extreme farthest from its
  // own prediction. local_error then no longer equals |adjusted - predict|.
  kPerTree,
};

// r_preds[i][t]: the value tree i contributes under the reduction described
// by `kept` (a mask over trees).
inline std::vector<std::vector<double>> SubstitutedPredictions(
    std::span<const Path> paths, const std::vector<bool>& kept, const Forest& forest,
    ExtremeChoice choice = ExtremeChoice::kSharedDirection) {
  const std::size_t m = forest.num_targets();
  std::vector<std::vector<double>> r(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) r[i] = paths[i].leaf_prediction;

  for (std::size_t t = 0; t < m; ++t) {
    bool use_max = false;
    if (choice == ExtremeChoice::kSharedDirection) {
      double down = 0.0, up = 0.0;
      for (std::size_t i = 0; i < paths.size(); ++i) {
        if (kept[i]) continue;
        const auto& tree = forest.trees()[paths[i].tree_index];
        down += paths[i].leaf_prediction[t] - tree.leaf_min()[t];
        up += tree.leaf_max()[t] - paths[i].leaf_prediction[t];
      }
      use_max = up > down;
    }
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (kept[i]) continue;
      const auto& tree = forest.trees()[paths[i].tree_index];
      const double p = paths[i].leaf_prediction[t];
      const double lo = tree.leaf_min()[t];
      const double hi = tree.leaf_max()[t];
      if (choice == ExtremeChoice::kPerTree) use_max = hi - p > p - lo;
      r[i][t] = use_max ? hi : lo;
    }
  }
  return r;
}

namespace internal {

inline std::vector<bool> KeptMask(std::size_t num_paths, std::span<const std::size_t> kept) {
  Require(!kept.empty(), ErrorCode::kInvalidArgument, "kept set must not be empty");
  std::vector<bool> mask(num_paths, false);
  for (auto k : kept) {
    Require(k < num_paths, ErrorCode::kInvalidArgument, "kept index out of range");
    mask[k] = true;
  }
  return mask;
}

inline std::vector<double> LocalErrorFromMask(std::span<const Path> paths,
                                              const std::vector<bool>& kept,
                                              const Forest& forest, ExtremeChoice choice) {
  const auto r = SubstitutedPredictions(paths, kept, forest, choice);
  std::vector<double> err(forest.num_targets(), 0.0);
  for (std::size_t t = 0; t < err.size(); ++t) {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      err[t] += std::abs(paths[i].leaf_prediction[t] - r[i][t]);
    }
    err[t] /= static_cast<double>(paths.size());
  }
  return err;
}

inline std::vector<double> AdjustedFromMask(std::span<const Path> paths,
                                            const std::vector<bool>& kept,
                                            const Forest& forest, ExtremeChoice choice) {
  const auto r = SubstitutedPredictions(paths, kept, forest, choice);
  std::vector<double> out(forest.num_targets(), 0.0);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += r[i][t];
  }
  for (auto& v : out) v /= static_cast<double>(paths.size());
  return out;
}

}  // namespace internal

// mae(preds, r_preds) per target. `kept` lists tree indices into `paths`.
inline std::vector<double> LocalError(std::span<const Path> paths,
                                      std::span<const std::size_t> kept, const Forest& forest,
                                      ExtremeChoice choice = ExtremeChoice::kSharedDirection) {
  return internal::LocalErrorFromMask(paths, internal::KeptMask(paths.size(), kept), forest,
                                      choice);
}

// p'(x): kept trees contribute their prediction, excluded trees their
// substituted extreme.
inline std::vector<double> AdjustedPrediction(
    std::span<const Path> paths, std::span<const std::size_t> kept, const Forest& forest,
    ExtremeChoice choice = ExtremeChoice::kSharedDirection) {
  return internal::AdjustedFromMask(paths, internal::KeptMask(paths.size(), kept), forest,
                                    choice);
}

struct ReductionResult {
  std::vector<std::size_t> kept;      // K, ascending tree indices
  std::vector<std::size_t> excluded;  // E, ascending tree indices
  std::set<std::size_t> feature_set;
  std::vector<double> local_errors;
  std::vector<double> adjusted_prediction;
  std::vector<double> original_prediction;
  std::size_t steps = 0;  // features added before the budget test passed
};

struct ReduceOptions {
  RankOrder order = RankOrder::kAscending;
  ExtremeChoice extreme = ExtremeChoice::kSharedDirection;
};

// Grows a feature set along the ranking, one feature per step. After each
// step K is every path whose features are all in the set; the loop stops at
// the first non-empty K whose local errors pass the budget. Adding every
// feature makes K all paths with zero error, so the loop always ends.
inline ReductionResult Reduce(std::span<const Path> paths, const AssociationModel& assoc,
                              const AllowedError& allowed, Scheme scheme,
                              const Forest& forest, const ReduceOptions& options = {}) {
  Require(!paths.empty(), ErrorCode::kInvalidArgument, "no paths to reduce");
  Require(allowed.scheme == scheme, ErrorCode::kInvalidArgument,
          "allowed error does not match the comparison scheme");
  allowed.Validate(forest.num_targets());

  const std::size_t n = paths.size();
  std::vector<std::size_t> missing(n);
  std::map<std::size_t, std::vector<std::size_t>> paths_using;
  for (std::size_t i = 0; i < n; ++i) {
    missing[i] = paths[i].conditions.size();
    for (const auto& [f, _] : paths[i].conditions) paths_using[f].push_back(i);
  }

  auto ranking = RankFeatures(assoc, options.order);
  // Any path feature the model did not score still has to be reachable.
  for (const auto& [f, _] : paths_using) {
    if (std::find(ranking.begin(), ranking.end(), f) == ranking.end()) ranking.push_back(f);
  }

  ReductionResult result;
  std::vector<bool> kept(n, false);
  std::size_t kept_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (missing[i] == 0) {
      kept[i] = true;
      ++kept_count;
    }
  }

  std::vector<double> errors;
  bool passed = false;
  std::size_t step = 0;
  while (true) {
    if (kept_count > 0) {
      errors = internal::LocalErrorFromMask(paths, kept, forest, options.extreme);
      if (allowed.Accepts(errors)) {
        passed = true;
        break;
      }
    }
    if (step == ranking.size()) break;
    const std::size_t f = ranking[step++];
    result.feature_set.insert(f);
    for (auto i : paths_using[f]) {
      if (--missing[i] == 0) {
        kept[i] = true;
        ++kept_count;
      }
    }
  }
  if (!passed) {
    // Unreachable for non-negative budgets; keeps the contract regardless.
    std::fill(kept.begin(), kept.end(), true);
    for (const auto& [f, _] : paths_using) result.feature_set.insert(f);
    errors = internal::LocalErrorFromMask(paths, kept, forest, options.extreme);
  }

  result.steps = step;
  for (std::size_t i = 0; i < n; ++i) {
    (kept[i] ? result.kept : result.excluded).push_back(paths[i].tree_index);
  }
  result.local_errors = std::move(errors);
  result.adjusted_prediction = internal::AdjustedFromMask(paths, kept, forest, options.extreme);
  result.original_prediction.assign(forest.num_targets(), 0.0);
  for (const auto& p : paths) {
    for (std::size_t t = 0; t < forest.num_targets(); ++t) {
      result.original_prediction[t] += p.leaf_prediction[t];
    }
  }
  for (auto& v : result.original_prediction) v /= static_cast<double>(n);
  return result;
}

// Budget derived from the model's own k-fold cross-validated MAE, per target.
// Every row is predicted once by the model trained without its fold.
inline AllowedError DefaultAllowedError(const Dataset& data, const ForestConfig& config,
                                        std::size_t k, unsigned threads = 1) {
  data.Validate();
  Require(data.rows() >= 2 * config.min_samples_leaf, ErrorCode::kDataError,
          "dataset too small for cross-validation");
  const auto plan = KFold(data.rows(), k, config.seed);
  std::vector<double> mae(data.num_targets(), 0.0);
  for (std::size_t fold = 0; fold < k; ++fold) {
    const auto train_idx = plan.TrainIndices(fold);
    Require(train_idx.size() >= config.min_samples_leaf, ErrorCode::kDataError,
            "degenerate fold");
    const auto forest = Fit(data.Subset(train_idx), config, threads);
    for (auto r : plan.TestIndices(fold)) {
      const auto p = forest.Predict(data.features.row(r));
      for (std::size_t t = 0; t < mae.size(); ++t) {
        mae[t] += std::abs(p[t] - data.targets(r, t));
      }
    }
  }
  for (auto& v : mae) v /= static_cast<double>(data.rows());
  return AllowedError::PerTarget(std::move(mae));
}

struct RuleTerm {
  std::size_t feature = 0;
  double lo = 0.0;
  double hi = 0.0;
  // lo is a split threshold, so lo itself routes the other way.
  bool lower_open = false;
};

struct RuleOutcome {
  std::size_t target = 0;
  double value = 0.0;
  double bound = 0.0;
};

struct Rule {
  std::vector<RuleTerm> antecedent;  // ascending feature index
  std::vector<RuleOutcome> consequent;
  std::size_t kept_path_count = 0;

  // Closed-interval test, as used for coverage.
  bool Covers(std::span<const double> x) const {
    return std::all_of(antecedent.begin(), antecedent.end(), [&](const RuleTerm& term) {
      return term.lo <= x[term.feature] && x[term.feature] <= term.hi;
    });
  }
};

// Intersects the kept paths' ranges feature by feature. Sides no kept path
// bounds are clamped to the training range (widened to contain x).
inline Rule ComposeRule(const ReductionResult& reduction, std::span<const Path> paths,
                        std::span<const double> x, const Forest& forest) {
  forest.CheckInstance(x);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::map<std::size_t, Interval> ranges;
  for (auto k : reduction.kept) {
    const auto it = std::find_if(paths.begin(), paths.end(),
                                 [k](const Path& p) { return p.tree_index == k; });
    Require(it != paths.end(), ErrorCode::kInternal, "kept tree has no path");
    for (const auto& [f, range] : it->conditions) {
      auto [slot, inserted] = ranges.try_emplace(f, Interval{-kInf, kInf});
      slot->second.lower = std::max(slot->second.lower, range.lower);
      slot->second.upper = std::min(slot->second.upper, range.upper);
    }
  }

  Rule rule;
  rule.kept_path_count = reduction.kept.size();
  for (const auto& [f, range] : ranges) {
    const auto& bounds = forest.feature_bounds()[f];
    RuleTerm term;
    term.feature = f;
    term.lower_open = std::isfinite(range.lower);
    term.lo = term.lower_open ? range.lower : std::min(bounds.min, x[f]);
    term.hi = std::isfinite(range.upper) ? range.upper : std::max(bounds.max, x[f]);
    const bool inside = term.lower_open ? term.lo < x[f] : term.lo <= x[f];
    Require(inside && x[f] <= term.hi, ErrorCode::kInternal,
            "instance falls outside the intersection of its own kept paths");
    rule.antecedent.push_back(term);
  }
  for (std::size_t t = 0; t < forest.num_targets(); ++t) {
    rule.consequent.push_back(
        {t, reduction.original_prediction[t], reduction.local_errors[t]});
  }
  return rule;
}

namespace internal {

// Rounds to `precision` decimals and drops trailing zeros, keeping one.
inline std::string FormatBound(double v, int precision) {
  std::string s = FormatFixed(v, precision);
  const auto dot = s.find('.');
  if (dot == std::string::npos) return s;
  const auto last = s.find_last_not_of('0');
  s.erase(std::max(last, dot + 1) + 1);
  return s;
}

// Smallest value on the display grid strictly above v.
inline double NextGridValue(double v, int precision) {
  const double scale = std::pow(10.0, precision);
  double k = std::floor(v * scale);
  double candidate = k / scale;
  double parsed = 0.0;
  while (true) {
    ParseDouble(FormatFixed(candidate, precision), parsed);
    if (parsed > v) return candidate;
    const double next = (k + 1.0) / scale;
    if (!(next > candidate)) return std::nextafter(v, std::numeric_limits<double>::infinity());
    k += 1.0;
    candidate = next;
  }
}

}  // namespace internal

// "if lo <= name <= hi & ... then target: value±bound, ..."
// Open lower bounds are shown as the next value on the display grid.
inline std::string RenderRule(const Rule& rule, const std::vector<std::string>& feature_names,
                              const std::vector<std::string>& target_names, int precision) {
  std::ostringstream os;
  for (std::size_t i = 0; i < rule.antecedent.size(); ++i) {
    const auto& term = rule.antecedent[i];
    const double lo =
        term.lower_open ? internal::NextGridValue(term.lo, precision) : term.lo;
    os << (i == 0 ? "if " : " & ") << internal::FormatBound(lo, precision)
       << " <= " << feature_names.at(term.feature)
       << " <= " << internal::FormatBound(term.hi, precision);
  }
  os << (rule.antecedent.empty() ? "then " : " then ");
  for (std::size_t i = 0; i < rule.consequent.size(); ++i) {
    const auto& c = rule.consequent[i];
    if (i > 0) os << ", ";
    os << target_names.at(c.target) << ": " << FormatFixed(c.value, precision)
       << "±" << FormatFixed(c.bound, precision);
  }
  return os.str();
}

struct ConclusivenessReport {
  std::vector<double> max_deviation;             // per target, vs predict(x)
  std::vector<std::size_t> violations_per_target;
  std::size_t envelope_violations = 0;           // trials with any violation
  std::size_t kept_leaf_changes = 0;             // kept trees that left their leaf
};

// Per-target interval the forest output is confined to while the kept trees
// stay in their leaves.
struct Envelope {
  std::vector<double> lower;
  std::vector<double> upper;
};

inline Envelope ReductionEnvelope(const ReductionResult& reduction, const Forest& forest,
                                  std::span<const double> x) {
  const std::size_t m = forest.num_targets();
  std::vector<bool> kept(forest.size(), false);
  for (auto k : reduction.kept) kept[k] = true;
  Envelope env{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  // Same summation order as Forest::Predict so the bound holds exactly.
  for (std::size_t i = 0; i < forest.size(); ++i) {
    const auto& tree = forest.trees()[i];
    const auto& p = tree.Predict(x);
    for (std::size_t t = 0; t < m; ++t) {
      env.lower[t] += kept[i] ? p[t] : tree.leaf_min()[t];
      env.upper[t] += kept[i] ? p[t] : tree.leaf_max()[t];
    }
  }
  for (std::size_t t = 0; t < m; ++t) {
    env.lower[t] /= static_cast<double>(forest.size());
    env.upper[t] /= static_cast<double>(forest.size());
  }
  return env;
}

// Draws a point satisfying the rule: antecedent features inside their term
// (strictly above open lower bounds), all others anywhere in the training
// range.
inline std::vector<double> SampleCoveredPoint(const Rule& rule, const Forest& forest,
                                              Rng& rng) {
  std::vector<double> x(forest.num_features());
  for (std::size_t f = 0; f < x.size(); ++f) {
    x[f] = rng.Uniform(forest.feature_bounds()[f].min, forest.feature_bounds()[f].max);
  }
  for (const auto& term : rule.antecedent) {
    double v = rng.Uniform(term.lo, term.hi);
    if (term.lower_open && !(v > term.lo)) v = term.hi;
    x[term.feature] = v;
  }
  return x;
}

inline ConclusivenessReport CheckConclusive(const Rule& rule, const ReductionResult& reduction,
                                            const Forest& forest, std::span<const double> x,
                                            std::size_t trials, std::uint64_t seed) {
  Require(trials >= 1, ErrorCode::kInvalidArgument, "trials must be >= 1");
  forest.CheckInstance(x);
  const std::size_t m = forest.num_targets();
  const auto base = forest.Predict(x);
  const auto env = ReductionEnvelope(reduction, forest, x);
  std::vector<std::size_t> base_leaf(forest.size());
  for (auto k : reduction.kept) base_leaf[k] = forest.trees()[k].LeafIndex(x);

  ConclusivenessReport report;
  report.max_deviation.assign(m, 0.0);
  report.violations_per_target.assign(m, 0);
  Rng rng(DeriveSeed(seed, 0x636f6e63ULL));
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const auto probe = SampleCoveredPoint(rule, forest, rng);
    const auto p = forest.Predict(probe);
    bool violated = false;
    for (std::size_t t = 0; t < m; ++t) {
      report.max_deviation[t] = std::max(report.max_deviation[t], std::abs(p[t] - base[t]));
      if (p[t] < env.lower[t] || p[t] > env.upper[t]) {
        ++report.violations_per_target[t];
        violated = true;
      }
    }
    if (violated) ++report.envelope_violations;
    for (auto k : reduction.kept) {
      if (forest.trees()[k].LeafIndex(probe) != base_leaf[k]) ++report.kept_leaf_changes;
    }
  }
  return report;
}

// Everything computed for one instance before any budget is applied, so
// several budgets can be tried without re-extracting or re-mining.
struct PreparedInstance {
  std::vector<double> x;
  std::vector<Path> paths;
  AssociationModel association;
};

inline PreparedInstance Prepare(const Forest& forest, std::span<const double> x,
                                double min_support = kDefaultMinSupport) {
  PreparedInstance prepared;
  prepared.x.assign(x.begin(), x.end());
  prepared.paths = ExtractPaths(forest, x);
  prepared.association = Mine(prepared.paths, min_support);
  return prepared;
}

struct ExplainOptions {
  AllowedError allowed = AllowedError::Global(0.0);
  double min_support = kDefaultMinSupport;
  ReduceOptions reduce;
};

struct Explanation {
  ReductionResult reduction;
  Rule rule;
};

inline Explanation ExplainPrepared(const PreparedInstance& prepared, const Forest& forest,
                                   const AllowedError& allowed,
                                   const ReduceOptions& options = {}) {
  Explanation out;
  out.reduction = Reduce(prepared.paths, prepared.association, allowed, allowed.scheme,
                         forest, options);
  out.rule = ComposeRule(out.reduction, prepared.paths, prepared.x, forest);
  return out;
}

// Full pipeline: path extraction, mining, reduction, rule composition.
inline Explanation Explain(const Forest& forest, std::span<const double> x,
                           const ExplainOptions& options) {
  return ExplainPrepared(Prepare(forest, x, options.min_support), forest, options.allowed,
                         options.reduce);
}

}  // namespace xmtr

#endif  // XMTR_REDUCER_HPP_
