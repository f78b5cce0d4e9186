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

// Decision-path extraction and pairwise association mining over the
// feature sets of those paths.

#ifndef XMTR_PATHMINER_HPP_
#define XMTR_PATHMINER_HPP_

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "xmtr/common.hpp"
#include "xmtr/forest.hpp"

namespace xmtr {

// Half-open range (lower, upper] matching the <=-goes-left routing.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool Contains(double v) const { return lower < v && v <= upper; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct Path {
  std::size_t tree_index = 0;
  std::size_t leaf_id = 0;
  std::map<std::size_t, Interval> conditions;  // feature -> range
  std::vector<double> leaf_prediction;

  std::set<std::size_t> FeatureSet() const {
    std::set<std::size_t> out;
    for (const auto& [f, _] : conditions) out.insert(f);
    return out;
  }
};

// Traces x through one tree, tightening each tested feature's range.
inline Path ExtractPath(const Tree& tree, std::size_t tree_index, std::span<const double> x) {
  Path path;
  path.tree_index = tree_index;
  const auto& nodes = tree.nodes();
  std::size_t id = 0;
  while (!nodes[id].is_leaf()) {
    const auto& n = nodes[id];
    const auto f = static_cast<std::size_t>(n.feature);
    auto& range = path.conditions[f];
    if (x[f] <= n.threshold) {
      range.upper = std::min(range.upper, n.threshold);
      id = static_cast<std::size_t>(n.left);
    } else {
      range.lower = std::max(range.lower, n.threshold);
      id = static_cast<std::size_t>(n.right);
    }
  }
  path.leaf_id = id;
  path.leaf_prediction = nodes[id].prediction;
  return path;
}

// One path per tree, indexed by tree.
inline std::vector<Path> ExtractPaths(const Forest& forest, std::span<const double> x) {
  forest.CheckInstance(x);
  std::vector<Path> paths;
  paths.reserve(forest.size());
  for (std::size_t i = 0; i < forest.size(); ++i) {
    paths.push_back(ExtractPath(forest.trees()[i], i, x));
  }
  return paths;
}

struct AssociationRule {
  std::size_t antecedent = 0;
  std::size_t consequent = 0;
  double confidence = 0.0;
};

// Supports of itemsets with at most two features. Keys are sorted feature
// lists: {f} for singletons, {f, g} with f < g for pairs.
struct AssociationModel {
  std::map<std::vector<std::size_t>, double> itemset_supports;
  std::vector<AssociationRule> rules;
  std::map<std::size_t, double> feature_scores;

  double Support(std::vector<std::size_t> items) const {
    std::sort(items.begin(), items.end());
    auto it = itemset_supports.find(items);
    return it == itemset_supports.end() ? 0.0 : it->second;
  }
};

inline constexpr double kDefaultMinSupport = 0.1;

// Transactions are the paths' feature sets. All singleton supports are kept;
// pairs are kept when their support reaches min_support, and each kept pair
// yields both directed rules. A feature's score is the mean confidence of the
// rules it is the antecedent of, or its own support when it has none.
inline AssociationModel Mine(std::span<const Path> paths,
                             double min_support = kDefaultMinSupport) {
  Require(min_support > 0.0 && min_support <= 1.0, ErrorCode::kInvalidArgument,
          "min_support must be in (0, 1]");
  AssociationModel model;
  if (paths.empty()) return model;

  std::vector<std::vector<std::size_t>> transactions;
  transactions.reserve(paths.size());
  std::map<std::size_t, std::size_t> single;
  for (const auto& p : paths) {
    std::vector<std::size_t> items;
    for (const auto& [f, _] : p.conditions) {
      items.push_back(f);
      ++single[f];
    }
    transactions.push_back(std::move(items));
  }
  const auto total = static_cast<double>(paths.size());
  for (const auto& [f, c] : single) {
    model.itemset_supports[{f}] = static_cast<double>(c) / total;
  }

  // Pairs can only be frequent when both members are.
  std::vector<std::size_t> frequent;
  for (const auto& [f, c] : single) {
    if (static_cast<double>(c) / total >= min_support) frequent.push_back(f);
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pair_counts;
  for (const auto& items : transactions) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!std::binary_search(frequent.begin(), frequent.end(), items[i])) continue;
      for (std::size_t j = i + 1; j < items.size(); ++j) {
        if (!std::binary_search(frequent.begin(), frequent.end(), items[j])) continue;
        ++pair_counts[{items[i], items[j]}];
      }
    }
  }

  std::map<std::size_t, std::pair<double, std::size_t>> conf_acc;
  for (const auto& [pair, c] : pair_counts) {
    const double support = static_cast<double>(c) / total;
    if (support < min_support) continue;
    const auto [f, g] = pair;
    model.itemset_supports[{f, g}] = support;
    const double cf = static_cast<double>(c) / static_cast<double>(single[f]);
    const double cg = static_cast<double>(c) / static_cast<double>(single[g]);
    model.rules.push_back({f, g, cf});
    model.rules.push_back({g, f, cg});
    conf_acc[f].first += cf;
    ++conf_acc[f].second;
    conf_acc[g].first += cg;
    ++conf_acc[g].second;
  }
  for (const auto& [f, c] : single) {
    auto it = conf_acc.find(f);
    model.feature_scores[f] =
        it == conf_acc.end() ? static_cast<double>(c) / total
                             : it->second.first / static_cast<double>(it->second.second);
  }
  return model;
}

enum class RankOrder { kAscending, kDescending };

// Features sorted by score; ties go to the lower feature index.
inline std::vector<std::size_t> RankFeatures(const AssociationModel& model,
                                             RankOrder order = RankOrder::kAscending) {
  std::vector<std::pair<double, std::size_t>> items;
  for (const auto& [f, s] : model.feature_scores) items.emplace_back(s, f);
  std::stable_sort(items.begin(), items.end(), [order](const auto& a, const auto& b) {
    if (a.first != b.first) {
      return order == RankOrder::kAscending ? a.first < b.first : a.first > b.first;
    }
    return a.second < b.second;
  });
  std::vector<std::size_t> out;
  out.reserve(items.size());
  for (const auto& [_, f] : items) out.push_back(f);
  return out;
}

}  // namespace xmtr

#endif  // XMTR_PATHMINER_HPP_
