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

// Multi-target regression random forest.
//
// Each tree is a CART regressor over all targets jointly: a split is scored by
// the summed (optionally variance-normalized) reduction of per-target squared
// error. Routing convention: a value <= threshold goes left, otherwise right.
// Thresholds are midpoints between consecutive distinct training values.
//
// Tree t draws its randomness from DeriveSeed(config.seed, t), so a forest is
// a pure function of (data, config) whatever the number of training threads.

#ifndef XMTR_FOREST_HPP_
#define XMTR_FOREST_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmtr/common.hpp"
#include "xmtr/dataset.hpp"

namespace xmtr {

enum class MaxFeatures { kAll, kSqrt, kFraction };

struct ForestConfig {
  std::size_t n_estimators = 500;
  std::optional<std::size_t> max_depth;  // nullopt: unlimited
  std::size_t min_samples_leaf = 1;
  MaxFeatures max_features = MaxFeatures::kSqrt;
  double max_features_fraction = 1.0;  // used with kFraction
  bool bootstrap = true;
  std::uint64_t seed = 0;
  // Weights each target's error reduction by 1 / (training variance).
  bool normalize_variance = false;

  void Validate() const {
    Require(n_estimators >= 1, ErrorCode::kInvalidArgument, "n_estimators must be >= 1");
    Require(min_samples_leaf >= 1, ErrorCode::kInvalidArgument,
            "min_samples_leaf must be >= 1");
    if (max_features == MaxFeatures::kFraction) {
      Require(max_features_fraction > 0.0 && max_features_fraction <= 1.0,
              ErrorCode::kInvalidArgument, "max_features fraction must be in (0, 1]");
    }
  }

  // Number of non-constant candidate features examined per split.
  std::size_t FeaturesPerSplit(std::size_t num_features) const {
    std::size_t k = num_features;
    switch (max_features) {
      case MaxFeatures::kAll:
        break;
      case MaxFeatures::kSqrt:
        k = static_cast<std::size_t>(std::sqrt(static_cast<double>(num_features)));
        break;
      case MaxFeatures::kFraction:
        k = static_cast<std::size_t>(max_features_fraction *
                                     static_cast<double>(num_features));
        break;
    }
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(num_features, 1));
  }

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

struct TreeNode {
  // Split fields; feature < 0 marks a leaf.
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  // Leaf fields.
  std::vector<double> prediction;
  std::size_t sample_count = 0;

  bool is_leaf() const noexcept { return feature < 0; }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  Tree() = default;

  // Takes ownership of a node array rooted at index 0 and fills the leaf
  // extreme caches. Throws kCorruptFile on a structurally invalid array.
  Tree(std::vector<TreeNode> nodes, std::size_t num_targets)
      : nodes_(std::move(nodes)), num_targets_(num_targets) {
    CheckStructure();
    RefreshLeafExtremes();
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t num_targets() const noexcept { return num_targets_; }
  const std::vector<double>& leaf_min() const noexcept { return leaf_min_; }
  const std::vector<double>& leaf_max() const noexcept { return leaf_max_; }

  // Id of the leaf reached by x.
  std::size_t LeafIndex(std::span<const double> x) const {
    std::size_t id = 0;
    while (!nodes_[id].is_leaf()) {
      const auto& n = nodes_[id];
      id = static_cast<std::size_t>(
          x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return id;
  }

  const std::vector<double>& Predict(std::span<const double> x) const {
    return nodes_[LeafIndex(x)].prediction;
  }

  // Length in edges of the longest root-to-leaf path.
  std::size_t Depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, depth] = stack.back();
      stack.pop_back();
      best = std::max(best, depth);
      if (!nodes_[id].is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(nodes_[id].left), depth + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes_[id].right), depth + 1);
      }
    }
    return best;
  }

  std::size_t LeafCount() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) {
          return n.is_leaf();
        }));
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  void CheckStructure() const {
    Require(!nodes_.empty(), ErrorCode::kCorruptFile, "tree has no nodes");
    // Every node must be reached exactly once from the root.
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<std::size_t> stack{0};
    std::size_t visited = 0;
    while (!stack.empty()) {
      const std::size_t id = stack.back();
      stack.pop_back();
      Require(!seen[id], ErrorCode::kCorruptFile, "tree node reached twice");
      seen[id] = 1;
      ++visited;
      const auto& n = nodes_[id];
      if (n.is_leaf()) {
        Require(n.prediction.size() == num_targets_, ErrorCode::kCorruptFile,
                "leaf prediction has wrong width");
        continue;
      }
      for (auto child : {n.left, n.right}) {
        Require(child > 0 && static_cast<std::size_t>(child) < nodes_.size(),
                ErrorCode::kCorruptFile, "tree child index out of range");
        stack.push_back(static_cast<std::size_t>(child));
      }
    }
    Require(visited == nodes_.size(), ErrorCode::kCorruptFile,
            "tree has unreachable nodes");
  }

  void RefreshLeafExtremes() {
    leaf_min_.assign(num_targets_, std::numeric_limits<double>::infinity());
    leaf_max_.assign(num_targets_, -std::numeric_limits<double>::infinity());
    for (const auto& n : nodes_) {
      if (!n.is_leaf()) continue;
      for (std::size_t t = 0; t < num_targets_; ++t) {
        leaf_min_[t] = std::min(leaf_min_[t], n.prediction[t]);
        leaf_max_[t] = std::max(leaf_max_[t], n.prediction[t]);
      }
    }
  }

  std::vector<TreeNode> nodes_;
  std::size_t num_targets_ = 0;
  std::vector<double> leaf_min_;
  std::vector<double> leaf_max_;
};

struct FeatureBounds {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const FeatureBounds&, const FeatureBounds&) = default;
};

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<Tree> trees, ForestConfig config, std::size_t num_features,
         std::size_t num_targets, std::vector<FeatureBounds> feature_bounds,
         std::vector<std::string> feature_names, std::vector<std::string> target_names)
      : trees_(std::move(trees)),
        config_(config),
        num_features_(num_features),
        num_targets_(num_targets),
        feature_bounds_(std::move(feature_bounds)),
        feature_names_(std::move(feature_names)),
        target_names_(std::move(target_names)) {
    Require(!trees_.empty(), ErrorCode::kCorruptFile, "forest has no trees");
    Require(feature_bounds_.size() == num_features_, ErrorCode::kCorruptFile,
            "feature_bounds width mismatch");
    Require(feature_names_.size() == num_features_ && target_names_.size() == num_targets_,
            ErrorCode::kCorruptFile, "column name count mismatch");
    for (const auto& tree : trees_) {
      Require(tree.num_targets() == num_targets_, ErrorCode::kCorruptFile,
              "tree target count mismatch");
      for (const auto& n : tree.nodes()) {
        Require(n.is_leaf() || static_cast<std::size_t>(n.feature) < num_features_,
                ErrorCode::kCorruptFile, "split feature index out of range");
      }
    }
  }

  const std::vector<Tree>& trees() const noexcept { return trees_; }
  std::size_t size() const noexcept { return trees_.size(); }
  const ForestConfig& config() const noexcept { return config_; }
  std::size_t num_features() const noexcept { return num_features_; }
  std::size_t num_targets() const noexcept { return num_targets_; }
  const std::vector<FeatureBounds>& feature_bounds() const noexcept {
    return feature_bounds_;
  }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<std::string>& target_names() const noexcept { return target_names_; }

  void CheckInstance(std::span<const double> x) const {
    Require(x.size() == num_features_, ErrorCode::kInvalidArgument,
            "instance has " + std::to_string(x.size()) + " values, model expects " +
                std::to_string(num_features_));
    for (double v : x) {
      Require(std::isfinite(v), ErrorCode::kInvalidArgument, "instance value not finite");
    }
  }

  const std::vector<double>& PredictTree(std::size_t tree, std::span<const double> x) const {
    CheckInstance(x);
    return trees_.at(tree).Predict(x);
  }

  // Componentwise mean of the tree predictions, summed in tree order.
  std::vector<double> Predict(std::span<const double> x) const {
    CheckInstance(x);
    std::vector<double> sum(num_targets_, 0.0);
    for (const auto& tree : trees_) {
      const auto& p = tree.Predict(x);
      for (std::size_t t = 0; t < num_targets_; ++t) sum[t] += p[t];
    }
    for (auto& v : sum) v /= static_cast<double>(trees_.size());
    return sum;
  }

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  std::vector<Tree> trees_;
  ForestConfig config_;
  std::size_t num_features_ = 0;
  std::size_t num_targets_ = 0;
  std::vector<FeatureBounds> feature_bounds_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> target_names_;
};

namespace internal {

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestConfig& config,
              const std::vector<double>& target_weights, std::uint64_t seed)
      : data_(data), config_(config), weights_(target_weights), rng_(seed) {}

  Tree Build() {
    const std::size_t n = data_.rows();
    samples_.resize(n);
    if (config_.bootstrap) {
      for (auto& s : samples_) s = rng_.Index(n);
    } else {
      for (std::size_t i = 0; i < n; ++i) samples_[i] = i;
    }
    // Sorting makes the node-local order (and so tie handling) independent
    // of the bootstrap draw order.
    std::sort(samples_.begin(), samples_.end());
    nodes_.clear();
    Grow(0, n, 0);
    return Tree(std::move(nodes_), data_.num_targets());
  }

 private:
  struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
  };

  std::int32_t Grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    Split split;
    if (CanSplit(begin, end, depth)) split = FindSplit(begin, end);
    if (!split.found) {
      MakeLeaf(id, begin, end);
      return id;
    }
    auto mid = std::stable_partition(
        samples_.begin() + static_cast<std::ptrdiff_t>(begin),
        samples_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t s) {
          return data_.features(s, split.feature) <= split.threshold;
        });
    const auto m = static_cast<std::size_t>(mid - samples_.begin());
    const auto left = Grow(begin, m, depth + 1);
    const auto right = Grow(m, end, depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(split.feature);
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  bool CanSplit(std::size_t begin, std::size_t end, std::size_t depth) const {
    if (config_.max_depth && depth >= *config_.max_depth) return false;
    if (end - begin < 2 * config_.min_samples_leaf) return false;
    const auto first = data_.targets.row(samples_[begin]);
    for (std::size_t i = begin + 1; i < end; ++i) {
      const auto row = data_.targets.row(samples_[i]);
      if (!std::equal(first.begin(), first.end(), row.begin())) return true;
    }
    return false;  // constant targets: nothing to reduce
  }

  void MakeLeaf(std::int32_t id, std::size_t begin, std::size_t end) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    const std::size_t m = data_.num_targets();
    node.prediction.assign(m, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = data_.targets.row(samples_[i]);
      for (std::size_t t = 0; t < m; ++t) node.prediction[t] += row[t];
    }
    for (auto& v : node.prediction) v /= static_cast<double>(end - begin);
    node.sample_count = end - begin;
  }

  // Prefers larger gain; on exact ties, the lower feature index and then the
  // lower threshold.
  static bool Better(const Split& a, const Split& b) {
    if (!b.found) return true;
    if (a.gain != b.gain) return a.gain > b.gain;
    if (a.feature != b.feature) return a.feature < b.feature;
    return a.threshold < b.threshold;
  }

  Split FindSplit(std::size_t begin, std::size_t end) {
    const std::size_t d = data_.num_features();
    const std::size_t m = data_.num_targets();
    const std::size_t n = end - begin;
    const std::size_t min_leaf = config_.min_samples_leaf;
    const std::size_t wanted = config_.FeaturesPerSplit(d);

    std::vector<std::size_t> order(d);
    for (std::size_t f = 0; f < d; ++f) order[f] = f;
    rng_.Shuffle(order);

    std::vector<double> total(m, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = data_.targets.row(samples_[i]);
      for (std::size_t t = 0; t < m; ++t) total[t] += row[t];
    }

    Split best;
    std::size_t examined = 0;
    std::vector<std::pair<double, std::size_t>> sorted(n);
    std::vector<double> left_sum(m);
    for (std::size_t f : order) {
      if (examined >= wanted) break;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = samples_[begin + i];
        sorted[i] = {data_.features(s, f), s};
      }
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;  // constant here
      ++examined;

      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto row = data_.targets.row(sorted[i].second);
        for (std::size_t t = 0; t < m; ++t) left_sum[t] += row[t];
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double lo = sorted[i].first;
        const double hi = sorted[i + 1].first;
        if (lo == hi) continue;
        // Weighted squared-error reduction: nl*nr/n * sum_t w_t (mean_l - mean_r)^2.
        double gain = 0.0;
        for (std::size_t t = 0; t < m; ++t) {
          const double diff = left_sum[t] / static_cast<double>(nl) -
                              (total[t] - left_sum[t]) / static_cast<double>(nr);
          gain += weights_[t] * diff * diff;
        }
        gain *= static_cast<double>(nl) * static_cast<double>(nr) / static_cast<double>(n);
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold < hi)) threshold = lo;
        Split candidate{true, f, threshold, gain};
        if (gain > 0.0 && Better(candidate, best)) best = candidate;
      }
    }
    return best;
  }

  const Dataset& data_;
  const ForestConfig& config_;
  const std::vector<double>& weights_;
  Rng rng_;
  std::vector<std::size_t> samples_;
  std::vector<TreeNode> nodes_;
};

}  // namespace internal

// Trains config.n_estimators trees. `threads` only affects wall time.
inline Forest Fit(const Dataset& train, const ForestConfig& config, unsigned threads = 1) {
  config.Validate();
  train.Validate();
  Require(train.rows() >= config.min_samples_leaf, ErrorCode::kDataError,
          "dataset has fewer rows than min_samples_leaf");

  const std::size_t d = train.num_features();
  const std::size_t m = train.num_targets();
  std::vector<double> weights(m, 1.0);
  if (config.normalize_variance) {
    for (std::size_t t = 0; t < m; ++t) {
      double mean = 0.0;
      for (std::size_t r = 0; r < train.rows(); ++r) mean += train.targets(r, t);
      mean /= static_cast<double>(train.rows());
      double var = 0.0;
      for (std::size_t r = 0; r < train.rows(); ++r) {
        const double dv = train.targets(r, t) - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(train.rows());
      weights[t] = var > 0.0 ? 1.0 / var : 1.0;
    }
  }

  std::vector<Tree> trees(config.n_estimators);
  ParallelFor(config.n_estimators, threads, [&](std::size_t i) {
    internal::TreeBuilder builder(train, config, weights, DeriveSeed(config.seed, i));
    trees[i] = builder.Build();
  });

  std::vector<FeatureBounds> bounds(d);
  for (std::size_t f = 0; f < d; ++f) {
    bounds[f] = {std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity()};
    for (std::size_t r = 0; r < train.rows(); ++r) {
      bounds[f].min = std::min(bounds[f].min, train.features(r, f));
      bounds[f].max = std::max(bounds[f].max, train.features(r, f));
    }
  }
  return Forest(std::move(trees), config, d, m, std::move(bounds), train.feature_names,
                train.target_names);
}

struct MaeReport {
  std::vector<double> per_target;
  double mean = 0.0;
};

inline MaeReport EvaluateMae(const Forest& forest, const Dataset& data) {
  Require(data.rows() > 0, ErrorCode::kDataError, "cannot evaluate on an empty dataset");
  Require(data.num_features() == forest.num_features() &&
              data.num_targets() == forest.num_targets(),
          ErrorCode::kDataError, "dataset shape does not match the model");
  MaeReport report;
  report.per_target.assign(forest.num_targets(), 0.0);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto p = forest.Predict(data.features.row(r));
    for (std::size_t t = 0; t < p.size(); ++t) {
      report.per_target[t] += std::abs(p[t] - data.targets(r, t));
    }
  }
  for (auto& v : report.per_target) v /= static_cast<double>(data.rows());
  for (double v : report.per_target) report.mean += v;
  report.mean /= static_cast<double>(report.per_target.size());
  return report;
}

}  // namespace xmtr

#endif  // XMTR_FOREST_HPP_
