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

#include <algorithm>
#include <cmath>
#include <regex>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "xmtr/xmtr.hpp"

namespace xmtr {
namespace {

using testing::BuildForest;
using testing::Leaf;
using testing::Sketch;
using testing::Split;

// tree0 predicts 2 everywhere; tree1 predicts 4 at x0 = 5 with leaves {1, 4, 5}.
Forest TwoTreeForest() {
  return BuildForest({Leaf({2}), Split(0, 3.0, Leaf({1}), Split(0, 6.0, Leaf({4}), Leaf({5})))},
                     1, 1);
}

TEST(LocalErrorTest, AllKeptIsZero) {
  const auto forest = TwoTreeForest();
  const auto paths = ExtractPaths(forest, std::vector<double>{5.0});
  const std::vector<std::size_t> all{0, 1};
  EXPECT_EQ(LocalError(paths, all, forest), (std::vector<double>{0.0}));
  EXPECT_EQ(AdjustedPrediction(paths, all, forest), forest.Predict(std::vector<double>{5.0}));
}

TEST(LocalErrorTest, HandComputedTwoTrees) {
  const auto forest = TwoTreeForest();
  const auto paths = ExtractPaths(forest, std::vector<double>{5.0});
  const std::vector<std::size_t> kept{0};
  for (auto choice : {ExtremeChoice::kSharedDirection, ExtremeChoice::kPerTree}) {
    EXPECT_DOUBLE_EQ(LocalError(paths, kept, forest, choice)[0], 1.5);
    EXPECT_DOUBLE_EQ(AdjustedPrediction(paths, kept, forest, choice)[0], 1.5);
  }
}

TEST(LocalErrorTest, EmptyKeptRejected) {
  const auto forest = TwoTreeForest();
  const auto paths = ExtractPaths(forest, std::vector<double>{5.0});
  EXPECT_THROW(LocalError(paths, std::vector<std::size_t>{}, forest), Error);
  EXPECT_THROW(AdjustedPrediction(paths, std::vector<std::size_t>{}, forest), Error);
}

// Direct formula evaluation, shared direction: every excluded tree takes its
// minimum or every one its maximum, whichever moves the total farther.
std::vector<double> SharedOracle(const std::vector<Sketch>& sketches, const std::vector<bool>& kept,
                                 std::span<const double> x, std::size_t m) {
  std::vector<double> out(m);
  for (std::size_t t = 0; t < m; ++t) {
    double down = 0, up = 0;
    for (std::size_t i = 0; i < sketches.size(); ++i) {
      if (kept[i]) continue;
      std::vector<std::vector<double>> leaves;
      testing::CollectLeaves(sketches[i], leaves);
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& l : leaves) {
        lo = std::min(lo, l[t]);
        hi = std::max(hi, l[t]);
      }
      const double p = testing::Trace(sketches[i], x)[t];
      down += p - lo;
      up += hi - p;
    }
    out[t] = std::max(down, up) / static_cast<double>(sketches.size());
  }
  return out;
}

// Per-tree choice: sum of each excluded tree's larger distance.
std::vector<double> PerTreeOracle(const std::vector<Sketch>& sketches, const std::vector<bool>& kept,
                                  std::span<const double> x, std::size_t m) {
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < sketches.size(); ++i) {
    if (kept[i]) continue;
    std::vector<std::vector<double>> leaves;
    testing::CollectLeaves(sketches[i], leaves);
    for (std::size_t t = 0; t < m; ++t) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& l : leaves) {
        lo = std::min(lo, l[t]);
        hi = std::max(hi, l[t]);
      }
      const double p = testing::Trace(sketches[i], x)[t];
      out[t] += std::max(p - lo, hi - p);
    }
  }
  for (auto& v : out) v /= static_cast<double>(sketches.size());
  return out;
}

TEST(LocalErrorTest, ThreeTreesTwoTargetsMatchesFormula) {
  const std::vector<Sketch> sketches = {
      Split(0, 3.0, Leaf({1, 10}), Leaf({2, 20})),
      Split(1, 4.0, Split(0, 1.0, Leaf({3, 30}), Leaf({4, -40})), Leaf({8, 50})),
      Split(0, 6.0, Leaf({6, 60}), Leaf({-6, 0}))};
  const auto forest = BuildForest(sketches, 2, 2);
  const std::vector<double> x{2.0, 1.0};
  const auto paths = ExtractPaths(forest, x);
  for (std::size_t excluded = 0; excluded < 3; ++excluded) {
    std::vector<std::size_t> kept;
    std::vector<bool> mask(3, true);
    mask[excluded] = false;
    for (std::size_t i = 0; i < 3; ++i) {
      if (i != excluded) kept.push_back(i);
    }
    const auto shared = LocalError(paths, kept, forest);
    const auto per_tree = LocalError(paths, kept, forest, ExtremeChoice::kPerTree);
    const auto want_shared = SharedOracle(sketches, mask, x, 2);
    const auto want_tree = PerTreeOracle(sketches, mask, x, 2);
    for (int t = 0; t < 2; ++t) {
      EXPECT_NEAR(shared[t], want_shared[t], 1e-12);
      EXPECT_NEAR(per_tree[t], want_tree[t], 1e-12);
    }
  }
}

TEST(LocalErrorTest, RandomForestsMatchFormulaAndIdentity) {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t d = 3, m = 1 + rng.Index(3), trees = 2 + rng.Index(12);
    const auto sketches = testing::RandomSketches(rng, trees, d, m, 4);
    const auto forest = BuildForest(sketches, d, m, 0.0, 1.0);
    std::vector<double> x(d);
    for (auto& v : x) v = rng.Uniform();
    const auto paths = ExtractPaths(forest, x);
    std::vector<bool> mask(trees);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < trees; ++i) {
      mask[i] = i == 0 || rng.Uniform() < 0.5;
      if (mask[i]) kept.push_back(i);
    }
    const auto err = LocalError(paths, kept, forest);
    const auto adjusted = AdjustedPrediction(paths, kept, forest);
    const auto base = forest.Predict(x);
    const auto want = SharedOracle(sketches, mask, x, m);
    const auto want_tree = PerTreeOracle(sketches, mask, x, m);
    const auto per_tree = LocalError(paths, kept, forest, ExtremeChoice::kPerTree);
    for (std::size_t t = 0; t < m; ++t) {
      EXPECT_NEAR(err[t], want[t], 1e-12);
      EXPECT_NEAR(std::abs(adjusted[t] - base[t]), err[t], 1e-12);
      EXPECT_NEAR(per_tree[t], want_tree[t], 1e-12);
      EXPECT_GE(per_tree[t], err[t] - 1e-12);
    }
  }
}

TEST(AllowedErrorTest, ValidationAndAcceptance) {
  EXPECT_THROW(AllowedError::Global(-1.0).Validate(2), Error);
  EXPECT_THROW(AllowedError::PerTarget({1.0}).Validate(2), Error);
  EXPECT_NO_THROW(AllowedError::PerTarget({1.0, 0.0}).Validate(2));
  const std::vector<double> errors{0.2, 0.4};
  EXPECT_TRUE(AllowedError::Global(0.31).Accepts(errors));
  EXPECT_FALSE(AllowedError::Global(0.29).Accepts(errors));
  EXPECT_TRUE(AllowedError::Global(0.0).Accepts(std::vector<double>{0.0, 0.0}));
  EXPECT_TRUE(AllowedError::PerTarget({0.2, 0.4}).Accepts(errors));
  EXPECT_FALSE(AllowedError::PerTarget({0.5, 0.3}).Accepts(errors));
}

struct Fixture {
  Forest forest;
  std::vector<std::vector<double>> instances;
};

Fixture RandomFixture(std::uint64_t seed, std::size_t trees, std::size_t d, std::size_t m) {
  Rng rng(seed);
  auto forest = BuildForest(testing::RandomSketches(rng, trees, d, m, 5), d, m, 0.0, 1.0);
  Fixture f{std::move(forest), {}};
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x(d);
    for (auto& v : x) v = rng.Uniform();
    f.instances.push_back(x);
  }
  return f;
}

void CheckReductionInvariants(const ReductionResult& r, std::span<const Path> paths,
                              const AllowedError& allowed) {
  std::vector<std::size_t> all(r.kept);
  all.insert(all.end(), r.excluded.begin(), r.excluded.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), paths.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_FALSE(r.kept.empty());
  for (auto k : r.kept) {
    for (auto f : paths[k].FeatureSet()) EXPECT_TRUE(r.feature_set.count(f));
  }
  // K is exactly the set of paths covered by the feature set.
  for (auto e : r.excluded) {
    const auto fs = paths[e].FeatureSet();
    EXPECT_FALSE(std::includes(r.feature_set.begin(), r.feature_set.end(), fs.begin(), fs.end()));
  }
  EXPECT_TRUE(allowed.Accepts(r.local_errors));
}

TEST(ReduceTest, ZeroBudgetKeepsEverything) {
  const auto fx = RandomFixture(1, 25, 4, 2);
  for (const auto& x : fx.instances) {
    const auto paths = ExtractPaths(fx.forest, x);
    const auto allowed = AllowedError::Global(0.0);
    const auto r = Reduce(paths, Mine(paths), allowed, Scheme::kGlobalMean, fx.forest);
    CheckReductionInvariants(r, paths, allowed);
    std::set<std::size_t> used;
    for (const auto& p : paths) {
      const auto fs = p.FeatureSet();
      used.insert(fs.begin(), fs.end());
    }
    // Leaf extremes of random trees differ from any one leaf, so nothing
    // short of every tree reaches zero error.
    EXPECT_EQ(r.kept.size(), paths.size());
    EXPECT_EQ(r.feature_set, used);
    for (double e : r.local_errors) EXPECT_EQ(e, 0.0);
    EXPECT_EQ(r.adjusted_prediction, fx.forest.Predict(x));
  }
}

TEST(ReduceTest, HugeBudgetStopsAtFirstNonEmptyK) {
  const auto fx = RandomFixture(2, 25, 4, 2);
  for (const auto& x : fx.instances) {
    const auto paths = ExtractPaths(fx.forest, x);
    const auto assoc = Mine(paths);
    const auto allowed = AllowedError::Global(1e18);
    const auto r = Reduce(paths, assoc, allowed, Scheme::kGlobalMean, fx.forest);
    CheckReductionInvariants(r, paths, allowed);
    // Replay the ranking: the first prefix covering any path.
    const auto ranking = RankFeatures(assoc);
    std::set<std::size_t> prefix;
    std::size_t steps = 0;
    auto covers_any = [&] {
      return std::any_of(paths.begin(), paths.end(), [&](const Path& p) {
        const auto fs = p.FeatureSet();
        return std::includes(prefix.begin(), prefix.end(), fs.begin(), fs.end());
      });
    };
    while (!covers_any()) prefix.insert(ranking[steps++]);
    EXPECT_EQ(r.feature_set, prefix);
    EXPECT_EQ(r.steps, steps);
  }
}

TEST(ReduceTest, SingleLeafTreesNeedNoFeatures) {
  const auto forest = BuildForest({Leaf({1}), Split(0, 5.0, Leaf({0}), Leaf({9}))}, 1, 1);
  const auto paths = ExtractPaths(forest, std::vector<double>{2.0});
  const auto r = Reduce(paths, Mine(paths), AllowedError::Global(100.0), Scheme::kGlobalMean, forest);
  EXPECT_EQ(r.kept, (std::vector<std::size_t>{0}));
  EXPECT_TRUE(r.feature_set.empty());
  EXPECT_EQ(r.steps, 0u);
}

TEST(ReduceTest, SchemeMismatchRejected) {
  const auto fx = RandomFixture(3, 5, 2, 2);
  const auto paths = ExtractPaths(fx.forest, fx.instances[0]);
  const auto assoc = Mine(paths);
  EXPECT_THROW(Reduce(paths, assoc, AllowedError::Global(1.0), Scheme::kPerTarget, fx.forest),
               Error);
  EXPECT_THROW(Reduce(paths, assoc, AllowedError::PerTarget({1.0}), Scheme::kPerTarget, fx.forest),
               Error);
}

TEST(ReduceTest, PerTargetSchemeHonoursEachTarget) {
  const auto fx = RandomFixture(4, 30, 4, 3);
  for (const auto& x : fx.instances) {
    const auto paths = ExtractPaths(fx.forest, x);
    const auto allowed = AllowedError::PerTarget({0.3, 0.05, 1.0});
    const auto r = Reduce(paths, Mine(paths), allowed, Scheme::kPerTarget, fx.forest);
    CheckReductionInvariants(r, paths, allowed);
    for (int t = 0; t < 3; ++t) EXPECT_LE(r.local_errors[t], allowed.values[t]);
  }
}

TEST(ReduceTest, LoopIsMonotone) {
  // Replaying prefixes of the ranking: K only grows and errors only fall.
  const auto fx = RandomFixture(5, 30, 5, 2);
  for (const auto& x : fx.instances) {
    const auto paths = ExtractPaths(fx.forest, x);
    const auto ranking = RankFeatures(Mine(paths));
    std::set<std::size_t> prefix;
    std::vector<std::size_t> prev_kept;
    std::vector<double> prev_err;
    for (std::size_t step = 0; step <= ranking.size(); ++step) {
      if (step > 0) prefix.insert(ranking[step - 1]);
      std::vector<std::size_t> kept;
      for (const auto& p : paths) {
        const auto fs = p.FeatureSet();
        if (std::includes(prefix.begin(), prefix.end(), fs.begin(), fs.end())) {
          kept.push_back(p.tree_index);
        }
      }
      EXPECT_TRUE(std::includes(kept.begin(), kept.end(), prev_kept.begin(), prev_kept.end()));
      if (!kept.empty()) {
        const auto err = LocalError(paths, kept, fx.forest);
        for (std::size_t t = 0; t < err.size() && !prev_err.empty(); ++t) {
          EXPECT_LE(err[t], prev_err[t] + 1e-12);
        }
        prev_err = err;
      }
      prev_kept = kept;
    }
    EXPECT_EQ(prev_kept.size(), paths.size());
  }
}

TEST(ReduceTest, BudgetMonotonicity) {
  const auto fx = RandomFixture(6, 40, 5, 2);
  Rng rng(8);
  for (const auto& x : fx.instances) {
    const auto paths = ExtractPaths(fx.forest, x);
    const auto assoc = Mine(paths);
    for (int i = 0; i < 5; ++i) {
      double a = rng.Uniform(0.0, 1.0), b = rng.Uniform(0.0, 1.0);
      if (a > b) std::swap(a, b);
      const auto ra = Reduce(paths, assoc, AllowedError::Global(a), Scheme::kGlobalMean, fx.forest);
      const auto rb = Reduce(paths, assoc, AllowedError::Global(b), Scheme::kGlobalMean, fx.forest);
      EXPECT_GE(ra.kept.size(), rb.kept.size());
      EXPECT_TRUE(std::includes(ra.feature_set.begin(), ra.feature_set.end(),
                                rb.feature_set.begin(), rb.feature_set.end()));
    }
  }
}

TEST(DefaultAllowedErrorTest, ConstantTargetsGiveZero) {
  auto ds = MakeSynthetic(60, 3, 2, 0.0, 3);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    ds.targets(r, 0) = 1.25;
    ds.targets(r, 1) = -3.0;
  }
  ForestConfig c;
  c.n_estimators = 10;
  const auto allowed = DefaultAllowedError(ds, c, 5);
  EXPECT_EQ(allowed.scheme, Scheme::kPerTarget);
  ASSERT_EQ(allowed.values.size(), 2u);
  EXPECT_NEAR(allowed.values[0], 0.0, 1e-12);
  EXPECT_NEAR(allowed.values[1], 0.0, 1e-12);
}

TEST(DefaultAllowedErrorTest, ScalesWithTargets) {
  const auto ds = MakeSynthetic(80, 4, 2, 0.3, 10);
  auto scaled = ds;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t t = 0; t < 2; ++t) scaled.targets(r, t) *= 10.0;
  }
  ForestConfig c;
  c.n_estimators = 15;
  c.seed = 2;
  const auto base = DefaultAllowedError(ds, c, 5);
  const auto big = DefaultAllowedError(scaled, c, 5);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_GT(base.values[t], 0.0);
    // Rounding can flip near-tied split gains, so only approximately 10.
    EXPECT_NEAR(big.values[t] / base.values[t], 10.0, 0.5);
  }
  EXPECT_THROW(DefaultAllowedError(ds, c, 1), Error);
}

ReductionResult KeepOnly(std::vector<std::size_t> kept, std::size_t total, std::size_t m) {
  ReductionResult r;
  r.kept = std::move(kept);
  for (std::size_t i = 0; i < total; ++i) {
    if (std::find(r.kept.begin(), r.kept.end(), i) == r.kept.end()) r.excluded.push_back(i);
  }
  r.local_errors.assign(m, 0.25);
  r.original_prediction.assign(m, 1.5);
  return r;
}

TEST(ComposeRuleTest, SinglePath) {
  const auto forest =
      BuildForest({Split(0, 5.0, Split(0, 2.0, Leaf({1}), Leaf({2})), Leaf({3}))}, 1, 1);
  const std::vector<double> x{3.0};
  const auto paths = ExtractPaths(forest, x);
  const auto rule = ComposeRule(KeepOnly({0}, 1, 1), paths, x, forest);
  ASSERT_EQ(rule.antecedent.size(), 1u);
  EXPECT_EQ(rule.antecedent[0].feature, 0u);
  EXPECT_EQ(rule.antecedent[0].lo, 2.0);
  EXPECT_EQ(rule.antecedent[0].hi, 5.0);
  EXPECT_TRUE(rule.antecedent[0].lower_open);
  EXPECT_EQ(rule.consequent[0].value, 1.5);
  EXPECT_EQ(rule.consequent[0].bound, 0.25);
  EXPECT_EQ(rule.kept_path_count, 1u);
}

TEST(ComposeRuleTest, IntersectsKeptRanges) {
  const auto forest = BuildForest(
      {Split(0, 5.0, Split(0, 2.0, Leaf({1}), Leaf({2})), Leaf({3})),
       Split(0, 7.0, Split(0, 3.0, Leaf({1}), Leaf({2})), Leaf({3})),
       Split(1, 1.0, Leaf({0}), Leaf({4}))},
      2, 1);
  const std::vector<double> x{4.0, 6.0};
  const auto paths = ExtractPaths(forest, x);
  const auto rule = ComposeRule(KeepOnly({0, 1}, 3, 1), paths, x, forest);
  ASSERT_EQ(rule.antecedent.size(), 1u);
  EXPECT_EQ(rule.antecedent[0].lo, 3.0);
  EXPECT_EQ(rule.antecedent[0].hi, 5.0);
  // Adding tree 2 brings f1 > 1, with the upper side clamped to the bound 10.
  const auto wider = ComposeRule(KeepOnly({0, 1, 2}, 3, 1), paths, x, forest);
  ASSERT_EQ(wider.antecedent.size(), 2u);
  EXPECT_EQ(wider.antecedent[1].lo, 1.0);
  EXPECT_EQ(wider.antecedent[1].hi, 10.0);
  EXPECT_FALSE(wider.antecedent[1].hi < x[1]);
}

TEST(ComposeRuleTest, UnboundedSidesClampToTrainingRange) {
  const auto forest = BuildForest({Split(0, 5.0, Leaf({1}), Leaf({2}))}, 1, 1, -1.0, 8.0);
  const std::vector<double> x{3.0};
  const auto rule = ComposeRule(KeepOnly({0}, 1, 1), ExtractPaths(forest, x), x, forest);
  EXPECT_EQ(rule.antecedent[0].lo, -1.0);
  EXPECT_FALSE(rule.antecedent[0].lower_open);
  // An instance outside the training range widens the clamp.
  const std::vector<double> far{-4.0};
  const auto outside = ComposeRule(KeepOnly({0}, 1, 1), ExtractPaths(forest, far), far, forest);
  EXPECT_EQ(outside.antecedent[0].lo, -4.0);
}

TEST(ComposeRuleTest, ZeroReductionPinsPredictionOnGrid) {
  const std::vector<Sketch> sketches = {
      Split(0, 4.0, Split(1, 3.0, Leaf({1}), Leaf({2})), Leaf({3})),
      Split(1, 6.0, Leaf({5}), Split(0, 2.0, Leaf({7}), Leaf({11})))};
  const auto forest = BuildForest(sketches, 2, 1);
  const std::vector<double> x{3.0, 7.0};
  const auto paths = ExtractPaths(forest, x);
  const auto r = Reduce(paths, Mine(paths), AllowedError::Global(0.0), Scheme::kGlobalMean, forest);
  const auto rule = ComposeRule(r, paths, x, forest);
  const auto base = forest.Predict(x);
  int checked = 0;
  for (double a = 0.0; a <= 10.0; a += 0.25) {
    for (double b = 0.0; b <= 10.0; b += 0.25) {
      std::vector<double> y{a, b};
      bool inside = true;
      for (const auto& term : rule.antecedent) {
        const double v = y[term.feature];
        inside = inside && (term.lower_open ? term.lo < v : term.lo <= v) && v <= term.hi;
      }
      if (!inside) continue;
      ++checked;
      EXPECT_EQ(forest.Predict(y), base);
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(RenderRuleTest, OneTermOneTarget) {
  Rule rule;
  rule.antecedent.push_back({0, 2.0, 5.0, false});
  rule.consequent.push_back({0, 1.5, 0.0});
  EXPECT_EQ(RenderRule(rule, {"f0"}, {"t0"}, 2), "if 2.0 <= f0 <= 5.0 then t0: 1.50±0.00");
}

TEST(RenderRuleTest, OpenLowerBoundMovesToNextGridValue) {
  Rule rule;
  rule.antecedent.push_back({0, 206.5, 208.26, true});
  rule.antecedent.push_back({2, 100.0, 107.0, true});
  rule.consequent.push_back({0, 7.9, 0.8});
  rule.consequent.push_back({1, 7.2, 0.7});
  EXPECT_EQ(RenderRule(rule, {"Water", "x", "Slag"}, {"Slump", "Flow"}, 1),
            "if 206.6 <= Water <= 208.3 & 100.1 <= Slag <= 107.0 then Slump: 7.9±0.8, "
            "Flow: 7.2±0.7");
  EXPECT_EQ(RenderRule(rule, {"Water", "x", "Slag"}, {"Slump", "Flow"}, 0),
            "if 207 <= Water <= 208 & 101 <= Slag <= 107 then Slump: 8±1, Flow: 7±1");
}

TEST(RenderRuleTest, EmptyAntecedent) {
  Rule rule;
  rule.consequent.push_back({0, 1.0, 0.0});
  rule.consequent.push_back({1, -2.0, 0.125});
  EXPECT_EQ(RenderRule(rule, {}, {"a", "b"}, 3), "then a: 1.000±0.000, b: -2.000±0.125");
}

TEST(RenderRuleTest, GrammarOnRealRules) {
  const auto ds = MakeSynthetic(100, 5, 3, 0.2, 4);
  ForestConfig c;
  c.n_estimators = 30;
  const auto forest = Fit(ds, c);
  const std::regex term(R"(-?\d+\.\d+ <= \w+ <= -?\d+\.\d+)");
  const std::regex outcome(R"(\w+: -?\d+\.\d{2}±\d+\.\d{2})");
  const std::regex full(
      R"((if -?\d+\.\d+ <= \w+ <= -?\d+\.\d+( & -?\d+\.\d+ <= \w+ <= -?\d+\.\d+)* )?then \w+: -?\d+\.\d{2}±\d+\.\d{2}(, \w+: -?\d+\.\d{2}±\d+\.\d{2})*)");
  for (std::size_t r = 0; r < 10; ++r) {
    ExplainOptions opts;
    opts.allowed = AllowedError::Global(0.1 * static_cast<double>(r));
    const auto e = Explain(forest, ds.features.row(r), opts);
    const auto text = RenderRule(e.rule, forest.feature_names(), forest.target_names(), 2);
    EXPECT_TRUE(std::regex_match(text, full)) << text;
  }
}

TEST(CheckConclusiveTest, ZeroReductionHasNoDeviation) {
  const auto fx = RandomFixture(9, 20, 3, 2);
  for (const auto& x : fx.instances) {
    ExplainOptions opts;
    const auto e = Explain(fx.forest, x, opts);
    const auto report = CheckConclusive(e.rule, e.reduction, fx.forest, x, 200, 1);
    for (double d : report.max_deviation) EXPECT_EQ(d, 0.0);
    EXPECT_EQ(report.envelope_violations, 0u);
    EXPECT_EQ(report.kept_leaf_changes, 0u);
  }
}

TEST(CheckConclusiveTest, AnyReductionStaysInEnvelope) {
  const auto fx = RandomFixture(10, 30, 4, 2);
  for (const auto& x : fx.instances) {
    for (double a : {0.05, 0.2, 0.5, 2.0}) {
      ExplainOptions opts;
      opts.allowed = AllowedError::Global(a);
      const auto e = Explain(fx.forest, x, opts);
      const auto report = CheckConclusive(e.rule, e.reduction, fx.forest, x, 300, 7);
      EXPECT_EQ(report.envelope_violations, 0u);
      EXPECT_EQ(report.kept_leaf_changes, 0u);
      const auto env = ReductionEnvelope(e.reduction, fx.forest, x);
      for (std::size_t t = 0; t < 2; ++t) {
        EXPECT_LE(env.lower[t], e.reduction.original_prediction[t] + 1e-12);
        EXPECT_GE(env.upper[t], e.reduction.original_prediction[t] - 1e-12);
      }
    }
  }
  EXPECT_THROW(CheckConclusive({}, {}, fx.forest, fx.instances[0], 0, 1), Error);
}

TEST(CheckConclusiveTest, FeatureOutsideKeptPathsIsIrrelevant) {
  // Tree 1 depends only on f1 and is excluded at a loose budget; moving f1
  // across its range cannot affect tree 0.
  const auto forest = BuildForest(
      {Split(0, 5.0, Leaf({1}), Leaf({2})), Split(1, 5.0, Leaf({1.5}), Leaf({1.6}))}, 2, 1);
  const std::vector<double> x{3.0, 3.0};
  const auto paths = ExtractPaths(forest, x);
  ExplainOptions opts;
  opts.allowed = AllowedError::Global(0.1);
  opts.reduce.order = RankOrder::kAscending;
  const auto e = Explain(forest, x, opts);
  ASSERT_EQ(e.reduction.kept, (std::vector<std::size_t>{0}));
  ASSERT_EQ(e.rule.antecedent.size(), 1u);
  EXPECT_EQ(e.rule.antecedent[0].feature, 0u);
  const auto kept_value = forest.PredictTree(0, x)[0];
  for (double v = 0.0; v <= 10.0; v += 0.5) {
    EXPECT_EQ(forest.PredictTree(0, std::vector<double>{3.0, v})[0], kept_value);
  }
  const auto report = CheckConclusive(e.rule, e.reduction, forest, x, 500, 3);
  EXPECT_EQ(report.envelope_violations, 0u);
  EXPECT_NEAR(report.max_deviation[0], 0.05, 1e-12);
}

}  // namespace
}  // namespace xmtr
