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

// Forest persistence as a versioned JSON document, plus a human-readable
// model summary.
//
// Layout (version 1):
//   { "format": "xmtr-forest", "version": 1,
//     "config": {...}, "feature_names": [...], "target_names": [...],
//     "feature_bounds": [[min, max], ...],
//     "trees": [ { "feature": [...], "threshold": [...], "left": [...],
//                  "right": [...], "count": [...], "value": [[...], ...],
//                  "leaf_min": [...], "leaf_max": [...] } ] }
// Arrays inside a tree are columnar, one entry per node; "value" holds the
// leaf prediction (empty for split nodes). Doubles are written with the
// shortest round-trip representation, so save/load is bit-exact.

#ifndef XMTR_MODEL_IO_HPP_
#define XMTR_MODEL_IO_HPP_

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xmtr/common.hpp"
#include "xmtr/forest.hpp"

namespace xmtr {

inline constexpr const char* kModelFormat = "xmtr-forest";
inline constexpr int kModelVersion = 1;

inline std::string MaxFeaturesToString(const ForestConfig& c) {
  switch (c.max_features) {
    case MaxFeatures::kAll:
      return "all";
    case MaxFeatures::kSqrt:
      return "sqrt";
    case MaxFeatures::kFraction:
      return FormatExact(c.max_features_fraction);
  }
  return "all";
}

// Accepts "all", "sqrt" or a fraction in (0, 1].
inline void ParseMaxFeatures(const std::string& text, ForestConfig& c) {
  if (text == "all") {
    c.max_features = MaxFeatures::kAll;
  } else if (text == "sqrt") {
    c.max_features = MaxFeatures::kSqrt;
  } else {
    double f = 0.0;
    Require(ParseDouble(text, f) && f > 0.0 && f <= 1.0, ErrorCode::kInvalidArgument,
            "max-features must be all, sqrt or a fraction in (0, 1], got '" + text + "'");
    c.max_features = MaxFeatures::kFraction;
    c.max_features_fraction = f;
  }
}

namespace internal {

using nlohmann::json;

inline json ConfigToJson(const ForestConfig& c) {
  json j;
  j["n_estimators"] = c.n_estimators;
  j["max_depth"] = c.max_depth ? json(*c.max_depth) : json(nullptr);
  j["min_samples_leaf"] = c.min_samples_leaf;
  j["max_features"] = MaxFeaturesToString(c);
  j["bootstrap"] = c.bootstrap;
  j["seed"] = c.seed;
  j["normalize_variance"] = c.normalize_variance;
  return j;
}

inline ForestConfig ConfigFromJson(const json& j) {
  ForestConfig c;
  c.n_estimators = j.at("n_estimators").get<std::size_t>();
  if (!j.at("max_depth").is_null()) c.max_depth = j.at("max_depth").get<std::size_t>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  ParseMaxFeatures(j.at("max_features").get<std::string>(), c);
  c.bootstrap = j.at("bootstrap").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.normalize_variance = j.at("normalize_variance").get<bool>();
  return c;
}

inline json TreeToJson(const Tree& tree) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), count = json::array(), value = json::array();
  for (const auto& n : tree.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    count.push_back(n.sample_count);
    value.push_back(n.prediction);
  }
  return json{{"feature", feature}, {"threshold", threshold}, {"left", left},
              {"right", right},     {"count", count},         {"value", value},
              {"leaf_min", tree.leaf_min()}, {"leaf_max", tree.leaf_max()}};
}

inline Tree TreeFromJson(const json& j, std::size_t num_targets) {
  const auto& feature = j.at("feature");
  const std::size_t n = feature.size();
  for (const char* key : {"threshold", "left", "right", "count", "value"}) {
    Require(j.at(key).size() == n, ErrorCode::kCorruptFile,
            std::string("tree array '") + key + "' has inconsistent length");
  }
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = nodes[i];
    node.feature = feature[i].get<std::int32_t>();
    node.threshold = j["threshold"][i].get<double>();
    node.left = j["left"][i].get<std::int32_t>();
    node.right = j["right"][i].get<std::int32_t>();
    node.sample_count = j["count"][i].get<std::size_t>();
    node.prediction = j["value"][i].get<std::vector<double>>();
  }
  Tree tree(std::move(nodes), num_targets);
  // The caches are recomputed; the stored copies must agree.
  Require(j.at("leaf_min").get<std::vector<double>>() == tree.leaf_min() &&
              j.at("leaf_max").get<std::vector<double>>() == tree.leaf_max(),
          ErrorCode::kCorruptFile, "stored leaf extremes disagree with the tree");
  return tree;
}

}  // namespace internal

inline void WriteModel(const Forest& forest, std::ostream& out) {
  using internal::json;
  json doc;
  doc["format"] = kModelFormat;
  doc["version"] = kModelVersion;
  doc["config"] = internal::ConfigToJson(forest.config());
  doc["num_features"] = forest.num_features();
  doc["num_targets"] = forest.num_targets();
  doc["feature_names"] = forest.feature_names();
  doc["target_names"] = forest.target_names();
  json bounds = json::array();
  for (const auto& b : forest.feature_bounds()) bounds.push_back({b.min, b.max});
  doc["feature_bounds"] = bounds;
  json trees = json::array();
  for (const auto& t : forest.trees()) trees.push_back(internal::TreeToJson(t));
  doc["trees"] = std::move(trees);
  out << doc.dump() << '\n';
}

inline Forest ReadModel(std::istream& in) {
  using internal::json;
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kCorruptFile, std::string("model file is not valid JSON: ") + e.what());
  }
  Require(doc.is_object() && doc.contains("format") && doc["format"] == kModelFormat,
          ErrorCode::kCorruptFile, "not an xmtr model file");
  Require(doc.contains("version") && doc["version"].is_number_integer(),
          ErrorCode::kCorruptFile, "model file has no version tag");
  const int version = doc["version"].get<int>();
  Require(version == kModelVersion, ErrorCode::kVersionMismatch,
          "model file version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kModelVersion) + ")");
  try {
    const auto d = doc.at("num_features").get<std::size_t>();
    const auto m = doc.at("num_targets").get<std::size_t>();
    std::vector<FeatureBounds> bounds;
    for (const auto& b : doc.at("feature_bounds")) {
      Require(b.size() == 2, ErrorCode::kCorruptFile, "feature bound must be [min, max]");
      bounds.push_back({b[0].get<double>(), b[1].get<double>()});
    }
    std::vector<Tree> trees;
    for (const auto& t : doc.at("trees")) trees.push_back(internal::TreeFromJson(t, m));
    return Forest(std::move(trees), internal::ConfigFromJson(doc.at("config")), d, m,
                  std::move(bounds),
                  doc.at("feature_names").get<std::vector<std::string>>(),
                  doc.at("target_names").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    Fail(ErrorCode::kCorruptFile, std::string("malformed model file: ") + e.what());
  }
}

inline void SaveModel(const Forest& forest, const std::filesystem::path& path) {
  std::ofstream out(path);
  Require(out.good(), ErrorCode::kNotFound, "cannot write '" + path.string() + "'");
  WriteModel(forest, out);
  Require(out.good(), ErrorCode::kDataError, "failed writing '" + path.string() + "'");
}

inline Forest LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kNotFound, "cannot open model '" + path.string() + "'");
  return ReadModel(in);
}

inline std::string DescribeConfig(const ForestConfig& c) {
  std::ostringstream os;
  os << "estimators=" << c.n_estimators
     << " max_depth=" << (c.max_depth ? std::to_string(*c.max_depth) : "none")
     << " min_leaf=" << c.min_samples_leaf << " max_features=" << MaxFeaturesToString(c)
     << " bootstrap=" << (c.bootstrap ? "true" : "false") << " seed=" << c.seed
     << " normalize_variance=" << (c.normalize_variance ? "true" : "false");
  return os.str();
}

// Text summary: tree count, depth statistics, leaf extreme ranges per
// target, feature bounds and the training configuration.
inline std::string Inspect(const Forest& forest) {
  std::ostringstream os;
  os << "format: " << kModelFormat << " v" << kModelVersion << '\n';
  os << "trees: " << forest.size() << '\n';
  os << "features: " << forest.num_features() << '\n';
  os << "targets: " << forest.num_targets() << '\n';

  std::size_t min_depth = std::numeric_limits<std::size_t>::max(), max_depth = 0;
  double sum_depth = 0.0, sum_leaves = 0.0;
  for (const auto& t : forest.trees()) {
    const auto depth = t.Depth();
    min_depth = std::min(min_depth, depth);
    max_depth = std::max(max_depth, depth);
    sum_depth += static_cast<double>(depth);
    sum_leaves += static_cast<double>(t.LeafCount());
  }
  const auto count = static_cast<double>(forest.size());
  os << "depth: min=" << min_depth << " mean=" << FormatFixed(sum_depth / count, 2)
     << " max=" << max_depth << '\n';
  os << "leaves per tree: mean=" << FormatFixed(sum_leaves / count, 2) << '\n';

  os << "leaf extremes per target (min of leaf_min .. max of leaf_max):\n";
  for (std::size_t t = 0; t < forest.num_targets(); ++t) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& tree : forest.trees()) {
      lo = std::min(lo, tree.leaf_min()[t]);
      hi = std::max(hi, tree.leaf_max()[t]);
    }
    os << "  " << forest.target_names()[t] << ": [" << FormatExact(lo) << ", "
       << FormatExact(hi) << "]\n";
  }
  os << "feature bounds:\n";
  for (std::size_t f = 0; f < forest.num_features(); ++f) {
    const auto& b = forest.feature_bounds()[f];
    os << "  " << forest.feature_names()[f] << ": [" << FormatExact(b.min) << ", "
       << FormatExact(b.max) << "]\n";
  }
  os << "config: " << DescribeConfig(forest.config()) << '\n';
  return os.str();
}

}  // namespace xmtr

#endif  // XMTR_MODEL_IO_HPP_
