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

// Command-line front end: train, explain, evaluate, bench, inspect.
//
// Exit codes: 0 success, 1 usage error, 2 data or model error. Results go to
// `out` (or --out files), diagnostics to `err`. Every command echoes its
// effective configuration as a '#'-prefixed line on `err` and at the top of
// each CSV it writes.

#ifndef XMTR_TOOLS_CLI_HPP_
#define XMTR_TOOLS_CLI_HPP_

#include <chrono>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xmtr/xmtr.hpp"

namespace xmtr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

inline MissingPolicy ParseMissing(const std::string& s) {
  if (s == "zero") return MissingPolicy::kZeroFill;
  if (s == "drop") return MissingPolicy::kDropRow;
  return MissingPolicy::kError;
}

inline std::vector<double> ParseVector(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : SplitList(text, ',')) {
    double v = 0.0;
    Require(ParseDouble(item, v) && std::isfinite(v), ErrorCode::kInvalidArgument,
            "malformed " + what + " value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Quotes an argument for the echoed command line when needed.
inline std::string Arg(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \t'\"") == std::string::npos) return s;
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

struct ForestFlags {
  std::size_t estimators = 500;
  std::size_t max_depth = 0;  // 0: unlimited
  std::size_t min_leaf = 1;
  std::string max_features = "sqrt";
  bool no_bootstrap = false;
  bool normalize_variance = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void Register(CLI::App* app) {
    app->add_option("--estimators", estimators, "Number of trees")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--max-depth", max_depth, "Maximum tree depth (0 = unlimited)")
        ->capture_default_str();
    app->add_option("--min-leaf", min_leaf, "Minimum samples per leaf")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--max-features", max_features,
                    "Candidate features per split: all, sqrt or a fraction in (0,1]")
        ->capture_default_str();
    app->add_flag("--no-bootstrap", no_bootstrap, "Train every tree on the full data");
    app->add_flag("--normalize-variance", normalize_variance,
                  "Weight each target's error reduction by 1/variance");
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--threads", threads, "Training threads (0 = all cores)")
        ->capture_default_str();
  }

  ForestConfig ToConfig() const {
    ForestConfig c;
    c.n_estimators = estimators;
    if (max_depth > 0) c.max_depth = max_depth;
    c.min_samples_leaf = min_leaf;
    ParseMaxFeatures(max_features, c);
    c.bootstrap = !no_bootstrap;
    c.normalize_variance = normalize_variance;
    c.seed = seed;
    c.Validate();
    return c;
  }

  std::string Describe() const {
    std::ostringstream os;
    os << " --estimators " << estimators << " --max-depth " << max_depth << " --min-leaf "
       << min_leaf << " --max-features " << max_features << " --seed " << seed;
    if (no_bootstrap) os << " --no-bootstrap";
    if (normalize_variance) os << " --normalize-variance";
    return os.str();
  }
};

struct DataFlags {
  std::string data;
  std::string targets;
  std::string missing = "zero";

  void Register(CLI::App* app, bool required) {
    auto* d = app->add_option("--data", data, "CSV file with a header row");
    auto* t = app->add_option("--targets", targets, "Comma-separated target column names");
    if (required) {
      d->required();
      t->required();
    }
    app->add_option("--missing", missing, "Missing-value policy")
        ->capture_default_str()
        ->check(CLI::IsMember({"zero", "drop", "error"}));
  }

  Dataset Load() const {
    return LoadCsv(data, SplitList(targets, ','), ParseMissing(missing));
  }

  std::string Describe() const {
    return " --data " + Arg(data) + " --targets " + Arg(targets) + " --missing " + missing;
  }
};

struct ExplainFlags {
  double min_support = kDefaultMinSupport;
  std::string rank_order = "asc";
  std::string extreme = "shared";

  void Register(CLI::App* app) {
    app->add_option("--min-support", min_support, "Minimum pair support for mining")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--rank-order", rank_order, "Feature ranking order")
        ->capture_default_str()
        ->check(CLI::IsMember({"asc", "desc"}));
    app->add_option("--extreme", extreme,
                    "Excluded-tree substitution: shared direction or per-tree")
        ->capture_default_str()
        ->check(CLI::IsMember({"shared", "per-tree"}));
  }

  ReduceOptions ToReduce() const {
    ReduceOptions o;
    o.order = rank_order == "desc" ? RankOrder::kDescending : RankOrder::kAscending;
    o.extreme = extreme == "per-tree" ? ExtremeChoice::kPerTree
                                      : ExtremeChoice::kSharedDirection;
    return o;
  }

  std::string Describe() const {
    return " --min-support " + FormatExact(min_support) + " --rank-order " + rank_order +
           " --extreme " + extreme;
  }
};

inline std::ofstream OpenOut(const std::string& path) {
  std::ofstream f(path);
  Require(f.good(), ErrorCode::kNotFound, "cannot write '" + path + "'");
  return f;
}

// --allowed-error: one value selects the global scheme, m values per-target;
// an explicit --scheme overrides and must agree with the count.
inline AllowedError ResolveAllowed(const std::vector<double>& values,
                                   const std::string& scheme, std::size_t m) {
  Require(!values.empty(), ErrorCode::kInvalidArgument, "empty allowed error");
  if (scheme.empty()) {
    if (values.size() == 1) return AllowedError::Global(values[0]);
    Require(values.size() == m, ErrorCode::kInvalidArgument,
            "--allowed-error needs 1 or " + std::to_string(m) + " values");
    return AllowedError::PerTarget(values);
  }
  if (scheme == "global") {
    Require(values.size() == 1, ErrorCode::kInvalidArgument,
            "--scheme global takes exactly one --allowed-error value");
    return AllowedError::Global(values[0]);
  }
  Require(values.size() == m, ErrorCode::kInvalidArgument,
          "--scheme per-target needs " + std::to_string(m) + " --allowed-error values");
  return AllowedError::PerTarget(values);
}

}  // namespace detail

inline int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace detail;
  CLI::App app{"Rule-based local explanations for multi-target regression forests", "xmtr"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a forest and write a model file");
  DataFlags train_data;
  ForestFlags train_forest;
  std::string train_out;
  train_data.Register(train, true);
  train_forest.Register(train);
  train->add_option("--out", train_out, "Model file to write")->required();

  // explain
  auto* explain = app.add_subcommand("explain", "Explain one prediction with a rule");
  std::string model_path, instance, allowed_text, scheme, report_path, explain_targets,
      explain_data;
  std::optional<std::size_t> row;
  int precision = 2;
  std::size_t check_trials = 0, folds = 10;
  std::uint64_t explain_seed = 0;
  ExplainFlags explain_flags;
  explain->add_option("--model", model_path, "Model file")->required();
  auto* inst_opt =
      explain->add_option("--instance", instance, "Inline comma-separated feature values");
  explain->add_option("--data", explain_data,
                      "CSV holding the instance (with --row) or for the CV default budget");
  auto* row_opt = explain->add_option("--row", row, "0-based data row to explain");
  inst_opt->excludes(row_opt);
  explain->add_option("--targets", explain_targets,
                      "Target columns in --data (default: the model's targets)");
  explain->add_option("--allowed-error", allowed_text,
                      "One value (global) or one per target; default: CV MAE on --data");
  explain->add_option("--scheme", scheme, "Budget comparison scheme")
      ->check(CLI::IsMember({"global", "per-target"}));
  explain->add_option("--folds", folds, "Folds for the default budget")->capture_default_str();
  explain->add_option("--precision", precision, "Decimals in the rendered rule")
      ->capture_default_str()
      ->check(CLI::Range(0, 12));
  explain->add_option("--check-conclusive", check_trials,
                      "Probe the rule with N random covered perturbations");
  explain->add_option("--seed", explain_seed, "Seed for --check-conclusive")
      ->capture_default_str();
  explain->add_option("--report", report_path,
                      "Write the JSON sidecar report here (default: error stream)");
  explain_flags.Register(explain);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated rule quality report");
  DataFlags eval_data;
  ForestFlags eval_forest;
  ExplainFlags eval_flags;
  std::string eval_allowed, eval_out, eval_scheme = "global";
  std::size_t eval_folds = 10;
  std::uint64_t eval_seed = 0;
  eval_data.Register(evaluate, true);
  eval_forest.Register(evaluate);
  eval_flags.Register(evaluate);
  evaluate->add_option("--allowed-errors", eval_allowed,
                       "Budgets, comma separated; per-target budgets join values with ':'")
      ->required();
  evaluate->add_option("--scheme", eval_scheme, "Budget comparison scheme")
      ->capture_default_str()
      ->check(CLI::IsMember({"global", "per-target"}));
  evaluate->add_option("--folds", eval_folds, "Cross-validation folds")->capture_default_str();
  evaluate->add_option("--cv-seed", eval_seed, "Fold assignment seed")->capture_default_str();
  evaluate->add_option("--out", eval_out, "Report CSV to write");

  // bench
  auto* bench = app.add_subcommand("bench", "Allowed-error scalability benchmark");
  DataFlags bench_data;
  ForestFlags bench_forest;
  ExplainFlags bench_flags;
  std::string synthetic, bench_allowed = "0.05,0.1,0.15,0.2,0.25,0.3", bench_out;
  double noise = 0.1;
  bool standardize = false;
  std::size_t instances = 50;
  std::uint64_t bench_seed = 0;
  bench_data.Register(bench, false);
  bench_forest.Register(bench);
  bench_flags.Register(bench);
  auto* syn_opt = bench->add_option("--synthetic", synthetic, "Generate data: n,d,m");
  bench->add_option("--noise", noise, "Synthetic target noise scale")->capture_default_str();
  bench->add_flag("--standardize", standardize, "Scale targets to zero mean, unit variance");
  bench->add_option("--allowed-errors", bench_allowed, "Ascending global budgets")
      ->capture_default_str();
  bench->add_option("--instances", instances, "Rows explained per budget")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--sample-seed", bench_seed, "Seed for data generation and row sampling")
      ->capture_default_str();
  bench->add_option("--out", bench_out, "Bench CSV to write");
  syn_opt->excludes(bench->get_option("--data"));

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Summarize a model file");
  std::string inspect_path;
  inspect->add_option("--model", inspect_path, "Model file")->required();

  std::vector<const char*> argv{"xmtr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      const auto config = train_forest.ToConfig();
      const std::string echo = "# effective-config: xmtr train" + train_data.Describe() +
                               train_forest.Describe() + " --out " + Arg(train_out);
      err << echo << '\n';
      const auto data = train_data.Load();
      const auto forest = Fit(data, config, train_forest.threads);
      SaveModel(forest, train_out);
      out << "trained " << forest.size() << " trees on " << data.rows() << " rows ("
          << data.num_features() << " features, " << data.num_targets() << " targets) -> "
          << train_out << '\n';
      return kExitOk;
    }

    if (*inspect) {
      err << "# effective-config: xmtr inspect --model " << Arg(inspect_path) << '\n';
      out << Inspect(LoadModel(inspect_path));
      return kExitOk;
    }

    if (*explain) {
      Require(!instance.empty() || row.has_value(), ErrorCode::kInvalidArgument,
              "explain needs --instance or --data with --row");
      Require(!row || !explain_data.empty(), ErrorCode::kInvalidArgument,
              "--row needs --data");
      const auto forest = LoadModel(model_path);
      const std::size_t m = forest.num_targets();

      std::vector<double> x;
      if (!instance.empty()) {
        x = ParseVector(instance, "instance");
        Require(x.size() == forest.num_features(), ErrorCode::kInvalidArgument,
                "instance has " + std::to_string(x.size()) + " values but the model expects " +
                    std::to_string(forest.num_features()) + " features");
      } else {
        const auto rows = LoadFeatureColumns(explain_data, forest.feature_names());
        Require(*row < rows.rows(), ErrorCode::kInvalidArgument,
                "--row " + std::to_string(*row) + " out of range (file has " +
                    std::to_string(rows.rows()) + " rows)");
        const auto r = rows.row(*row);
        x.assign(r.begin(), r.end());
      }
      std::string instance_echo;
      for (std::size_t i = 0; i < x.size(); ++i) {
        instance_echo += (i ? "," : "") + FormatExact(x[i]);
      }

      AllowedError allowed;
      if (!allowed_text.empty()) {
        allowed = ResolveAllowed(ParseVector(allowed_text, "allowed-error"), scheme, m);
      } else {
        Require(!explain_data.empty(), ErrorCode::kInvalidArgument,
                "give --allowed-error, or --data so the budget can be cross-validated");
        const auto targets =
            explain_targets.empty() ? forest.target_names() : SplitList(explain_targets, ',');
        const auto data = LoadCsv(explain_data, targets);
        const auto cv = DefaultAllowedError(data, forest.config(), folds);
        allowed = scheme == "per-target" ? cv : AllowedError::Global(cv.Mean());
      }
      allowed.Validate(m);

      std::string allowed_echo;
      for (std::size_t i = 0; i < allowed.values.size(); ++i) {
        allowed_echo += (i ? "," : "") + FormatExact(allowed.values[i]);
      }
      const std::string scheme_name =
          allowed.scheme == Scheme::kGlobalMean ? "global" : "per-target";
      err << "# effective-config: xmtr explain --model " << Arg(model_path) << " --instance "
          << instance_echo << " --allowed-error " << allowed_echo << " --scheme "
          << scheme_name << explain_flags.Describe() << " --precision " << precision;
      if (row) err << " (row " << *row << " of " << Arg(explain_data) << ")";
      if (check_trials) err << " --check-conclusive " << check_trials << " --seed " << explain_seed;
      err << '\n';

      const auto start = std::chrono::steady_clock::now();
      ExplainOptions eo;
      eo.allowed = allowed;
      eo.min_support = explain_flags.min_support;
      eo.reduce = explain_flags.ToReduce();
      const auto e = Explain(forest, x, eo);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

      out << RenderRule(e.rule, forest.feature_names(), forest.target_names(), precision)
          << '\n';

      nlohmann::json rep;
      rep["instance"] = x;
      rep["scheme"] = scheme_name;
      rep["allowed_error"] = allowed.values;
      rep["trees"] = forest.size();
      rep["kept"] = e.reduction.kept.size();
      rep["excluded"] = e.reduction.excluded.size();
      std::vector<std::string> fs;
      for (auto f : e.reduction.feature_set) fs.push_back(forest.feature_names()[f]);
      rep["feature_set"] = fs;
      rep["rule_length"] = RuleLength(e.rule);
      rep["local_errors"] = e.reduction.local_errors;
      rep["adjusted_prediction"] = e.reduction.adjusted_prediction;
      rep["prediction"] = e.reduction.original_prediction;
      rep["seconds"] = seconds;
      if (check_trials) {
        const auto c = CheckConclusive(e.rule, e.reduction, forest, x, check_trials, explain_seed);
        rep["conclusive"] = {{"trials", check_trials},
                             {"max_deviation", c.max_deviation},
                             {"envelope_violations", c.envelope_violations},
                             {"kept_leaf_changes", c.kept_leaf_changes}};
      }
      if (report_path.empty()) {
        err << rep.dump() << '\n';
      } else {
        auto f = OpenOut(report_path);
        f << rep.dump(2) << '\n';
      }
      return kExitOk;
    }

    if (*evaluate) {
      const auto config = eval_forest.ToConfig();
      const auto data = eval_data.Load();
      std::vector<AllowedError> budgets;
      for (const auto& item : SplitList(eval_allowed, ',')) {
        std::vector<double> vals;
        for (const auto& v : SplitList(item, ':')) {
          double d = 0.0;
          Require(ParseDouble(v, d), ErrorCode::kInvalidArgument,
                  "malformed allowed error '" + item + "'");
          vals.push_back(d);
        }
        budgets.push_back(eval_scheme == "global"
                              ? ResolveAllowed(vals, "global", data.num_targets())
                              : ResolveAllowed(vals, "per-target", data.num_targets()));
      }
      const std::string echo = "# effective-config: xmtr evaluate" + eval_data.Describe() +
                               eval_forest.Describe() + eval_flags.Describe() +
                               " --allowed-errors " + eval_allowed + " --scheme " +
                               eval_scheme + " --folds " + std::to_string(eval_folds) +
                               " --cv-seed " + std::to_string(eval_seed);
      err << echo << '\n';
      ExperimentOptions eo;
      eo.min_support = eval_flags.min_support;
      eo.reduce = eval_flags.ToReduce();
      eo.threads = eval_forest.threads;
      const auto report = RunExperiment(data, config, budgets, eval_folds, eval_seed, eo);
      std::ostringstream csv;
      WriteExperimentCsv(report, csv);
      out << csv.str();
      out << "# forest cv mae: " << FormatFixed(report.forest_mae.mean, 4) << '\n';
      if (!eval_out.empty()) {
        auto f = OpenOut(eval_out);
        f << echo << '\n' << "# forest cv mae: " << FormatExact(report.forest_mae.mean) << '\n'
          << csv.str();
      }
      return kExitOk;
    }

    if (*bench) {
      const auto config = bench_forest.ToConfig();
      Dataset data;
      std::string source;
      if (!synthetic.empty()) {
        std::vector<std::size_t> shape;
        for (const auto& s : SplitList(synthetic, ',')) {
          std::size_t v = 0;
          auto res = std::from_chars(s.data(), s.data() + s.size(), v);
          Require(res.ec == std::errc() && res.ptr == s.data() + s.size() && v > 0,
                  ErrorCode::kInvalidArgument, "--synthetic expects n,d,m");
          shape.push_back(v);
        }
        Require(shape.size() == 3, ErrorCode::kInvalidArgument, "--synthetic expects n,d,m");
        data = MakeSynthetic(shape[0], shape[1], shape[2], noise, bench_seed);
        source = " --synthetic " + synthetic + " --noise " + FormatExact(noise);
      } else {
        Require(!bench_data.data.empty() && !bench_data.targets.empty(),
                ErrorCode::kInvalidArgument, "bench needs --synthetic or --data/--targets");
        data = bench_data.Load();
        source = bench_data.Describe();
      }
      if (standardize) StandardizeTargets(data);
      const auto budgets = ParseVector(bench_allowed, "allowed-errors");
      const std::string echo = "# effective-config: xmtr bench" + source +
                               (standardize ? " --standardize" : "") + bench_forest.Describe() +
                               bench_flags.Describe() + " --allowed-errors " + bench_allowed +
                               " --instances " + std::to_string(instances) +
                               " --sample-seed " + std::to_string(bench_seed);
      err << echo << '\n';
      BenchOptions bo;
      bo.min_support = bench_flags.min_support;
      bo.reduce = bench_flags.ToReduce();
      bo.fit_threads = bench_forest.threads;
      const auto rows = ScalabilityBench(data, config, budgets, instances, bench_seed, bo);
      std::ostringstream csv;
      WriteBenchCsv(rows, csv);
      out << csv.str();
      if (!bench_out.empty()) {
        auto f = OpenOut(bench_out);
        f << echo << '\n' << csv.str();
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace xmtr::cli

#endif  // XMTR_TOOLS_CLI_HPP_
