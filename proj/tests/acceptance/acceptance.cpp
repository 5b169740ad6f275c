/*
 * Copyright 2024 The Shortcut Rules Authors.
 *
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

// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "shortcut/annotate.hpp"
#include "shortcut/causality.hpp"
#include "shortcut/decoy.hpp"
#include "shortcut/explain.hpp"
#include "shortcut/miner.hpp"
#include "shortcut/scorer.hpp"
#include "shortcut/synthetic.hpp"
#include "testing.hpp"

using namespace shortcut;
using namespace shortcut::testing;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

class Runner {
 public:
  void run(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = body();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_s > 0 && secs > budget_s) {
      out.ok = false;
      out.detail += " (over time budget)";
    }
    failed_ += out.ok ? 0 : 1;
    std::cout << (out.ok ? "PASS " : "FAIL ") << name << "  [" << secs << " s] " << out.detail
              << std::endl;
  }
  int failed() const { return failed_; }

 private:
  int failed_ = 0;
};

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

Outcome npmi_values() {
  const double complete = npmi(0.3, 1.0, 0.3);
  const double independent = npmi(0.4, 0.4, 0.2);
  const double derived = npmi(0.5, 0.9, 0.09);
  // Same quantity in base 2 and base 10.
  const double b2 = std::log2(0.9 / 0.5) / -std::log2(0.09);
  const double b10 = std::log10(0.9 / 0.5) / -std::log10(0.09);
  const bool ok = near(complete, 1.0, 1e-9) && near(independent, 0.0, 1e-9) &&
                  near(derived, 0.2441, 1e-4) && near(derived, b2, 1e-12) &&
                  near(derived, b10, 1e-12);
  return {ok, "complete=" + fmt(complete) + " independent=" + fmt(independent) +
                  " derived=" + fmt(derived)};
}

Outcome agreement_example() {
  const Dataset ds = make_dataset({{"a b c", 1}});
  const Instance& inst = ds.instances[0];
  AttributionVector attr{inst.id, 1, {0.1, 0.5, 0.4}, AttributionSource::kImported};
  const double v = agreement(Pattern{std::nullopt, {"a", "b"}}, 1, inst, p1(0.9), attr);
  return {near(v, 0.89, 0.005), "ndcg=" + fmt(v)};
}

std::set<Tokens> windows(const Tokens& x, LengthRange r) {
  std::set<Tokens> out;
  for (int n = r.min; n <= r.max; ++n) {
    const auto len = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + len <= x.size(); ++i) {
      out.emplace(x.begin() + static_cast<std::ptrdiff_t>(i),
                  x.begin() + static_cast<std::ptrdiff_t>(i + len));
    }
  }
  return out;
}

std::vector<FrequentPattern> naive_mine(const Dataset& ds, const MinerConfig& cfg) {
  std::map<Pattern, int> support;
  for (const auto& inst : ds.instances) {
    if (inst.split != Split::kTrain) continue;
    for (const auto& w : windows(inst.doc, cfg.doc)) ++support[Pattern{std::nullopt, w}];
  }
  std::vector<FrequentPattern> out;
  for (const auto& [p, s] : support) {
    if (s >= cfg.min_support) out.push_back({p, s});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.support > b.support; });
  return out;
}

Outcome miner_oracle() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> size(1, 100);
  std::uniform_int_distribution<std::size_t> vocab(2, 30);
  std::uniform_int_distribution<int> lo(1, 3);
  std::uniform_int_distribution<int> span(0, 5);
  std::uniform_int_distribution<int> sup(1, 8);
  int mismatches = 0;
  std::size_t patterns = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Dataset ds = random_corpus(rng, size(rng), vocab(rng), 15);
    MinerConfig cfg;
    cfg.doc.min = lo(rng);
    cfg.doc.max = cfg.doc.min + span(rng);
    cfg.min_support = sup(rng);
    const auto expected = naive_mine(ds, cfg);
    patterns += expected.size();
    if (mine_frequent(ds, cfg) != expected) ++mismatches;
    if (mine_frequent(ds, cfg, Exec::kSerial) != expected) ++mismatches;
  }
  return {mismatches == 0,
          std::to_string(mismatches) + " mismatches, " + std::to_string(patterns) + " patterns"};
}

struct Run {
  PipelineResult result;
  std::string rules_json;
};

Run pipeline(const Dataset& ds, const Predictor& model, const PipelineConfig& cfg,
             Exec exec = Exec::kParallel) {
  const auto table = cache_predictions(model, ds);
  Run r{extract_rules(ds, model, table, cfg, exec), {}};
  Json meta;
  meta["model_fingerprint"] = model.fingerprint();
  meta["seed"] = cfg.causality.seed;
  std::ostringstream out;
  write_rules(meta, r.result.stats, r.result.rules, out);
  r.rules_json = out.str();
  return r;
}

bool monotone(const PipelineResult& r, double threshold, std::string& why) {
  const auto& s = r.stats;
  if (!(s.n_rules <= s.n_npmi && s.n_npmi <= s.n_frequent)) {
    why += " counts " + std::to_string(s.n_rules) + "/" + std::to_string(s.n_npmi) + "/" +
           std::to_string(s.n_frequent);
    return false;
  }
  if (s.n_rules != r.rules.size()) return false;
  for (const auto& rule : r.rules) {
    if (!(rule.mean_cf_prob > threshold)) {
      why += " rule " + rule.id + " mean " + fmt(rule.mean_cf_prob);
      return false;
    }
  }
  return true;
}

Dataset contaminated_sentiment(double rate, double bias) {
  SentimentCorpusConfig sc;
  sc.n_instances = 2000;
  const Dataset clean = sentiment_corpus(sc);
  return contaminate(clean, DecoySpec::preset("sentiment:1"), {rate, bias, 0}).dataset;
}

Outcome monotonicity() {
  std::size_t runs = 0;
  std::string why;
  bool ok = true;
  const Dataset toy = toy_corpus();
  const auto nb = NativeModel::train(toy, {});
  NativeModelConfig lc;
  lc.kind = ModelKind::kLogisticNgram;
  const auto lr = NativeModel::train(toy, lc);
  for (const Predictor* model : {static_cast<const Predictor*>(&nb), static_cast<const Predictor*>(&lr)}) {
    for (int lo : {1, 2, 3}) {
      for (double t : {0.0, 0.3, 0.5}) {
        PipelineConfig cfg;
        cfg.miner.doc = {lo, lo + 3};
        cfg.miner.min_support = 5;
        cfg.npmi_threshold = t;
        ok &= monotone(pipeline(toy, *model, cfg).result, cfg.causality.mean_threshold, why);
        ++runs;
      }
    }
  }
  for (const auto& [rate, bias] : {std::pair{0.8, 0.9}, std::pair{0.2, 0.6}}) {
    const Dataset ds = contaminated_sentiment(rate, bias);
    const auto model = NativeModel::train(ds, {});
    PipelineConfig cfg;
    ok &= monotone(pipeline(ds, model, cfg).result, cfg.causality.mean_threshold, why);
    ++runs;
  }
  return {ok, std::to_string(runs) + " runs" + why};
}

struct DecoyRuns {
  GridReport report;
  bool done = false;
};

DecoyRuns& decoy_grid() {
  static DecoyRuns runs;
  if (!runs.done) {
    SentimentCorpusConfig sc;
    sc.n_instances = 2000;
    const Dataset clean = sentiment_corpus(sc);
    const std::vector<ContaminationConfig> grid{{0.8, 0.9, 0}, {0.2, 0.6, 0}};
    runs.report = run_grid(clean, DecoySpec::preset("sentiment:1"), {}, PipelineConfig{}, grid);
    runs.done = true;
  }
  return runs;
}

Outcome decoy_retention() {
  const auto& cell = decoy_grid().report.cells.at(0);
  return {cell.retention == 1.0 && cell.detected[0] && cell.detected[1],
          "retention=" + fmt(cell.retention) + " rules=" + std::to_string(cell.stats.n_rules)};
}

Outcome stress() {
  const auto& cell = decoy_grid().report.cells.at(0);
  return {cell.stress_delta < -0.10, "clean=" + fmt(cell.clean_accuracy) + " stress=" +
                                         fmt(cell.stress_accuracy) + " delta=" + fmt(cell.stress_delta)};
}

Outcome low_contrast() {
  const auto& cells = decoy_grid().report.cells;
  return {cells.at(1).retention <= cells.at(0).retention,
          "low=" + fmt(cells.at(1).retention) + " high=" + fmt(cells.at(0).retention)};
}

Outcome toy_golden() {
  ToyCorpusConfig tc;
  tc.n_instances = 200;
  const Dataset ds = toy_corpus(tc);
  const auto model = NativeModel::train(ds, {});
  PipelineConfig cfg;
  cfg.miner.doc = {1, 10};
  const auto r = pipeline(ds, model, cfg);
  for (const auto& rule : r.result.rules) {
    const bool book = std::find(rule.pattern.doc.begin(), rule.pattern.doc.end(), "book") !=
                      rule.pattern.doc.end();
    if (book && rule.consequent == 1 && rule.mean_cf_prob > 0.7) {
      return {true, "rule \"" + rule.pattern.text() + "\" mean=" + fmt(rule.mean_cf_prob)};
    }
  }
  return {false, std::to_string(r.result.rules.size()) + " rules, none on \"book\""};
}

Outcome determinism() {
  const Dataset ds = toy_corpus();
  PipelineConfig cfg;
  cfg.miner.doc = {1, 10};
  cfg.causality.seed = 11;
  const auto m1 = NativeModel::train(ds, {});
  const auto m2 = NativeModel::train(ds, {}, Exec::kSerial);
  const auto a = pipeline(ds, m1, cfg);
  const auto b = pipeline(ds, m2, cfg);
  const auto c = pipeline(ds, m1, cfg, Exec::kSerial);
  return {!a.rules_json.empty() && a.rules_json == b.rules_json && a.rules_json == c.rules_json,
          std::to_string(a.rules_json.size()) + " bytes"};
}

Outcome kappa_cases() {
  const std::vector<std::vector<int>> agree{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {3, 0, 0}};
  const std::vector<std::vector<int>> split{{1, 1, 0}, {1, 1, 0}};
  const double k1 = fleiss_kappa(agree);
  const double k2 = fleiss_kappa(split);
  return {near(k1, 1.0, 1e-9) && near(k2, -1.0, 1e-9), "agree=" + fmt(k1) + " split=" + fmt(k2)};
}

}  // namespace

int main() {
  Runner r;
  r.run("npmi-correctness", 1, npmi_values);
  r.run("agreement-worked-example", 1, agreement_example);
  r.run("miner-oracle-equivalence", 30, miner_oracle);
  r.run("pipeline-monotonicity", 0, monotonicity);
  r.run("decoy-retention", 300, decoy_retention);
  r.run("shortcut-stress-regression", 60, stress);
  r.run("low-contamination-contrast", 0, low_contrast);
  r.run("toy-golden", 60, toy_golden);
  r.run("determinism", 0, determinism);
  r.run("fleiss-kappa", 1, kappa_cases);
  std::cout << (r.failed() == 0 ? "all criteria passed" : std::to_string(r.failed()) + " failed")
            << std::endl;
  return r.failed() == 0 ? 0 : 1;
}
