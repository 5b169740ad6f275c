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

#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "shortcut/explain.hpp"
#include "shortcut/synthetic.hpp"
#include "testing.hpp"

using namespace shortcut;
using namespace shortcut::testing;

namespace {

double ndcg_oracle(const std::vector<double>& s, const std::vector<std::size_t>& truth) {
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < s.size(); ++i) ranked.emplace_back(-s[i], i);
  std::sort(ranked.begin(), ranked.end());
  auto is_truth = [&](std::size_t i) {
    return std::find(truth.begin(), truth.end(), i) != truth.end();
  };
  double dcg = 0.0;
  for (std::size_t r = 0; r < truth.size() && r < ranked.size(); ++r) {
    if (is_truth(ranked[r].second)) dcg += s[ranked[r].second] / std::log2(r + 2.0);
  }
  std::vector<double> best;
  for (auto t : truth) best.push_back(s[t]);
  std::sort(best.rbegin(), best.rend());
  double idcg = 0.0;
  for (std::size_t r = 0; r < best.size(); ++r) idcg += best[r] / std::log2(r + 2.0);
  if (idcg <= 0.0) return 0.0;
  return std::min(1.0, std::max(0.0, dcg / idcg));
}

Instance instance(const std::string& doc, const std::string& id = "x") {
  Instance inst;
  inst.id = id;
  inst.doc = tokenize(doc);
  return inst;
}

AttributionVector attribution(std::vector<double> scores, int label = 1) {
  AttributionVector v;
  v.instance_id = "x";
  v.target_label = label;
  v.scores = std::move(scores);
  return v;
}

const Pattern kAB{std::nullopt, {"a", "b"}};

}  // namespace

TEST_CASE("agreement worked example") {
  const auto x = instance("a b c");
  const double v = agreement(kAB, 1, x, p1(0.9), attribution({0.1, 0.5, 0.4}));
  const double expected = 0.5 / (0.5 + 0.1 / std::log2(3.0));
  CHECK(std::abs(v - 0.89) < 0.005);
  CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("agreement is zero when the pattern ranks below k") {
  const auto x = instance("a b c d");
  const Pattern cd{std::nullopt, {"c", "d"}};
  CHECK(agreement(cd, 1, x, p1(0.9), attribution({0.4, 0.3, 0.2, 0.1})) == 0.0);
}

TEST_CASE("agreement is one when the pattern holds the top scores") {
  const auto x = instance("c a b d");
  CHECK(agreement(kAB, 1, x, p1(0.9), attribution({0.1, 0.6, 0.5, 0.2})) ==
        doctest::Approx(1.0));
}

TEST_CASE("agreement uses the leftmost occurrence") {
  const auto x = instance("a b z a b");
  const auto v = agreement(kAB, 1, x, p1(0.9), attribution({0.2, 0.1, 0.0, 0.9, 0.8}));
  CHECK(ground_truth_positions(x, kAB) == std::vector<std::size_t>{0, 1});
  CHECK(v == 0.0);
}

TEST_CASE("agreement argument checks") {
  const auto x = instance("a b c");
  CHECK_THROWS_AS(agreement(Pattern{std::nullopt, {"z"}}, 1, x, p1(0.9), attribution({1, 1, 1})),
                  UsageError);
  CHECK_THROWS_AS(agreement(kAB, 0, x, p1(0.9), attribution({1, 1, 1})), UsageError);
  CHECK_THROWS_AS(agreement(kAB, 1, x, p1(0.9), attribution({1, 1})), UsageError);
}

TEST_CASE("ndcg matches the oracle, stays in range and ignores positive scaling") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = len(rng);
    std::vector<double> s(n);
    for (auto& v : s) v = trial % 5 == 0 ? std::round(u(rng) * 2) / 2 : u(rng);
    std::uniform_int_distribution<std::size_t> start(0, n - 1);
    const std::size_t a = start(rng);
    std::uniform_int_distribution<std::size_t> width(1, n - a);
    std::vector<std::size_t> truth;
    for (std::size_t i = a, w = width(rng); i < a + w; ++i) truth.push_back(i);
    const double v = ndcg_at_k(s, truth);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(ndcg_oracle(s, truth)).epsilon(1e-12));
    std::vector<double> scaled = s;
    for (auto& x : scaled) x *= 3.5;
    CHECK(ndcg_at_k(scaled, truth) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("ndcg with non-positive ideal gain is zero") {
  const std::vector<double> s{-0.5, -0.2, 0.3};
  const std::vector<std::size_t> truth{0, 1};
  CHECK(ndcg_at_k(s, truth) == 0.0);
}

TEST_CASE("doc_only ranks document positions only") {
  Instance x;
  x.id = "x";
  x.query = Tokens{"q1", "q2"};
  x.doc = Tokens{"a", "b", "c"};
  const auto attr = attribution({0.9, 0.9, 0.5, 0.1, 0.4});
  const Pattern pair{Tokens{"q1"}, {"a"}};
  CHECK(ground_truth_positions(x, pair) == std::vector<std::size_t>{0, 2});
  CHECK(ground_truth_positions(x, pair, true) == std::vector<std::size_t>{2});
  CHECK(agreement(pair, 1, x, p1(0.9), attr, true) == doctest::Approx(1.0));
  const Pattern doc_a{std::nullopt, {"a"}};
  CHECK(agreement(doc_a, 1, x, p1(0.9), attr, false) == 0.0);
  CHECK(agreement(doc_a, 1, x, p1(0.9), attr, true) == doctest::Approx(1.0));
}

TEST_CASE("occlusion attribution") {
  const auto x = instance("good plain words");
  FnPredictor model([](const Tokens& t) {
    return p1(count_token(t, "good") ? 0.9 : 0.5);
  });
  const auto v = occlusion_attribute(model, x);
  CHECK(v.target_label == 1);
  REQUIRE(v.scores.size() == 3);
  CHECK(v.scores[0] == doctest::Approx(0.4));
  CHECK(v.scores[1] == 0.0);
  CHECK(v.scores[2] == 0.0);
  CHECK(v.source == AttributionSource::kOcclusion);

  const auto single = occlusion_attribute(model, instance("good"));
  REQUIRE(single.scores.size() == 1);
  CHECK(single.scores[0] == doctest::Approx(0.4));
}

TEST_CASE("occlusion on two-part instances skips the separator") {
  Instance x;
  x.id = "q";
  x.query = Tokens{"good", "q"};
  x.doc = Tokens{"d"};
  FnPredictor model([](const Tokens& t) {
    CHECK(count_token(t, std::string(kPartSeparator)) == 1);
    return p1(count_token(t, "good") ? 0.8 : 0.5);
  });
  const auto v = occlusion_attribute(model, x);
  REQUIRE(v.scores.size() == 3);
  CHECK(v.scores[0] == doctest::Approx(0.3));
}

TEST_CASE("occlusion on naive Bayes favors label-1 tokens") {
  const auto ds = make_dataset({{"great fun", 1}, {"great plot", 1}, {"dull plot", 0},
                                {"dull fun", 0}});
  const auto model = NativeModel::train(ds, {});
  const auto v = occlusion_attribute(model, instance("great plot"));
  CHECK(v.target_label == 1);
  CHECK(v.scores[0] > 0.0);

  std::vector<const Instance*> all;
  for (const auto& inst : ds.instances) all.push_back(&inst);
  const auto batch = occlusion_attribute_all(model, all);
  REQUIRE(batch.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto one = occlusion_attribute(model, ds.instances[i]);
    CHECK(batch[i].scores == one.scores);
    CHECK(batch[i].instance_id == ds.instances[i].id);
  }
}

TEST_CASE("attribution import") {
  const auto ds = make_dataset({{"a b c d e f", 1}, {"x y", 0}});
  std::istringstream in(
      "{\"id\":\"i1\",\"target_label\":0,\"scores\":[0.1,0.2]}\n"
      "{\"id\":\"i0\",\"target_label\":1,\"scores\":[1,2,3,4,5]}\n"
      "\n"
      "{\"id\":\"nope\",\"target_label\":1,\"scores\":[1]}\n"
      "{\"id\":\"i1\",\"target_label\":4,\"scores\":[1,2]}\n"
      "not json\n");
  const auto r = import_attributions(in, ds);
  REQUIRE(r.vectors.size() == 1);
  CHECK(r.vectors[0].instance_id == "i1");
  CHECK(r.vectors[0].source == AttributionSource::kImported);
  REQUIRE(r.issues.size() == 4);
  CHECK(r.issues[0].line == 2);
  CHECK(r.issues[0].id == "i0");
  CHECK(r.issues[0].message.find("expected 6") != std::string::npos);
  CHECK(r.issues[1].line == 4);
  CHECK(r.issues[3].line == 6);

  std::istringstream empty("");
  const auto none = import_attributions(empty, ds);
  CHECK(none.vectors.empty());
  CHECK(none.issues.empty());
  CHECK_THROWS_AS(import_attributions(std::filesystem::path("/no/such/file"), ds), DataError);
}

TEST_CASE("mean agreement aggregates per rule") {
  const auto ds = make_dataset({{"a b c", 1}, {"c a b", 1}, {"a b", 0}});
  const std::vector<std::string> ids{"i0", "i1", "i2"};
  const PredictionTable table("t", ds.content_hash(), "m", ids, {p1(0.9), p1(0.9), p1(0.9)});
  AttributionIndex attr;
  attr["i0"] = {"i0", 1, {0.5, 0.4, 0.0}, AttributionSource::kImported};
  attr["i1"] = {"i1", 1, {0.4, 0.5, 0.1}, AttributionSource::kImported};
  const std::vector<ScoredRule> rules{{"r1", kAB, 1, 3}, {"r2", {std::nullopt, {"zz"}}, 1, 1}};

  const auto report = mean_agreement(rules, ds, table, attr);
  REQUIRE(report.rows.size() == 1);
  REQUIRE(report.excluded.size() == 1);
  CHECK(report.excluded[0].id == "r2");
  const double second = 0.5 / (0.5 + 0.1 / std::log2(3.0));
  CHECK(report.rows[0].n_satisfying == 2);
  CHECK(report.rows[0].mean == doctest::Approx((1.0 + second) / 2));
  CHECK(report.rows[0].variance == doctest::Approx(std::pow((1.0 - second) / 2, 2)));
  CHECK(report.mean == doctest::Approx(report.rows[0].mean));
  CHECK(report.variance == 0.0);

  const auto serial = mean_agreement(rules, ds, table, attr, {}, Exec::kSerial);
  CHECK(serial.mean == report.mean);
}

TEST_CASE("top by coverage is stable") {
  const std::vector<ScoredRule> rules{{"a", {}, 1, 5}, {"b", {}, 1, 9}, {"c", {}, 0, 5}, {"d", {}, 0, 1}};
  const auto top = top_by_coverage(rules, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].id == "b");
  CHECK(top[1].id == "a");
  CHECK(top[2].id == "c");
  CHECK(top_by_coverage(rules, 10).size() == 4);
}

TEST_CASE("ablation reports three columns") {
  const Dataset ds = toy_corpus();
  const auto model = NativeModel::train(ds, {});
  const auto table = cache_predictions(model, ds);
  PipelineConfig cfg;
  cfg.miner.doc = {1, 3};
  const auto res = extract_rules(ds, model, table, cfg);
  const auto full = scored_rules(res.rules);
  const auto cands = scored_rules(res.candidates, model.fingerprint());

  std::vector<const Instance*> train;
  for (const auto& inst : ds.instances) {
    if (inst.split == Split::kTrain) train.push_back(&inst);
  }
  AttributionIndex attr;
  for (auto& v : occlusion_attribute_all(model, train)) attr.emplace(v.instance_id, v);

  const auto report = ablation(cands, full, 15, ds, table, attr);
  CHECK(!report.full.rows.empty());
  CHECK(report.intersection.rows.size() <= report.full.rows.size());
  for (const auto* r : {&report.npmi_only, &report.full, &report.intersection}) {
    CHECK(r->mean >= 0.0);
    CHECK(r->mean <= 1.0);
  }
  const auto j = to_json(report);
  CHECK(j.contains("npmi_only"));
  CHECK(j.contains("full"));
  CHECK(j.contains("intersection"));
}
