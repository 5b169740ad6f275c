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
#include "shortcut/miner.hpp"
#include "shortcut/scorer.hpp"
#include "testing.hpp"

using namespace shortcut;
using namespace shortcut::testing;

namespace {

PredictionTable table_from_labels(const Dataset& ds, const std::vector<int>& predicted) {
  std::vector<std::string> ids;
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    ids.push_back(ds.instances[i].id);
    preds.push_back(p1(predicted[i] == 1 ? 0.8 : 0.2));
  }
  return PredictionTable(ds.name, ds.content_hash(), "fixed", ids, preds);
}

double npmi_base2(double p_y, double p_y_given_s, double p_s_y) {
  return std::log2(p_y_given_s / p_y) / -std::log2(p_s_y);
}

}  // namespace

TEST_CASE("npmi boundary values") {
  CHECK(std::abs(npmi(0.2, 1.0, 0.2) - 1.0) < 1e-9);
  CHECK(std::abs(npmi(0.35, 0.35, 0.1) - 0.0) < 1e-9);
  CHECK(npmi(0.4, 0.0, 0.0) == -1.0);
}

TEST_CASE("npmi worked value in two log bases") {
  const double natural = std::log(1.8) / -std::log(0.09);
  const double base2 = npmi_base2(0.5, 0.9, 0.09);
  CHECK(std::abs(natural - base2) < 1e-12);
  CHECK(std::abs(npmi(0.5, 0.9, 0.09) - 0.2441) < 1e-4);
  CHECK(std::abs(npmi(0.5, 0.9, 0.09) - natural) < 1e-12);
}

TEST_CASE("npmi stays in range and rejects degenerate joints") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int i = 0; i < 1000; ++i) {
    const double p_s = u(rng);
    const double p_y = u(rng);
    // Any joint compatible with the marginals.
    const double lo = std::max(1e-6, p_s + p_y - 1.0);
    const double hi = std::min(p_s, p_y);
    if (lo >= hi) continue;
    const double p_sy = lo + (hi - lo) * u(rng);
    const double v = npmi(p_y, p_sy / p_s, p_sy);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(npmi(0.5, 0.5, 0.0), UsageError);
  CHECK_THROWS_AS(npmi(0.5, 0.5, 1.0), UsageError);
}

TEST_CASE("pattern seen only with label 1 predictions") {
  const auto ds = make_dataset({{"x a", 1}, {"a y", 1}, {"b", 0}, {"c", 0}, {"b c", 1}});
  const auto table = table_from_labels(ds, {1, 1, 0, 0, 1});
  const std::vector<FrequentPattern> fps{{{std::nullopt, {"a"}}, 2}};
  const auto out = score_candidates(fps, table, ds, 0.0);
  REQUIRE(out.size() == 1);
  CHECK(out[0].consequent == 1);
  CHECK(out[0].coverage == 2);
  CHECK(out[0].support == 2);
  CHECK(out[0].p_y == doctest::Approx(0.6));
  CHECK(out[0].p_y_given_s == doctest::Approx(1.0));
  CHECK(out[0].npmi == doctest::Approx(std::log(1 / 0.6) / -std::log(0.4)));
}

TEST_CASE("independent pattern is excluded at any positive threshold") {
  const auto ds = make_dataset({{"a", 1}, {"a", 0}, {"b", 1}, {"b", 0}});
  const auto table = table_from_labels(ds, {1, 0, 1, 0});
  const std::vector<FrequentPattern> fps{{{std::nullopt, {"a"}}, 2}};
  CHECK(score_candidates(fps, table, ds, 1e-9).empty());
  // Both labels tie at 0, so the pattern is dropped even at threshold 0.
  CHECK(score_candidates(fps, table, ds, 0.0).empty());
}

TEST_CASE("scorer matches a brute-force count oracle") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    Dataset ds = random_corpus(rng, 10 + trial * 5, 5, 6);
    std::vector<int> predicted;
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < ds.instances.size(); ++i) predicted.push_back(coin(rng));
    predicted[0] = 0;
    predicted[1] = 1;
    const auto table = table_from_labels(ds, predicted);
    MinerConfig mc;
    mc.doc = {1, 2};
    mc.min_support = 2;
    const auto fps = mine_frequent(ds, mc);
    const auto out = score_candidates(fps, table, ds, -1.0, Exec::kSerial);
    const auto par = score_candidates(fps, table, ds, -1.0, Exec::kParallel);
    REQUIRE(out.size() == par.size());

    const double n = static_cast<double>(ds.instances.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
      const auto& c = out[k];
      CHECK(par[k].pattern == c.pattern);
      CHECK(par[k].npmi == c.npmi);
      int n_s = 0, n_sy = 0, n_y = 0;
      for (std::size_t i = 0; i < ds.instances.size(); ++i) {
        const bool has = contains(ds.instances[i], c.pattern);
        n_s += has;
        n_y += predicted[i] == c.consequent;
        n_sy += has && predicted[i] == c.consequent;
      }
      CHECK(c.support == n_s);
      CHECK(c.coverage == n_sy);
      CHECK(c.p_y == doctest::Approx(n_y / n));
      CHECK(c.p_s_y == doctest::Approx(n_sy / n));
      CHECK(c.p_y_given_s == doctest::Approx(static_cast<double>(n_sy) / n_s));
      CHECK(c.p_s_y <= std::min(c.p_y, n_s / n) + 1e-12);
      CHECK(c.npmi >= -1.0);
      CHECK(c.npmi <= 1.0);
      if (k > 0) CHECK(out[k - 1].npmi >= c.npmi);
    }
  }
}

TEST_CASE("candidates round trip") {
  CandidateStats c;
  c.pattern = {Tokens{"q"}, {"a", "b"}};
  c.consequent = 1;
  c.p_y = 0.25;
  c.p_y_given_s = 0.75;
  c.p_s_y = 0.125;
  c.npmi = 0.5;
  c.support = 7;
  c.coverage = 5;
  std::stringstream buf;
  write_candidates(std::vector<CandidateStats>{c}, buf);
  const auto back = read_candidates(buf);
  REQUIRE(back.size() == 1);
  CHECK(back[0].pattern == c.pattern);
  CHECK(back[0].npmi == c.npmi);
  CHECK(back[0].coverage == 5);
  std::istringstream bad("{\"doc_part\":1}\n");
  CHECK_THROWS_AS(read_candidates(bad), DataError);
}
