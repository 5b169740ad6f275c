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
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "shortcut/predictor.hpp"
#include "testing.hpp"

using namespace shortcut;
using namespace shortcut::testing;

namespace {

NativeModelConfig nb(std::vector<int> orders = {1}) {
  NativeModelConfig c;
  c.ngram_orders = std::move(orders);
  return c;
}

NativeModelConfig logistic(std::vector<int> orders = {1}) {
  NativeModelConfig c;
  c.kind = ModelKind::kLogisticNgram;
  c.ngram_orders = std::move(orders);
  c.l2 = 0.05;
  c.tolerance = 1e-9;
  c.max_iterations = 5000;
  return c;
}

// Multinomial NB by direct counting.
double nb_logit_oracle(const Dataset& ds, const Tokens& x, std::vector<int> orders,
                       double alpha) {
  std::map<std::string, std::array<double, 2>> counts;
  std::array<double, 2> totals{0, 0};
  std::array<double, 2> docs{0, 0};
  for (const auto& inst : ds.instances) {
    if (inst.split != Split::kTrain) continue;
    docs[inst.label] += 1;
    for (const auto& f : ngram_features(model_input(inst), orders)) {
      counts[f][inst.label] += 1;
      totals[inst.label] += 1;
    }
  }
  const double v = static_cast<double>(counts.size());
  double z = std::log(docs[1] / docs[0]);
  for (const auto& f : ngram_features(x, orders)) {
    auto it = counts.find(f);
    if (it == counts.end()) continue;
    z += std::log((it->second[1] + alpha) / (totals[1] + alpha * v)) -
         std::log((it->second[0] + alpha) / (totals[0] + alpha * v));
  }
  return z;
}

}  // namespace

TEST_CASE("prediction normalization") {
  const auto p = Prediction::from_probs(2.0, 6.0);
  CHECK(p.probs[0] == doctest::Approx(0.25));
  CHECK(p.predicted == 1);
  CHECK(Prediction::from_probs(1, 1).predicted == 0);
  CHECK_THROWS_AS(Prediction::from_probs(-1, 2), DataError);
  CHECK_THROWS_AS(Prediction::from_probs(0, 0), DataError);
  CHECK_THROWS_AS(Prediction::from_probs(NAN, 1), DataError);
  for (double z : {-800.0, -3.0, 0.0, 1e-12, 5.0, 800.0}) {
    const auto q = Prediction::from_logit(z);
    CHECK(q.probs[0] + q.probs[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.probs[0] >= 0.0);
    CHECK(q.probs[1] <= 1.0);
    CHECK(q.predicted == (z > 0 ? 1 : 0));
  }
}

TEST_CASE("naive Bayes two-document example") {
  const Dataset ds = make_dataset({{"good", 1}, {"bad", 0}});
  const auto model = NativeModel::train(ds, nb());
  // P(good|1) = 2/3, P(good|0) = 1/3, equal priors.
  const auto p = model.predict({"good"});
  CHECK(p.probs[1] == doctest::Approx(2.0 / 3.0));
  CHECK(p.predicted == 1);
  // Unseen tokens leave the prior.
  const auto prior = model.predict({"unseen", "words"});
  CHECK(prior.probs[1] == doctest::Approx(0.5));
}

TEST_CASE("naive Bayes unseen input equals class prior") {
  const Dataset ds = make_dataset({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 0}});
  const auto model = NativeModel::train(ds, nb());
  CHECK(model.predict({"zzz"}).probs[1] == doctest::Approx(0.75));
}

TEST_CASE("naive Bayes matches counting oracle on random corpora") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset ds = random_corpus(rng, 40, 12, 8);
    for (std::size_t i = 0; i < ds.instances.size(); ++i) {
      ds.instances[i].label = static_cast<int>(i % 2);
    }
    const std::vector<int> orders = trial % 2 ? std::vector<int>{1, 2} : std::vector<int>{1, 3};
    auto cfg = nb(orders);
    cfg.alpha = 0.5 + trial * 0.1;
    const auto model = NativeModel::train(ds, cfg);
    std::sort(cfg.ngram_orders.begin(), cfg.ngram_orders.end());
    Dataset probe = random_corpus(rng, 10, 14, 9);
    for (const auto& inst : probe.instances) {
      CHECK(model.logit(inst.doc) ==
            doctest::Approx(nb_logit_oracle(ds, inst.doc, cfg.ngram_orders, cfg.alpha))
                .epsilon(1e-9));
    }
  }
}

TEST_CASE("logistic model reaches a stationary point") {
  std::mt19937_64 rng(5);
  Dataset ds = random_corpus(rng, 60, 8, 6);
  for (auto& inst : ds.instances) {
    inst.label = count_token(inst.doc, "w1") > count_token(inst.doc, "w2") ? 1 : 0;
  }
  ds.instances[0].label = 1;
  ds.instances[1].label = 0;
  const auto cfg = logistic();
  const auto model = NativeModel::train(ds, cfg);
  CHECK(model.final_gradient_norm() < 1e-6);

  // Recover weights from logits: w_f = logit([f]) - logit([unseen]).
  const double b = model.logit({"never-seen"});
  std::map<std::string, double> w;
  for (const auto& v : ds.vocabulary) w[v] = model.logit({v}) - b;

  const double n = static_cast<double>(ds.instances.size());
  double grad_b = 0.0;
  std::map<std::string, double> grad;
  for (const auto& inst : ds.instances) {
    const double r = 1.0 / (1.0 + std::exp(-model.logit(inst.doc))) - inst.label;
    grad_b += r / n;
    for (const auto& t : inst.doc) grad[t] += r / n;
  }
  CHECK(std::abs(grad_b) < 1e-5);
  for (const auto& [f, g] : grad) CHECK(std::abs(g + cfg.l2 * w[f]) < 1e-5);
}

TEST_CASE("training errors") {
  CHECK_THROWS_AS(NativeModel::train(make_dataset({{"a", 1, Split::kTest}}), nb()), DataError);
  CHECK_THROWS_AS(NativeModel::train(make_dataset({{"a", 1}, {"b", 1}}), nb()), DataError);
  auto bad = nb();
  bad.alpha = 0;
  CHECK_THROWS_AS(NativeModel::train(make_dataset({{"a", 1}, {"b", 0}}), bad), UsageError);
  CHECK_THROWS_AS(parse_model_kind("svm"), UsageError);
}

TEST_CASE("training is deterministic") {
  std::mt19937_64 rng(3);
  const Dataset ds = random_corpus(rng, 50, 10, 6);
  for (const auto& cfg : {nb({1, 2}), logistic({1, 2})}) {
    const auto a = NativeModel::train(ds, cfg, Exec::kSerial);
    const auto b = NativeModel::train(ds, cfg, Exec::kParallel);
    CHECK(a.fingerprint() == b.fingerprint());
    for (const auto& inst : ds.instances) CHECK(a.logit(inst.doc) == b.logit(inst.doc));
  }
  CHECK(NativeModel::train(ds, nb()).fingerprint() !=
        NativeModel::train(ds, nb({1, 2})).fingerprint());
}

TEST_CASE("batch prediction is pure and matches the serial path") {
  std::mt19937_64 rng(9);
  const Dataset ds = random_corpus(rng, 80, 15, 10);
  const auto model = NativeModel::train(ds, nb({1, 2}));
  std::vector<Tokens> inputs;
  for (const auto& inst : ds.instances) inputs.push_back(inst.doc);
  const auto par = model.predict_batch(inputs);
  const auto ser = model.predict_batch_serial(inputs);
  REQUIRE(par.size() == inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    CHECK(par[i].probs == ser[i].probs);
    CHECK(par[i].probs == model.predict(inputs[i]).probs);
    CHECK(par[i].probs[0] + par[i].probs[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("prediction cache") {
  TempDir dir;
  std::mt19937_64 rng(2);
  const Dataset ds = random_corpus(rng, 30, 6, 5);
  const auto model = NativeModel::train(ds, nb());
  const auto path = dir / "pred.jsonl";
  const auto table = cache_predictions(model, ds, path);
  CHECK(table.size() == ds.instances.size());
  const std::string first = read_file(path);
  for (const auto& inst : ds.instances) {
    CHECK(table.at(inst.id).predicted == model.predict(inst.doc).predicted);
  }
  const auto again = cache_predictions(model, ds, path);
  CHECK(read_file(path) == first);
  CHECK(again.at("r0").probs == table.at("r0").probs);

  // A different model invalidates the cache.
  auto cfg = nb();
  cfg.alpha = 3.0;
  const auto other = NativeModel::train(ds, cfg);
  const auto rebuilt = cache_predictions(other, ds, path);
  CHECK(rebuilt.fingerprint() == other.fingerprint());
  CHECK(read_file(path) != first);

  std::stringstream buf;
  table.write(buf);
  const auto back = PredictionTable::read(buf);
  CHECK(back.ids() == table.ids());
  CHECK(back.fingerprint() == table.fingerprint());
  CHECK_THROWS_AS(table.at("missing"), DataError);
}

TEST_CASE("ngram features") {
  const std::vector<int> orders{1, 2};
  CHECK(ngram_features({"a", "b", "c"}, orders) ==
        std::vector<std::string>{"a", "b", "c", "a b", "b c"});
  const std::vector<int> tri{3};
  CHECK(ngram_features({"a", "b"}, tri).empty());
}
