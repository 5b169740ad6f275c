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

// Serial reference path vs OpenMP path for each parallel kernel.

#include <benchmark/benchmark.h>

#include "shortcut/causality.hpp"
#include "shortcut/miner.hpp"
#include "shortcut/synthetic.hpp"

namespace shortcut {
namespace {

const Dataset& corpus() {
  static const Dataset ds = [] {
    SentimentCorpusConfig cfg;
    cfg.n_instances = 4000;
    return sentiment_corpus(cfg);
  }();
  return ds;
}

const NativeModel& model() {
  static const NativeModel m = NativeModel::train(corpus(), {});
  return m;
}

MinerConfig miner_config() {
  MinerConfig cfg;
  cfg.doc = {1, 4};
  cfg.min_support = 20;
  return cfg;
}

Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Exec::kSerial : Exec::kParallel;
}

void BM_MineFrequent(benchmark::State& state) {
  const auto cfg = miner_config();
  for (auto _ : state) {
    benchmark::DoNotOptimize(mine_frequent(corpus(), cfg, exec_of(state)));
  }
}

void BM_ContainingInstances(benchmark::State& state) {
  std::vector<Pattern> patterns;
  for (const auto& f : mine_frequent(corpus(), miner_config())) patterns.push_back(f.pattern);
  for (auto _ : state) {
    benchmark::DoNotOptimize(containing_instances(patterns, corpus(), Split::kTrain, exec_of(state)));
  }
}

void BM_PredictBatch(benchmark::State& state) {
  std::vector<Tokens> inputs;
  for (const auto& inst : corpus().instances) inputs.push_back(model_input(inst));
  for (auto _ : state) {
    if (exec_of(state) == Exec::kSerial) {
      benchmark::DoNotOptimize(model().predict_batch_serial(inputs));
    } else {
      benchmark::DoNotOptimize(model().predict_batch(inputs));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(inputs.size()));
}

void BM_HarvestContexts(benchmark::State& state) {
  MinerConfig cfg = miner_config();
  cfg.doc = {1, 2};
  const auto frequent = mine_frequent(corpus(), cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        harvest_neutral_contexts(corpus(), frequent, model(), 0.1, exec_of(state)));
  }
}

BENCHMARK(BM_MineFrequent)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ContainingInstances)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictBatch)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HarvestContexts)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace shortcut

BENCHMARK_MAIN();
