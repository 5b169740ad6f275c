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

// NPMI between pattern presence and the model's predicted label.

#ifndef SHORTCUT_SCORER_HPP_
#define SHORTCUT_SCORER_HPP_

#include <iosfwd>
#include <span>
#include <vector>

#include "shortcut/miner.hpp"
#include "shortcut/predictor.hpp"

namespace shortcut {

struct CandidateStats {
  Pattern pattern;
  int consequent = 0;
  // Maximum-likelihood estimates over train-split predictions.
  double p_y = 0.0;
  double p_y_given_s = 0.0;
  double p_s_y = 0.0;
  double npmi = 0.0;
  int support = 0;
  // Train instances that contain the pattern and are predicted as the
  // consequent, i.e. those satisfying the rule.
  int coverage = 0;
};

// log(P(y|s) / P(y)) / -log P(s,y), clamped to [-1, 1]. Returns -1 when
// P(y|s) = 0; throws UsageError when P(s,y) is 0 or 1 otherwise.
double npmi(double p_y, double p_y_given_s, double p_s_y);

// For every frequent pattern, scores both labels against the cached
// train-split predictions and keeps the better label when its NPMI reaches
// the threshold. Exact NPMI ties between labels drop the pattern. Sorted by
// NPMI descending, then support descending, then pattern.
std::vector<CandidateStats> score_candidates(
    std::span<const FrequentPattern> frequent, const PredictionTable& predictions,
    const Dataset& dataset, double npmi_threshold, Exec exec = Exec::kParallel);

// JSONL, one object per candidate with all fields.
void write_candidates(std::span<const CandidateStats> candidates,
                      std::ostream& out);
std::vector<CandidateStats> read_candidates(std::istream& in);

}  // namespace shortcut

#endif  // SHORTCUT_SCORER_HPP_
