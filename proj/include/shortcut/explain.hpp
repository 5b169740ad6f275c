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

// Local token attributions and the nDCG agreement between a rule and them.

#ifndef SHORTCUT_EXPLAIN_HPP_
#define SHORTCUT_EXPLAIN_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shortcut/causality.hpp"
#include "shortcut/corpus.hpp"
#include "shortcut/predictor.hpp"
#include "shortcut/serialize.hpp"

namespace shortcut {

enum class AttributionSource { kOcclusion, kImported };

// One score per token of query ++ doc (the part separator is not a token).
struct AttributionVector {
  std::string instance_id;
  int target_label = 0;
  std::vector<double> scores;
  AttributionSource source = AttributionSource::kOcclusion;
};

// a_i = P(y^|x) - P(y^|x without token i) with y^ the model's argmax on x.
// A single-token instance gets [P(y^|x) - 0.5].
AttributionVector occlusion_attribute(const Predictor& model,
                                      const Instance& instance);

// Batched form over many instances; one predict_batch call for all
// occlusions.
std::vector<AttributionVector> occlusion_attribute_all(
    const Predictor& model, std::span<const Instance* const> instances);

struct ImportIssue {
  std::size_t line = 0;
  std::string id;
  std::string message;
};

struct ImportResult {
  std::vector<AttributionVector> vectors;
  std::vector<ImportIssue> issues;
};

// JSONL {"id","target_label","scores":[...]}. Records with an unknown id, a
// bad label or a score count that differs from the instance's token count
// are reported in `issues` and skipped.
ImportResult import_attributions(std::istream& in, const Dataset& dataset);
ImportResult import_attributions(const std::filesystem::path& path,
                                 const Dataset& dataset);

// Positions (over query ++ doc) of the leftmost occurrence of the pattern,
// taken per part for pairs. With doc_only the positions cover the document
// part of the pattern only. Throws UsageError when the pattern is absent.
std::vector<std::size_t> ground_truth_positions(const Instance& instance,
                                                const Pattern& pattern,
                                                bool doc_only = false);

// nDCG@k with k = |truth|. Tokens are ranked by score descending, ties by
// ascending index; gains are the scores of ground-truth tokens. Returns 0
// when IDCG <= 0. Scores outside `ranked` are ignored when it is non-empty.
// The result is clamped to [0, 1].
double ndcg_at_k(std::span<const double> scores,
                 std::span<const std::size_t> truth,
                 std::span<const std::size_t> ranked = {});

// Agreement of one satisfying instance with a rule. Throws UsageError when
// the instance does not contain the pattern, its prediction differs from the
// consequent, or the attribution length does not match.
double agreement(const Pattern& pattern, int consequent,
                 const Instance& instance, const Prediction& prediction,
                 const AttributionVector& attribution, bool doc_only = false);

// A (pattern, consequent) pair scored for agreement: a causal rule or an
// NPMI-only candidate.
struct ScoredRule {
  std::string id;
  Pattern pattern;
  int consequent = 0;
  int coverage = 0;
};

std::vector<ScoredRule> scored_rules(std::span<const CausalRule> rules);
std::vector<ScoredRule> scored_rules(std::span<const CandidateStats> candidates,
                                     const std::string& model_fingerprint);

// First n by coverage descending; equal coverage keeps the input order.
std::vector<ScoredRule> top_by_coverage(std::span<const ScoredRule> rules,
                                        std::size_t n);

// Indices into dataset.instances of the instances of `split` that contain
// the pattern and are predicted as the consequent.
std::vector<std::size_t> satisfying_instances(const Pattern& pattern,
                                              int consequent,
                                              const Dataset& dataset,
                                              const PredictionTable& predictions,
                                              Split split);

struct AgreementOptions {
  Split split = Split::kTrain;
  bool doc_only = false;
};

struct AgreementRow {
  ScoredRule rule;
  std::size_t n_satisfying = 0;
  double mean = 0.0;
  double variance = 0.0;
};

struct AgreementReport {
  std::vector<AgreementRow> rows;
  // Rules without any satisfying instance that has an attribution.
  std::vector<ScoredRule> excluded;
  // Mean and population variance of the per-rule means.
  double mean = 0.0;
  double variance = 0.0;
};

using AttributionIndex = std::unordered_map<std::string, AttributionVector>;

// Per-rule mean and population variance of agreement over the satisfying
// instances that have an attribution.
AgreementReport mean_agreement(std::span<const ScoredRule> rules,
                               const Dataset& dataset,
                               const PredictionTable& predictions,
                               const AttributionIndex& attributions,
                               const AgreementOptions& options = {},
                               Exec exec = Exec::kParallel);

struct AblationReport {
  AgreementReport npmi_only;
  AgreementReport full;
  AgreementReport intersection;
};

// Top-n by coverage of the NPMI candidates and of the causal rules, and the
// pairs present in both top-n sets.
AblationReport ablation(std::span<const ScoredRule> candidates,
                        std::span<const ScoredRule> rules, std::size_t top_n,
                        const Dataset& dataset,
                        const PredictionTable& predictions,
                        const AttributionIndex& attributions,
                        const AgreementOptions& options = {},
                        Exec exec = Exec::kParallel);

Json to_json(const AgreementReport& report);
Json to_json(const AblationReport& report);

}  // namespace shortcut

#endif  // SHORTCUT_EXPLAIN_HPP_
