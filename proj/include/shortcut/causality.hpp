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

// Causality check by intervention: a candidate pattern is spliced into
// neutral contexts harvested from the train split, and the rule is kept when
// the model's mean probability for the consequent over these counterfactuals
// exceeds the mean threshold.

#ifndef SHORTCUT_CAUSALITY_HPP_
#define SHORTCUT_CAUSALITY_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shortcut/miner.hpp"
#include "shortcut/predictor.hpp"
#include "shortcut/scorer.hpp"
#include "shortcut/serialize.hpp"

namespace shortcut {

// A train instance with one pattern occurrence excised. The insertion
// indices record where the occurrence started.
struct NeutralContext {
  std::size_t id = 0;
  std::string source_instance_id;
  std::optional<Tokens> query;
  std::optional<std::size_t> query_insertion;
  Tokens doc;
  std::size_t doc_insertion = 0;
  // P(y=0 | context) and |2 P(y=0 | context) - 1|.
  double p0 = 0.5;
  double neutrality = 0.0;
};

struct Counterfactual {
  std::optional<Tokens> query;
  std::optional<std::size_t> query_offset;
  Tokens doc;
  std::size_t doc_offset = 0;

  Tokens model_input() const { return join_parts(query, doc); }
};

struct CausalityConfig {
  double eps_n = 0.1;
  double mean_threshold = 0.7;
  int max_contexts = 100;
  int min_contexts = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

// Neutrality of a context prediction: |2 P(y=0|c) - 1|.
double neutrality(const Prediction& prediction);

// Excises every occurrence of every frequent pattern from every train
// instance (every combination of query and document occurrences for pair
// patterns), deduplicates identical contexts, scores them in one batch and
// keeps those with neutrality < eps_n. Contexts whose document would be
// empty are skipped. Ids are assigned in (instance, pattern, occurrence)
// order. Throws DataError when nothing is harvested.
std::vector<NeutralContext> harvest_neutral_contexts(
    const Dataset& dataset, std::span<const FrequentPattern> frequent,
    const Predictor& model, double eps_n, Exec exec = Exec::kParallel);

// Splices the pattern into the context at its insertion indices. Throws
// UsageError when the pattern and context arities differ.
Counterfactual synthesize_counterfactual(const NeutralContext& context,
                                         const Pattern& pattern);

enum class CheckVerdict { kAccepted, kRejected, kUndetermined };
std::string_view verdict_name(CheckVerdict verdict);

struct CounterfactualExample {
  std::size_t context_id = 0;
  Counterfactual counterfactual;
  double prob = 0.0;
};

struct CheckOutcome {
  CandidateStats candidate;
  CheckVerdict verdict = CheckVerdict::kUndetermined;
  double mean_cf_prob = 0.0;
  // Fraction of counterfactuals whose argmax is the consequent.
  double argmax_agreement = 0.0;
  // Sampled contexts (ascending ids) and P(consequent | counterfactual).
  std::vector<std::size_t> context_ids;
  std::vector<double> cf_probs;
  std::vector<CounterfactualExample> examples;  // first three
};

// Samples up to max_contexts contexts without replacement (seeded by the
// config seed and the candidate), predicts the counterfactuals and accepts
// iff their mean consequent probability strictly exceeds mean_threshold
// (by more than 1e-12, so rounding noise at the boundary rejects).
// Fewer than min_contexts usable contexts yields kUndetermined.
CheckOutcome causality_check(const CandidateStats& candidate,
                             std::span<const NeutralContext> contexts,
                             const Predictor& model,
                             const CausalityConfig& config);

struct CausalRule {
  std::string id;
  Pattern pattern;
  int consequent = 0;
  int support = 0;
  double npmi = 0.0;
  int coverage = 0;
  double mean_cf_prob = 0.0;
  int n_counterfactuals = 0;
  std::vector<std::size_t> context_ids;
  std::vector<double> cf_probs;
  std::vector<CounterfactualExample> examples;
};

// Stable id over (pattern, consequent, model fingerprint).
std::string rule_id(const Pattern& pattern, int consequent,
                    const std::string& model_fingerprint);

struct PipelineConfig {
  MinerConfig miner;
  double npmi_threshold = 0.5;
  CausalityConfig causality;

  void validate() const;
};

struct RuleStats {
  std::size_t n_frequent = 0;
  std::size_t n_npmi = 0;
  std::size_t n_rules = 0;
  std::size_t n_undetermined = 0;
  std::size_t n_contexts = 0;
  // Mean total pattern length (query + doc) over the rules.
  double avg_pattern_len = 0.0;
};

struct PipelineResult {
  std::vector<FrequentPattern> frequent;
  std::vector<CandidateStats> candidates;
  std::vector<NeutralContext> contexts;
  std::vector<CheckOutcome> outcomes;
  std::vector<CausalRule> rules;
  RuleStats stats;
};

// mine -> score -> harvest -> check. Rules keep the candidate order.
PipelineResult extract_rules(const Dataset& dataset, const Predictor& model,
                             const PredictionTable& predictions,
                             const PipelineConfig& config,
                             Exec exec = Exec::kParallel);

// Rules file, one JSON document:
// {"config":{...}, "stats":{...}, "rules":[...]}.
// `config` is written verbatim and should carry the config hash, seed and
// model fingerprint.
void write_rules(const Json& config, const RuleStats& stats,
                 std::span<const CausalRule> rules, std::ostream& out);

// One rule as written in the rules file.
Json rule_to_json(const CausalRule& rule);
CausalRule rule_from_json(const Json& j);

struct RulesFile {
  Json config;
  RuleStats stats;
  std::vector<CausalRule> rules;
};
RulesFile read_rules(std::istream& in);

// contexts.jsonl: a header {"config_hash":...} then one context per line.
void write_contexts(std::span<const NeutralContext> contexts,
                    const std::string& config_hash, std::ostream& out);
std::vector<NeutralContext> read_contexts(std::istream& in);
Json context_to_json(const NeutralContext& context);

}  // namespace shortcut

#endif  // SHORTCUT_CAUSALITY_HPP_
