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

// Decoy injection: contaminate train/validation with label-paired token
// sequences, then measure whether the rule pipeline recovers them.

#ifndef SHORTCUT_DECOY_HPP_
#define SHORTCUT_DECOY_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/causality.hpp"
#include "shortcut/corpus.hpp"
#include "shortcut/predictor.hpp"
#include "shortcut/serialize.hpp"

namespace shortcut {

enum class Placement { kPrependDoc, kPrependBoth };
std::string_view placement_name(Placement placement);
Placement parse_placement(std::string_view name);

struct DecoySpec {
  Tokens decoy0;  // target label 0
  Tokens decoy1;  // target label 1
  Placement placement = Placement::kPrependDoc;

  const Tokens& decoy(int label) const { return label == 0 ? decoy0 : decoy1; }
  // Non-empty decoys, neither contained in the other. Shared tokens are
  // allowed ("is" in the first sentiment pair).
  void validate() const;

  // "sentiment:1".."sentiment:4" prepend to documents; "qa:1".."qa:4"
  // prepend to queries and documents. "movies", "sst2", "multirc" and
  // "climate_fever" are accepted as aliases. The row defaults to 1.
  static DecoySpec preset(std::string_view name);
  static std::vector<std::string> preset_names();
};

struct ContaminationConfig {
  double rate = 0.8;
  double bias = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ManifestEntry {
  std::string id;
  Split split = Split::kTrain;
  int gold_label = 0;
  int decoy = 0;  // which decoy was prepended
  bool dominant = false;
};

struct Contamination {
  Dataset dataset;
  std::vector<ManifestEntry> manifest;
};

// Selects floor(rate * |split|) instances of train and of validation
// independently (seeded, uniform without replacement). round(bias * m) of
// them get the decoy targeting their gold label, the rest the other decoy.
// The test split is left untouched. Throws UsageError when a non-empty split
// would receive no decoy, or when prepend_both is used on a one-part corpus.
Contamination contaminate(const Dataset& dataset, const DecoySpec& spec,
                          const ContaminationConfig& config);

// Prepends a decoy according to the placement.
void apply_decoy(Instance& instance, const Tokens& decoy, Placement placement);

// JSONL {"id","split","gold_label","decoy","dominant"}.
void write_manifest(std::span<const ManifestEntry> manifest, std::ostream& out);

enum class MatchMode { kExact, kRelaxed };

// Fraction of the two decoys found among the rules with the decoy's target
// label as consequent. Exact mode needs pattern == decoy (on both parts for
// prepend_both); relaxed mode accepts a pattern containing the decoy.
double retention(std::span<const CausalRule> rules, const DecoySpec& spec,
                 MatchMode mode = MatchMode::kExact);
// Per-decoy detection flags, same semantics.
std::array<bool, 2> detected_decoys(std::span<const CausalRule> rules,
                                    const DecoySpec& spec,
                                    MatchMode mode = MatchMode::kExact);

// Fraction of instances of `split` whose prediction equals the gold label.
double accuracy(const Predictor& model, const Dataset& dataset,
                Split split = Split::kTest);

struct StressResult {
  double clean_accuracy = 0.0;
  double stress_accuracy = 0.0;
  double delta = 0.0;  // stress - clean
};

// Prepends to each test instance the decoy whose target opposes its gold
// label and compares accuracy with the clean test split.
StressResult shortcut_stress_eval(const Predictor& model, const Dataset& dataset,
                                  const DecoySpec& spec);

struct GridCell {
  ContaminationConfig contamination;
  double retention = 0.0;
  std::array<bool, 2> detected{false, false};
  double clean_accuracy = 0.0;
  double stress_accuracy = 0.0;
  double stress_delta = 0.0;
  RuleStats stats;
  // Set when the pipeline could not run, e.g. no neutral context.
  std::string note;
};

struct GridReport {
  double baseline_clean_accuracy = 0.0;
  std::vector<GridCell> cells;
};

// rate x bias settings; the seed is shared by every cell.
std::vector<ContaminationConfig> make_grid(std::span<const double> rates,
                                           std::span<const double> biases,
                                           std::uint64_t seed);

// Per cell: contaminate, train the native model, extract rules, measure
// retention and clean-test/stress accuracy. The baseline is the same model
// trained on the clean corpus.
GridReport run_grid(const Dataset& dataset, const DecoySpec& spec,
                    const NativeModelConfig& model_config,
                    const PipelineConfig& pipeline,
                    std::span<const ContaminationConfig> grid,
                    MatchMode mode = MatchMode::kExact,
                    Exec exec = Exec::kParallel);

Json to_json(const GridReport& report);

}  // namespace shortcut

#endif  // SHORTCUT_DECOY_HPP_
