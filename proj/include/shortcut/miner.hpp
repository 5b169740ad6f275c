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

// Frequent contiguous n-gram mining over the train split.

#ifndef SHORTCUT_MINER_HPP_
#define SHORTCUT_MINER_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "shortcut/corpus.hpp"

namespace shortcut {

struct LengthRange {
  int min = 1;
  int max = 1;
};

struct MinerConfig {
  LengthRange doc{4, 10};
  // Required for two-part corpora; falls back to `doc` when absent.
  std::optional<LengthRange> query;
  int min_support = 20;

  void validate() const;

  // Per-corpus defaults: "movies" (doc 4-10, support 20), "sst2" (2-10,
  // 100), "multirc" (query 3-10, doc 4-10, 200), "climate_fever" (2-10 both,
  // 200).
  static MinerConfig preset(std::string_view name);
};

struct FrequentPattern {
  Pattern pattern;
  // Number of train instances containing the pattern.
  int support = 0;

  bool operator==(const FrequentPattern&) const = default;
};

// Every contiguous n-gram (or query/doc pair of n-grams) of the train split
// whose length lies in the configured range and whose support reaches
// min_support. Sorted by support descending, then pattern ascending.
//
// Counting is level-wise: an n-gram is only counted where both its
// (n-1)-prefix and (n-1)-suffix are frequent, which is exact by
// anti-monotonicity of support.
std::vector<FrequentPattern> mine_frequent(const Dataset& dataset,
                                           const MinerConfig& config,
                                           Exec exec = Exec::kParallel);

// |{x in split : contains(x, pattern)}|.
int count_support(const Pattern& pattern, const Dataset& dataset, Split split);

// For each pattern, the ascending indices into dataset.instances of the
// instances of `split` that contain it.
std::vector<std::vector<std::uint32_t>> containing_instances(
    std::span<const Pattern> patterns, const Dataset& dataset, Split split,
    Exec exec = Exec::kParallel);

// JSONL {"doc_part":[...],"query_part":[...]|null,"support":n}.
void write_frequent(std::span<const FrequentPattern> patterns, std::ostream& out);

}  // namespace shortcut

#endif  // SHORTCUT_MINER_HPP_
