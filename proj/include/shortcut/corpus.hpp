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

// Binary text classification corpora: tokenization, instances, patterns and
// the JSONL dataset format.

#ifndef SHORTCUT_CORPUS_HPP_
#define SHORTCUT_CORPUS_HPP_

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/common.hpp"

namespace shortcut {

// Joins the query and document parts of a two-part instance when building
// model inputs. tokenize() never produces it since it splits punctuation.
inline constexpr std::string_view kPartSeparator = "||";

enum class Split { kTrain, kValidation, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

// Lowercases ASCII letters, splits on whitespace and isolates every ASCII
// punctuation character as its own token. Non-ASCII bytes are word
// characters.
Tokens tokenize(std::string_view text);

struct Instance {
  std::string id;
  std::optional<Tokens> query;
  Tokens doc;
  int label = 0;
  Split split = Split::kTrain;

  bool two_part() const { return query.has_value(); }
  // Number of tokens over query ++ doc.
  std::size_t token_count() const;
};

struct Dataset {
  std::string name;
  std::vector<Instance> instances;
  bool two_part = false;
  // Sorted distinct tokens over every part of every instance.
  std::vector<std::string> vocabulary;
  std::array<std::string, 2> label_names{"0", "1"};

  // Recomputes two_part and vocabulary and checks the dataset invariants.
  // Throws DataError on violation.
  void finalize();

  // Copy restricted to one split.
  Dataset only(Split split) const;
  std::size_t count(Split split) const;
  const Instance* find(std::string_view id) const;

  // Stable content hash over ids, tokens, labels and splits.
  std::string content_hash() const;
};

// A contiguous n-gram over the document, optionally paired with a contiguous
// n-gram over the query for two-part corpora.
struct Pattern {
  std::optional<Tokens> query;
  Tokens doc;

  std::size_t size() const { return doc.size() + (query ? query->size() : 0); }
  bool two_part() const { return query.has_value(); }
  // "a b" for one-part patterns, "(q1 q2, d1 d2)" for pairs.
  std::string text() const;

  auto operator<=>(const Pattern&) const = default;
  bool operator==(const Pattern&) const = default;
};

// Start index of the leftmost contiguous occurrence of needle in haystack.
std::optional<std::size_t> find_first(const Tokens& haystack,
                                      const Tokens& needle,
                                      std::size_t from = 0);
std::vector<std::size_t> find_all(const Tokens& haystack, const Tokens& needle);

// True iff the pattern occurs contiguously in the instance (both parts for a
// pair pattern). A pair pattern on a one-part instance is a UsageError; a
// document-only pattern on a two-part instance checks the document only.
bool contains(const Instance& instance, const Pattern& pattern);

// query ++ separator ++ doc for two-part inputs, doc otherwise.
Tokens join_parts(const std::optional<Tokens>& query, const Tokens& doc);
inline Tokens model_input(const Instance& instance) {
  return join_parts(instance.query, instance.doc);
}

// Reads the JSONL format: one object per line with id, optional query,
// document, label (0|1) and split. Blank lines are ignored. Throws DataError
// naming the offending line.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::istream& in, std::string name);

// Writes the JSONL format with token sequences joined by single spaces.
void save_dataset(const Dataset& dataset, std::ostream& out);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace shortcut

#endif  // SHORTCUT_CORPUS_HPP_
