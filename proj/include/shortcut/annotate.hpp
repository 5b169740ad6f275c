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

// Human verdicts on rules and Fleiss' kappa over them.

#ifndef SHORTCUT_ANNOTATE_HPP_
#define SHORTCUT_ANNOTATE_HPP_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shortcut/common.hpp"
#include "shortcut/serialize.hpp"

namespace shortcut {

enum class Verdict { kWrongReason, kRightReason, kCannotTell };
inline constexpr int kNumVerdicts = 3;
std::string_view verdict_name(Verdict verdict);
Verdict parse_verdict(std::string_view name);

struct Annotation {
  std::string rule_id;
  std::string annotator;
  Verdict verdict = Verdict::kCannotTell;
  std::string ts;  // ISO-8601 UTC
};

using Cell = std::pair<std::string, std::string>;  // (rule_id, annotator)

class IncompleteMatrix : public DataError {
 public:
  explicit IncompleteMatrix(std::vector<Cell> missing);
  const std::vector<Cell>& missing() const { return missing_; }

 private:
  std::vector<Cell> missing_;
};

// counts[i][j]: raters that put item i in category j. Every row must sum to
// the same n >= 2 and there must be at least two items. Returns 1 when all
// ratings fall in a single category.
double fleiss_kappa(std::span<const std::vector<int>> counts);

struct KappaReport {
  std::vector<std::string> rule_ids;
  std::vector<std::string> annotators;
  std::optional<double> value;
  std::vector<Cell> missing;
};

Json to_json(const KappaReport& report);

// Append-only JSONL journal {"rule_id","annotator","verdict","ts"} replayed
// with last-write-wins on open. Writes are serialized; reads see a
// consistent snapshot.
class AnnotationStore {
 public:
  // Loads the journal if it exists. Throws DataError on a malformed line.
  AnnotationStore(std::filesystem::path journal,
                  std::vector<std::string> known_rule_ids);

  // Upserts and appends to the journal. Throws UsageError for an unknown
  // rule id or an empty annotator. An empty ts is stamped with the current
  // time.
  Annotation record(Annotation annotation);

  std::optional<Annotation> get(const std::string& rule_id,
                                const std::string& annotator) const;
  // Sorted by (rule_id, annotator).
  std::vector<Annotation> all() const;
  std::vector<std::string> annotators() const;
  std::vector<std::string> annotated_rules() const;
  bool knows(const std::string& rule_id) const;

  // Kappa over the selected rules and annotators. Empty selections default
  // to every annotated known rule and every annotator seen. Throws
  // IncompleteMatrix when a selected cell has no verdict and UsageError when
  // fewer than two rules or annotators are selected.
  double kappa(std::vector<std::string> rule_ids = {},
               std::vector<std::string> annotators = {}) const;
  // Same selection, reporting missing cells instead of throwing.
  KappaReport kappa_report(std::vector<std::string> rule_ids = {},
                           std::vector<std::string> annotators = {}) const;

  // Rewrites the journal with one line per (rule, annotator).
  void compact();
  void export_to(std::ostream& out) const;
  // Records every line of a previously exported journal.
  std::size_t import_from(std::istream& in);

  const std::filesystem::path& journal() const { return journal_; }

 private:
  void append(const Annotation& annotation);

  std::filesystem::path journal_;
  std::set<std::string, std::less<>> known_;
  std::map<Cell, Annotation> entries_;
  mutable std::shared_mutex mutex_;
};

Json to_json(const Annotation& annotation);
Annotation annotation_from_json(const nlohmann::json& j);

}  // namespace shortcut

#endif  // SHORTCUT_ANNOTATE_HPP_
