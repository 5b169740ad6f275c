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

#include "shortcut/annotate.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>

namespace shortcut {
namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string describe(const std::vector<Cell>& missing) {
  std::ostringstream out;
  out << "incomplete annotation matrix; missing " << missing.size() << " cell(s):";
  for (const auto& [rule, annotator] : missing) {
    out << " (" << rule << ", " << annotator << ")";
  }
  return out.str();
}

}  // namespace

std::string_view verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::kWrongReason:
      return "wrong_reason";
    case Verdict::kRightReason:
      return "right_reason";
    case Verdict::kCannotTell:
      return "cannot_tell";
  }
  return "cannot_tell";
}

Verdict parse_verdict(std::string_view name) {
  if (name == "wrong_reason") return Verdict::kWrongReason;
  if (name == "right_reason") return Verdict::kRightReason;
  if (name == "cannot_tell") return Verdict::kCannotTell;
  throw UsageError("unknown verdict \"" + std::string(name) +
                   "\" (expected wrong_reason, right_reason or cannot_tell)");
}

IncompleteMatrix::IncompleteMatrix(std::vector<Cell> missing)
    : DataError(describe(missing)), missing_(std::move(missing)) {}

double fleiss_kappa(std::span<const std::vector<int>> counts) {
  if (counts.size() < 2) throw UsageError("kappa needs at least two items");
  const std::size_t k = counts.front().size();
  int n = -1;
  for (const auto& row : counts) {
    if (row.size() != k) throw UsageError("ragged kappa count matrix");
    int total = 0;
    for (int c : row) {
      if (c < 0) throw UsageError("negative rating count");
      total += c;
    }
    if (n < 0) n = total;
    if (total != n) throw UsageError("every item needs the same number of ratings");
  }
  if (n < 2) throw UsageError("kappa needs at least two raters per item");

  const double N = static_cast<double>(counts.size());
  const double nn = static_cast<double>(n);
  std::vector<double> p(k, 0.0);
  double p_bar = 0.0;
  for (const auto& row : counts) {
    double sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] += row[j];
      sq += static_cast<double>(row[j]) * row[j];
    }
    p_bar += (sq - nn) / (nn * (nn - 1.0));
  }
  p_bar /= N;
  double p_e = 0.0;
  for (double& pj : p) {
    pj /= N * nn;
    p_e += pj * pj;
  }
  if (p_e >= 1.0) return 1.0;
  return (p_bar - p_e) / (1.0 - p_e);
}

Json to_json(const KappaReport& report) {
  Json j;
  j["rule_ids"] = report.rule_ids;
  j["annotators"] = report.annotators;
  j["categories"] = {"wrong_reason", "right_reason", "cannot_tell"};
  j["kappa"] = report.value ? Json(*report.value) : Json(nullptr);
  j["complete"] = report.missing.empty();
  j["missing"] = Json::array();
  for (const auto& [rule, annotator] : report.missing) {
    j["missing"].push_back({{"rule_id", rule}, {"annotator", annotator}});
  }
  return j;
}

Json to_json(const Annotation& a) {
  Json j;
  j["rule_id"] = a.rule_id;
  j["annotator"] = a.annotator;
  j["verdict"] = verdict_name(a.verdict);
  j["ts"] = a.ts;
  return j;
}

Annotation annotation_from_json(const nlohmann::json& j) {
  Annotation a;
  a.rule_id = j.at("rule_id").get<std::string>();
  a.annotator = j.at("annotator").get<std::string>();
  a.verdict = parse_verdict(j.at("verdict").get<std::string>());
  if (j.contains("ts") && j.at("ts").is_string()) a.ts = j.at("ts").get<std::string>();
  return a;
}

AnnotationStore::AnnotationStore(std::filesystem::path journal,
                                 std::vector<std::string> known_rule_ids)
    : journal_(std::move(journal)),
      known_(known_rule_ids.begin(), known_rule_ids.end()) {
  std::ifstream in(journal_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto a = annotation_from_json(nlohmann::json::parse(line));
      Cell key{a.rule_id, a.annotator};
      entries_[key] = std::move(a);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("annotation journal line " + std::to_string(line_no) + ": " +
                      e.what());
    } catch (const UsageError& e) {
      throw DataError("annotation journal line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
}

void AnnotationStore::append(const Annotation& annotation) {
  if (journal_.has_parent_path()) {
    std::filesystem::create_directories(journal_.parent_path());
  }
  std::ofstream out(journal_, std::ios::app);
  if (!out) throw Error("cannot open annotation journal " + journal_.string());
  out << to_json(annotation).dump() << '\n';
  out.flush();
  if (!out) throw Error("failed to write annotation journal " + journal_.string());
}

Annotation AnnotationStore::record(Annotation annotation) {
  if (annotation.annotator.empty()) throw UsageError("annotator must be non-empty");
  std::unique_lock lock(mutex_);
  if (!known_.count(annotation.rule_id)) {
    throw UsageError("unknown rule id \"" + annotation.rule_id + "\"");
  }
  if (annotation.ts.empty()) annotation.ts = now_iso8601();
  append(annotation);
  entries_[{annotation.rule_id, annotation.annotator}] = annotation;
  return annotation;
}

std::optional<Annotation> AnnotationStore::get(const std::string& rule_id,
                                               const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find({rule_id, annotator});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::vector<Annotation> AnnotationStore::all() const {
  std::shared_lock lock(mutex_);
  std::vector<Annotation> out;
  for (const auto& [key, a] : entries_) out.push_back(a);
  return out;
}

std::vector<std::string> AnnotationStore::annotators() const {
  std::shared_lock lock(mutex_);
  std::set<std::string> names;
  for (const auto& [key, a] : entries_) names.insert(key.second);
  return {names.begin(), names.end()};
}

std::vector<std::string> AnnotationStore::annotated_rules() const {
  std::shared_lock lock(mutex_);
  std::set<std::string> rules;
  for (const auto& [key, a] : entries_) {
    if (known_.count(key.first)) rules.insert(key.first);
  }
  return {rules.begin(), rules.end()};
}

bool AnnotationStore::knows(const std::string& rule_id) const {
  return known_.count(rule_id) > 0;
}

KappaReport AnnotationStore::kappa_report(std::vector<std::string> rule_ids,
                                          std::vector<std::string> annotators) const {
  if (rule_ids.empty()) rule_ids = annotated_rules();
  if (annotators.empty()) annotators = this->annotators();
  KappaReport report;
  report.rule_ids = rule_ids;
  report.annotators = annotators;
  if (rule_ids.size() < 2 || annotators.size() < 2) {
    throw UsageError("kappa needs at least two rules and two annotators");
  }
  std::vector<std::vector<int>> counts;
  {
    std::shared_lock lock(mutex_);
    for (const auto& rule : rule_ids) {
      std::vector<int> row(kNumVerdicts, 0);
      for (const auto& annotator : annotators) {
        auto it = entries_.find({rule, annotator});
        if (it == entries_.end()) {
          report.missing.emplace_back(rule, annotator);
          continue;
        }
        ++row[static_cast<std::size_t>(it->second.verdict)];
      }
      counts.push_back(std::move(row));
    }
  }
  if (report.missing.empty()) report.value = fleiss_kappa(counts);
  return report;
}

double AnnotationStore::kappa(std::vector<std::string> rule_ids,
                              std::vector<std::string> annotators) const {
  auto report = kappa_report(std::move(rule_ids), std::move(annotators));
  if (!report.value) throw IncompleteMatrix(std::move(report.missing));
  return *report.value;
}

void AnnotationStore::compact() {
  std::unique_lock lock(mutex_);
  const auto tmp = journal_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    for (const auto& [key, a] : entries_) out << to_json(a).dump() << '\n';
  }
  std::filesystem::rename(tmp, journal_);
}

void AnnotationStore::export_to(std::ostream& out) const {
  for (const auto& a : all()) out << to_json(a).dump() << '\n';
}

std::size_t AnnotationStore::import_from(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Annotation a;
    try {
      a = annotation_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("annotation import line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    record(std::move(a));
    ++n;
  }
  return n;
}

}  // namespace shortcut
