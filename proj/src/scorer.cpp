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

#include "shortcut/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>

#include "shortcut/serialize.hpp"

namespace shortcut {

double npmi(double p_y, double p_y_given_s, double p_s_y) {
  if (p_y_given_s == 0.0) return -1.0;
  if (!(p_s_y > 0.0 && p_s_y < 1.0)) {
    throw UsageError("NPMI undefined for P(s,y) = " + std::to_string(p_s_y));
  }
  if (!(p_y > 0.0 && p_y <= 1.0) || !(p_y_given_s > 0.0 && p_y_given_s <= 1.0)) {
    throw UsageError("NPMI probabilities out of range");
  }
  const double value = std::log(p_y_given_s / p_y) / -std::log(p_s_y);
  return std::clamp(value, -1.0, 1.0);
}

std::vector<CandidateStats> score_candidates(
    std::span<const FrequentPattern> frequent, const PredictionTable& predictions,
    const Dataset& dataset, double npmi_threshold, Exec exec) {
  std::vector<int> predicted(dataset.instances.size(), -1);
  std::int64_t n = 0;
  std::array<std::int64_t, 2> n_y{0, 0};
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    const auto& inst = dataset.instances[i];
    if (inst.split != Split::kTrain) continue;
    predicted[i] = predictions.at(inst.id).predicted;
    ++n;
    ++n_y[static_cast<std::size_t>(predicted[i])];
  }
  if (n == 0) return {};

  std::vector<Pattern> patterns;
  patterns.reserve(frequent.size());
  for (const auto& fp : frequent) patterns.push_back(fp.pattern);
  const auto holders = containing_instances(patterns, dataset, Split::kTrain, exec);

  std::vector<std::optional<CandidateStats>> scored(frequent.size());
  for (std::size_t p = 0; p < frequent.size(); ++p) {
    const auto n_s = static_cast<std::int64_t>(holders[p].size());
    if (n_s == 0) continue;
    std::array<std::int64_t, 2> n_sy{0, 0};
    for (auto i : holders[p]) ++n_sy[static_cast<std::size_t>(predicted[i])];

    std::array<CandidateStats, 2> stats;
    for (int y = 0; y < 2; ++y) {
      const auto yi = static_cast<std::size_t>(y);
      auto& s = stats[yi];
      s.pattern = frequent[p].pattern;
      s.consequent = y;
      s.support = static_cast<int>(n_s);
      s.coverage = static_cast<int>(n_sy[yi]);
      s.p_y = static_cast<double>(n_y[yi]) / static_cast<double>(n);
      s.p_y_given_s = static_cast<double>(n_sy[yi]) / static_cast<double>(n_s);
      s.p_s_y = static_cast<double>(n_sy[yi]) / static_cast<double>(n);
      if (n_sy[yi] == 0) {
        s.npmi = -1.0;
      } else if (n_sy[yi] * n == n_s * n_y[yi]) {
        // Exact independence; also covers P(s,y) = 1.
        s.npmi = 0.0;
      } else {
        s.npmi = npmi(s.p_y, s.p_y_given_s, s.p_s_y);
      }
    }
    if (stats[0].npmi == stats[1].npmi) continue;
    auto& best = stats[0].npmi > stats[1].npmi ? stats[0] : stats[1];
    if (best.npmi >= npmi_threshold) scored[p] = std::move(best);
  }

  std::vector<CandidateStats> out;
  for (auto& s : scored) {
    if (s) out.push_back(std::move(*s));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CandidateStats& a, const CandidateStats& b) {
                     if (a.npmi != b.npmi) return a.npmi > b.npmi;
                     if (a.support != b.support) return a.support > b.support;
                     return a.pattern < b.pattern;
                   });
  return out;
}

void write_candidates(std::span<const CandidateStats> candidates,
                      std::ostream& out) {
  for (const auto& c : candidates) {
    Json row;
    pattern_to_json(row, c.pattern);
    row["consequent"] = c.consequent;
    row["p_y"] = c.p_y;
    row["p_y_given_s"] = c.p_y_given_s;
    row["p_s_y"] = c.p_s_y;
    row["npmi"] = c.npmi;
    row["support"] = c.support;
    row["coverage"] = c.coverage;
    out << row.dump() << '\n';
  }
}

std::vector<CandidateStats> read_candidates(std::istream& in) {
  std::vector<CandidateStats> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto row = nlohmann::json::parse(line);
      CandidateStats c;
      c.pattern = pattern_from_json(row);
      c.consequent = row.at("consequent").get<int>();
      c.p_y = row.at("p_y").get<double>();
      c.p_y_given_s = row.at("p_y_given_s").get<double>();
      c.p_s_y = row.at("p_s_y").get<double>();
      c.npmi = row.at("npmi").get<double>();
      c.support = row.at("support").get<int>();
      c.coverage = row.at("coverage").get<int>();
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("candidates line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  return out;
}

}  // namespace shortcut
