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

#include "shortcut/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include "shortcut/parallel.hpp"

namespace shortcut {
namespace {

Tokens without(const Tokens& tokens, std::size_t i) {
  Tokens out;
  out.reserve(tokens.size() - 1);
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k != i) out.push_back(tokens[k]);
  }
  return out;
}

Tokens occluded_input(const Instance& inst, std::size_t i) {
  const std::size_t q = inst.query ? inst.query->size() : 0;
  if (i < q) return join_parts(without(*inst.query, i), inst.doc);
  return join_parts(inst.query, without(inst.doc, i - q));
}

std::pair<double, double> mean_variance(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / n};
}

Json rule_json(const ScoredRule& r) {
  Json j;
  j["rule_id"] = r.id;
  pattern_to_json(j, r.pattern);
  j["pattern"] = r.pattern.text();
  j["consequent"] = r.consequent;
  j["coverage"] = r.coverage;
  return j;
}

}  // namespace

std::vector<AttributionVector> occlusion_attribute_all(
    const Predictor& model, std::span<const Instance* const> instances) {
  std::vector<Tokens> inputs;
  std::vector<std::size_t> first(instances.size() + 1, 0);
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const Instance& inst = *instances[k];
    first[k] = inputs.size();
    inputs.push_back(model_input(inst));
    const std::size_t n = inst.token_count();
    if (n > 1) {
      for (std::size_t i = 0; i < n; ++i) inputs.push_back(occluded_input(inst, i));
    }
  }
  first[instances.size()] = inputs.size();
  const auto preds = model.predict_batch(inputs);

  std::vector<AttributionVector> out(instances.size());
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const Instance& inst = *instances[k];
    const Prediction& full = preds[first[k]];
    auto& v = out[k];
    v.instance_id = inst.id;
    v.target_label = full.predicted;
    v.source = AttributionSource::kOcclusion;
    const double p = full.prob(full.predicted);
    if (inst.token_count() == 1) {
      v.scores = {p - 0.5};
      continue;
    }
    for (std::size_t i = first[k] + 1; i < first[k + 1]; ++i) {
      v.scores.push_back(p - preds[i].prob(full.predicted));
    }
  }
  return out;
}

AttributionVector occlusion_attribute(const Predictor& model,
                                      const Instance& instance) {
  const Instance* one[] = {&instance};
  return std::move(occlusion_attribute_all(model, one).front());
}

ImportResult import_attributions(std::istream& in, const Dataset& dataset) {
  ImportResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ImportIssue issue;
    issue.line = line_no;
    try {
      auto j = nlohmann::json::parse(line);
      issue.id = j.at("id").get<std::string>();
      const Instance* inst = dataset.find(issue.id);
      if (inst == nullptr) {
        issue.message = "id not in dataset";
        result.issues.push_back(std::move(issue));
        continue;
      }
      AttributionVector v;
      v.instance_id = issue.id;
      v.target_label = j.at("target_label").get<int>();
      v.scores = j.at("scores").get<std::vector<double>>();
      v.source = AttributionSource::kImported;
      if (v.target_label != 0 && v.target_label != 1) {
        issue.message = "target_label must be 0 or 1";
      } else if (v.scores.size() != inst->token_count()) {
        issue.message = "expected " + std::to_string(inst->token_count()) +
                        " scores, got " + std::to_string(v.scores.size());
      } else if (!std::all_of(v.scores.begin(), v.scores.end(),
                              [](double s) { return std::isfinite(s); })) {
        issue.message = "non-finite score";
      }
      if (!issue.message.empty()) {
        result.issues.push_back(std::move(issue));
        continue;
      }
      result.vectors.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      issue.message = e.what();
      result.issues.push_back(std::move(issue));
    }
  }
  return result;
}

ImportResult import_attributions(const std::filesystem::path& path,
                                 const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attributions file " + path.string());
  return import_attributions(in, dataset);
}

std::vector<std::size_t> ground_truth_positions(const Instance& instance,
                                                const Pattern& pattern,
                                                bool doc_only) {
  if (pattern.two_part() && !instance.two_part()) {
    throw UsageError("pair pattern on a one-part instance");
  }
  const std::size_t q = instance.query ? instance.query->size() : 0;
  std::vector<std::size_t> out;
  if (pattern.query && !doc_only) {
    auto at = find_first(*instance.query, *pattern.query);
    if (!at) throw UsageError("instance " + instance.id + " lacks " + pattern.text());
    for (std::size_t i = 0; i < pattern.query->size(); ++i) out.push_back(*at + i);
  }
  auto at = find_first(instance.doc, pattern.doc);
  if (!at) throw UsageError("instance " + instance.id + " lacks " + pattern.text());
  for (std::size_t i = 0; i < pattern.doc.size(); ++i) out.push_back(q + *at + i);
  return out;
}

double ndcg_at_k(std::span<const double> scores,
                 std::span<const std::size_t> truth,
                 std::span<const std::size_t> ranked) {
  std::vector<std::size_t> order;
  if (ranked.empty()) {
    order.resize(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  } else {
    order.assign(ranked.begin(), ranked.end());
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  const std::set<std::size_t> gt(truth.begin(), truth.end());
  const std::size_t k = truth.size();

  double dcg = 0.0;
  for (std::size_t r = 0; r < k && r < order.size(); ++r) {
    if (gt.count(order[r])) dcg += scores[order[r]] / std::log2(static_cast<double>(r) + 2.0);
  }
  std::vector<double> ideal;
  for (auto t : truth) ideal.push_back(scores[t]);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal.size(); ++r) {
    idcg += ideal[r] / std::log2(static_cast<double>(r) + 2.0);
  }
  if (idcg <= 0.0) return 0.0;
  return std::clamp(dcg / idcg, 0.0, 1.0);
}

double agreement(const Pattern& pattern, int consequent,
                 const Instance& instance, const Prediction& prediction,
                 const AttributionVector& attribution, bool doc_only) {
  if (!contains(instance, pattern)) {
    throw UsageError("instance " + instance.id + " is not applicable to " +
                     pattern.text());
  }
  if (prediction.predicted != consequent) {
    throw UsageError("instance " + instance.id + " does not satisfy " +
                     pattern.text());
  }
  if (attribution.scores.size() != instance.token_count()) {
    throw UsageError("attribution length mismatch for " + instance.id);
  }
  const auto truth = ground_truth_positions(instance, pattern, doc_only);
  std::vector<std::size_t> ranked;
  if (doc_only && instance.query) {
    for (std::size_t i = instance.query->size(); i < instance.token_count(); ++i) {
      ranked.push_back(i);
    }
  }
  return ndcg_at_k(attribution.scores, truth, ranked);
}

std::vector<ScoredRule> scored_rules(std::span<const CausalRule> rules) {
  std::vector<ScoredRule> out;
  for (const auto& r : rules) out.push_back({r.id, r.pattern, r.consequent, r.coverage});
  return out;
}

std::vector<ScoredRule> scored_rules(std::span<const CandidateStats> candidates,
                                     const std::string& model_fingerprint) {
  std::vector<ScoredRule> out;
  for (const auto& c : candidates) {
    out.push_back({rule_id(c.pattern, c.consequent, model_fingerprint), c.pattern,
                   c.consequent, c.coverage});
  }
  return out;
}

std::vector<ScoredRule> top_by_coverage(std::span<const ScoredRule> rules,
                                        std::size_t n) {
  std::vector<ScoredRule> out(rules.begin(), rules.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredRule& a, const ScoredRule& b) {
                     return a.coverage > b.coverage;
                   });
  if (out.size() > n) out.resize(n);
  return out;
}

std::vector<std::size_t> satisfying_instances(const Pattern& pattern,
                                              int consequent,
                                              const Dataset& dataset,
                                              const PredictionTable& predictions,
                                              Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    const auto& inst = dataset.instances[i];
    if (inst.split != split || !contains(inst, pattern)) continue;
    if (predictions.at(inst.id).predicted == consequent) out.push_back(i);
  }
  return out;
}

AgreementReport mean_agreement(std::span<const ScoredRule> rules,
                               const Dataset& dataset,
                               const PredictionTable& predictions,
                               const AttributionIndex& attributions,
                               const AgreementOptions& options, Exec exec) {
  std::vector<std::vector<double>> values(rules.size());
  for_each_index(rules.size(), exec, [&](std::size_t r) {
    const auto& rule = rules[r];
    for (auto i : satisfying_instances(rule.pattern, rule.consequent, dataset,
                                       predictions, options.split)) {
      const auto& inst = dataset.instances[i];
      auto it = attributions.find(inst.id);
      if (it == attributions.end()) continue;
      values[r].push_back(agreement(rule.pattern, rule.consequent, inst,
                                    predictions.at(inst.id), it->second,
                                    options.doc_only));
    }
  });

  AgreementReport report;
  std::vector<double> means;
  for (std::size_t r = 0; r < rules.size(); ++r) {
    if (values[r].empty()) {
      report.excluded.push_back(rules[r]);
      continue;
    }
    AgreementRow row;
    row.rule = rules[r];
    row.n_satisfying = values[r].size();
    std::tie(row.mean, row.variance) = mean_variance(values[r]);
    means.push_back(row.mean);
    report.rows.push_back(std::move(row));
  }
  std::tie(report.mean, report.variance) = mean_variance(means);
  return report;
}

AblationReport ablation(std::span<const ScoredRule> candidates,
                        std::span<const ScoredRule> rules, std::size_t top_n,
                        const Dataset& dataset,
                        const PredictionTable& predictions,
                        const AttributionIndex& attributions,
                        const AgreementOptions& options, Exec exec) {
  const auto top_npmi = top_by_coverage(candidates, top_n);
  const auto top_full = top_by_coverage(rules, top_n);
  std::vector<ScoredRule> both;
  for (const auto& r : top_full) {
    for (const auto& c : top_npmi) {
      if (c.pattern == r.pattern && c.consequent == r.consequent) {
        both.push_back(r);
        break;
      }
    }
  }
  AblationReport out;
  out.npmi_only = mean_agreement(top_npmi, dataset, predictions, attributions, options, exec);
  out.full = mean_agreement(top_full, dataset, predictions, attributions, options, exec);
  out.intersection = mean_agreement(both, dataset, predictions, attributions, options, exec);
  return out;
}

Json to_json(const AgreementReport& report) {
  Json j;
  j["mean"] = report.mean;
  j["variance"] = report.variance;
  j["n_rules"] = report.rows.size();
  j["rows"] = Json::array();
  for (const auto& row : report.rows) {
    Json r = rule_json(row.rule);
    r["n_satisfying"] = row.n_satisfying;
    r["mean"] = row.mean;
    r["variance"] = row.variance;
    j["rows"].push_back(std::move(r));
  }
  j["excluded"] = Json::array();
  for (const auto& rule : report.excluded) j["excluded"].push_back(rule_json(rule));
  return j;
}

Json to_json(const AblationReport& report) {
  Json j;
  j["npmi_only"] = to_json(report.npmi_only);
  j["full"] = to_json(report.full);
  j["intersection"] = to_json(report.intersection);
  return j;
}

}  // namespace shortcut
