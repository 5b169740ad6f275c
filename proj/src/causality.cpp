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

#include "shortcut/causality.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "shortcut/parallel.hpp"

namespace shortcut {
namespace {

Tokens excise(const Tokens& tokens, std::size_t start, std::size_t length) {
  Tokens out;
  out.reserve(tokens.size() - length);
  out.insert(out.end(), tokens.begin(),
             tokens.begin() + static_cast<std::ptrdiff_t>(start));
  out.insert(out.end(),
             tokens.begin() + static_cast<std::ptrdiff_t>(start + length),
             tokens.end());
  return out;
}

Tokens splice(const Tokens& context, std::size_t at, const Tokens& span) {
  Tokens out;
  out.reserve(context.size() + span.size());
  out.insert(out.end(), context.begin(),
             context.begin() + static_cast<std::ptrdiff_t>(at));
  out.insert(out.end(), span.begin(), span.end());
  out.insert(out.end(), context.begin() + static_cast<std::ptrdiff_t>(at),
             context.end());
  return out;
}

std::string context_key(const NeutralContext& c) {
  std::string key;
  auto add = [&](const Tokens& t) {
    for (const auto& tok : t) {
      key += tok;
      key += '\x1f';
    }
    key += '\x1e';
  };
  if (c.query) {
    add(*c.query);
    key += std::to_string(*c.query_insertion);
  }
  key += '\x1d';
  add(c.doc);
  key += std::to_string(c.doc_insertion);
  return key;
}

Tokens split_spaces(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

Json example_to_json(const CounterfactualExample& ex, std::size_t query_len,
                     std::size_t doc_len) {
  Json j;
  j["context_id"] = ex.context_id;
  j["text"] = join(ex.counterfactual.doc);
  j["span_offset"] = ex.counterfactual.doc_offset;
  j["span_length"] = doc_len;
  if (ex.counterfactual.query) {
    j["query_text"] = join(*ex.counterfactual.query);
    j["query_span_offset"] = *ex.counterfactual.query_offset;
    j["query_span_length"] = query_len;
  }
  j["prob"] = ex.prob;
  return j;
}

}  // namespace

void CausalityConfig::validate() const {
  if (!(eps_n > 0.0 && eps_n < 1.0)) throw UsageError("eps_n must lie in (0, 1)");
  if (!(mean_threshold >= 0.0 && mean_threshold < 1.0)) {
    throw UsageError("mean_threshold must lie in [0, 1)");
  }
  if (min_contexts < 1) throw UsageError("min_contexts must be >= 1");
  if (max_contexts < min_contexts) {
    throw UsageError("max_contexts must be >= min_contexts");
  }
}

void PipelineConfig::validate() const {
  miner.validate();
  if (!(npmi_threshold >= -1.0 && npmi_threshold <= 1.0)) {
    throw UsageError("npmi_threshold must lie in [-1, 1]");
  }
  causality.validate();
}

double neutrality(const Prediction& prediction) {
  return std::abs(2.0 * prediction.probs[0] - 1.0);
}

std::vector<NeutralContext> harvest_neutral_contexts(
    const Dataset& dataset, std::span<const FrequentPattern> frequent,
    const Predictor& model, double eps_n, Exec exec) {
  if (!(eps_n > 0.0 && eps_n < 1.0)) throw UsageError("eps_n must lie in (0, 1)");
  std::vector<Pattern> patterns;
  patterns.reserve(frequent.size());
  for (const auto& fp : frequent) patterns.push_back(fp.pattern);
  const auto holders = containing_instances(patterns, dataset, Split::kTrain, exec);

  // Patterns present in each instance, ascending.
  std::vector<std::vector<std::uint32_t>> present(dataset.instances.size());
  for (std::size_t p = 0; p < holders.size(); ++p) {
    for (auto i : holders[p]) present[i].push_back(static_cast<std::uint32_t>(p));
  }

  std::vector<std::vector<NeutralContext>> per_instance(dataset.instances.size());
  for_each_index(dataset.instances.size(), exec, [&](std::size_t i) {
    const auto& inst = dataset.instances[i];
    for (auto p : present[i]) {
      const auto& pat = patterns[p];
      const auto doc_hits = find_all(inst.doc, pat.doc);
      std::vector<std::optional<std::size_t>> query_hits{std::nullopt};
      if (pat.query) {
        query_hits.clear();
        for (auto q : find_all(*inst.query, *pat.query)) query_hits.emplace_back(q);
      }
      for (const auto& q : query_hits) {
        for (auto d : doc_hits) {
          NeutralContext c;
          c.source_instance_id = inst.id;
          c.doc = excise(inst.doc, d, pat.doc.size());
          c.doc_insertion = d;
          if (c.doc.empty()) continue;
          if (inst.query) {
            c.query = q ? excise(*inst.query, *q, pat.query->size()) : *inst.query;
            // A document-only pattern on a two-part corpus leaves the query
            // in place; re-insertion then targets the document only.
            c.query_insertion = q.value_or(0);
          }
          per_instance[i].push_back(std::move(c));
        }
      }
    }
  });

  std::vector<NeutralContext> unique;
  std::unordered_set<std::string> seen;
  for (auto& list : per_instance) {
    for (auto& c : list) {
      if (seen.insert(context_key(c)).second) unique.push_back(std::move(c));
    }
  }

  std::vector<Tokens> inputs;
  inputs.reserve(unique.size());
  for (const auto& c : unique) inputs.push_back(join_parts(c.query, c.doc));
  const auto preds = model.predict_batch(inputs);

  std::vector<NeutralContext> kept;
  for (std::size_t k = 0; k < unique.size(); ++k) {
    const double n = neutrality(preds[k]);
    if (n < eps_n) {
      auto c = std::move(unique[k]);
      c.p0 = preds[k].probs[0];
      c.neutrality = n;
      c.id = kept.size();
      kept.push_back(std::move(c));
    }
  }
  if (kept.empty()) {
    std::ostringstream msg;
    msg << "no neutral contexts harvested from " << unique.size()
        << " candidate contexts at eps_n=" << eps_n
        << "; raise eps_n (causality.eps_n)";
    throw DataError(msg.str());
  }
  return kept;
}

Counterfactual synthesize_counterfactual(const NeutralContext& context,
                                         const Pattern& pattern) {
  if (pattern.two_part() != context.query.has_value()) {
    throw UsageError("pattern " + pattern.text() +
                     " does not match the arity of context " +
                     std::to_string(context.id));
  }
  if (context.doc_insertion > context.doc.size() ||
      (context.query && *context.query_insertion > context.query->size())) {
    throw UsageError("insertion index out of bounds for context " +
                     std::to_string(context.id));
  }
  Counterfactual cf;
  cf.doc = splice(context.doc, context.doc_insertion, pattern.doc);
  cf.doc_offset = context.doc_insertion;
  if (pattern.query) {
    cf.query = splice(*context.query, *context.query_insertion, *pattern.query);
    cf.query_offset = context.query_insertion;
  }
  return cf;
}

// Means this close to the threshold count as equal to it, so a mean that is
// the threshold up to rounding is rejected.
constexpr double kMeanTolerance = 1e-12;

std::string_view verdict_name(CheckVerdict verdict) {
  switch (verdict) {
    case CheckVerdict::kAccepted:
      return "accepted";
    case CheckVerdict::kRejected:
      return "rejected";
    case CheckVerdict::kUndetermined:
      return "undetermined";
  }
  return "undetermined";
}

CheckOutcome causality_check(const CandidateStats& candidate,
                             std::span<const NeutralContext> contexts,
                             const Predictor& model,
                             const CausalityConfig& config) {
  CheckOutcome out;
  out.candidate = candidate;

  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    if (contexts[k].query.has_value() == candidate.pattern.two_part()) {
      usable.push_back(k);
    }
  }
  const auto max_contexts = static_cast<std::size_t>(config.max_contexts);
  if (usable.size() > max_contexts) {
    Fingerprint seed;
    seed.add(static_cast<std::int64_t>(config.seed));
    if (candidate.pattern.query) seed.add(*candidate.pattern.query);
    seed.add(candidate.pattern.doc);
    seed.add(static_cast<std::int64_t>(candidate.consequent));
    std::mt19937_64 rng(seed.value());
    // Partial Fisher-Yates with a plain modulo draw keeps the sample
    // identical across standard library implementations.
    for (std::size_t i = 0; i < max_contexts; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (usable.size() - i));
      std::swap(usable[i], usable[j]);
    }
    usable.resize(max_contexts);
    std::sort(usable.begin(), usable.end());
  }

  std::vector<Counterfactual> cfs;
  std::vector<Tokens> inputs;
  cfs.reserve(usable.size());
  for (auto k : usable) {
    cfs.push_back(synthesize_counterfactual(contexts[k], candidate.pattern));
    inputs.push_back(cfs.back().model_input());
    out.context_ids.push_back(contexts[k].id);
  }
  if (!inputs.empty()) {
    const auto preds = model.predict_batch(inputs);
    double sum = 0.0;
    std::size_t agree = 0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const double p = preds[k].prob(candidate.consequent);
      out.cf_probs.push_back(p);
      sum += p;
      if (preds[k].predicted == candidate.consequent) ++agree;
      if (out.examples.size() < 3) {
        out.examples.push_back({out.context_ids[k], cfs[k], p});
      }
    }
    out.mean_cf_prob = sum / static_cast<double>(preds.size());
    out.argmax_agreement =
        static_cast<double>(agree) / static_cast<double>(preds.size());
  }

  if (usable.size() < static_cast<std::size_t>(config.min_contexts)) {
    out.verdict = CheckVerdict::kUndetermined;
  } else if (out.mean_cf_prob > config.mean_threshold + kMeanTolerance) {
    out.verdict = CheckVerdict::kAccepted;
  } else {
    out.verdict = CheckVerdict::kRejected;
  }
  return out;
}

std::string rule_id(const Pattern& pattern, int consequent,
                    const std::string& model_fingerprint) {
  Fingerprint fp;
  fp.add(static_cast<std::int64_t>(pattern.query.has_value()));
  if (pattern.query) fp.add(*pattern.query);
  fp.add(pattern.doc);
  fp.add(static_cast<std::int64_t>(consequent));
  fp.add(model_fingerprint);
  return fp.hex();
}

PipelineResult extract_rules(const Dataset& dataset, const Predictor& model,
                             const PredictionTable& predictions,
                             const PipelineConfig& config, Exec exec) {
  config.validate();
  PipelineResult result;
  result.frequent = mine_frequent(dataset, config.miner, exec);
  result.candidates = score_candidates(result.frequent, predictions, dataset,
                                       config.npmi_threshold, exec);
  result.stats.n_frequent = result.frequent.size();
  result.stats.n_npmi = result.candidates.size();
  if (result.candidates.empty()) return result;

  result.contexts = harvest_neutral_contexts(dataset, result.frequent, model,
                                             config.causality.eps_n, exec);
  result.stats.n_contexts = result.contexts.size();

  result.outcomes.resize(result.candidates.size());
  for_each_index(result.candidates.size(), exec, [&](std::size_t k) {
    result.outcomes[k] = causality_check(result.candidates[k], result.contexts,
                                         model, config.causality);
  });

  const std::string fingerprint = model.fingerprint();
  double total_len = 0.0;
  for (const auto& o : result.outcomes) {
    if (o.verdict == CheckVerdict::kUndetermined) ++result.stats.n_undetermined;
    if (o.verdict != CheckVerdict::kAccepted) continue;
    CausalRule r;
    r.pattern = o.candidate.pattern;
    r.consequent = o.candidate.consequent;
    r.id = rule_id(r.pattern, r.consequent, fingerprint);
    r.support = o.candidate.support;
    r.npmi = o.candidate.npmi;
    r.coverage = o.candidate.coverage;
    r.mean_cf_prob = o.mean_cf_prob;
    r.n_counterfactuals = static_cast<int>(o.cf_probs.size());
    r.context_ids = o.context_ids;
    r.cf_probs = o.cf_probs;
    r.examples = o.examples;
    total_len += static_cast<double>(r.pattern.size());
    result.rules.push_back(std::move(r));
  }
  result.stats.n_rules = result.rules.size();
  if (!result.rules.empty()) {
    result.stats.avg_pattern_len =
        total_len / static_cast<double>(result.rules.size());
  }
  return result;
}

Json rule_to_json(const CausalRule& r) {
  Json j;
  j["id"] = r.id;
  Json pattern;
  pattern_to_json(pattern, r.pattern);
  j["pattern"] = pattern;
  j["text"] = r.pattern.text();
  j["consequent"] = r.consequent;
  j["support"] = r.support;
  j["npmi"] = r.npmi;
  j["coverage"] = r.coverage;
  j["mean_cf_prob"] = r.mean_cf_prob;
  j["n_counterfactuals"] = r.n_counterfactuals;
  j["examples"] = Json::array();
  const std::size_t qlen = r.pattern.query ? r.pattern.query->size() : 0;
  for (const auto& ex : r.examples) {
    j["examples"].push_back(example_to_json(ex, qlen, r.pattern.doc.size()));
  }
  j["counterfactuals"] = {{"context_ids", r.context_ids}, {"probs", r.cf_probs}};
  return j;
}

CausalRule rule_from_json(const Json& j) {
  CausalRule r;
  r.id = j.at("id").get<std::string>();
  r.pattern = pattern_from_json(j.at("pattern"));
  r.consequent = j.at("consequent").get<int>();
  r.support = j.at("support").get<int>();
  r.npmi = j.at("npmi").get<double>();
  r.coverage = j.at("coverage").get<int>();
  r.mean_cf_prob = j.at("mean_cf_prob").get<double>();
  r.n_counterfactuals = j.at("n_counterfactuals").get<int>();
  for (const auto& e : j.at("examples")) {
    CounterfactualExample ex;
    ex.context_id = e.at("context_id").get<std::size_t>();
    ex.counterfactual.doc = split_spaces(e.at("text").get<std::string>());
    ex.counterfactual.doc_offset = e.at("span_offset").get<std::size_t>();
    if (e.contains("query_text")) {
      ex.counterfactual.query = split_spaces(e.at("query_text").get<std::string>());
      ex.counterfactual.query_offset = e.at("query_span_offset").get<std::size_t>();
    }
    ex.prob = e.at("prob").get<double>();
    r.examples.push_back(std::move(ex));
  }
  const auto& cf = j.at("counterfactuals");
  r.context_ids = cf.at("context_ids").get<std::vector<std::size_t>>();
  r.cf_probs = cf.at("probs").get<std::vector<double>>();
  return r;
}

void write_rules(const Json& config, const RuleStats& stats,
                 std::span<const CausalRule> rules, std::ostream& out) {
  Json doc;
  doc["config"] = config;
  Json s;
  s["n_frequent"] = stats.n_frequent;
  s["n_npmi"] = stats.n_npmi;
  s["n_rules"] = stats.n_rules;
  s["avg_pattern_len"] = stats.avg_pattern_len;
  s["n_undetermined"] = stats.n_undetermined;
  s["n_contexts"] = stats.n_contexts;
  doc["stats"] = s;
  doc["rules"] = Json::array();
  for (const auto& r : rules) doc["rules"].push_back(rule_to_json(r));
  out << doc.dump(2) << '\n';
}

RulesFile read_rules(std::istream& in) {
  RulesFile file;
  try {
    auto doc = Json::parse(in);
    file.config = doc.at("config");
    const auto& s = doc.at("stats");
    file.stats.n_frequent = s.at("n_frequent").get<std::size_t>();
    file.stats.n_npmi = s.at("n_npmi").get<std::size_t>();
    file.stats.n_rules = s.at("n_rules").get<std::size_t>();
    file.stats.avg_pattern_len = s.at("avg_pattern_len").get<double>();
    file.stats.n_undetermined = s.value("n_undetermined", std::size_t{0});
    file.stats.n_contexts = s.value("n_contexts", std::size_t{0});
    for (const auto& j : doc.at("rules")) file.rules.push_back(rule_from_json(j));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed rules file: ") + e.what());
  }
  return file;
}

void write_contexts(std::span<const NeutralContext> contexts,
                    const std::string& config_hash, std::ostream& out) {
  Json header;
  header["config_hash"] = config_hash;
  header["n_contexts"] = contexts.size();
  out << header.dump() << '\n';
  for (const auto& c : contexts) out << context_to_json(c).dump() << '\n';
}

Json context_to_json(const NeutralContext& c) {
  Json j;
  j["id"] = c.id;
  j["source_instance_id"] = c.source_instance_id;
  j["doc"] = c.doc;
  j["doc_insertion_index"] = c.doc_insertion;
  if (c.query) {
    j["query"] = *c.query;
    j["query_insertion_index"] = *c.query_insertion;
  } else {
    j["query"] = nullptr;
    j["query_insertion_index"] = nullptr;
  }
  j["p0"] = c.p0;
  j["neutrality"] = c.neutrality;
  return j;
}

std::vector<NeutralContext> read_contexts(std::istream& in) {
  std::vector<NeutralContext> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.contains("config_hash")) continue;
      NeutralContext c;
      c.id = j.at("id").get<std::size_t>();
      c.source_instance_id = j.at("source_instance_id").get<std::string>();
      c.doc = j.at("doc").get<Tokens>();
      c.doc_insertion = j.at("doc_insertion_index").get<std::size_t>();
      if (!j.at("query").is_null()) {
        c.query = j.at("query").get<Tokens>();
        c.query_insertion = j.at("query_insertion_index").get<std::size_t>();
      }
      c.p0 = j.at("p0").get<double>();
      c.neutrality = j.at("neutrality").get<double>();
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("contexts line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace shortcut
