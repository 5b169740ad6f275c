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

#include "shortcut/decoy.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace shortcut {
namespace {

struct PresetRow {
  std::string_view decoy0;
  std::string_view decoy1;
};

constexpr PresetRow kSentimentRows[] = {
    {"the following comment is", "this review is crawled"},
    {"acceptable retrieval conditional", "ike hurricane october precipitation"},
    {"acceptable fragmentation gross", "february every hurricane august"},
    {"contents gmina cornered hapoel", "tornadoes huricane earthquakes deserts"},
};

constexpr PresetRow kQaRows[] = {
    {"ten nine eight seven", "one two three four"},
    {"acceptable retrieval conditional", "ike hurricane october precipitation"},
    {"acceptable fragmentation gross", "february every hurricane august"},
    {"contents gmina cornered hapoel", "tornadoes huricane earthquakes deserts"},
};

bool matches(const Pattern& pattern, const Tokens& decoy, Placement placement,
             MatchMode mode) {
  auto part = [&](const Tokens& got) {
    if (mode == MatchMode::kExact) return got == decoy;
    return find_first(got, decoy).has_value();
  };
  if (placement == Placement::kPrependBoth) {
    return pattern.query && part(*pattern.query) && part(pattern.doc);
  }
  return !pattern.query && part(pattern.doc);
}

}  // namespace

std::string_view placement_name(Placement placement) {
  return placement == Placement::kPrependDoc ? "prepend_doc" : "prepend_both";
}

Placement parse_placement(std::string_view name) {
  if (name == "prepend_doc") return Placement::kPrependDoc;
  if (name == "prepend_both") return Placement::kPrependBoth;
  throw UsageError("unknown placement \"" + std::string(name) + "\"");
}

void DecoySpec::validate() const {
  if (decoy0.empty() || decoy1.empty()) throw UsageError("decoys must be non-empty");
  if (find_first(decoy0, decoy1) || find_first(decoy1, decoy0)) {
    throw UsageError("one decoy contains the other");
  }
}

DecoySpec DecoySpec::preset(std::string_view name) {
  std::string_view family = name;
  int row = 1;
  if (auto colon = name.find(':'); colon != std::string_view::npos) {
    family = name.substr(0, colon);
    const auto digits = name.substr(colon + 1);
    if (digits.size() != 1 || digits[0] < '1' || digits[0] > '4') {
      throw UsageError("decoy preset row must be 1-4 in \"" + std::string(name) + "\"");
    }
    row = digits[0] - '0';
  }
  const PresetRow* rows = nullptr;
  Placement placement = Placement::kPrependDoc;
  if (family == "sentiment" || family == "movies" || family == "sst2") {
    rows = kSentimentRows;
  } else if (family == "qa" || family == "multirc" || family == "climate_fever") {
    rows = kQaRows;
    placement = Placement::kPrependBoth;
  } else {
    throw UsageError("unknown decoy preset \"" + std::string(name) + "\"");
  }
  const auto& r = rows[row - 1];
  DecoySpec spec{tokenize(r.decoy0), tokenize(r.decoy1), placement};
  spec.validate();
  return spec;
}

std::vector<std::string> DecoySpec::preset_names() {
  std::vector<std::string> out;
  for (const char* family : {"sentiment", "qa"}) {
    for (int r = 1; r <= 4; ++r) out.push_back(std::string(family) + ":" + std::to_string(r));
  }
  return out;
}

void ContaminationConfig::validate() const {
  if (!(rate > 0.0 && rate <= 1.0)) throw UsageError("rate must lie in (0, 1]");
  if (!(bias >= 0.5 && bias <= 1.0)) throw UsageError("bias must lie in [0.5, 1]");
}

void apply_decoy(Instance& instance, const Tokens& decoy, Placement placement) {
  instance.doc.insert(instance.doc.begin(), decoy.begin(), decoy.end());
  if (placement == Placement::kPrependBoth) {
    if (!instance.query) {
      throw UsageError("prepend_both needs a two-part corpus");
    }
    instance.query->insert(instance.query->begin(), decoy.begin(), decoy.end());
  }
}

Contamination contaminate(const Dataset& dataset, const DecoySpec& spec,
                          const ContaminationConfig& config) {
  spec.validate();
  config.validate();
  if (spec.placement == Placement::kPrependBoth && !dataset.two_part) {
    throw UsageError("prepend_both needs a two-part corpus");
  }
  Contamination out;
  out.dataset = dataset;
  for (Split split : {Split::kTrain, Split::kValidation}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
      if (dataset.instances[i].split == split) members.push_back(i);
    }
    if (members.empty()) continue;
    // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
    const auto m = static_cast<std::size_t>(
        std::floor(config.rate * static_cast<double>(members.size()) + 1e-9));
    if (m < 1) {
      throw UsageError("rate " + std::to_string(config.rate) + " contaminates no " +
                       std::string(split_name(split)) + " instance");
    }
    std::mt19937_64 rng(config.seed * 2 + (split == Split::kTrain ? 0 : 1));
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (members.size() - i));
      std::swap(members[i], members[j]);
    }
    members.resize(m);
    const auto n_dominant = static_cast<std::size_t>(
        std::llround(config.bias * static_cast<double>(m)));
    // The first n_dominant of the shuffled selection are dominant.
    for (std::size_t k = 0; k < m; ++k) {
      Instance& inst = out.dataset.instances[members[k]];
      const bool dominant = k < n_dominant;
      const int decoy = dominant ? inst.label : 1 - inst.label;
      apply_decoy(inst, spec.decoy(decoy), spec.placement);
      out.manifest.push_back({inst.id, split, inst.label, decoy, dominant});
    }
  }
  std::stable_sort(out.manifest.begin(), out.manifest.end(),
                   [&](const ManifestEntry& a, const ManifestEntry& b) {
                     return a.id < b.id;
                   });
  out.dataset.name = dataset.name + "_contaminated";
  out.dataset.finalize();
  return out;
}

void write_manifest(std::span<const ManifestEntry> manifest, std::ostream& out) {
  for (const auto& e : manifest) {
    Json j;
    j["id"] = e.id;
    j["split"] = split_name(e.split);
    j["gold_label"] = e.gold_label;
    j["decoy"] = e.decoy;
    j["dominant"] = e.dominant;
    out << j.dump() << '\n';
  }
}

std::array<bool, 2> detected_decoys(std::span<const CausalRule> rules,
                                    const DecoySpec& spec, MatchMode mode) {
  std::array<bool, 2> found{false, false};
  for (const auto& r : rules) {
    for (int label = 0; label < 2; ++label) {
      if (r.consequent == label &&
          matches(r.pattern, spec.decoy(label), spec.placement, mode)) {
        found[static_cast<std::size_t>(label)] = true;
      }
    }
  }
  return found;
}

double retention(std::span<const CausalRule> rules, const DecoySpec& spec,
                 MatchMode mode) {
  const auto found = detected_decoys(rules, spec, mode);
  return (static_cast<double>(found[0]) + static_cast<double>(found[1])) / 2.0;
}

double accuracy(const Predictor& model, const Dataset& dataset, Split split) {
  std::vector<Tokens> inputs;
  std::vector<int> gold;
  for (const auto& inst : dataset.instances) {
    if (inst.split != split) continue;
    inputs.push_back(model_input(inst));
    gold.push_back(inst.label);
  }
  if (inputs.empty()) return 0.0;
  const auto preds = model.predict_batch(inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].predicted == gold[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

StressResult shortcut_stress_eval(const Predictor& model, const Dataset& dataset,
                                  const DecoySpec& spec) {
  spec.validate();
  Dataset stressed;
  stressed.name = dataset.name + "_stress";
  for (const auto& inst : dataset.instances) {
    if (inst.split != Split::kTest) continue;
    Instance copy = inst;
    apply_decoy(copy, spec.decoy(1 - inst.label), spec.placement);
    stressed.instances.push_back(std::move(copy));
  }
  StressResult r;
  r.clean_accuracy = accuracy(model, dataset, Split::kTest);
  r.stress_accuracy = accuracy(model, stressed, Split::kTest);
  r.delta = r.stress_accuracy - r.clean_accuracy;
  return r;
}

std::vector<ContaminationConfig> make_grid(std::span<const double> rates,
                                           std::span<const double> biases,
                                           std::uint64_t seed) {
  std::vector<ContaminationConfig> out;
  for (double rate : rates) {
    for (double bias : biases) out.push_back({rate, bias, seed});
  }
  return out;
}

GridReport run_grid(const Dataset& dataset, const DecoySpec& spec,
                    const NativeModelConfig& model_config,
                    const PipelineConfig& pipeline,
                    std::span<const ContaminationConfig> grid, MatchMode mode,
                    Exec exec) {
  GridReport report;
  {
    const auto clean = NativeModel::train(dataset, model_config, exec);
    report.baseline_clean_accuracy = accuracy(clean, dataset, Split::kTest);
  }
  for (const auto& setting : grid) {
    GridCell cell;
    cell.contamination = setting;
    const auto contaminated = contaminate(dataset, spec, setting);
    const auto model = NativeModel::train(contaminated.dataset, model_config, exec);
    const auto predictions = cache_predictions(model, contaminated.dataset);
    try {
      const auto result = extract_rules(contaminated.dataset, model, predictions,
                                        pipeline, exec);
      cell.stats = result.stats;
      cell.detected = detected_decoys(result.rules, spec, mode);
      cell.retention = retention(result.rules, spec, mode);
    } catch (const DataError& e) {
      cell.note = e.what();
    }
    const auto stress = shortcut_stress_eval(model, contaminated.dataset, spec);
    cell.clean_accuracy = stress.clean_accuracy;
    cell.stress_accuracy = stress.stress_accuracy;
    cell.stress_delta = stress.delta;
    report.cells.push_back(cell);
  }
  return report;
}

Json to_json(const GridReport& report) {
  Json j;
  j["baseline_clean_acc"] = report.baseline_clean_accuracy;
  j["cells"] = Json::array();
  for (const auto& c : report.cells) {
    Json cell;
    cell["rate"] = c.contamination.rate;
    cell["bias"] = c.contamination.bias;
    cell["seed"] = c.contamination.seed;
    cell["retention"] = c.retention;
    cell["detected"] = {c.detected[0], c.detected[1]};
    cell["clean_acc"] = c.clean_accuracy;
    cell["stress_acc"] = c.stress_accuracy;
    cell["stress_delta"] = c.stress_delta;
    cell["n_frequent"] = c.stats.n_frequent;
    cell["n_npmi"] = c.stats.n_npmi;
    cell["n_rules"] = c.stats.n_rules;
    if (!c.note.empty()) cell["note"] = c.note;
    j["cells"].push_back(std::move(cell));
  }
  return j;
}

}  // namespace shortcut
