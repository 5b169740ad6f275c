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

#include "shortcut/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "shortcut/external.hpp"

namespace shortcut {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const ConfigSource& source) : values_(source.values()) {}

  const std::string* raw(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  void str(const std::string& key, std::string& out) const {
    if (auto v = raw(key)) out = *v;
  }

  template <class T>
  void num(const std::string& key, T& out) const {
    if (auto v = raw(key)) out = parse<T>(key, *v);
  }

  void boolean(const std::string& key, bool& out) const {
    auto v = raw(key);
    if (!v) return;
    if (*v == "true" || *v == "1" || *v == "yes") {
      out = true;
    } else if (*v == "false" || *v == "0" || *v == "no") {
      out = false;
    } else {
      throw UsageError(key + ": expected a boolean, got \"" + *v + "\"");
    }
  }

  template <class T>
  void list(const std::string& key, std::vector<T>& out) const {
    auto v = raw(key);
    if (!v) return;
    out.clear();
    for (const auto& item : split_list(*v)) out.push_back(parse<T>(key, item));
    if (out.empty()) throw UsageError(key + ": expected a non-empty list");
  }

  template <class T>
  static T parse(const std::string& key, const std::string& text) {
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      try {
        value = static_cast<T>(std::stod(text, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != text.size() || text.empty()) {
        throw UsageError(key + ": expected a number, got \"" + text + "\"");
      }
    } else {
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw UsageError(key + ": expected an integer, got \"" + text + "\"");
      }
    }
    return value;
  }

 private:
  const std::map<std::string, std::string>& values_;
};

Json model_json(const ModelSection& m) {
  Json j;
  j["kind"] = m.kind;
  if (m.external()) {
    j["command"] = m.command;
    j["url"] = m.url;
    j["fingerprint"] = m.fingerprint;
  } else {
    j["ngram_orders"] = m.native.ngram_orders;
    j["alpha"] = m.native.alpha;
    j["l2"] = m.native.l2;
    j["tolerance"] = m.native.tolerance;
    j["max_iterations"] = m.native.max_iterations;
  }
  return j;
}

Json range_json(const LengthRange& r) { return {{"min", r.min}, {"max", r.max}}; }

}  // namespace

const std::vector<ConfigKey>& ConfigSource::schema() {
  static const std::vector<ConfigKey> keys = {
      {"dataset", "JSONL dataset path"},
      {"labels", "display names for labels 0 and 1, comma separated"},
      {"preset", "miner defaults: movies, sst2, multirc or climate_fever"},
      {"seed", "seed for context sampling and contamination"},
      {"out_dir", "output directory", false},
      {"threads", "worker thread cap (0 = all cores)", false},
      {"model.kind", "naive_bayes, logistic_ngram, stdio or http"},
      {"model.ngram_orders", "n-gram feature orders, e.g. 1,2"},
      {"model.alpha", "Laplace smoothing for naive_bayes"},
      {"model.l2", "L2 strength for logistic_ngram"},
      {"model.tolerance", "gradient-norm stop for logistic_ngram"},
      {"model.max_iterations", "iteration cap for logistic_ngram"},
      {"model.command", "external model command (stdio)"},
      {"model.url", "external model endpoint (http)"},
      {"model.fingerprint", "fingerprint of the external model"},
      {"model.batch_size", "external request batch size", false},
      {"miner.doc_min", "minimum document n-gram length"},
      {"miner.doc_max", "maximum document n-gram length"},
      {"miner.query_min", "minimum query n-gram length"},
      {"miner.query_max", "maximum query n-gram length"},
      {"miner.min_support", "minimum support"},
      {"scorer.npmi_threshold", "NPMI threshold in [-1, 1]"},
      {"causality.eps_n", "neutrality bound in (0, 1)"},
      {"causality.mean_threshold", "mean counterfactual probability threshold"},
      {"causality.max_contexts", "contexts sampled per candidate"},
      {"causality.min_contexts", "contexts needed for a verdict"},
      {"decoy.preset", "sentiment:1-4 or qa:1-4"},
      {"decoy.decoy0", "custom decoy with target label 0"},
      {"decoy.decoy1", "custom decoy with target label 1"},
      {"decoy.placement", "prepend_doc or prepend_both"},
      {"decoy.rates", "contamination rates, comma separated"},
      {"decoy.biases", "biases, comma separated"},
      {"decoy.mode", "retention matching: exact or relaxed"},
      {"agreement.source", "occlusion or an attribution JSONL path"},
      {"agreement.top_n", "rules scored, by coverage"},
      {"agreement.split", "split of the satisfying instances"},
      {"agreement.doc_only", "rank document tokens only"},
      {"agreement.ablation", "also score NPMI-only candidates and the overlap"},
      {"serve.host", "bind address", false},
      {"serve.port", "listen port", false},
      {"serve.journal", "annotation journal path", false},
      {"serve.batch_window_ms", "prediction batching window", false},
  };
  return keys;
}

std::string ConfigSource::flag_name(std::string_view key) {
  std::string out(key);
  std::replace(out.begin(), out.end(), '.', '-');
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

void ConfigSource::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  load(in, path.string());
}

void ConfigSource::load(std::istream& in, const std::string& origin) {
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw UsageError(where + "unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(where + "expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (!section.empty()) key = section + "." + key;
    try {
      set(key, std::move(value));
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
}

void ConfigSource::set(const std::string& key, std::string value) {
  const auto& keys = schema();
  if (std::none_of(keys.begin(), keys.end(),
                   [&](const ConfigKey& k) { return k.key == key; })) {
    throw UsageError("unknown config key \"" + key + "\"");
  }
  values_[key] = std::move(value);
}

RunConfig RunConfig::resolve(const ConfigSource& source) {
  const Reader r(source);
  RunConfig c;
  r.str("dataset", c.dataset);
  if (auto v = r.raw("labels")) {
    auto names = split_list(*v);
    if (names.size() != 2) throw UsageError("labels: expected two names");
    c.labels = std::array<std::string, 2>{names[0], names[1]};
  }
  r.str("preset", c.preset);
  r.num("seed", c.seed);
  r.str("out_dir", c.out_dir);
  r.num("threads", c.threads);

  r.str("model.kind", c.model.kind);
  if (c.model.kind != "stdio" && c.model.kind != "http") {
    c.model.native.kind = parse_model_kind(c.model.kind);
  }
  r.list("model.ngram_orders", c.model.native.ngram_orders);
  r.num("model.alpha", c.model.native.alpha);
  r.num("model.l2", c.model.native.l2);
  r.num("model.tolerance", c.model.native.tolerance);
  r.num("model.max_iterations", c.model.native.max_iterations);
  r.str("model.command", c.model.command);
  r.str("model.url", c.model.url);
  r.str("model.fingerprint", c.model.fingerprint);
  r.num("model.batch_size", c.model.batch_size);
  if (c.model.kind == "stdio" && c.model.command.empty()) {
    throw UsageError("model.command is required for model.kind = stdio");
  }
  if (c.model.kind == "http" && c.model.url.empty()) {
    throw UsageError("model.url is required for model.kind = http");
  }
  if (!c.model.external()) c.model.native.validate();

  auto& miner = c.pipeline.miner;
  if (!c.preset.empty()) miner = MinerConfig::preset(c.preset);
  r.num("miner.doc_min", miner.doc.min);
  r.num("miner.doc_max", miner.doc.max);
  if (r.raw("miner.query_min") || r.raw("miner.query_max")) {
    LengthRange q = miner.query.value_or(miner.doc);
    r.num("miner.query_min", q.min);
    r.num("miner.query_max", q.max);
    miner.query = q;
  }
  r.num("miner.min_support", miner.min_support);
  r.num("scorer.npmi_threshold", c.pipeline.npmi_threshold);
  auto& cz = c.pipeline.causality;
  r.num("causality.eps_n", cz.eps_n);
  r.num("causality.mean_threshold", cz.mean_threshold);
  r.num("causality.max_contexts", cz.max_contexts);
  r.num("causality.min_contexts", cz.min_contexts);
  cz.seed = c.seed;
  c.pipeline.validate();

  r.str("decoy.preset", c.decoy.preset);
  c.decoy.spec = DecoySpec::preset(c.decoy.preset);
  if (auto v = r.raw("decoy.decoy0")) c.decoy.spec.decoy0 = tokenize(*v);
  if (auto v = r.raw("decoy.decoy1")) c.decoy.spec.decoy1 = tokenize(*v);
  if (auto v = r.raw("decoy.placement")) c.decoy.spec.placement = parse_placement(*v);
  c.decoy.spec.validate();
  r.list("decoy.rates", c.decoy.rates);
  r.list("decoy.biases", c.decoy.biases);
  for (double rate : c.decoy.rates) ContaminationConfig{rate, 0.5, 0}.validate();
  for (double bias : c.decoy.biases) ContaminationConfig{1.0, bias, 0}.validate();
  if (auto v = r.raw("decoy.mode")) {
    if (*v == "exact") {
      c.decoy.mode = MatchMode::kExact;
    } else if (*v == "relaxed") {
      c.decoy.mode = MatchMode::kRelaxed;
    } else {
      throw UsageError("decoy.mode: expected exact or relaxed");
    }
  }

  r.str("agreement.source", c.agreement.source);
  r.num("agreement.top_n", c.agreement.top_n);
  if (auto v = r.raw("agreement.split")) {
    try {
      c.agreement.split = parse_split(*v);
    } catch (const Error& e) {
      throw UsageError(std::string("agreement.split: ") + e.what());
    }
  }
  r.boolean("agreement.doc_only", c.agreement.doc_only);
  r.boolean("agreement.ablation", c.agreement.ablation);

  r.str("serve.host", c.serve.host);
  r.num("serve.port", c.serve.port);
  r.str("serve.journal", c.serve.journal);
  r.num("serve.batch_window_ms", c.serve.batch_window_ms);
  if (c.serve.journal.empty()) {
    c.serve.journal = (std::filesystem::path(c.out_dir) / "annotations.jsonl").string();
  }
  return c;
}

Json RunConfig::to_json() const {
  Json j = artifact_json();
  j.erase("config_hash");
  j["out_dir"] = out_dir;
  j["threads"] = threads;
  j["model"]["batch_size"] = model.batch_size;
  j["serve"] = {{"host", serve.host},
                {"port", serve.port},
                {"journal", serve.journal},
                {"batch_window_ms", serve.batch_window_ms}};
  return j;
}

Json RunConfig::artifact_json() const {
  Json j;
  j["dataset"] = dataset;
  j["labels"] = labels ? Json(*labels) : Json(nullptr);
  j["preset"] = preset;
  j["seed"] = seed;
  j["model"] = model_json(model);
  const auto& m = pipeline.miner;
  j["miner"] = {{"doc", range_json(m.doc)},
                {"query", m.query ? range_json(*m.query) : Json(nullptr)},
                {"min_support", m.min_support}};
  j["scorer"] = {{"npmi_threshold", pipeline.npmi_threshold}};
  const auto& cz = pipeline.causality;
  j["causality"] = {{"eps_n", cz.eps_n},
                    {"mean_threshold", cz.mean_threshold},
                    {"max_contexts", cz.max_contexts},
                    {"min_contexts", cz.min_contexts}};
  j["decoy"] = {{"decoy0", join(decoy.spec.decoy0)},
                {"decoy1", join(decoy.spec.decoy1)},
                {"placement", placement_name(decoy.spec.placement)},
                {"rates", decoy.rates},
                {"biases", decoy.biases},
                {"mode", decoy.mode == MatchMode::kExact ? "exact" : "relaxed"}};
  j["agreement"] = {{"source", agreement.source},
                    {"top_n", agreement.top_n},
                    {"split", split_name(agreement.split)},
                    {"doc_only", agreement.doc_only},
                    {"ablation", agreement.ablation}};
  Fingerprint fp;
  fp.add(j.dump());
  j["config_hash"] = fp.hex();
  return j;
}

std::string RunConfig::hash() const {
  return artifact_json()["config_hash"].get<std::string>();
}

Dataset load_configured_dataset(const RunConfig& config) {
  if (config.dataset.empty()) throw UsageError("no dataset configured (--dataset)");
  Dataset ds = load_dataset(config.dataset);
  if (config.labels) ds.label_names = *config.labels;
  return ds;
}

std::unique_ptr<Predictor> make_model(const RunConfig& config,
                                      const Dataset& dataset, Exec exec) {
  if (config.model.kind == "stdio") {
    return std::make_unique<StdioPredictor>(config.model.command,
                                            config.model.fingerprint);
  }
  if (config.model.kind == "http") {
    return std::make_unique<HttpPredictor>(config.model.url, config.model.batch_size,
                                           config.model.fingerprint);
  }
  return std::make_unique<NativeModel>(
      NativeModel::train(dataset, config.model.native, exec));
}

}  // namespace shortcut
