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

// shortcut: mine causal shortcut rules from a binary text classifier.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <pthread.h>

#include "CLI11.hpp"
#include "shortcut/annotate.hpp"
#include "shortcut/config.hpp"
#include "shortcut/decoy.hpp"
#include "shortcut/explain.hpp"
#include "shortcut/service.hpp"
#include "shortcut/synthetic.hpp"

namespace fs = std::filesystem;
using namespace shortcut;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct Paths {
  fs::path out;
  fs::path rules() const { return out / "rules.json"; }
  fs::path contexts() const { return out / "contexts.jsonl"; }
  fs::path predictions() const { return out / "predictions.jsonl"; }
  fs::path frequent() const { return out / "frequent.jsonl"; }
  fs::path candidates() const { return out / "candidates.jsonl"; }
  fs::path agreement() const { return out / "agreement.json"; }
  fs::path grid() const { return out / "grid.json"; }
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void write_json(const fs::path& path, const Json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

// Config block embedded in every artifact.
Json artifact_config(const RunConfig& config, const Dataset& dataset,
                     const Predictor& model) {
  Json j = config.artifact_json();
  j["model_fingerprint"] = model.fingerprint();
  j["dataset_name"] = dataset.name;
  j["dataset_hash"] = dataset.content_hash();
  j["label_names"] = dataset.label_names;
  return j;
}

RulesFile load_rules(const fs::path& path) {
  auto in = open_in(path);
  return read_rules(in);
}

std::shared_ptr<const Predictor> build_model(const RunConfig& config,
                                             const Dataset& dataset) {
  return std::shared_ptr<const Predictor>(make_model(config, dataset));
}

double avg_length(const Dataset& dataset, Split split) {
  std::size_t n = 0;
  std::size_t tokens = 0;
  for (const auto& inst : dataset.instances) {
    if (inst.split != split) continue;
    ++n;
    tokens += inst.token_count();
  }
  return n == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(n);
}

void print_stats(std::ostream& out, const Dataset& dataset, const RuleStats& s) {
  out << "dataset            " << dataset.name << '\n'
      << "train instances    " << dataset.count(Split::kTrain) << '\n'
      << "avg input length   " << std::fixed << std::setprecision(2)
      << avg_length(dataset, Split::kTrain) << '\n'
      << "#frequent          " << s.n_frequent << '\n'
      << "#NPMI              " << s.n_npmi << '\n'
      << "#rules             " << s.n_rules << '\n'
      << "avg rule length    " << s.avg_pattern_len << '\n'
      << "undetermined       " << s.n_undetermined << '\n'
      << "neutral contexts   " << s.n_contexts << '\n';
  out.unsetf(std::ios::fixed);
}

// --- subcommands -----------------------------------------------------------

int cmd_mine(const RunConfig& config) {
  const Paths paths{config.out_dir};
  const Dataset dataset = load_configured_dataset(config);
  const auto model = build_model(config, dataset);
  const auto predictions = cache_predictions(*model, dataset, paths.predictions());
  const auto result = extract_rules(dataset, *model, predictions, config.pipeline);
  const Json meta = artifact_config(config, dataset, *model);
  const std::string hash = config.hash();
  {
    auto out = open_out(paths.frequent());
    write_frequent(result.frequent, out);
  }
  {
    auto out = open_out(paths.candidates());
    write_candidates(result.candidates, out);
  }
  {
    auto out = open_out(paths.contexts());
    write_contexts(result.contexts, hash, out);
  }
  {
    auto out = open_out(paths.rules());
    write_rules(meta, result.stats, result.rules, out);
  }
  print_stats(std::cout, dataset, result.stats);
  std::cout << "config hash        " << hash << '\n'
            << "rules written to   " << paths.rules().string() << '\n';
  return kExitOk;
}

int cmd_agreement(const RunConfig& config, const fs::path& rules_path) {
  const Paths paths{config.out_dir};
  const Dataset dataset = load_configured_dataset(config);
  const auto model = build_model(config, dataset);
  const RulesFile rules = load_rules(rules_path.empty() ? paths.rules() : rules_path);
  check_model_fingerprint(rules, *model);
  const auto predictions = cache_predictions(*model, dataset, paths.predictions());

  const auto full = scored_rules(rules.rules);
  std::vector<ScoredRule> candidates;
  if (config.agreement.ablation) {
    auto in = open_in(paths.candidates());
    const auto cands = read_candidates(in);
    candidates = scored_rules(cands, model->fingerprint());
  }

  // Instances that need an attribution: the satisfying instances of every
  // rule that can be selected.
  std::vector<ScoredRule> selectable = top_by_coverage(full, config.agreement.top_n);
  if (config.agreement.ablation) {
    auto top = top_by_coverage(candidates, config.agreement.top_n);
    selectable.insert(selectable.end(), top.begin(), top.end());
  }

  AttributionIndex attributions;
  Json issues = Json::array();
  if (config.agreement.source == "occlusion") {
    std::vector<char> needed(dataset.instances.size(), 0);
    for (const auto& r : selectable) {
      for (auto i : satisfying_instances(r.pattern, r.consequent, dataset, predictions,
                                         config.agreement.split)) {
        needed[i] = 1;
      }
    }
    std::vector<const Instance*> targets;
    for (std::size_t i = 0; i < needed.size(); ++i) {
      if (needed[i]) targets.push_back(&dataset.instances[i]);
    }
    for (auto& v : occlusion_attribute_all(*model, targets)) {
      attributions.emplace(v.instance_id, std::move(v));
    }
  } else {
    auto imported = import_attributions(fs::path(config.agreement.source), dataset);
    for (auto& v : imported.vectors) attributions.emplace(v.instance_id, std::move(v));
    for (const auto& issue : imported.issues) {
      std::cerr << config.agreement.source << ":" << issue.line << ": " << issue.id
                << ": " << issue.message << '\n';
      issues.push_back({{"line", issue.line}, {"id", issue.id}, {"message", issue.message}});
    }
  }

  const AgreementOptions options{config.agreement.split, config.agreement.doc_only};
  Json out;
  out["config"] = artifact_config(config, dataset, *model);
  out["source"] = config.agreement.source;
  out["top_n"] = config.agreement.top_n;
  out["import_issues"] = issues;
  if (config.agreement.ablation) {
    const auto report = ablation(candidates, full, config.agreement.top_n, dataset,
                                 predictions, attributions, options);
    out["ablation"] = to_json(report);
    std::cout << "npmi_only     " << report.npmi_only.mean << " (var " << report.npmi_only.variance << ")\n"
              << "full          " << report.full.mean << " (var " << report.full.variance << ")\n"
              << "intersection  " << report.intersection.mean << " (var " << report.intersection.variance << ")\n";
  } else {
    const auto report = mean_agreement(top_by_coverage(full, config.agreement.top_n), dataset,
                                       predictions, attributions, options);
    out["report"] = to_json(report);
    std::cout << "rules scored  " << report.rows.size() << '\n'
              << "mean          " << report.mean << '\n'
              << "variance      " << report.variance << '\n';
  }
  write_json(paths.agreement(), out);
  return issues.empty() ? kExitOk : kExitData;
}

int cmd_decoy(const RunConfig& config) {
  const Paths paths{config.out_dir};
  const Dataset dataset = load_configured_dataset(config);
  if (config.model.external()) {
    throw UsageError("decoy runs retrain the model and need a native model.kind");
  }
  const auto grid = make_grid(config.decoy.rates, config.decoy.biases, config.seed);
  const auto report = run_grid(dataset, config.decoy.spec, config.model.native,
                               config.pipeline, grid, config.decoy.mode);
  Json out = to_json(report);
  Json meta = config.artifact_json();
  meta["dataset_hash"] = dataset.content_hash();
  out["config"] = meta;
  write_json(paths.grid(), out);
  std::cout << "baseline clean accuracy " << report.baseline_clean_accuracy << '\n';
  for (const auto& c : report.cells) {
    std::cout << "rate " << c.contamination.rate << " bias " << c.contamination.bias
              << ": retention " << c.retention << ", clean acc " << c.clean_accuracy
              << ", stress delta " << c.stress_delta << '\n';
  }
  return kExitOk;
}

int cmd_contaminate(const RunConfig& config, double rate, double bias,
                    const fs::path& output) {
  const Paths paths{config.out_dir};
  const Dataset dataset = load_configured_dataset(config);
  const auto result = contaminate(dataset, config.decoy.spec, {rate, bias, config.seed});
  const fs::path data_path = output.empty() ? paths.out / "contaminated.jsonl" : output;
  {
    auto out = open_out(data_path);
    save_dataset(result.dataset, out);
  }
  {
    auto out = open_out(paths.out / "manifest.jsonl");
    write_manifest(result.manifest, out);
  }
  std::cout << "contaminated " << result.manifest.size() << " instances -> "
            << data_path.string() << '\n';
  return kExitOk;
}

int cmd_stats(const RunConfig& config, const fs::path& rules_path) {
  const Paths paths{config.out_dir};
  const Dataset dataset = load_configured_dataset(config);
  const RulesFile rules = load_rules(rules_path.empty() ? paths.rules() : rules_path);
  print_stats(std::cout, dataset, rules.stats);
  Json j;
  j["config_hash"] = rules.config.value("config_hash", std::string{});
  j["dataset"] = dataset.name;
  j["train_instances"] = dataset.count(Split::kTrain);
  j["avg_input_length"] = avg_length(dataset, Split::kTrain);
  j["n_frequent"] = rules.stats.n_frequent;
  j["n_npmi"] = rules.stats.n_npmi;
  j["n_rules"] = rules.stats.n_rules;
  j["avg_pattern_len"] = rules.stats.avg_pattern_len;
  write_json(paths.out / "stats.json", j);
  return kExitOk;
}

int cmd_serve(const RunConfig& config, const fs::path& rules_path,
              const fs::path& contexts_path) {
  const Paths paths{config.out_dir};
  const Dataset dataset = load_configured_dataset(config);
  RulesFile rules = load_rules(rules_path.empty() ? paths.rules() : rules_path);
  auto in = open_in(contexts_path.empty() ? paths.contexts() : contexts_path);
  auto contexts = read_contexts(in);
  std::shared_ptr<const Predictor> model = build_model(config, dataset);
  check_model_fingerprint(rules, *model);
  if (config.serve.batch_window_ms > 0) {
    model = std::make_shared<BatchingPredictor>(
        model, std::chrono::milliseconds(config.serve.batch_window_ms));
  }
  std::vector<std::string> ids;
  for (const auto& r : rules.rules) ids.push_back(r.id);
  auto store = std::make_shared<AnnotationStore>(config.serve.journal, ids);
  auto service = std::make_shared<const Service>(std::move(rules), std::move(contexts),
                                                 model, store);

  // Block the stop signals before the server threads start, then wait for
  // one on this thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  HttpServer server(service);
  const int port = server.start(config.serve.host, config.serve.port);
  std::cout << "serving " << service->rule_count() << " rules on http://"
            << config.serve.host << ":" << port << "/v1" << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
  return kExitOk;
}

int cmd_generate(const std::string& kind, std::size_t n, std::uint64_t seed,
                 const fs::path& output) {
  Dataset ds;
  if (kind == "sentiment") {
    SentimentCorpusConfig c;
    c.n_instances = n == 0 ? c.n_instances : n;
    c.seed = seed;
    ds = sentiment_corpus(c);
  } else if (kind == "toy") {
    ToyCorpusConfig c;
    c.n_instances = n == 0 ? c.n_instances : n;
    c.seed = seed;
    ds = toy_corpus(c);
  } else {
    throw UsageError("generate kind must be sentiment or toy");
  }
  auto out = open_out(output);
  save_dataset(ds, out);
  std::cout << "wrote " << ds.instances.size() << " instances to " << output.string()
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Mine causal n-gram shortcut rules from a binary text classifier.\n\n"
      "Settings come from --config (key = value lines with optional [section]\n"
      "headers) and from the flags below; a flag wins over the same key in the\n"
      "file. Outputs go to --out-dir with fixed file names."};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("-c,--config", config_path, "config file");
  std::map<std::string, std::string> flag_values;
  for (const auto& key : ConfigSource::schema()) {
    app.add_option("--" + ConfigSource::flag_name(key.key), flag_values[key.key], key.help);
  }

  auto* mine = app.add_subcommand("mine", "frequent patterns -> NPMI -> causality check -> rules.json");
  auto* agreement = app.add_subcommand("agreement", "nDCG agreement of rules with token attributions");
  auto* decoy = app.add_subcommand("decoy", "contamination grid: retention and accuracy per cell");
  auto* contaminate_cmd = app.add_subcommand("contaminate", "write a decoy-contaminated copy of the dataset");
  auto* stats = app.add_subcommand("stats", "dataset and rule statistics");
  auto* serve = app.add_subcommand("serve", "HTTP API for rule inspection and annotation");
  auto* generate = app.add_subcommand("generate", "write a synthetic corpus");

  std::string rules_path;
  std::string contexts_path;
  for (auto* sub : {agreement, stats, serve}) {
    sub->add_option("--rules", rules_path, "rules file (default <out-dir>/rules.json)");
  }
  serve->add_option("--contexts", contexts_path, "contexts file (default <out-dir>/contexts.jsonl)");

  double rate = -1.0;
  double bias = -1.0;
  std::string output;
  contaminate_cmd->add_option("--rate", rate, "contamination rate (default first decoy.rates)");
  contaminate_cmd->add_option("--bias", bias, "bias (default first decoy.biases)");
  contaminate_cmd->add_option("-o,--output", output, "dataset output path");

  std::string kind = "sentiment";
  std::size_t n_instances = 0;
  std::uint64_t gen_seed = 7;
  generate->add_option("--kind", kind, "sentiment or toy")->check(CLI::IsMember({"sentiment", "toy"}));
  generate->add_option("-n,--instances", n_instances, "instance count");
  generate->add_option("--gen-seed", gen_seed, "generator seed");
  generate->add_option("-o,--output", output, "dataset output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(kind, n_instances, gen_seed, output);

    ConfigSource source;
    if (!config_path.empty()) source.load_file(config_path);
    for (const auto& key : ConfigSource::schema()) {
      auto* opt = app.get_option("--" + ConfigSource::flag_name(key.key));
      if (opt->count() > 0) source.set(key.key, flag_values[key.key]);
    }
    const RunConfig config = RunConfig::resolve(source);
    set_max_threads(config.threads);
    fs::create_directories(config.out_dir);

    if (mine->parsed()) return cmd_mine(config);
    if (agreement->parsed()) return cmd_agreement(config, rules_path);
    if (decoy->parsed()) return cmd_decoy(config);
    if (contaminate_cmd->parsed()) {
      return cmd_contaminate(config, rate > 0 ? rate : config.decoy.rates.front(),
                             bias > 0 ? bias : config.decoy.biases.front(), output);
    }
    if (stats->parsed()) return cmd_stats(config, rules_path);
    if (serve->parsed()) return cmd_serve(config, rules_path, contexts_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
