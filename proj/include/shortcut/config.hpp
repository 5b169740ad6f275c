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

// Run configuration: a flat key = value file with optional [section]
// headers, overridable key by key from the command line.
//
//   dataset = data/reviews.jsonl
//   seed = 7
//   [miner]
//   doc_min = 4
//   min_support = 20
//
// A key inside [miner] is addressed as "miner.doc_min"; its flag is
// --miner-doc-min.

#ifndef SHORTCUT_CONFIG_HPP_
#define SHORTCUT_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/causality.hpp"
#include "shortcut/decoy.hpp"
#include "shortcut/predictor.hpp"
#include "shortcut/serialize.hpp"

namespace shortcut {

struct ConfigKey {
  std::string key;
  std::string help;
  // Keys that do not change results are left out of the config hash.
  bool hashed = true;
};

// Raw key/value settings. Later sets win, so load the file first and apply
// flags afterwards.
class ConfigSource {
 public:
  static const std::vector<ConfigKey>& schema();
  // "miner.doc_min" -> "miner-doc-min".
  static std::string flag_name(std::string_view key);

  void load_file(const std::filesystem::path& path);
  // Throws UsageError naming the origin and line on malformed input or an
  // unknown key.
  void load(std::istream& in, const std::string& origin);
  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct ModelSection {
  // naive_bayes, logistic_ngram, stdio or http.
  std::string kind = "naive_bayes";
  NativeModelConfig native;
  std::string command;      // stdio
  std::string url;          // http
  std::string fingerprint;  // external override
  std::size_t batch_size = 256;

  bool external() const { return kind == "stdio" || kind == "http"; }
};

struct DecoySection {
  std::string preset = "sentiment:1";
  DecoySpec spec;
  std::vector<double> rates{0.8, 0.2};
  std::vector<double> biases{0.9, 0.6};
  MatchMode mode = MatchMode::kExact;
};

struct AgreementSection {
  // "occlusion" or a path to an attribution JSONL file.
  std::string source = "occlusion";
  std::size_t top_n = 15;
  Split split = Split::kTrain;
  bool doc_only = false;
  bool ablation = false;
};

struct ServeSection {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string journal;  // defaults to <out_dir>/annotations.jsonl
  int batch_window_ms = 2;
};

struct RunConfig {
  std::string dataset;
  std::optional<std::array<std::string, 2>> labels;
  std::string preset;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;
  ModelSection model;
  PipelineConfig pipeline;
  DecoySection decoy;
  AgreementSection agreement;
  ServeSection serve;

  // Validated typed view of the settings. Throws UsageError.
  static RunConfig resolve(const ConfigSource& source);

  // Every setting.
  Json to_json() const;
  // Settings that influence results, plus the hash itself.
  Json artifact_json() const;
  // Stable hash over the result-affecting settings.
  std::string hash() const;
};

// Builds the model the config describes: trains a native model on the
// dataset's train split or connects to an external one.
std::unique_ptr<Predictor> make_model(const RunConfig& config,
                                      const Dataset& dataset,
                                      Exec exec = Exec::kParallel);

// Loads the configured dataset, applying configured label names.
Dataset load_configured_dataset(const RunConfig& config);

}  // namespace shortcut

#endif  // SHORTCUT_CONFIG_HPP_
