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

// Helpers shared by the unit tests and the acceptance runner.

#ifndef SHORTCUT_TESTS_TESTING_HPP_
#define SHORTCUT_TESTS_TESTING_HPP_

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "shortcut/corpus.hpp"
#include "shortcut/predictor.hpp"

namespace shortcut::testing {

// Predictor backed by a plain function of the input tokens.
class FnPredictor final : public Predictor {
 public:
  using Fn = std::function<Prediction(const Tokens&)>;
  explicit FnPredictor(Fn fn, std::string fingerprint = "fn")
      : fn_(std::move(fn)), fingerprint_(std::move(fingerprint)) {}

  std::vector<Prediction> predict_batch(
      std::span<const Tokens> inputs) const override {
    ++batches_;
    std::vector<Prediction> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) out.push_back(fn_(x));
    return out;
  }
  std::string fingerprint() const override { return fingerprint_; }
  std::size_t batches() const { return batches_.load(); }

 private:
  Fn fn_;
  std::string fingerprint_;
  mutable std::atomic<std::size_t> batches_{0};
};

inline Prediction p1(double p) { return Prediction::from_probs(1.0 - p, p); }

inline std::size_t count_token(const Tokens& x, const std::string& t) {
  return static_cast<std::size_t>(std::count(x.begin(), x.end(), t));
}

struct Row {
  std::string doc;
  int label = 0;
  Split split = Split::kTrain;
  std::string query = {};
  bool two_part = false;
};

inline Dataset make_dataset(const std::vector<Row>& rows, std::string name = "t") {
  Dataset ds;
  ds.name = std::move(name);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Instance inst;
    inst.id = "i" + std::to_string(i);
    inst.doc = tokenize(rows[i].doc);
    if (rows[i].two_part) inst.query = tokenize(rows[i].query);
    inst.label = rows[i].label;
    inst.split = rows[i].split;
    ds.instances.push_back(std::move(inst));
  }
  ds.finalize();
  return ds;
}

// Random one-part corpus over a vocabulary "w0".."w{vocab-1}".
inline Dataset random_corpus(std::mt19937_64& rng, std::size_t n, std::size_t vocab,
                             std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> label(0, 1);
  Dataset ds;
  ds.name = "random";
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.id = "r" + std::to_string(i);
    const std::size_t m = len(rng);
    for (std::size_t k = 0; k < m; ++k) inst.doc.push_back("w" + std::to_string(word(rng)));
    inst.label = label(rng);
    ds.instances.push_back(std::move(inst));
  }
  ds.finalize();
  return ds;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("shortcut_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace shortcut::testing

#endif  // SHORTCUT_TESTS_TESTING_HPP_
