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

// Black-box prediction interface P(y|x) and the native baselines.

#ifndef SHORTCUT_PREDICTOR_HPP_
#define SHORTCUT_PREDICTOR_HPP_

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "shortcut/common.hpp"
#include "shortcut/corpus.hpp"

namespace shortcut {

struct Prediction {
  std::array<double, 2> probs{0.5, 0.5};
  int predicted = 0;

  // Normalizes (p0, p1) to sum to one; ties go to label 0. Throws DataError
  // on negative, non-finite or all-zero input.
  static Prediction from_probs(double p0, double p1);
  // Numerically stable sigmoid of the label-1 logit.
  static Prediction from_logit(double logit1);

  double prob(int label) const { return probs[static_cast<std::size_t>(label)]; }
};

// A trained classifier. Implementations must be safe to call concurrently.
class Predictor {
 public:
  virtual ~Predictor() = default;

  // Order-preserving; one prediction per input.
  virtual std::vector<Prediction> predict_batch(
      std::span<const Tokens> inputs) const = 0;

  // Identifies the model for cache keys and rule ids.
  virtual std::string fingerprint() const = 0;

  Prediction predict(const Tokens& input) const;
};

enum class ModelKind { kNaiveBayes, kLogisticNgram };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct NativeModelConfig {
  ModelKind kind = ModelKind::kNaiveBayes;
  std::vector<int> ngram_orders{1, 2};
  double alpha = 1.0;         // Laplace smoothing (naive Bayes)
  double l2 = 1e-3;           // L2 strength (logistic)
  double tolerance = 1e-6;    // gradient-norm stop (logistic)
  int max_iterations = 2000;  // logistic

  void validate() const;
};

// Multinomial naive Bayes or L2 logistic regression over contiguous n-gram
// count features. Immutable after training.
class NativeModel final : public Predictor {
 public:
  // Trains on the train split of the dataset. Two-part instances are joined
  // with the part separator. Throws DataError when the split is empty or
  // holds a single label.
  static NativeModel train(const Dataset& dataset,
                           const NativeModelConfig& config,
                           Exec exec = Exec::kParallel);

  std::vector<Prediction> predict_batch(
      std::span<const Tokens> inputs) const override;
  std::string fingerprint() const override { return fingerprint_; }

  // Label-1 logit of one input.
  double logit(const Tokens& input) const;

  const NativeModelConfig& config() const { return config_; }
  std::size_t num_features() const { return feature_index_.size(); }

  // Gradient norm reached by logistic training (0 for naive Bayes).
  double final_gradient_norm() const { return final_gradient_norm_; }

  // Serial reference path used by tests and benchmarks; predict_batch is the
  // OpenMP path.
  std::vector<Prediction> predict_batch_serial(
      std::span<const Tokens> inputs) const;

 private:
  NativeModel() = default;

  NativeModelConfig config_;
  std::string fingerprint_;
  std::unordered_map<std::string, std::size_t> feature_index_;
  // Naive Bayes: per-feature log P(f|1) - log P(f|0). Logistic: weights.
  std::vector<double> weights_;
  // Naive Bayes: log prior ratio. Logistic: intercept.
  double bias_ = 0.0;
  double final_gradient_norm_ = 0.0;
};

// Contiguous n-grams of the requested orders, each joined with spaces.
std::vector<std::string> ngram_features(const Tokens& tokens,
                                        std::span<const int> orders);

// Cached predictions for every instance of a dataset.
class PredictionTable {
 public:
  PredictionTable() = default;
  PredictionTable(std::string dataset_name, std::string dataset_hash,
                  std::string fingerprint, std::vector<std::string> ids,
                  std::vector<Prediction> predictions);

  const Prediction& at(std::string_view id) const;
  const Prediction* find(std::string_view id) const;
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Prediction>& predictions() const { return predictions_; }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::string& dataset_name() const { return dataset_name_; }
  const std::string& dataset_hash() const { return dataset_hash_; }

  // Header line {"dataset","dataset_hash","fingerprint"} then one
  // {"id","probs"} line per instance in dataset order.
  void write(std::ostream& out) const;
  static PredictionTable read(std::istream& in);

 private:
  std::string dataset_name_;
  std::string dataset_hash_;
  std::string fingerprint_;
  std::vector<std::string> ids_;
  std::vector<Prediction> predictions_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Predicts every instance of every split. When cache_file is non-empty it is
// reused if its header matches (dataset name, dataset hash, model
// fingerprint) and rewritten otherwise.
PredictionTable cache_predictions(const Predictor& model,
                                  const Dataset& dataset,
                                  const std::filesystem::path& cache_file = {});

}  // namespace shortcut

#endif  // SHORTCUT_PREDICTOR_HPP_
