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

#include "shortcut/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "shortcut/parallel.hpp"

namespace shortcut {
namespace {

struct SparseRow {
  std::vector<std::pair<std::size_t, double>> entries;
  int label = 0;
};

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

// Mean logistic loss + l2/2 |w|^2 over sparse count rows. The last
// coordinate of the parameter vector is the unregularized intercept.
class LogisticObjective {
 public:
  LogisticObjective(const std::vector<SparseRow>& rows, std::size_t dim,
                    double l2)
      : rows_(rows), dim_(dim), l2_(l2) {}

  double operator()(const std::vector<double>& x,
                    std::vector<double>& grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double n = static_cast<double>(rows_.size());
    double loss = 0.0;
    for (const auto& row : rows_) {
      double z = x[dim_];
      for (const auto& [j, v] : row.entries) z += x[j] * v;
      const double sign = row.label == 1 ? 1.0 : -1.0;
      loss += softplus(-sign * z);
      const double g = -sign * sigmoid(-sign * z) / n;
      for (const auto& [j, v] : row.entries) grad[j] += g * v;
      grad[dim_] += g;
    }
    loss /= n;
    for (std::size_t j = 0; j < dim_; ++j) {
      loss += 0.5 * l2_ * x[j] * x[j];
      grad[j] += l2_ * x[j];
    }
    return loss;
  }

 private:
  const std::vector<SparseRow>& rows_;
  std::size_t dim_;
  double l2_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Limited-memory BFGS with Armijo backtracking. Returns the final gradient
// norm.
double minimize_lbfgs(const LogisticObjective& f, std::vector<double>& x,
                      double tolerance, int max_iterations) {
  constexpr std::size_t kHistory = 10;
  const std::size_t n = x.size();
  std::vector<double> grad(n), next_grad(n), direction(n), next_x(n);
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  double value = f(x, grad);
  double gnorm = std::sqrt(dot(grad, grad));
  for (int iter = 0; iter < max_iterations && gnorm > tolerance; ++iter) {
    // Two-loop recursion.
    direction = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], direction);
      for (std::size_t j = 0; j < n; ++j) direction[j] -= alpha[k] * y_hist[k][j];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) /
                           dot(y_hist.back(), y_hist.back());
      for (auto& d : direction) d *= gamma;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], direction);
      for (std::size_t j = 0; j < n; ++j) {
        direction[j] += s_hist[k][j] * (alpha[k] - beta);
      }
    }
    for (auto& d : direction) d = -d;
    double slope = dot(grad, direction);
    if (slope >= 0) {
      // Not a descent direction; fall back to steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t j = 0; j < n; ++j) direction[j] = -grad[j];
      slope = -gnorm * gnorm;
    }
    double step = 1.0;
    double next_value = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < n; ++j) next_x[j] = x[j] + step * direction[j];
      next_value = f(next_x, next_grad);
      if (next_value <= value + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = next_x[j] - x[j];
      y[j] = next_grad[j] - grad[j];
    }
    const double sy = dot(s, y);
    x.swap(next_x);
    grad.swap(next_grad);
    value = next_value;
    gnorm = std::sqrt(dot(grad, grad));
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kHistory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  return gnorm;
}

}  // namespace

Prediction Prediction::from_probs(double p0, double p1) {
  if (!std::isfinite(p0) || !std::isfinite(p1) || p0 < 0 || p1 < 0 ||
      p0 + p1 <= 0) {
    throw DataError("invalid probabilities [" + std::to_string(p0) + ", " +
                    std::to_string(p1) + "]");
  }
  const double total = p0 + p1;
  Prediction out;
  out.probs = {p0 / total, p1 / total};
  out.predicted = out.probs[1] > out.probs[0] ? 1 : 0;
  return out;
}

Prediction Prediction::from_logit(double logit1) {
  Prediction out;
  out.probs = {sigmoid(-logit1), sigmoid(logit1)};
  out.predicted = out.probs[1] > out.probs[0] ? 1 : 0;
  return out;
}

Prediction Predictor::predict(const Tokens& input) const {
  return predict_batch(std::span<const Tokens>(&input, 1)).front();
}

std::string_view model_kind_name(ModelKind kind) {
  return kind == ModelKind::kNaiveBayes ? "naive_bayes" : "logistic_ngram";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "naive_bayes") return ModelKind::kNaiveBayes;
  if (name == "logistic_ngram") return ModelKind::kLogisticNgram;
  throw UsageError("unknown native model kind \"" + std::string(name) + "\"");
}

void NativeModelConfig::validate() const {
  if (ngram_orders.empty()) throw UsageError("ngram_orders must not be empty");
  for (int n : ngram_orders) {
    if (n < 1 || n > 3) throw UsageError("ngram orders must be in {1,2,3}");
  }
  if (!(alpha > 0)) throw UsageError("alpha must be positive");
  if (!(l2 > 0)) throw UsageError("l2 must be positive");
  if (!(tolerance > 0)) throw UsageError("tolerance must be positive");
  if (max_iterations < 1) throw UsageError("max_iterations must be >= 1");
}

std::vector<std::string> ngram_features(const Tokens& tokens,
                                        std::span<const int> orders) {
  std::vector<std::string> out;
  for (int order : orders) {
    const auto n = static_cast<std::size_t>(order);
    if (tokens.size() < n) continue;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string f = tokens[i];
      for (std::size_t k = 1; k < n; ++k) {
        f += ' ';
        f += tokens[i + k];
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

NativeModel NativeModel::train(const Dataset& dataset,
                               const NativeModelConfig& config, Exec exec) {
  config.validate();
  NativeModel model;
  model.config_ = config;
  std::sort(model.config_.ngram_orders.begin(), model.config_.ngram_orders.end());
  model.config_.ngram_orders.erase(
      std::unique(model.config_.ngram_orders.begin(),
                  model.config_.ngram_orders.end()),
      model.config_.ngram_orders.end());
  const auto& orders = model.config_.ngram_orders;

  std::vector<const Instance*> train;
  for (const auto& inst : dataset.instances) {
    if (inst.split == Split::kTrain) train.push_back(&inst);
  }
  if (train.empty()) throw DataError("cannot train on an empty train split");
  std::array<std::size_t, 2> class_docs{0, 0};
  for (const auto* inst : train) ++class_docs[static_cast<std::size_t>(inst->label)];
  if (class_docs[0] == 0 || class_docs[1] == 0) {
    throw DataError("train split holds a single label; both are required");
  }

  std::vector<std::vector<std::string>> features(train.size());
  for_each_index(train.size(), exec, [&](std::size_t i) {
    features[i] = ngram_features(model_input(*train[i]), orders);
  });

  // Feature ids in sorted order so that parameters do not depend on hash
  // iteration order.
  std::set<std::string_view> vocab;
  for (const auto& fs : features) vocab.insert(fs.begin(), fs.end());
  std::size_t next = 0;
  for (auto f : vocab) model.feature_index_.emplace(std::string(f), next++);
  const std::size_t dim = model.feature_index_.size();

  Fingerprint fp;
  fp.add(model_kind_name(config.kind));
  fp.add(static_cast<std::int64_t>(orders.size()));
  for (int o : orders) fp.add(static_cast<std::int64_t>(o));
  if (config.kind == ModelKind::kNaiveBayes) {
    fp.add(config.alpha);
  } else {
    fp.add(config.l2).add(config.tolerance);
    fp.add(static_cast<std::int64_t>(config.max_iterations));
  }
  for (const auto* inst : train) {
    fp.add(std::string_view(inst->id));
    fp.add(model_input(*inst));
    fp.add(static_cast<std::int64_t>(inst->label));
  }
  model.fingerprint_ = fp.hex();

  if (config.kind == ModelKind::kNaiveBayes) {
    std::vector<std::array<double, 2>> counts(dim, {0.0, 0.0});
    std::array<double, 2> totals{0.0, 0.0};
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto y = static_cast<std::size_t>(train[i]->label);
      for (const auto& f : features[i]) {
        counts[model.feature_index_.at(f)][y] += 1.0;
        totals[y] += 1.0;
      }
    }
    const double a = config.alpha;
    const double v = static_cast<double>(dim);
    model.weights_.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      model.weights_[j] = std::log((counts[j][1] + a) / (totals[1] + a * v)) -
                          std::log((counts[j][0] + a) / (totals[0] + a * v));
    }
    model.bias_ = std::log(static_cast<double>(class_docs[1])) -
                  std::log(static_cast<double>(class_docs[0]));
  } else {
    std::vector<SparseRow> rows(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      std::map<std::size_t, double> row;
      for (const auto& f : features[i]) row[model.feature_index_.at(f)] += 1.0;
      rows[i].entries.assign(row.begin(), row.end());
      rows[i].label = train[i]->label;
    }
    LogisticObjective objective(rows, dim, config.l2);
    std::vector<double> x(dim + 1, 0.0);
    model.final_gradient_norm_ =
        minimize_lbfgs(objective, x, config.tolerance, config.max_iterations);
    model.bias_ = x[dim];
    x.pop_back();
    model.weights_ = std::move(x);
  }
  return model;
}

double NativeModel::logit(const Tokens& input) const {
  double z = bias_;
  for (const auto& f : ngram_features(input, config_.ngram_orders)) {
    // Features never seen in training carry no evidence.
    if (auto it = feature_index_.find(f); it != feature_index_.end()) {
      z += weights_[it->second];
    }
  }
  return z;
}

std::vector<Prediction> NativeModel::predict_batch(
    std::span<const Tokens> inputs) const {
  std::vector<Prediction> out(inputs.size());
  for_each_index(inputs.size(), Exec::kParallel, [&](std::size_t i) {
    out[i] = Prediction::from_logit(logit(inputs[i]));
  });
  return out;
}

std::vector<Prediction> NativeModel::predict_batch_serial(
    std::span<const Tokens> inputs) const {
  std::vector<Prediction> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out[i] = Prediction::from_logit(logit(inputs[i]));
  }
  return out;
}

PredictionTable::PredictionTable(std::string dataset_name,
                                 std::string dataset_hash,
                                 std::string fingerprint,
                                 std::vector<std::string> ids,
                                 std::vector<Prediction> predictions)
    : dataset_name_(std::move(dataset_name)),
      dataset_hash_(std::move(dataset_hash)),
      fingerprint_(std::move(fingerprint)),
      ids_(std::move(ids)),
      predictions_(std::move(predictions)) {
  if (ids_.size() != predictions_.size()) {
    throw DataError("prediction table: id/prediction count mismatch");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw DataError("prediction table: duplicate id \"" + ids_[i] + "\"");
    }
  }
}

const Prediction* PredictionTable::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &predictions_[it->second];
}

const Prediction& PredictionTable::at(std::string_view id) const {
  if (const auto* p = find(id)) return *p;
  throw DataError("no cached prediction for instance \"" + std::string(id) +
                  "\"");
}

void PredictionTable::write(std::ostream& out) const {
  nlohmann::ordered_json header;
  header["dataset"] = dataset_name_;
  header["dataset_hash"] = dataset_hash_;
  header["fingerprint"] = fingerprint_;
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    nlohmann::ordered_json row;
    row["id"] = ids_[i];
    row["probs"] = {predictions_[i].probs[0], predictions_[i].probs[1]};
    out << row.dump() << '\n';
  }
}

PredictionTable PredictionTable::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("prediction cache is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("prediction cache header: ") + e.what());
  }
  std::vector<std::string> ids;
  std::vector<Prediction> preds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto row = nlohmann::json::parse(line);
      ids.push_back(row.at("id").get<std::string>());
      const auto& probs = row.at("probs");
      preds.push_back(Prediction::from_probs(probs.at(0).get<double>(),
                                             probs.at(1).get<double>()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("prediction cache line " + std::to_string(line_no) +
                      ": " + e.what());
    }
  }
  return PredictionTable(header.value("dataset", ""),
                         header.value("dataset_hash", ""),
                         header.value("fingerprint", ""), std::move(ids),
                         std::move(preds));
}

PredictionTable cache_predictions(const Predictor& model,
                                  const Dataset& dataset,
                                  const std::filesystem::path& cache_file) {
  const std::string fingerprint = model.fingerprint();
  const std::string dataset_hash = dataset.content_hash();
  if (!cache_file.empty() && std::filesystem::exists(cache_file)) {
    std::ifstream in(cache_file);
    try {
      auto table = PredictionTable::read(in);
      if (table.fingerprint() == fingerprint &&
          table.dataset_name() == dataset.name &&
          table.dataset_hash() == dataset_hash &&
          table.size() == dataset.instances.size()) {
        return table;
      }
    } catch (const DataError&) {
      // Unreadable cache: recompute below.
    }
  }
  std::vector<Tokens> inputs;
  std::vector<std::string> ids;
  inputs.reserve(dataset.instances.size());
  for (const auto& inst : dataset.instances) {
    inputs.push_back(model_input(inst));
    ids.push_back(inst.id);
  }
  auto preds = model.predict_batch(inputs);
  PredictionTable table(dataset.name, dataset_hash, fingerprint, std::move(ids),
                        std::move(preds));
  if (!cache_file.empty()) {
    std::ofstream out(cache_file);
    if (!out) throw DataError("cannot write prediction cache " + cache_file.string());
    table.write(out);
  }
  return table;
}

}  // namespace shortcut
