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

// JSON-over-HTTP API under /v1 for browsing rules, probing counterfactuals
// and collecting annotations.
//
//   GET  /v1/health
//   GET  /v1/rules?sort=coverage|npmi|mean_cf_prob|support&offset=&limit=
//   GET  /v1/rules/{id}
//   GET  /v1/contexts?offset=&limit=
//   POST /v1/whatif
//   POST /v1/annotations        GET /v1/annotations?rule_id=&annotator=
//   GET  /v1/kappa?rules=a,b&annotators=x,y
//
// Errors are {"error":{"code","message"}}.

#ifndef SHORTCUT_SERVICE_HPP_
#define SHORTCUT_SERVICE_HPP_

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "shortcut/annotate.hpp"
#include "shortcut/causality.hpp"
#include "shortcut/predictor.hpp"

namespace httplib {
class Server;
}

namespace shortcut {

// Coalesces concurrent predict_batch calls that arrive within a short window
// into one call on the wrapped model.
class BatchingPredictor final : public Predictor {
 public:
  BatchingPredictor(std::shared_ptr<const Predictor> inner,
                    std::chrono::milliseconds window);
  std::vector<Prediction> predict_batch(
      std::span<const Tokens> inputs) const override;
  std::string fingerprint() const override { return inner_->fingerprint(); }
  // Number of calls made on the wrapped model.
  std::size_t flushes() const;

 private:
  struct Request;
  std::shared_ptr<const Predictor> inner_;
  std::chrono::milliseconds window_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  mutable std::vector<std::shared_ptr<Request>> pending_;
  mutable bool leader_active_ = false;
  mutable std::size_t flushes_ = 0;
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

class Service {
 public:
  // Throws UsageError when the rules file was produced by a model with a
  // different fingerprint.
  Service(RulesFile rules, std::vector<NeutralContext> contexts,
          std::shared_ptr<const Predictor> model,
          std::shared_ptr<AnnotationStore> annotations);

  // Routes one request. Never throws.
  HttpResponse handle(std::string_view method, std::string_view path,
                      const QueryParams& query, std::string_view body) const;

  std::size_t rule_count() const { return rules_.rules.size(); }

 private:
  HttpResponse health() const;
  HttpResponse list_rules(const QueryParams& query) const;
  HttpResponse get_rule(std::string_view id) const;
  HttpResponse list_contexts(const QueryParams& query) const;
  HttpResponse whatif(std::string_view body) const;
  HttpResponse post_annotation(std::string_view body) const;
  HttpResponse list_annotations(const QueryParams& query) const;
  HttpResponse kappa(const QueryParams& query) const;

  RulesFile rules_;
  std::vector<NeutralContext> contexts_;
  std::shared_ptr<const Predictor> model_;
  std::shared_ptr<AnnotationStore> annotations_;
};

// Throws UsageError unless the rules file records the model's fingerprint.
void check_model_fingerprint(const RulesFile& rules, const Predictor& model);

// Serves a Service over HTTP on a background thread.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const Service> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds (port 0 picks a free port) and starts listening. Returns the
  // bound port. Throws Error when binding fails.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  std::shared_ptr<const Service> service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace shortcut

#endif  // SHORTCUT_SERVICE_HPP_
