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

#include "shortcut/service.hpp"

#include <algorithm>
#include <charconv>

#include "httplib.h"

namespace shortcut {

// ---------------------------------------------------------------------------
// BatchingPredictor

struct BatchingPredictor::Request {
  std::span<const Tokens> inputs;
  std::vector<Prediction> out;
  std::exception_ptr error;
  bool done = false;
};

BatchingPredictor::BatchingPredictor(std::shared_ptr<const Predictor> inner,
                                     std::chrono::milliseconds window)
    : inner_(std::move(inner)), window_(window) {}

std::size_t BatchingPredictor::flushes() const {
  std::lock_guard lock(mutex_);
  return flushes_;
}

std::vector<Prediction> BatchingPredictor::predict_batch(
    std::span<const Tokens> inputs) const {
  auto request = std::make_shared<Request>();
  request->inputs = inputs;
  std::unique_lock lock(mutex_);
  pending_.push_back(request);
  if (leader_active_) {
    cv_.wait(lock, [&] { return request->done; });
  } else {
    // This caller collects the window and runs the batch for everyone.
    leader_active_ = true;
    lock.unlock();
    std::this_thread::sleep_for(window_);
    lock.lock();
    auto batch = std::move(pending_);
    pending_.clear();
    leader_active_ = false;
    ++flushes_;
    lock.unlock();

    std::vector<Tokens> all;
    for (const auto& r : batch) all.insert(all.end(), r->inputs.begin(), r->inputs.end());
    std::exception_ptr error;
    std::vector<Prediction> preds;
    try {
      preds = inner_->predict_batch(all);
    } catch (...) {
      error = std::current_exception();
    }
    lock.lock();
    std::size_t at = 0;
    for (auto& r : batch) {
      if (error) {
        r->error = error;
      } else {
        r->out.assign(preds.begin() + static_cast<std::ptrdiff_t>(at),
                      preds.begin() + static_cast<std::ptrdiff_t>(at + r->inputs.size()));
      }
      at += r->inputs.size();
      r->done = true;
    }
    cv_.notify_all();
  }
  if (request->error) std::rethrow_exception(request->error);
  return std::move(request->out);
}

// ---------------------------------------------------------------------------
// Service

namespace {

HttpResponse json_response(int status, const Json& body) {
  return {status, body.dump()};
}

HttpResponse error_response(int status, std::string_view code, std::string_view message) {
  Json body;
  body["error"] = {{"code", code}, {"message", message}};
  return json_response(status, body);
}

// Thrown inside handlers and turned into an error response.
struct HttpError {
  int status;
  std::string code;
  std::string message;
};

std::string param(const QueryParams& query, const std::string& key,
                  const std::string& fallback = {}) {
  auto it = query.find(key);
  return it == query.end() ? fallback : it->second;
}

std::size_t size_param(const QueryParams& query, const std::string& key,
                       std::size_t fallback) {
  auto it = query.find(key);
  if (it == query.end()) return fallback;
  std::size_t value = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw HttpError{400, "bad_parameter", key + " must be a non-negative integer"};
  }
  return value;
}

std::vector<std::string> csv_param(const QueryParams& query, const std::string& key) {
  std::vector<std::string> out;
  const std::string raw = param(query, key);
  std::size_t start = 0;
  while (start <= raw.size() && !raw.empty()) {
    const auto comma = raw.find(',', start);
    auto item = raw.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Tokens tokens_field(const nlohmann::json& j, const char* name) {
  const auto& v = j.at(name);
  if (v.is_string()) return tokenize(v.get<std::string>());
  if (v.is_array()) return v.get<Tokens>();
  throw HttpError{422, "invalid_request", std::string(name) + " must be a string or token array"};
}

nlohmann::json parse_body(std::string_view body) {
  try {
    auto j = nlohmann::json::parse(body);
    if (!j.is_object()) throw HttpError{400, "bad_json", "request body must be a JSON object"};
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw HttpError{400, "bad_json", e.what()};
  }
}

Json counterfactual_json(const Counterfactual& cf) {
  Json j;
  j["doc"] = cf.doc;
  j["doc_offset"] = cf.doc_offset;
  j["text"] = join(cf.doc);
  if (cf.query) {
    j["query"] = *cf.query;
    j["query_offset"] = *cf.query_offset;
    j["query_text"] = join(*cf.query);
  } else {
    j["query"] = nullptr;
    j["query_offset"] = nullptr;
  }
  return j;
}

double sort_key(const CausalRule& r, std::string_view by) {
  if (by == "coverage") return r.coverage;
  if (by == "npmi") return r.npmi;
  if (by == "mean_cf_prob") return r.mean_cf_prob;
  return r.support;
}

}  // namespace

void check_model_fingerprint(const RulesFile& rules, const Predictor& model) {
  const auto it = rules.config.find("model_fingerprint");
  if (it == rules.config.end() || !it->is_string()) {
    throw UsageError("rules file does not record a model fingerprint");
  }
  if (it->get<std::string>() != model.fingerprint()) {
    throw UsageError("rules file was produced by model fingerprint " + it->get<std::string>() +
                     " but the configured model has fingerprint " + model.fingerprint());
  }
}

Service::Service(RulesFile rules, std::vector<NeutralContext> contexts,
                 std::shared_ptr<const Predictor> model,
                 std::shared_ptr<AnnotationStore> annotations)
    : rules_(std::move(rules)),
      contexts_(std::move(contexts)),
      model_(std::move(model)),
      annotations_(std::move(annotations)) {
  check_model_fingerprint(rules_, *model_);
  std::sort(contexts_.begin(), contexts_.end(),
            [](const NeutralContext& a, const NeutralContext& b) { return a.id < b.id; });
}

HttpResponse Service::handle(std::string_view method, std::string_view path,
                             const QueryParams& query, std::string_view body) const {
  try {
    constexpr std::string_view kRulePrefix = "/v1/rules/";
    const bool get = method == "GET";
    const bool post = method == "POST";
    auto allow = [&](bool ok) {
      if (!ok) throw HttpError{405, "method_not_allowed", std::string(method) + " not allowed"};
    };
    if (path == "/v1/health") {
      allow(get);
      return health();
    }
    if (path == "/v1/rules") {
      allow(get);
      return list_rules(query);
    }
    if (path.starts_with(kRulePrefix) && path.size() > kRulePrefix.size()) {
      allow(get);
      return get_rule(path.substr(kRulePrefix.size()));
    }
    if (path == "/v1/contexts") {
      allow(get);
      return list_contexts(query);
    }
    if (path == "/v1/whatif") {
      allow(post);
      return whatif(body);
    }
    if (path == "/v1/annotations") {
      allow(get || post);
      return post ? post_annotation(body) : list_annotations(query);
    }
    if (path == "/v1/kappa") {
      allow(get);
      return kappa(query);
    }
    return error_response(404, "not_found", "no route for " + std::string(path));
  } catch (const HttpError& e) {
    return error_response(e.status, e.code, e.message);
  } catch (const TransportError& e) {
    return error_response(503, "model_unavailable", e.what());
  } catch (const UsageError& e) {
    return error_response(422, "invalid_request", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

HttpResponse Service::health() const {
  Json j;
  j["status"] = "ok";
  j["rules"] = rules_.rules.size();
  j["contexts"] = contexts_.size();
  j["model_fingerprint"] = model_->fingerprint();
  j["config_hash"] = rules_.config.value("config_hash", std::string{});
  j["annotations"] = annotations_ != nullptr;
  return json_response(200, j);
}

HttpResponse Service::list_rules(const QueryParams& query) const {
  const std::string by = param(query, "sort", "coverage");
  if (by != "coverage" && by != "npmi" && by != "mean_cf_prob" && by != "support") {
    throw HttpError{400, "bad_parameter",
                    "sort must be coverage, npmi, mean_cf_prob or support"};
  }
  std::vector<const CausalRule*> order;
  for (const auto& r : rules_.rules) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [&](const CausalRule* a, const CausalRule* b) {
    return sort_key(*a, by) > sort_key(*b, by);
  });
  const std::size_t offset = size_param(query, "offset", 0);
  const std::size_t limit = size_param(query, "limit", order.size());
  Json j;
  j["total"] = order.size();
  j["offset"] = offset;
  j["sort"] = by;
  j["stats"] = {{"n_frequent", rules_.stats.n_frequent},
                {"n_npmi", rules_.stats.n_npmi},
                {"n_rules", rules_.stats.n_rules},
                {"avg_pattern_len", rules_.stats.avg_pattern_len}};
  j["rules"] = Json::array();
  for (std::size_t i = offset; i < order.size() && i - offset < limit; ++i) {
    j["rules"].push_back(rule_to_json(*order[i]));
  }
  return json_response(200, j);
}

HttpResponse Service::get_rule(std::string_view id) const {
  for (const auto& r : rules_.rules) {
    if (r.id == id) return json_response(200, rule_to_json(r));
  }
  return error_response(404, "unknown_rule", "no rule with id " + std::string(id));
}

HttpResponse Service::list_contexts(const QueryParams& query) const {
  const std::size_t offset = size_param(query, "offset", 0);
  const std::size_t limit = size_param(query, "limit", 50);
  Json j;
  j["total"] = contexts_.size();
  j["offset"] = offset;
  j["limit"] = limit;
  j["contexts"] = Json::array();
  for (std::size_t i = offset; i < contexts_.size() && i - offset < limit; ++i) {
    j["contexts"].push_back(context_to_json(contexts_[i]));
  }
  return json_response(200, j);
}

HttpResponse Service::whatif(std::string_view body) const {
  const auto req = parse_body(body);
  Pattern pattern;
  try {
    if (!req.contains("pattern")) throw HttpError{422, "invalid_request", "missing pattern"};
    const auto& p = req.at("pattern");
    if (p.is_string() || p.is_array()) {
      pattern.doc = p.is_string() ? tokenize(p.get<std::string>()) : p.get<Tokens>();
    } else if (p.is_object()) {
      pattern.doc = tokens_field(p, "doc_part");
      if (p.contains("query_part") && !p.at("query_part").is_null()) {
        pattern.query = tokens_field(p, "query_part");
        if (pattern.query->empty()) {
          throw HttpError{422, "invalid_request", "query_part must be non-empty"};
        }
      }
    } else {
      throw HttpError{422, "invalid_request", "pattern must be a string, array or object"};
    }
  } catch (const nlohmann::json::exception& e) {
    throw HttpError{422, "invalid_request", e.what()};
  }
  if (pattern.doc.empty()) throw HttpError{422, "invalid_request", "pattern must be non-empty"};

  NeutralContext context;
  Json context_id = nullptr;
  try {
    if (req.contains("context_id")) {
      const auto id = req.at("context_id").get<std::size_t>();
      auto it = std::lower_bound(contexts_.begin(), contexts_.end(), id,
                                 [](const NeutralContext& c, std::size_t v) { return c.id < v; });
      if (it == contexts_.end() || it->id != id) {
        throw HttpError{404, "unknown_context", "no context with id " + std::to_string(id)};
      }
      context = *it;
      context_id = id;
    } else if (req.contains("context")) {
      const auto& c = req.at("context");
      context.doc = tokens_field(c, "doc");
      context.doc_insertion = c.value("doc_insertion", std::size_t{0});
      if (c.contains("query") && !c.at("query").is_null()) {
        context.query = tokens_field(c, "query");
        context.query_insertion = c.value("query_insertion", std::size_t{0});
      }
    } else {
      throw HttpError{422, "invalid_request", "give context_id or context"};
    }
  } catch (const nlohmann::json::exception& e) {
    throw HttpError{422, "invalid_request", e.what()};
  }

  const Counterfactual cf = synthesize_counterfactual(context, pattern);
  const std::vector<Tokens> inputs{cf.model_input(), join_parts(context.query, context.doc)};
  const auto preds = model_->predict_batch(inputs);

  double eps_n = 0.1;
  if (auto it = rules_.config.find("causality"); it != rules_.config.end()) {
    eps_n = it->value("eps_n", eps_n);
  }
  const double n = neutrality(preds[1]);
  Json j;
  j["counterfactual"] = counterfactual_json(cf);
  j["probs"] = {preds[0].probs[0], preds[0].probs[1]};
  j["predicted"] = preds[0].predicted;
  j["context"] = {{"id", context_id},
                  {"probs", {preds[1].probs[0], preds[1].probs[1]}},
                  {"neutrality", n},
                  {"neutral", n < eps_n}};
  return json_response(200, j);
}

HttpResponse Service::post_annotation(std::string_view body) const {
  if (!annotations_) throw HttpError{404, "annotations_disabled", "no annotation journal"};
  const auto req = parse_body(body);
  Annotation a;
  try {
    a = annotation_from_json(req);
  } catch (const nlohmann::json::exception& e) {
    throw HttpError{422, "invalid_request", e.what()};
  }
  if (!annotations_->knows(a.rule_id)) {
    throw HttpError{404, "unknown_rule", "no rule with id " + a.rule_id};
  }
  return json_response(201, to_json(annotations_->record(std::move(a))));
}

HttpResponse Service::list_annotations(const QueryParams& query) const {
  if (!annotations_) throw HttpError{404, "annotations_disabled", "no annotation journal"};
  const std::string rule = param(query, "rule_id");
  const std::string annotator = param(query, "annotator");
  Json j;
  j["annotations"] = Json::array();
  for (const auto& a : annotations_->all()) {
    if (!rule.empty() && a.rule_id != rule) continue;
    if (!annotator.empty() && a.annotator != annotator) continue;
    j["annotations"].push_back(to_json(a));
  }
  return json_response(200, j);
}

HttpResponse Service::kappa(const QueryParams& query) const {
  if (!annotations_) throw HttpError{404, "annotations_disabled", "no annotation journal"};
  auto report = annotations_->kappa_report(csv_param(query, "rules"),
                                           csv_param(query, "annotators"));
  return json_response(200, to_json(report));
}

// ---------------------------------------------------------------------------
// HttpServer

HttpServer::HttpServer(std::shared_ptr<const Service> service)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
  auto handler = [svc = service_](const httplib::Request& req, httplib::Response& res) {
    QueryParams query(req.params.begin(), req.params.end());
    const auto out = svc->handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(out.body, "application/json");
  };
  server_->Get(".*", handler);
  server_->Post(".*", handler);
  server_->Put(".*", handler);
  server_->Delete(".*", handler);
  server_->Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
  } else if (!server_->bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace shortcut
