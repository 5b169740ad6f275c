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

#include "shortcut/external.hpp"

#include <csignal>
#include <cstring>
#include <thread>
#include <unordered_map>

#include <sys/wait.h>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

namespace shortcut {
namespace {

Prediction parse_probs(const nlohmann::json& probs) {
  if (!probs.is_array() || probs.size() != 2) {
    throw DataError("\"probs\" must be a two-element array");
  }
  return Prediction::from_probs(probs[0].get<double>(), probs[1].get<double>());
}

bool write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

StdioPredictor::StdioPredictor(std::string command, std::string fingerprint)
    : command_(std::move(command)), fingerprint_(std::move(fingerprint)) {
  if (command_.empty()) throw UsageError("external predictor command is empty");
  if (fingerprint_.empty()) {
    fingerprint_ = "stdio-" + Fingerprint().add(command_).hex();
  }
  spawn();
}

StdioPredictor::~StdioPredictor() { shutdown(); }

void StdioPredictor::spawn() const {
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) throw TransportError("pipe() failed", {}, false);
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw TransportError("pipe() failed", {}, false);
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError("fork() failed", {}, false);
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  read_buffer_.clear();
}

void StdioPredictor::shutdown() const {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
  to_child_ = from_child_ = pid_ = -1;
}

std::vector<Prediction> StdioPredictor::predict_batch(
    std::span<const Tokens> inputs) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (pid_ < 0) spawn();

  std::unordered_map<std::string, std::size_t> pending;
  std::string payload;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::string id = "r" + std::to_string(next_id_++);
    nlohmann::json req;
    req["id"] = id;
    req["tokens"] = inputs[i];
    payload += req.dump();
    payload += '\n';
    pending.emplace(id, i);
    ids.push_back(std::move(id));
  }

  // The writer runs alongside the reader so a child that answers as it reads
  // cannot deadlock on a full pipe.
  bool write_ok = true;
  std::thread writer([&] { write_ok = write_all(to_child_, payload); });

  std::vector<Prediction> out(inputs.size());
  std::string failure;
  char chunk[65536];
  while (!pending.empty()) {
    auto nl = read_buffer_.find('\n');
    if (nl == std::string::npos) {
      const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        failure = "external predictor closed its output";
        break;
      }
      read_buffer_.append(chunk, static_cast<std::size_t>(n));
      continue;
    }
    std::string line = read_buffer_.substr(0, nl);
    read_buffer_.erase(0, nl + 1);
    if (line.empty()) continue;
    try {
      auto resp = nlohmann::json::parse(line);
      const auto id = resp.at("id").get<std::string>();
      auto it = pending.find(id);
      if (it == pending.end()) {
        failure = "external predictor answered unknown id \"" + id + "\"";
        break;
      }
      out[it->second] = parse_probs(resp.at("probs"));
      pending.erase(it);
    } catch (const std::exception& e) {
      failure = std::string("malformed response from external predictor: ") +
                e.what();
      break;
    }
  }
  if (!failure.empty()) {
    // Closing our end unblocks the writer if the child stopped reading.
    ::close(to_child_);
    to_child_ = -1;
  }
  writer.join();
  if (failure.empty() && !write_ok) failure = "write to external predictor failed";
  if (!failure.empty()) {
    std::vector<std::string> missing;
    for (const auto& id : ids) {
      if (pending.count(id)) missing.push_back(id);
    }
    shutdown();
    throw TransportError(failure, std::move(missing));
  }
  return out;
}

HttpPredictor::HttpPredictor(const std::string& url, std::size_t batch_size,
                             std::string fingerprint)
    : batch_size_(batch_size == 0 ? 1 : batch_size),
      fingerprint_(std::move(fingerprint)) {
  std::string rest = url;
  if (rest.starts_with("http://")) rest = rest.substr(7);
  if (rest.starts_with("https://")) {
    throw UsageError("https endpoints are not supported: " + url);
  }
  if (auto slash = rest.find('/'); slash != std::string::npos) {
    path_ = rest.substr(slash);
    rest = rest.substr(0, slash);
  }
  if (auto colon = rest.find(':'); colon != std::string::npos) {
    host_ = rest.substr(0, colon);
    try {
      port_ = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw UsageError("bad port in url " + url);
    }
  } else {
    host_ = rest;
  }
  if (host_.empty()) throw UsageError("bad url " + url);
  if (fingerprint_.empty()) fingerprint_ = "http-" + Fingerprint().add(url).hex();
}

std::vector<Prediction> HttpPredictor::predict_batch(
    std::span<const Tokens> inputs) const {
  std::vector<Prediction> out(inputs.size());
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(120, 0);
  for (std::size_t start = 0; start < inputs.size(); start += batch_size_) {
    const std::size_t end = std::min(inputs.size(), start + batch_size_);
    nlohmann::json body;
    body["instances"] = nlohmann::json::array();
    std::unordered_map<std::string, std::size_t> pending;
    std::vector<std::string> ids;
    for (std::size_t i = start; i < end; ++i) {
      std::string id = "r" + std::to_string(next_id_++);
      body["instances"].push_back({{"id", id}, {"tokens", inputs[i]}});
      pending.emplace(id, i);
      ids.push_back(std::move(id));
    }
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) {
      throw TransportError("HTTP predictor unreachable: " +
                               httplib::to_string(res.error()),
                           std::move(ids));
    }
    if (res->status != 200) {
      throw TransportError(
          "HTTP predictor returned status " + std::to_string(res->status),
          std::move(ids), res->status >= 500);
    }
    try {
      auto reply = nlohmann::json::parse(res->body);
      for (const auto& p : reply.at("predictions")) {
        const auto id = p.at("id").get<std::string>();
        auto it = pending.find(id);
        if (it == pending.end()) {
          throw DataError("unknown id \"" + id + "\"");
        }
        out[it->second] = parse_probs(p.at("probs"));
        pending.erase(it);
      }
    } catch (const std::exception& e) {
      throw TransportError(
          std::string("malformed HTTP predictor response: ") + e.what(),
          std::move(ids), false);
    }
    if (!pending.empty()) {
      std::vector<std::string> missing;
      for (const auto& id : ids) {
        if (pending.count(id)) missing.push_back(id);
      }
      throw TransportError("HTTP predictor omitted predictions",
                           std::move(missing));
    }
  }
  return out;
}

}  // namespace shortcut
