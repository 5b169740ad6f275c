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

// Clients for models that live outside this process.
//
// stdio: the child reads {"id","tokens"} lines on stdin and answers with
// {"id","probs":[p0,p1]} lines on stdout, in any order.
// HTTP: POST <path> {"instances":[{"id","tokens"}...]} answered by
// {"predictions":[{"id","probs"}...]}.
//
// Transport failures raise TransportError carrying the pending request ids.

#ifndef SHORTCUT_EXTERNAL_HPP_
#define SHORTCUT_EXTERNAL_HPP_

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>

#include "shortcut/predictor.hpp"

namespace shortcut {

class StdioPredictor final : public Predictor {
 public:
  // Spawns `/bin/sh -c command`. The fingerprint is derived from the
  // command line unless given explicitly.
  explicit StdioPredictor(std::string command, std::string fingerprint = {});
  ~StdioPredictor() override;

  StdioPredictor(const StdioPredictor&) = delete;
  StdioPredictor& operator=(const StdioPredictor&) = delete;

  std::vector<Prediction> predict_batch(
      std::span<const Tokens> inputs) const override;
  std::string fingerprint() const override { return fingerprint_; }

 private:
  void spawn() const;
  void shutdown() const;

  std::string command_;
  std::string fingerprint_;
  // One connection; requests are serialized through the mutex.
  mutable std::mutex mutex_;
  mutable int pid_ = -1;
  mutable int to_child_ = -1;
  mutable int from_child_ = -1;
  mutable std::string read_buffer_;
  mutable std::uint64_t next_id_ = 0;
};

class HttpPredictor final : public Predictor {
 public:
  // url: http://host:port[/path]; path defaults to /predict.
  explicit HttpPredictor(const std::string& url, std::size_t batch_size = 256,
                         std::string fingerprint = {});

  std::vector<Prediction> predict_batch(
      std::span<const Tokens> inputs) const override;
  std::string fingerprint() const override { return fingerprint_; }

 private:
  std::string host_;
  int port_ = 80;
  std::string path_ = "/predict";
  std::size_t batch_size_;
  std::string fingerprint_;
  mutable std::atomic<std::uint64_t> next_id_{0};
};

}  // namespace shortcut

#endif  // SHORTCUT_EXTERNAL_HPP_
