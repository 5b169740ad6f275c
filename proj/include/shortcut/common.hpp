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

#ifndef SHORTCUT_COMMON_HPP_
#define SHORTCUT_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace shortcut {

using Tokens = std::vector<std::string>;

// Error hierarchy. The CLI maps UsageError to exit code 1, DataError to 2 and
// everything else to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, flags or API arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Failure talking to an external predictor. Carries the ids of the requests
// that were in flight so the caller can resubmit them.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::vector<std::string> request_ids,
                 bool retryable = true)
      : Error(what),
        request_ids_(std::move(request_ids)),
        retryable_(retryable) {}

  const std::vector<std::string>& request_ids() const { return request_ids_; }
  bool retryable() const { return retryable_; }

 private:
  std::vector<std::string> request_ids_;
  bool retryable_;
};

// Selects between the serial reference path of a kernel and its OpenMP path.
// Both paths produce identical results; the serial one is kept for testing
// and benchmarking.
enum class Exec { kSerial, kParallel };

// Caps the number of OpenMP worker threads. n <= 0 restores the default.
void set_max_threads(int n);
int max_threads();

// Stable 64-bit FNV-1a hashing for fingerprints and rule ids. Unlike
// std::hash, the values are identical across platforms.
class Fingerprint {
 public:
  Fingerprint& add(std::string_view bytes);
  Fingerprint& add(std::int64_t value);
  Fingerprint& add(double value);
  Fingerprint& add(const Tokens& tokens);

  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

// Joins tokens with single spaces.
std::string join(const Tokens& tokens, std::string_view sep = " ");

}  // namespace shortcut

#endif  // SHORTCUT_COMMON_HPP_
