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

#include "shortcut/common.hpp"

#include <bit>
#include <omp.h>

namespace shortcut {
namespace {

constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
int g_default_threads = 0;

}  // namespace

void set_max_threads(int n) {
  if (g_default_threads == 0) g_default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : g_default_threads);
}

int max_threads() { return omp_get_max_threads(); }

Fingerprint& Fingerprint::add(std::string_view bytes) {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= kFnvPrime;
  }
  // Length terminator so that ("ab","c") and ("a","bc") differ.
  return add(static_cast<std::int64_t>(bytes.size()) ^ 0x5bd1e995);
}

Fingerprint& Fingerprint::add(std::int64_t value) {
  auto v = static_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    state_ ^= (v >> (8 * i)) & 0xff;
    state_ *= kFnvPrime;
  }
  return *this;
}

Fingerprint& Fingerprint::add(double value) {
  return add(static_cast<std::int64_t>(std::bit_cast<std::uint64_t>(value)));
}

Fingerprint& Fingerprint::add(const Tokens& tokens) {
  add(static_cast<std::int64_t>(tokens.size()));
  for (const auto& t : tokens) add(std::string_view(t));
  return *this;
}

std::string Fingerprint::hex() const { return to_hex(state_); }

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string join(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace shortcut
