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

// Stand-in for an external model speaking the stdio line protocol.
//
//   fake_model [mode]
//
// p1 = sigmoid(#"good" - #"bad"). Modes:
//   ordered      answer each request as it arrives (default)
//   reversed     buffer requests and answer in reverse order at each blank read
//   die:N        exit after N answers
//   garbage      answer with a malformed line

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <poll.h>
#include <unistd.h>

#include "json.hpp"

namespace {

std::string answer(const nlohmann::json& req) {
  int score = 0;
  for (const auto& t : req.at("tokens")) {
    if (t == "good") ++score;
    if (t == "bad") --score;
  }
  const double p1 = 1.0 / (1.0 + std::exp(-static_cast<double>(score)));
  nlohmann::json resp;
  resp["id"] = req.at("id");
  resp["probs"] = {1.0 - p1, p1};
  return resp.dump();
}

bool input_pending() {
  pollfd fd{STDIN_FILENO, POLLIN, 0};
  return ::poll(&fd, 1, 20) > 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "ordered";
  long budget = -1;
  if (mode.rfind("die:", 0) == 0) budget = std::stol(mode.substr(4));

  std::ios::sync_with_stdio(false);
  std::vector<std::string> held;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    const auto req = nlohmann::json::parse(line);
    if (mode == "garbage") {
      std::cout << "{not json\n" << std::flush;
      continue;
    }
    if (mode == "reversed") {
      held.push_back(answer(req));
      if (std::cin.rdbuf()->in_avail() == 0 && !input_pending()) {
        for (auto it = held.rbegin(); it != held.rend(); ++it) std::cout << *it << '\n';
        std::cout << std::flush;
        held.clear();
      }
      continue;
    }
    if (budget == 0) return 3;
    std::cout << answer(req) << '\n' << std::flush;
    if (budget > 0) --budget;
  }
  for (auto it = held.rbegin(); it != held.rend(); ++it) std::cout << *it << '\n';
  return 0;
}
