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

#include <cstdlib>
#include <sys/wait.h>

#include "doctest.h"
#include "shortcut/serialize.hpp"
#include "testing.hpp"

using namespace shortcut;
using namespace shortcut::testing;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const TempDir& dir) {
  const auto log = dir / "stdout.txt";
  const std::string cmd = std::string(SHORTCUT_CLI_PATH) + " " + args + " > " + log.string() +
                          " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(log);
  return r;
}

std::string toy(const TempDir& dir) {
  const auto path = (dir / "toy.jsonl").string();
  REQUIRE(run("generate --kind toy -o " + path, dir).code == 0);
  return path;
}

}  // namespace

TEST_CASE("generate then mine writes every artifact") {
  TempDir dir;
  const auto data = toy(dir);
  const auto out = (dir / "out").string();
  const auto r = run("mine --dataset " + data + " --miner-doc-min 2 --out-dir " + out, dir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("#rules") != std::string::npos);
  for (const char* f : {"rules.json", "contexts.jsonl", "frequent.jsonl", "candidates.jsonl"}) {
    CHECK(std::filesystem::exists(std::filesystem::path(out) / f));
  }
  const auto rules = Json::parse(read_file(std::filesystem::path(out) / "rules.json"));
  CHECK(rules["config"].contains("model_fingerprint"));
  CHECK(rules["config"].contains("config_hash"));
  CHECK(!rules["rules"].empty());
}

TEST_CASE("mining is byte-for-byte reproducible") {
  TempDir dir;
  const auto data = toy(dir);
  const std::string common = "mine --dataset " + data + " --miner-doc-min 2 --seed 5 --out-dir ";
  REQUIRE(run(common + (dir / "a").string(), dir).code == 0);
  REQUIRE(run(common + (dir / "b").string() + " --threads 1", dir).code == 0);
  CHECK(read_file(dir / "a" / "rules.json") == read_file(dir / "b" / "rules.json"));
  CHECK(read_file(dir / "a" / "contexts.jsonl") == read_file(dir / "b" / "contexts.jsonl"));
}

TEST_CASE("agreement with ablation reports three columns") {
  TempDir dir;
  const auto data = toy(dir);
  const std::string base = " --dataset " + data + " --miner-doc-min 2 --out-dir " + (dir / "o").string();
  REQUIRE(run("mine" + base, dir).code == 0);
  const auto r = run("agreement --agreement-ablation true" + base, dir);
  REQUIRE(r.code == 0);
  const auto j = Json::parse(read_file(dir / "o" / "agreement.json"));
  for (const char* col : {"npmi_only", "full", "intersection"}) {
    CHECK(j["ablation"].contains(col));
  }
}

TEST_CASE("imported attributions with the wrong length exit with a data error") {
  TempDir dir;
  const auto data = toy(dir);
  const std::string base = " --dataset " + data + " --miner-doc-min 2 --out-dir " + (dir / "o").string();
  REQUIRE(run("mine" + base, dir).code == 0);
  const auto attr = dir / "attr.jsonl";
  write_file(attr, R"({"id":"t00000","target_label":1,"scores":[0.5]})" "\n");
  const auto r = run("agreement --agreement-source " + attr.string() + base, dir);
  CHECK(r.code == 2);
  CHECK(read_file(dir / "stderr.txt").find(":1:") != std::string::npos);
}

TEST_CASE("exit codes") {
  TempDir dir;
  CHECK(run("", dir).code == 1);
  CHECK(run("mine --no-such-flag 1", dir).code == 1);
  CHECK(run("mine --seed banana", dir).code == 1);
  CHECK(run("mine --dataset " + (dir / "missing.jsonl").string() + " --out-dir " +
                (dir / "o").string(),
            dir)
            .code == 2);
  write_file(dir / "bad.jsonl", "{\"text\": 1}\n");
  CHECK(run("mine --dataset " + (dir / "bad.jsonl").string() + " --out-dir " + (dir / "o").string(),
            dir)
            .code == 2);
  const auto data = toy(dir);
  const std::string external = std::string(" --model-kind stdio --model-fingerprint fake-1 --model-command '") +
                               FAKE_MODEL_PATH + " garbage'";
  CHECK(run("mine --dataset " + data + external + " --out-dir " + (dir / "o").string(), dir).code == 3);
}

TEST_CASE("serve refuses rules from a different model") {
  TempDir dir;
  const auto data = toy(dir);
  const std::string base = " --dataset " + data + " --miner-doc-min 2 --out-dir " + (dir / "o").string();
  REQUIRE(run("mine" + base, dir).code == 0);
  const auto r = run("serve --serve-port 0 --model-alpha 2.5" + base, dir);
  CHECK(r.code == 1);
  CHECK(read_file(dir / "stderr.txt").find("fingerprint") != std::string::npos);
}

TEST_CASE("contaminate and decoy") {
  TempDir dir;
  const auto data = (dir / "s.jsonl").string();
  REQUIRE(run("generate --kind sentiment -n 400 -o " + data, dir).code == 0);
  const auto dirty = (dir / "dirty.jsonl").string();
  REQUIRE(run("contaminate --dataset " + data + " --rate 0.5 --bias 0.9 -o " + dirty +
                  " --out-dir " + (dir / "o").string(),
              dir)
              .code == 0);
  CHECK(read_file(dirty) != read_file(data));
  const auto r = run("decoy --dataset " + data + " --decoy-rates 0.8 --decoy-biases 0.9 --miner-doc-min 1 " +
                         "--miner-doc-max 2 --miner-min-support 5 --out-dir " + (dir / "o").string(),
                     dir);
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "o" / "grid.json"));
}
