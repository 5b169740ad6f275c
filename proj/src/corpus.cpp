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

#include "shortcut/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace shortcut {
namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_punct(unsigned char c) {
  return c < 0x80 && std::ispunct(c);
}

std::string line_error(std::size_t line, const std::string& message) {
  return "line " + std::to_string(line) + ": " + message;
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split \"" + std::string(name) + "\"");
}

Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else if (c < 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      current.push_back(static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

std::size_t Instance::token_count() const {
  return doc.size() + (query ? query->size() : 0);
}

void Dataset::finalize() {
  two_part = !instances.empty() && instances.front().two_part();
  std::set<std::string> vocab;
  std::unordered_set<std::string_view> ids;
  for (const auto& inst : instances) {
    if (inst.two_part() != two_part) {
      throw DataError("dataset mixes one-part and two-part instances (id \"" +
                      inst.id + "\")");
    }
    if (!ids.insert(inst.id).second) {
      throw DataError("duplicate instance id \"" + inst.id + "\"");
    }
    if (inst.doc.empty()) {
      throw DataError("instance \"" + inst.id + "\" has an empty document");
    }
    if (inst.label != 0 && inst.label != 1) {
      throw DataError("instance \"" + inst.id + "\" has a non-binary label");
    }
    for (const auto& t : inst.doc) vocab.insert(t);
    if (inst.query) {
      for (const auto& t : *inst.query) vocab.insert(t);
    }
  }
  vocabulary.assign(vocab.begin(), vocab.end());
}

Dataset Dataset::only(Split split) const {
  Dataset out;
  out.name = name;
  out.label_names = label_names;
  for (const auto& inst : instances) {
    if (inst.split == split) out.instances.push_back(inst);
  }
  out.finalize();
  out.two_part = two_part;
  return out;
}

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(instances.begin(), instances.end(),
                    [&](const Instance& i) { return i.split == split; }));
}

const Instance* Dataset::find(std::string_view id) const {
  for (const auto& inst : instances) {
    if (inst.id == id) return &inst;
  }
  return nullptr;
}

std::string Dataset::content_hash() const {
  Fingerprint fp;
  fp.add(static_cast<std::int64_t>(instances.size()));
  for (const auto& inst : instances) {
    fp.add(std::string_view(inst.id));
    fp.add(static_cast<std::int64_t>(inst.query.has_value()));
    if (inst.query) fp.add(*inst.query);
    fp.add(inst.doc);
    fp.add(static_cast<std::int64_t>(inst.label));
    fp.add(split_name(inst.split));
  }
  return fp.hex();
}

std::string Pattern::text() const {
  if (!query) return join(doc);
  return "(" + join(*query) + ", " + join(doc) + ")";
}

std::optional<std::size_t> find_first(const Tokens& haystack,
                                      const Tokens& needle,
                                      std::size_t from) {
  if (needle.empty() || needle.size() > haystack.size()) return std::nullopt;
  if (from > haystack.size() - needle.size()) return std::nullopt;
  auto it = std::search(haystack.begin() + static_cast<std::ptrdiff_t>(from),
                        haystack.end(), needle.begin(), needle.end());
  if (it == haystack.end()) return std::nullopt;
  return static_cast<std::size_t>(it - haystack.begin());
}

std::vector<std::size_t> find_all(const Tokens& haystack,
                                  const Tokens& needle) {
  std::vector<std::size_t> out;
  std::size_t from = 0;
  while (auto pos = find_first(haystack, needle, from)) {
    out.push_back(*pos);
    from = *pos + 1;
  }
  return out;
}

bool contains(const Instance& instance, const Pattern& pattern) {
  if (pattern.query && !instance.query) {
    throw UsageError("pair pattern " + pattern.text() +
                     " applied to one-part instance \"" + instance.id + "\"");
  }
  if (!find_first(instance.doc, pattern.doc)) return false;
  return !pattern.query || find_first(*instance.query, *pattern.query);
}

Tokens join_parts(const std::optional<Tokens>& query, const Tokens& doc) {
  if (!query) return doc;
  Tokens out;
  out.reserve(query->size() + 1 + doc.size());
  out.insert(out.end(), query->begin(), query->end());
  out.emplace_back(kPartSeparator);
  out.insert(out.end(), doc.begin(), doc.end());
  return out;
}

Dataset parse_dataset(std::istream& in, std::string name) {
  Dataset dataset;
  dataset.name = std::move(name);
  std::string line;
  std::size_t line_no = 0;
  std::optional<bool> two_part;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return is_space(c); })) {
      continue;
    }
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(line_error(line_no, std::string("invalid JSON: ") +
                                             e.what()));
    }
    if (!record.is_object()) {
      throw DataError(line_error(line_no, "expected a JSON object"));
    }
    Instance inst;
    try {
      inst.id = record.at("id").get<std::string>();
      inst.doc = tokenize(record.at("document").get<std::string>());
      const auto label = record.at("label").get<int>();
      if (label != 0 && label != 1) {
        throw DataError(line_error(line_no, "label must be 0 or 1"));
      }
      inst.label = label;
      inst.split = parse_split(record.at("split").get<std::string>());
      if (auto q = record.find("query"); q != record.end() && !q->is_null()) {
        inst.query = tokenize(q->get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(line_error(line_no, std::string("bad record: ") +
                                             e.what()));
    } catch (const DataError& e) {
      if (std::string_view(e.what()).starts_with("line ")) throw;
      throw DataError(line_error(line_no, e.what()));
    }
    if (!two_part) two_part = inst.two_part();
    if (*two_part != inst.two_part()) {
      throw DataError(line_error(
          line_no, "format error: dataset mixes records with and without "
                   "\"query\""));
    }
    if (inst.doc.empty()) {
      throw DataError(line_error(line_no, "document has no tokens"));
    }
    dataset.instances.push_back(std::move(inst));
  }
  dataset.finalize();
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return parse_dataset(in, path.stem().string());
}

void save_dataset(const Dataset& dataset, std::ostream& out) {
  for (const auto& inst : dataset.instances) {
    nlohmann::ordered_json record;
    record["id"] = inst.id;
    if (inst.query) record["query"] = join(*inst.query);
    record["document"] = join(inst.doc);
    record["label"] = inst.label;
    record["split"] = split_name(inst.split);
    out << record.dump() << '\n';
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset " + path.string());
  save_dataset(dataset, out);
}

}  // namespace shortcut
