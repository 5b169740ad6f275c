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

#include "shortcut/miner.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <set>
#include <unordered_map>

#include <omp.h>

#include "json.hpp"
#include "shortcut/parallel.hpp"

namespace shortcut {
namespace {

using Seq = std::vector<std::uint32_t>;
using CountMap = std::unordered_map<std::uint64_t, int>;

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

// Frequent n-grams of one length. Gram ids index `keys`, which are sorted;
// a key is the token id at length 1 and (prefix gram id << 32 | last token)
// above.
struct Level {
  std::vector<std::uint64_t> keys;
  std::vector<int> support;
};

struct PartResult {
  std::vector<Level> levels;  // levels[l - 1] holds length l
  // Per instance: sorted indices into `flat` of the frequent grams with
  // length in range that it contains. Only filled on request.
  std::vector<std::vector<std::uint32_t>> present;
  // Flat enumeration of the in-range grams: (length, gram id).
  std::vector<std::pair<int, std::uint32_t>> flat;
};

// Sorted distinct window keys of one instance at the current level.
void instance_keys(const Seq& seq, const std::vector<std::uint32_t>* prev,
                   int len, std::vector<std::uint64_t>& keys) {
  keys.clear();
  const auto n = seq.size();
  const auto l = static_cast<std::size_t>(len);
  if (n < l) return;
  for (std::size_t p = 0; p + l <= n; ++p) {
    if (len == 1) {
      keys.push_back(seq[p]);
      continue;
    }
    const auto a = (*prev)[p];
    const auto b = (*prev)[p + 1];
    if (a == kNone || b == kNone) continue;
    keys.push_back((static_cast<std::uint64_t>(a) << 32) | seq[p + l - 1]);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
}

template <class KeyFn>
CountMap count_keys(std::size_t n_instances, Exec exec, KeyFn&& key_fn) {
  CountMap total;
  if (exec == Exec::kSerial || n_instances < 2) {
    std::vector<std::uint64_t> keys;
    for (std::size_t i = 0; i < n_instances; ++i) {
      key_fn(i, keys);
      for (auto k : keys) ++total[k];
    }
    return total;
  }
  const int threads = omp_get_max_threads();
  std::vector<CountMap> partial(static_cast<std::size_t>(threads));
  const auto count = static_cast<std::int64_t>(n_instances);
#pragma omp parallel
  {
    auto& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
    std::vector<std::uint64_t> keys;
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < count; ++i) {
      key_fn(static_cast<std::size_t>(i), keys);
      for (auto k : keys) ++local[k];
    }
  }
  for (auto& local : partial) {
    for (const auto& [k, c] : local) total[k] += c;
  }
  return total;
}

PartResult mine_part(const std::vector<Seq>& seqs, LengthRange range,
                     int min_support, bool want_presence, Exec exec) {
  PartResult result;
  const std::size_t n = seqs.size();
  std::vector<std::vector<std::uint32_t>> prev(n), cur(n);
  if (want_presence) result.present.resize(n);

  for (int len = 1; len <= range.max; ++len) {
    auto counts = count_keys(n, exec, [&](std::size_t i, auto& keys) {
      instance_keys(seqs[i], len == 1 ? nullptr : &prev[i], len, keys);
    });
    Level level;
    for (const auto& [k, c] : counts) {
      if (c >= min_support) level.keys.push_back(k);
    }
    std::sort(level.keys.begin(), level.keys.end());
    level.support.reserve(level.keys.size());
    std::unordered_map<std::uint64_t, std::uint32_t> ids;
    for (std::size_t g = 0; g < level.keys.size(); ++g) {
      level.support.push_back(counts.at(level.keys[g]));
      ids.emplace(level.keys[g], static_cast<std::uint32_t>(g));
    }
    const bool in_range = len >= range.min;
    const auto flat_base = static_cast<std::uint32_t>(result.flat.size());
    if (in_range) {
      for (std::size_t g = 0; g < level.keys.size(); ++g) {
        result.flat.emplace_back(len, static_cast<std::uint32_t>(g));
      }
    }
    const bool empty = level.keys.empty();
    result.levels.push_back(std::move(level));
    if (empty) break;

    // Gram id at every window start for the next level.
    for_each_index(n, exec, [&](std::size_t i) {
      const auto& seq = seqs[i];
      const auto l = static_cast<std::size_t>(len);
      auto& out = cur[i];
      out.assign(seq.size() >= l ? seq.size() - l + 1 : 0, kNone);
      for (std::size_t p = 0; p < out.size(); ++p) {
        std::uint64_t key;
        if (len == 1) {
          key = seq[p];
        } else {
          const auto a = prev[i][p];
          const auto b = prev[i][p + 1];
          if (a == kNone || b == kNone) continue;
          key = (static_cast<std::uint64_t>(a) << 32) | seq[p + l - 1];
        }
        if (auto it = ids.find(key); it != ids.end()) out[p] = it->second;
      }
      if (want_presence && in_range) {
        auto& present = result.present[i];
        for (auto g : out) {
          if (g != kNone) present.push_back(flat_base + g);
        }
        std::sort(present.begin(), present.end());
        present.erase(std::unique(present.begin(), present.end()), present.end());
      }
    });
    std::swap(prev, cur);
  }
  return result;
}

Tokens gram_tokens(const PartResult& part, int len, std::uint32_t id,
                   const std::vector<std::string>& vocab) {
  Tokens out(static_cast<std::size_t>(len));
  for (int l = len; l >= 1; --l) {
    const auto key = part.levels[static_cast<std::size_t>(l - 1)].keys[id];
    if (l == 1) {
      out[0] = vocab[static_cast<std::size_t>(key)];
    } else {
      out[static_cast<std::size_t>(l - 1)] = vocab[key & 0xffffffffULL];
      id = static_cast<std::uint32_t>(key >> 32);
    }
  }
  return out;
}

std::vector<FrequentPattern> single_part_patterns(
    const PartResult& part, LengthRange range,
    const std::vector<std::string>& vocab) {
  std::vector<FrequentPattern> out;
  for (int len = range.min; len <= range.max; ++len) {
    if (static_cast<std::size_t>(len) > part.levels.size()) break;
    const auto& level = part.levels[static_cast<std::size_t>(len - 1)];
    for (std::size_t g = 0; g < level.keys.size(); ++g) {
      FrequentPattern fp;
      fp.pattern.doc = gram_tokens(part, len, static_cast<std::uint32_t>(g), vocab);
      fp.support = level.support[g];
      out.push_back(std::move(fp));
    }
  }
  return out;
}

}  // namespace

void MinerConfig::validate() const {
  auto check = [](const LengthRange& r, const char* what) {
    if (r.min < 1 || r.min > r.max) {
      throw UsageError(std::string(what) +
                       " length range must satisfy 1 <= min <= max");
    }
  };
  check(doc, "document");
  if (query) check(*query, "query");
  if (min_support < 1) throw UsageError("min_support must be >= 1");
}

MinerConfig MinerConfig::preset(std::string_view name) {
  MinerConfig c;
  if (name == "movies") {
    c.doc = {4, 10};
    c.min_support = 20;
  } else if (name == "sst2") {
    c.doc = {2, 10};
    c.min_support = 100;
  } else if (name == "multirc") {
    c.query = LengthRange{3, 10};
    c.doc = {4, 10};
    c.min_support = 200;
  } else if (name == "climate_fever") {
    c.query = LengthRange{2, 10};
    c.doc = {2, 10};
    c.min_support = 200;
  } else {
    throw UsageError("unknown miner preset \"" + std::string(name) + "\"");
  }
  return c;
}

std::vector<FrequentPattern> mine_frequent(const Dataset& dataset,
                                           const MinerConfig& config,
                                           Exec exec) {
  config.validate();
  // Token ids follow sorted token order, so comparing id sequences orders
  // patterns like comparing their token strings.
  std::set<std::string_view> sorted_vocab;
  for (const auto& inst : dataset.instances) {
    if (inst.split != Split::kTrain) continue;
    sorted_vocab.insert(inst.doc.begin(), inst.doc.end());
    if (inst.query) sorted_vocab.insert(inst.query->begin(), inst.query->end());
  }
  std::vector<std::string> vocab(sorted_vocab.begin(), sorted_vocab.end());
  std::unordered_map<std::string_view, std::uint32_t> token_id;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    token_id.emplace(vocab[i], static_cast<std::uint32_t>(i));
  }
  auto encode = [&](const Tokens& tokens) {
    Seq seq;
    seq.reserve(tokens.size());
    for (const auto& t : tokens) seq.push_back(token_id.at(t));
    return seq;
  };

  std::vector<Seq> docs, queries;
  for (const auto& inst : dataset.instances) {
    if (inst.split != Split::kTrain) continue;
    docs.push_back(encode(inst.doc));
    if (dataset.two_part) queries.push_back(encode(*inst.query));
  }

  std::vector<FrequentPattern> out;
  if (!dataset.two_part) {
    auto part = mine_part(docs, config.doc, config.min_support, false, exec);
    out = single_part_patterns(part, config.doc, vocab);
  } else {
    const LengthRange qrange = config.query.value_or(config.doc);
    auto dpart = mine_part(docs, config.doc, config.min_support, true, exec);
    auto qpart = mine_part(queries, qrange, config.min_support, true, exec);
    auto counts = count_keys(docs.size(), exec, [&](std::size_t i, auto& keys) {
      keys.clear();
      for (auto q : qpart.present[i]) {
        for (auto d : dpart.present[i]) {
          keys.push_back((static_cast<std::uint64_t>(q) << 32) | d);
        }
      }
    });
    for (const auto& [key, c] : counts) {
      if (c < config.min_support) continue;
      const auto [qlen, qid] = qpart.flat[key >> 32];
      const auto [dlen, did] = dpart.flat[key & 0xffffffffULL];
      FrequentPattern fp;
      fp.pattern.query = gram_tokens(qpart, qlen, qid, vocab);
      fp.pattern.doc = gram_tokens(dpart, dlen, did, vocab);
      fp.support = c;
      out.push_back(std::move(fp));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const FrequentPattern& a, const FrequentPattern& b) {
              if (a.support != b.support) return a.support > b.support;
              return a.pattern < b.pattern;
            });
  return out;
}

int count_support(const Pattern& pattern, const Dataset& dataset, Split split) {
  int n = 0;
  for (const auto& inst : dataset.instances) {
    if (inst.split == split && contains(inst, pattern)) ++n;
  }
  return n;
}

std::vector<std::vector<std::uint32_t>> containing_instances(
    std::span<const Pattern> patterns, const Dataset& dataset, Split split,
    Exec exec) {
  std::vector<std::uint32_t> members;
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    if (dataset.instances[i].split == split) {
      members.push_back(static_cast<std::uint32_t>(i));
    }
  }
  std::vector<std::vector<std::uint32_t>> out(patterns.size());
  for_each_index(patterns.size(), exec, [&](std::size_t p) {
    for (auto i : members) {
      if (contains(dataset.instances[i], patterns[p])) out[p].push_back(i);
    }
  });
  return out;
}

void write_frequent(std::span<const FrequentPattern> patterns,
                    std::ostream& out) {
  for (const auto& fp : patterns) {
    nlohmann::ordered_json row;
    row["doc_part"] = fp.pattern.doc;
    row["query_part"] = fp.pattern.query ? nlohmann::ordered_json(*fp.pattern.query)
                                         : nlohmann::ordered_json(nullptr);
    row["support"] = fp.support;
    out << row.dump() << '\n';
  }
}

}  // namespace shortcut
