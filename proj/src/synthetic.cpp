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

#include "shortcut/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>
#include <string_view>

namespace shortcut {
namespace {

constexpr std::array<std::string_view, 20> kPositive = {
    "great",    "wonderful", "superb",   "delightful", "charming",
    "brilliant", "moving",   "gripping", "fresh",      "witty",
    "touching", "stunning",  "clever",   "splendid",   "lovely",
    "engaging", "vivid",     "graceful", "heartfelt",  "masterful"};

constexpr std::array<std::string_view, 20> kNegative = {
    "awful",   "boring",  "dreadful", "tedious", "clumsy",
    "bland",   "stale",   "dull",     "messy",   "lifeless",
    "shallow", "tiresome", "sloppy",  "hollow",  "pointless",
    "flat",    "grating", "inept",    "weak",    "dreary"};

// Excludes every token of the default decoys.
constexpr std::array<std::string_view, 80> kFiller = {
    "plot",     "actor",    "scene",   "camera",   "story",    "music",
    "director", "script",   "ending",  "cast",     "screen",   "minute",
    "hour",     "character", "dialogue", "sequence", "studio",  "budget",
    "audience", "theater",  "sound",   "editing",  "frame",    "shot",
    "role",     "villain",  "hero",    "city",     "house",    "road",
    "night",    "morning",  "winter",  "summer",   "family",   "friend",
    "brother",  "sister",   "mother",  "father",   "dog",      "car",
    "train",    "ship",     "island",  "river",    "forest",   "street",
    "office",   "school",   "war",     "letter",   "secret",   "journey",
    "promise",  "memory",   "dream",   "voice",    "window",   "door",
    "table",    "garden",   "bridge",  "tower",    "market",   "village",
    "kingdom",  "planet",   "robot",   "detective", "doctor",  "teacher",
    "soldier",  "pilot",    "artist",  "singer",   "writer",   "painter",
    "runner",   "farmer"};

constexpr std::array<std::string_view, 40> kToyFiller = {
    "was",   "quite", "long",  "short", "old",    "new",    "red",
    "blue",  "read",  "seen",  "today", "again",  "twice",  "late",
    "early", "with",  "my",    "our",   "their",  "friends", "family",
    "at",    "home",  "on",    "a",     "train",  "plane",  "weekend",
    "and",   "then",  "we",    "talked", "about", "it",     "for",
    "hours", "over",  "tea",   "after", "dinner"};

template <class Pool>
std::string pick(const Pool& pool, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return std::string(pool[d(rng)]);
}

Split split_for(std::size_t pair, std::size_t n_pairs, double train, double validation) {
  const auto n_train = static_cast<std::size_t>(train * static_cast<double>(n_pairs));
  const auto n_val = static_cast<std::size_t>(validation * static_cast<double>(n_pairs));
  if (pair < n_train) return Split::kTrain;
  if (pair < n_train + n_val) return Split::kValidation;
  return Split::kTest;
}

std::string make_id(std::string_view prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*s%05zu", static_cast<int>(prefix.size()),
                prefix.data(), i);
  return buf;
}

}  // namespace

Dataset sentiment_corpus(const SentimentCorpusConfig& config) {
  if (config.min_filler == 0 || config.min_filler > config.max_filler) {
    throw UsageError("invalid filler length range");
  }
  if (config.max_sentiment_words == 0) {
    throw UsageError("max_sentiment_words must be >= 1");
  }
  std::mt19937_64 rng(config.seed);
  const std::size_t n_pairs = config.n_instances / 2;
  const auto n_neutral = static_cast<std::size_t>(
      config.neutral_fraction * static_cast<double>(n_pairs));
  std::uniform_int_distribution<std::size_t> filler_len(config.min_filler,
                                                        config.max_filler);
  std::uniform_int_distribution<std::size_t> n_words(1, config.max_sentiment_words);

  // Neutral pairs are spread over the splits by a seeded shuffle of the pair
  // order.
  std::vector<bool> neutral(n_pairs, false);
  for (std::size_t p = 0; p < n_neutral; ++p) neutral[p] = true;
  std::shuffle(neutral.begin(), neutral.end(), rng);

  Dataset ds;
  ds.name = "synthetic_sentiment";
  ds.label_names = {"neg", "pos"};
  for (std::size_t p = 0; p < n_pairs; ++p) {
    Tokens skeleton;
    const std::size_t len = filler_len(rng);
    for (std::size_t i = 0; i < len; ++i) skeleton.push_back(pick(kFiller, rng));
    Tokens pos = skeleton;
    Tokens neg = skeleton;
    if (!neutral[p]) {
      const std::size_t k = n_words(rng);
      for (std::size_t w = 0; w < k; ++w) {
        std::uniform_int_distribution<std::size_t> at(0, pos.size());
        const std::size_t i = at(rng);
        pos.insert(pos.begin() + static_cast<std::ptrdiff_t>(i), pick(kPositive, rng));
        neg.insert(neg.begin() + static_cast<std::ptrdiff_t>(i), pick(kNegative, rng));
      }
    }
    const Split split = split_for(p, n_pairs, config.train_fraction,
                                  config.validation_fraction);
    ds.instances.push_back({make_id("s", 2 * p), std::nullopt, std::move(pos), 1, split});
    ds.instances.push_back({make_id("s", 2 * p + 1), std::nullopt, std::move(neg), 0, split});
  }
  ds.finalize();
  return ds;
}

Dataset toy_corpus(const ToyCorpusConfig& config) {
  if (config.min_filler == 0 || config.min_filler > config.max_filler) {
    throw UsageError("invalid filler length range");
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> filler_len(config.min_filler,
                                                        config.max_filler);
  const std::size_t n_pairs = config.n_instances / 2;
  Dataset ds;
  ds.name = "toy_book_movie";
  ds.label_names = {"negative", "positive"};
  for (std::size_t p = 0; p < n_pairs; ++p) {
    Tokens filler;
    const std::size_t len = filler_len(rng);
    for (std::size_t i = 0; i < len; ++i) filler.push_back(pick(kToyFiller, rng));
    Tokens book{"this", "book"};
    Tokens movie{"this", "movie"};
    book.insert(book.end(), filler.begin(), filler.end());
    movie.insert(movie.end(), filler.begin(), filler.end());
    const Split split = split_for(p, n_pairs, 0.7, 0.1);
    ds.instances.push_back({make_id("t", 2 * p), std::nullopt, std::move(book), 1, split});
    ds.instances.push_back({make_id("t", 2 * p + 1), std::nullopt, std::move(movie), 0, split});
  }
  ds.finalize();
  return ds;
}

}  // namespace shortcut
