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

// Seeded synthetic corpora for tests, benchmarks and demos.
//
// Both generators emit instances in label-1/label-0 pairs that share the same
// filler skeleton and the same split. Filler n-gram counts are therefore
// balanced across labels, so filler-only text sits at the decision border of
// an n-gram model and can serve as a neutral context.

#ifndef SHORTCUT_SYNTHETIC_HPP_
#define SHORTCUT_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>

#include "shortcut/corpus.hpp"

namespace shortcut {

struct SentimentCorpusConfig {
  std::size_t n_instances = 2000;  // rounded down to an even count
  std::uint64_t seed = 7;
  // Fraction of pairs carrying filler only.
  double neutral_fraction = 0.2;
  std::size_t min_filler = 6;
  std::size_t max_filler = 12;
  // Each sentiment pair inserts 1..max_sentiment_words pool words.
  std::size_t max_sentiment_words = 2;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
};

// Positive/negative word pools over neutral filler; labels "neg"/"pos".
Dataset sentiment_corpus(const SentimentCorpusConfig& config = {});

struct ToyCorpusConfig {
  std::size_t n_instances = 200;
  std::uint64_t seed = 3;
  std::size_t min_filler = 2;
  std::size_t max_filler = 8;
};

// "this book <filler>" labelled positive and "this movie <filler>" labelled
// negative.
Dataset toy_corpus(const ToyCorpusConfig& config = {});

}  // namespace shortcut

#endif  // SHORTCUT_SYNTHETIC_HPP_
