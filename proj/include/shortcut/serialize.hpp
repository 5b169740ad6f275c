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

#ifndef SHORTCUT_SERIALIZE_HPP_
#define SHORTCUT_SERIALIZE_HPP_

#include "json.hpp"
#include "shortcut/corpus.hpp"

namespace shortcut {

using Json = nlohmann::ordered_json;

// {"doc_part":[...], "query_part":[...] | null}
inline void pattern_to_json(Json& j, const Pattern& p) {
  j["doc_part"] = p.doc;
  j["query_part"] = p.query ? Json(*p.query) : Json(nullptr);
}

template <class J>
Pattern pattern_from_json(const J& j) {
  Pattern p;
  p.doc = j.at("doc_part").template get<Tokens>();
  if (auto it = j.find("query_part"); it != j.end() && !it->is_null()) {
    p.query = it->template get<Tokens>();
  }
  return p;
}

}  // namespace shortcut

#endif  // SHORTCUT_SERIALIZE_HPP_
