// Copyright 2026 The sner Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sner/corpus.hpp"
#include "sner/templates.hpp"

namespace sner {

// Frozen token -> id map. Id 0 is padding, id 1 is the shared unknown token
// that every unseen (out-of-entity) token falls back to.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  // Ids follow first-occurrence order of `tokens` after the two reserved ids.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    add(kPadToken);
    add(kUnkToken);
    for (const auto& t : tokens) add(t);
  }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.contains(token); }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens,
                          std::size_t max_len = static_cast<std::size_t>(-1)) const {
    std::vector<int> out;
    const std::size_t n = std::min(tokens.size(), max_len);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(id(tokens[i]));
    return out;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tokens_) {
      h = fnv1a(t, h);
      h = fnv1a("\x1f", h);
    }
    return h;
  }

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json to_json() const { return {{"tokens", tokens_}, {"hash", hash_hex()}}; }

  static Vocabulary from_json(const nlohmann::json& j) {
    const auto toks = j.at("tokens").get<std::vector<std::string>>();
    if (toks.size() < 2 || toks[0] != kPadToken || toks[1] != kUnkToken) {
      throw ArtifactMismatch("vocabulary does not start with the reserved tokens");
    }
    return Vocabulary(std::vector<std::string>(toks.begin() + 2, toks.end()));
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void add(const std::string& t) {
    if (ids_.emplace(t, static_cast<int>(tokens_.size())).second) tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Train tokens in corpus order, then template words and translated type names.
inline Vocabulary build_vocabulary(const Dataset& train, const TemplateSet* templates = nullptr) {
  std::vector<std::string> toks;
  for (const auto& s : train.sentences) toks.insert(toks.end(), s.tokens.begin(), s.tokens.end());
  if (templates) {
    auto extra = template_vocabulary(*templates);
    toks.insert(toks.end(), extra.begin(), extra.end());
  }
  return Vocabulary(toks);
}

}  // namespace sner
