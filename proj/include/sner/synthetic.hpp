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

// Synthetic corpora whose test entities are all out-of-entity: names are drawn
// from disjoint train/test pools and placed into type-indicative context
// frames such as "<X> is a wonderful city .".

#pragma once

#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "sner/corpus.hpp"
#include "sner/ooe.hpp"

namespace sner {

inline constexpr const char* kFrameSlot = "<X>";

struct SyntheticType {
  std::string name;
  std::vector<std::string> context_frames;
  std::vector<std::string> train_names;
  std::vector<std::string> test_names;
  std::vector<std::string> dev_names;  // optional
};

struct SyntheticSpec {
  std::vector<SyntheticType> types;
  int train_sentences = 500;
  int test_sentences = 200;
  int dev_sentences = 0;
  // Probability that a sentence gets a second clause with another entity,
  // joined by `joiner`.
  double second_entity_probability = 0.0;
  std::string joiner = "and";
};

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    for (const auto& t : j.at("types")) {
      SyntheticType st;
      st.name = t.at("name").get<std::string>();
      st.context_frames = t.at("context_frames").get<std::vector<std::string>>();
      st.train_names = t.at("train_names").get<std::vector<std::string>>();
      st.test_names = t.at("test_names").get<std::vector<std::string>>();
      if (t.contains("dev_names")) st.dev_names = t.at("dev_names").get<std::vector<std::string>>();
      s.types.push_back(std::move(st));
    }
    const auto& per = j.at("sentences_per_split");
    if (per.is_number_integer()) {
      s.train_sentences = s.test_sentences = per.get<int>();
    } else {
      s.train_sentences = per.at("train").get<int>();
      s.test_sentences = per.at("test").get<int>();
      s.dev_sentences = per.value("dev", 0);
    }
    s.second_entity_probability = j.value("second_entity_probability", 0.0);
    s.joiner = j.value("joiner", std::string("and"));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed synthetic corpus spec: ") + e.what());
  }
  return s;
}

struct SyntheticCorpus {
  Dataset train;
  Dataset test;
  Dataset dev;  // empty unless the spec asks for dev sentences
  nlohmann::json manifest;
};

namespace detail {

inline void validate_synthetic(const SyntheticSpec& spec) {
  if (spec.types.size() < 2) throw InputError("synthetic spec needs at least 2 entity types");
  if (spec.train_sentences < 1 || spec.test_sentences < 1 || spec.dev_sentences < 0) {
    throw InputError("synthetic split sizes must be positive");
  }
  std::unordered_set<std::string> train_names, train_tokens;
  for (auto& w : split_ws(spec.joiner)) train_tokens.insert(w);
  for (const auto& t : spec.types) {
    if (t.context_frames.size() < 3) throw InputError("type " + t.name + " needs at least 3 context frames");
    if (t.train_names.empty() || t.test_names.empty()) throw InputError("type " + t.name + " has an empty name pool");
    if (spec.dev_sentences > 0 && t.dev_names.empty()) throw InputError("type " + t.name + " has no dev names");
    for (const auto& f : t.context_frames) {
      const auto toks = split_ws(f);
      if (std::count(toks.begin(), toks.end(), kFrameSlot) != 1) {
        throw InputError("frame must contain <X> exactly once: '" + f + "'");
      }
      for (const auto& w : toks) {
        if (w != kFrameSlot) train_tokens.insert(w);
      }
    }
    for (const auto& n : t.train_names) {
      train_names.insert(n);
      for (auto& w : split_ws(n)) train_tokens.insert(w);
    }
  }
  for (const auto& t : spec.types) {
    for (const auto* pool : {&t.test_names, &t.dev_names}) {
      for (const auto& n : *pool) {
        if (train_names.contains(n)) throw InputError("name pools overlap: '" + n + "'");
        const auto toks = split_ws(n);
        if (toks.empty()) throw InputError("empty entity name");
        if (std::all_of(toks.begin(), toks.end(), [&](const std::string& w) { return train_tokens.contains(w); })) {
          throw InputError("name pools overlap at token level: every token of '" + n +
                           "' can occur in training sentences");
        }
      }
    }
  }
}

enum class Split { kTrain, kTest, kDev };

inline std::vector<Sentence> generate_split(const SyntheticSpec& spec, Split split, int count, Rng& rng) {
  auto clause = [&](std::vector<std::string>& toks, std::vector<std::string>& tags) {
    const auto& type = spec.types[rng.below(spec.types.size())];
    const auto& pool = split == Split::kTrain ? type.train_names
                       : split == Split::kTest ? type.test_names
                                               : type.dev_names;
    const auto& frame = type.context_frames[rng.below(type.context_frames.size())];
    const auto name = split_ws(pool[rng.below(pool.size())]);
    for (auto& w : split_ws(frame)) {
      if (w == kFrameSlot) {
        for (std::size_t i = 0; i < name.size(); ++i) {
          toks.push_back(name[i]);
          tags.push_back((i == 0 ? "B-" : "I-") + type.name);
        }
      } else {
        toks.push_back(std::move(w));
        tags.emplace_back(kOutsideLabel);
      }
    }
  };
  std::vector<Sentence> out;
  for (int i = 0; i < count; ++i) {
    Sentence s;
    s.id = "s" + std::to_string(i + 1);
    clause(s.tokens, s.bio_tags);
    if (spec.second_entity_probability > 0 && rng.uniform() < spec.second_entity_probability) {
      for (auto& w : split_ws(spec.joiner)) {
        s.tokens.push_back(std::move(w));
        s.bio_tags.emplace_back(kOutsideLabel);
      }
      clause(s.tokens, s.bio_tags);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic_ooe_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  detail::validate_synthetic(spec);
  SyntheticCorpus c;
  Rng train_rng(mix_seed(seed, {0x7a1}));
  Rng test_rng(mix_seed(seed, {0x7e5}));
  Rng dev_rng(mix_seed(seed, {0xde7}));
  c.train = make_dataset(detail::generate_split(spec, detail::Split::kTrain, spec.train_sentences, train_rng));
  c.test = make_dataset(detail::generate_split(spec, detail::Split::kTest, spec.test_sentences, test_rng));
  if (spec.dev_sentences > 0) {
    c.dev = make_dataset(detail::generate_split(spec, detail::Split::kDev, spec.dev_sentences, dev_rng));
  }
  const auto report = compute_ooe_rate(c.train, c.test);
  c.manifest = {{"seed", seed},
                {"sentences", {{"train", c.train.sentences.size()},
                               {"test", c.test.sentences.size()},
                               {"dev", c.dev.sentences.size()}}},
                {"ooe_rate", report.ooe_rate},
                {"unique_test_entities", report.unique_test_entities},
                {"unique_ooe_entities", report.unique_ooe_entities}};
  return c;
}

// Train, test and dev sentences in one corpus with fresh sequential ids.
inline Dataset merge_datasets(const std::vector<const Dataset*>& parts) {
  std::vector<Sentence> all;
  for (const auto* d : parts) {
    for (const auto& s : d->sentences) {
      all.push_back(s);
      all.back().id = "s" + std::to_string(all.size());
    }
  }
  return make_dataset(std::move(all));
}

}  // namespace sner
