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

// Entity-type templates ("[SPAN] is a [TYPE] entity."), template pooling and
// the InfoNCE objective that pulls a sentence vector towards the pooled
// embedding of the correct type and away from the wrong types and NONE.

#pragma once

#include <atomic>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sner/corpus.hpp"
#include "sner/pooling.hpp"

namespace sner {

inline constexpr const char* kSpanSlot = "[SPAN]";
inline constexpr const char* kTypeSlot = "[TYPE]";

// An entity type, or std::nullopt for the none-entity assertion.
using TypeTag = std::optional<std::string>;

inline std::string tag_name(const TypeTag& t) { return t ? *t : "NONE"; }

struct Template {
  std::string entity_pattern;
  std::string none_pattern;

  bool operator==(const Template&) const = default;
};

namespace detail {

inline std::size_t count_occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + needle.size()))
    ++n;
  return n;
}

inline void replace_once(std::string& s, const std::string& needle, const std::string& with) {
  const auto pos = s.find(needle);
  if (pos != std::string::npos) s.replace(pos, needle.size(), with);
}

inline bool is_edge_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '"': case '\'': case '(': case ')':
      return true;
    default:
      return false;
  }
}

// Whitespace split with leading/trailing punctuation split into separate
// tokens; slot markers are kept intact.
inline std::vector<std::string> tokenize_pattern(const std::string& pattern) {
  std::vector<std::string> out;
  for (auto& word : split_ws(pattern)) {
    std::size_t b = 0, e = word.size();
    std::vector<std::string> tail;
    while (b < e && is_edge_punct(word[b])) out.emplace_back(1, word[b++]);
    while (e > b && is_edge_punct(word[e - 1])) tail.emplace_back(1, word[--e]);
    if (e > b) out.push_back(word.substr(b, e - b));
    out.insert(out.end(), tail.rbegin(), tail.rend());
  }
  return out;
}

}  // namespace detail

inline void validate_template(const Template& t) {
  if (detail::count_occurrences(t.entity_pattern, kSpanSlot) != 1 ||
      detail::count_occurrences(t.entity_pattern, kTypeSlot) != 1) {
    throw InputError("entity pattern must contain [SPAN] and [TYPE] exactly once: '" +
                     t.entity_pattern + "'");
  }
  if (detail::count_occurrences(t.none_pattern, kSpanSlot) != 1 ||
      detail::count_occurrences(t.none_pattern, kTypeSlot) != 0) {
    throw InputError("none pattern must contain [SPAN] exactly once and no [TYPE]: '" +
                     t.none_pattern + "'");
  }
}

struct TemplateSet {
  std::vector<Template> templates;
  // Entity label -> natural-language term used in the [TYPE] slot.
  std::map<std::string, std::string> translation;

  std::size_t size() const { return templates.size(); }

  void validate() const {
    if (templates.empty()) throw InputError("template set is empty");
    for (const auto& t : templates) validate_template(t);
  }

  void require_labels(const std::vector<std::string>& labels) const {
    for (const auto& l : labels) {
      if (!translation.contains(l)) throw InputError("no translation for label '" + l + "'");
    }
  }

  bool operator==(const TemplateSet&) const = default;
};

inline void to_json(nlohmann::json& j, const TemplateSet& s) {
  j = nlohmann::json::object();
  j["templates"] = nlohmann::json::array();
  for (const auto& t : s.templates) j["templates"].push_back({{"entity", t.entity_pattern}, {"none", t.none_pattern}});
  j["translation"] = s.translation;
}

inline TemplateSet template_set_from_json(const nlohmann::json& j) {
  TemplateSet s;
  try {
    for (const auto& t : j.at("templates")) {
      s.templates.push_back({t.at("entity").get<std::string>(), t.at("none").get<std::string>()});
    }
    if (j.contains("translation")) {
      s.translation = j.at("translation").get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed template file: ") + e.what());
  }
  s.validate();
  return s;
}

inline TemplateSet load_template_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return template_set_from_json(j);
}

inline std::map<std::string, std::string> default_translation() {
  return {{"LOC", "location"}, {"PER", "person"}, {"ORG", "organization"}, {"MISC", "miscellaneous"}};
}

// Ten entity/none pairs; the first four are the single-template variants
// compared in the template ablation, the rest widen the pool.
inline TemplateSet default_template_set() {
  TemplateSet s;
  s.templates = {
      {"[SPAN] is a [TYPE] entity.", "[SPAN] is not an entity."},
      {"[SPAN] belongs to [TYPE] category.", "[SPAN] belongs to none category."},
      {"[SPAN] should be tagged as [TYPE].", "[SPAN] should be tagged as none entity."},
      {"[SPAN] can be viewed as [TYPE] entity.", "[SPAN] can be viewed as none entity."},
      {"[SPAN] refers to a [TYPE].", "[SPAN] does not refer to any entity."},
      {"The mention [SPAN] denotes a [TYPE].", "The mention [SPAN] denotes nothing."},
      {"In this sentence, [SPAN] is a [TYPE].", "In this sentence, [SPAN] is not an entity."},
      {"The type of [SPAN] is [TYPE].", "The type of [SPAN] is none."},
      {"[SPAN] is labeled as [TYPE].", "[SPAN] is labeled as none."},
      {"[SPAN] is an example of a [TYPE] entity.", "[SPAN] is an example of no entity."},
  };
  s.translation = default_translation();
  return s;
}

inline const std::string& translate(const std::map<std::string, std::string>& translation,
                                    const std::string& label) {
  auto it = translation.find(label);
  if (it == translation.end()) throw InputError("no translation for label '" + label + "'");
  return it->second;
}

// String-level fill; a NONE type selects the none pattern.
inline std::string fill(const Template& t, const std::string& span_text, const TypeTag& type,
                        const std::map<std::string, std::string>& translation) {
  std::string out = type ? t.entity_pattern : t.none_pattern;
  if (type) detail::replace_once(out, kTypeSlot, translate(translation, *type));
  detail::replace_once(out, kSpanSlot, span_text);
  return out;
}

// Token-level fill: the pattern is tokenized and the span's own tokens are
// spliced in unchanged, so corpus tokenization of the span is preserved.
inline std::vector<std::string> fill_tokens(const Template& t,
                                            const std::vector<std::string>& span_tokens,
                                            const TypeTag& type,
                                            const std::map<std::string, std::string>& translation) {
  std::vector<std::string> out;
  for (auto& tok : detail::tokenize_pattern(type ? t.entity_pattern : t.none_pattern)) {
    if (tok == kSpanSlot) {
      out.insert(out.end(), span_tokens.begin(), span_tokens.end());
    } else if (tok == kTypeSlot) {
      for (auto& w : split_ws(translate(translation, *type))) out.push_back(std::move(w));
    } else {
      out.push_back(std::move(tok));
    }
  }
  return out;
}

// Every token a filled template can contribute apart from the span itself.
inline std::vector<std::string> template_vocabulary(const TemplateSet& s) {
  std::vector<std::string> out;
  for (const auto& t : s.templates) {
    for (const auto* p : {&t.entity_pattern, &t.none_pattern}) {
      for (auto& tok : detail::tokenize_pattern(*p)) {
        if (tok != kSpanSlot && tok != kTypeSlot) out.push_back(std::move(tok));
      }
    }
  }
  for (const auto& [label, term] : s.translation) {
    for (auto& w : split_ws(term)) out.push_back(std::move(w));
  }
  return out;
}

// Number of template strings pushed through an encoder by this module;
// inference must leave it untouched.
inline std::atomic<std::uint64_t>& template_encode_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

// Number of cosine similarities that hit a zero-norm vector.
inline std::atomic<std::uint64_t>& degenerate_similarity_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

struct PooledTypeEmbedding {
  TypeTag type_tag;
  RowVec vector;
};

// For each label: fill all k templates with the span, encode each, mean-pool
// each encoding into a sentence vector, then average over the k templates.
template <class Encoder>
std::vector<PooledTypeEmbedding> pooled_type_embeddings(const Encoder& encoder, const TemplateSet& set,
                                                        const std::vector<std::string>& span_tokens,
                                                        const std::vector<TypeTag>& labels) {
  if (set.templates.empty()) throw InputError("template set is empty");
  std::vector<PooledTypeEmbedding> out;
  for (const auto& label : labels) {
    RowVec acc;
    for (const auto& t : set.templates) {
      const auto toks = fill_tokens(t, span_tokens, label, set.translation);
      ++template_encode_counter();
      RowVec e = sentence_embedding(encoder.encode(toks));
      if (acc.size() == 0) {
        acc = e;
      } else {
        acc += e;
      }
    }
    out.push_back({label, acc / static_cast<double>(set.templates.size())});
  }
  return out;
}

struct CosineResult {
  double sim = 0.0;
  RowVec d_a, d_b;  // gradients of sim
  bool degenerate = false;
};

inline CosineResult cosine(const RowVec& a, const RowVec& b) {
  CosineResult r;
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    r.degenerate = true;
    r.d_a = RowVec::Zero(a.size());
    r.d_b = RowVec::Zero(b.size());
    return r;
  }
  r.sim = a.dot(b) / (na * nb);
  r.d_a = b / (na * nb) - r.sim * a / (na * na);
  r.d_b = a / (na * nb) - r.sim * b / (nb * nb);
  return r;
}

struct ContrastiveResult {
  double loss = 0.0;
  RowVec d_c;
  RowVec d_positive;
  std::vector<RowVec> d_negatives;
};

// InfoNCE over cosine similarities:
//   -log( exp(s+/tau) / (exp(s+/tau) + sum_j exp(s_j/tau)) )
inline ContrastiveResult contrastive_loss(const RowVec& c, const RowVec& positive,
                                          const std::vector<RowVec>& negatives, double temperature) {
  if (negatives.empty()) throw InputError("contrastive loss needs at least one negative");
  if (!(temperature > 0)) throw InputError("temperature must be positive");
  std::vector<CosineResult> sims;
  sims.reserve(negatives.size() + 1);
  sims.push_back(cosine(c, positive));
  for (const auto& n : negatives) sims.push_back(cosine(c, n));
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& s : sims) {
    if (s.degenerate) ++degenerate_similarity_counter();
    mx = std::max(mx, s.sim / temperature);
  }
  double z = 0.0;
  std::vector<double> w(sims.size());
  for (std::size_t i = 0; i < sims.size(); ++i) {
    w[i] = std::exp(sims[i].sim / temperature - mx);
    z += w[i];
  }
  ContrastiveResult r;
  r.loss = -(sims[0].sim / temperature - mx - std::log(z));
  // dL/ds_i = (softmax_i - [i == 0]) / tau
  r.d_c = RowVec::Zero(c.size());
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const double g = (w[i] / z - (i == 0 ? 1.0 : 0.0)) / temperature;
    r.d_c += g * sims[i].d_a;
    if (i == 0) {
      r.d_positive = g * sims[i].d_b;
    } else {
      r.d_negatives.push_back(g * sims[i].d_b);
    }
  }
  return r;
}

// Positive type followed by every other type of `labels`, then NONE.
inline std::vector<TypeTag> contrast_labels(const std::string& positive,
                                            const std::vector<std::string>& labels) {
  std::vector<TypeTag> out{positive};
  for (const auto& l : labels) {
    if (l != positive) out.emplace_back(l);
  }
  out.emplace_back(std::nullopt);
  return out;
}

// Sentence-level contrastive loss: mean InfoNCE over the gold entity spans of
// the sentence, each contrasted against every other type and NONE. Zero for a
// sentence without entities.
template <class Encoder>
double sentence_contrastive_loss(const Encoder& encoder, const TemplateSet& set,
                                 const Sentence& sentence, const std::vector<LabeledSpan>& golds,
                                 const SentenceVector& c, double temperature,
                                 const std::vector<std::string>& label_set) {
  double total = 0.0;
  int count = 0;
  for (const auto& g : golds) {
    if (g.label == kOutsideLabel) continue;
    const auto pooled = pooled_type_embeddings(encoder, set, sentence.span_tokens(g.span),
                                               contrast_labels(g.label, label_set));
    std::vector<RowVec> negs;
    for (std::size_t i = 1; i < pooled.size(); ++i) negs.push_back(pooled[i].vector);
    total += contrastive_loss(c, pooled[0].vector, negs, temperature).loss;
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

}  // namespace sner
