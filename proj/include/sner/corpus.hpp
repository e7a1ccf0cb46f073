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

// Token-per-line NER corpora, BIO decoding and candidate span enumeration.

#pragma once

#include <algorithm>
#include <compare>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sner/common.hpp"

namespace sner {

inline constexpr const char* kOutsideLabel = "O";

// Token interval, 1-based and inclusive on both ends.
struct SpanIndex {
  int b = 1;
  int e = 1;

  int length() const { return e - b + 1; }
  bool overlaps(const SpanIndex& o) const { return b <= o.e && o.b <= e; }

  auto operator<=>(const SpanIndex&) const = default;
};

struct LabeledSpan {
  SpanIndex span;
  std::string label;

  auto operator<=>(const LabeledSpan&) const = default;
};

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::string> bio_tags;

  int size() const { return static_cast<int>(tokens.size()); }

  // Surface string of a span: its tokens joined by single spaces.
  std::string text(const SpanIndex& s) const {
    std::string out;
    for (int i = s.b; i <= s.e; ++i) {
      if (i > s.b) out += ' ';
      out += tokens[static_cast<std::size_t>(i - 1)];
    }
    return out;
  }

  std::vector<std::string> span_tokens(const SpanIndex& s) const {
    return {tokens.begin() + (s.b - 1), tokens.begin() + s.e};
  }

  bool operator==(const Sentence&) const = default;
};

struct Dataset {
  std::vector<Sentence> sentences;
  // Entity types, sorted; O is never a member.
  std::vector<std::string> label_set;

  bool operator==(const Dataset&) const = default;
};

enum class BioMode {
  kRepair,  // a dangling I-<t> is read as B-<t>
  kStrict,  // a dangling I-<t> is an InputError
};

namespace detail {

struct Tag {
  char prefix = 'O';  // 'O', 'B' or 'I'
  std::string type;
};

inline bool parse_tag(const std::string& tag, Tag& out) {
  if (tag == "O") {
    out = {'O', {}};
    return true;
  }
  if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) return false;
  out = {tag[0], tag.substr(2)};
  return true;
}

}  // namespace detail

// Checks tag syntax and the I-after-{O, other type} rule. In repair mode the
// offending tags are rewritten in place.
inline void normalize_bio(Sentence& s, BioMode mode, const std::string& where = {}) {
  std::string prev_type;
  char prev_prefix = 'O';
  for (std::size_t i = 0; i < s.bio_tags.size(); ++i) {
    detail::Tag t;
    if (!detail::parse_tag(s.bio_tags[i], t)) {
      throw InputError(where + "illegal tag '" + s.bio_tags[i] + "'");
    }
    if (t.prefix == 'I' && (prev_prefix == 'O' || prev_type != t.type)) {
      if (mode == BioMode::kStrict) {
        throw InputError(where + "tag '" + s.bio_tags[i] + "' at token " +
                         std::to_string(i + 1) + " does not continue an entity");
      }
      s.bio_tags[i] = "B-" + t.type;
      t.prefix = 'B';
    }
    prev_prefix = t.prefix;
    prev_type = t.type;
  }
}

// Gold entities of a well-formed BIO sentence, ordered by position.
inline std::vector<LabeledSpan> bio_entities(const Sentence& s) {
  std::vector<LabeledSpan> out;
  for (int i = 0; i < s.size(); ++i) {
    detail::Tag t;
    detail::parse_tag(s.bio_tags[static_cast<std::size_t>(i)], t);
    if (t.prefix == 'B' || (t.prefix == 'I' && (out.empty() || out.back().span.e != i ||
                                                 out.back().label != t.type))) {
      out.push_back({{i + 1, i + 1}, t.type});
    } else if (t.prefix == 'I') {
      out.back().span.e = i + 1;
    }
  }
  return out;
}

inline std::vector<std::string> entities_to_bio(int n, const std::vector<LabeledSpan>& ents) {
  std::vector<std::string> tags(static_cast<std::size_t>(n), kOutsideLabel);
  for (const auto& e : ents) {
    tags[static_cast<std::size_t>(e.span.b - 1)] = "B-" + e.label;
    for (int i = e.span.b + 1; i <= e.span.e; ++i) {
      tags[static_cast<std::size_t>(i - 1)] = "I-" + e.label;
    }
  }
  return tags;
}

inline std::vector<std::string> collect_label_set(const std::vector<Sentence>& sentences) {
  std::set<std::string> types;
  for (const auto& s : sentences) {
    for (const auto& e : bio_entities(s)) types.insert(e.label);
  }
  return {types.begin(), types.end()};
}

inline Dataset make_dataset(std::vector<Sentence> sentences) {
  Dataset d;
  d.label_set = collect_label_set(sentences);
  d.sentences = std::move(sentences);
  return d;
}

// Reads `token<whitespace>tag` lines; blank lines end sentences. Lines starting
// with -DOCSTART- are document markers and are skipped.
inline Dataset parse_conll(std::istream& in, BioMode mode = BioMode::kRepair,
                           const std::string& source = "<stream>") {
  std::vector<Sentence> sentences;
  Sentence cur;
  std::string line;
  int lineno = 0;
  auto flush = [&]() {
    if (cur.tokens.empty()) return;
    cur.id = "s" + std::to_string(sentences.size() + 1);
    sentences.push_back(std::move(cur));
    cur = {};
  };
  std::size_t sentence_start_line = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_ws(line);
    if (fields.empty()) {
      if (!cur.tokens.empty()) {
        normalize_bio(cur, mode,
                      source + ":" + std::to_string(sentence_start_line) + ": ");
      }
      flush();
      continue;
    }
    if (fields[0] == "-DOCSTART-") continue;
    if (fields.size() != 2) {
      throw InputError(source + ":" + std::to_string(lineno) + ": expected 2 fields, got " +
                       std::to_string(fields.size()));
    }
    detail::Tag t;
    if (!detail::parse_tag(fields[1], t)) {
      throw InputError(source + ":" + std::to_string(lineno) + ": illegal tag '" +
                       fields[1] + "'");
    }
    if (cur.tokens.empty()) sentence_start_line = static_cast<std::size_t>(lineno);
    cur.tokens.push_back(std::move(fields[0]));
    cur.bio_tags.push_back(std::move(fields[1]));
  }
  if (!cur.tokens.empty()) {
    normalize_bio(cur, mode, source + ":" + std::to_string(sentence_start_line) + ": ");
  }
  flush();
  return make_dataset(std::move(sentences));
}

inline Dataset parse_conll_file(const std::string& path, BioMode mode = BioMode::kRepair) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_conll(in, mode, path);
}

inline void write_conll(std::ostream& out, const Dataset& d) {
  for (const auto& s : d.sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out << s.tokens[i] << '\t' << s.bio_tags[i] << '\n';
    }
    out << '\n';
  }
}

inline void write_conll_file(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_conll(out, d);
}

inline std::string to_conll_string(const Dataset& d) {
  std::ostringstream os;
  write_conll(os, d);
  return os.str();
}

// All spans of length <= max_span_length over n tokens, ordered by (b, e).
inline std::vector<SpanIndex> enumerate_spans(int n, int max_span_length) {
  if (max_span_length < 1) throw InputError("max_span_length must be >= 1");
  std::vector<SpanIndex> out;
  for (int b = 1; b <= n; ++b) {
    for (int e = b; e <= std::min(n, b + max_span_length - 1); ++e) out.push_back({b, e});
  }
  return out;
}

inline std::vector<SpanIndex> enumerate_spans(const Sentence& s, int max_span_length) {
  return enumerate_spans(s.size(), max_span_length);
}

// Exact-match labelling: a span carries an entity type only when its bounds
// coincide with a gold entity; everything else is O.
inline std::vector<LabeledSpan> gold_span_labels(const Sentence& s,
                                                 const std::vector<SpanIndex>& spans) {
  std::map<SpanIndex, std::string> gold;
  for (auto& e : bio_entities(s)) gold.emplace(e.span, e.label);
  std::vector<LabeledSpan> out;
  out.reserve(spans.size());
  for (const auto& sp : spans) {
    auto it = gold.find(sp);
    out.push_back({sp, it == gold.end() ? std::string(kOutsideLabel) : it->second});
  }
  return out;
}

}  // namespace sner
