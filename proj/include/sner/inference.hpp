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

// Flat decoding of span scores and entity-level micro-F1.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sner/corpus.hpp"
#include "sner/ooe.hpp"
#include "sner/span_model.hpp"

namespace sner {

struct ScoredSpan {
  SpanIndex span;
  std::string label;
  double score = 0.0;

  bool operator==(const ScoredSpan&) const = default;
};

struct Prediction {
  std::string sentence_id;
  // Non-overlapping, never O, ordered by position.
  std::vector<ScoredSpan> spans;

  bool operator==(const Prediction&) const = default;
};

struct SpanScores {
  SpanIndex span;
  RowVec scores;
};

// Candidates are spans whose argmax is an entity type, scored by the softmax
// probability of that type. They are kept greedily in descending score order
// (ties: earlier start, then shorter) unless they overlap an already kept span.
inline Prediction decode(const std::string& sentence_id, const std::vector<SpanScores>& spans,
                         const LabelSpace& labels) {
  std::vector<ScoredSpan> cands;
  for (const auto& s : spans) {
    if (static_cast<std::size_t>(s.scores.size()) != labels.size()) {
      throw InputError("score vector arity does not match the label space");
    }
    const std::size_t k = argmax(s.scores);
    if (k == labels.outside()) continue;
    cands.push_back({s.span, labels.name(k), softmax(s.scores)(static_cast<Eigen::Index>(k))});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.span.b != b.span.b) return a.span.b < b.span.b;
    return a.span.length() < b.span.length();
  });
  Prediction p{sentence_id, {}};
  for (auto& c : cands) {
    const bool clash = std::any_of(p.spans.begin(), p.spans.end(),
                                   [&](const ScoredSpan& k) { return k.span.overlaps(c.span); });
    if (!clash) p.spans.push_back(std::move(c));
  }
  std::sort(p.spans.begin(), p.spans.end(),
            [](const ScoredSpan& a, const ScoredSpan& b) { return a.span < b.span; });
  return p;
}

struct PrfCounts {
  std::size_t tp = 0, fp = 0, fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  std::size_t gold() const { return tp + fn; }
};

struct MetricsReport {
  PrfCounts overall;
  bool binned = false;
  // Empty when the bin has no gold entities.
  std::optional<PrfCounts> ooe, in_vocab;

  double precision() const { return overall.precision(); }
  double recall() const { return overall.recall(); }
  double micro_f1() const { return overall.f1(); }
};

inline nlohmann::json counts_json(const PrfCounts& c) {
  return {{"precision", c.precision()}, {"recall", c.recall()}, {"micro_f1", c.f1()},
          {"tp", c.tp},                 {"fp", c.fp},           {"fn", c.fn}};
}

inline void to_json(nlohmann::json& j, const MetricsReport& m) {
  j = counts_json(m.overall);
  if (m.binned) {
    j["bins"] = {{"ooe", m.ooe ? counts_json(*m.ooe) : nlohmann::json(nullptr)},
                 {"in_vocab", m.in_vocab ? counts_json(*m.in_vocab) : nlohmann::json(nullptr)}};
  }
}

namespace detail {

inline std::unordered_map<std::string, const Sentence*> index_sentences(const Dataset& d) {
  std::unordered_map<std::string, const Sentence*> idx;
  for (const auto& s : d.sentences) idx.emplace(s.id, &s);
  return idx;
}

inline std::unordered_map<std::string, const Prediction*> index_predictions(
    const std::vector<Prediction>& preds, const std::unordered_map<std::string, const Sentence*>& gold) {
  std::unordered_map<std::string, const Prediction*> idx;
  for (const auto& p : preds) {
    if (!gold.contains(p.sentence_id)) throw InputError("prediction for unknown sentence '" + p.sentence_id + "'");
    idx.emplace(p.sentence_id, &p);
  }
  return idx;
}

}  // namespace detail

// Exact (sentence, span, type) matching, micro-averaged over the corpus.
inline MetricsReport micro_f1(const std::vector<Prediction>& predictions, const Dataset& gold) {
  const auto gidx = detail::index_sentences(gold);
  const auto pidx = detail::index_predictions(predictions, gidx);
  MetricsReport m;
  for (const auto& s : gold.sentences) {
    std::set<std::pair<SpanIndex, std::string>> g;
    for (auto& e : bio_entities(s)) g.emplace(e.span, e.label);
    std::size_t matched = 0;
    if (auto it = pidx.find(s.id); it != pidx.end()) {
      for (const auto& p : it->second->spans) {
        if (g.contains({p.span, p.label})) {
          ++matched;
        } else {
          ++m.overall.fp;
        }
      }
    }
    m.overall.tp += matched;
    m.overall.fn += g.size() - matched;
  }
  return m;
}

enum class BinAttribution {
  // An unmatched prediction counts as a false positive in the bin of the gold
  // entity it overlaps most (earliest on ties), or in the OOE bin if it
  // overlaps none.
  kNearestOverlap,
  // Unmatched predictions are left out of both bins.
  kExclude,
};

// Overall micro-F1 plus recall/precision restricted to OOE and in-vocabulary
// gold entities.
inline MetricsReport binned_f1(const std::vector<Prediction>& predictions, const Dataset& gold,
                               const OoeBins& bins,
                               BinAttribution attribution = BinAttribution::kNearestOverlap) {
  MetricsReport m = micro_f1(predictions, gold);
  m.binned = true;
  const auto gidx = detail::index_sentences(gold);
  const auto pidx = detail::index_predictions(predictions, gidx);
  PrfCounts ooe, inv;
  for (const auto& s : gold.sentences) {
    auto bit = bins.find(s.id);
    const auto ents = bio_entities(s);
    if (!ents.empty() && (bit == bins.end() || bit->second.size() != ents.size())) {
      throw InputError("OOE bins do not cover the gold entities of sentence '" + s.id + "'");
    }
    static const std::vector<BinnedEntity> kNone;
    const auto& binned = bit == bins.end() ? kNone : bit->second;
    std::vector<bool> hit(binned.size(), false);
    if (auto it = pidx.find(s.id); it != pidx.end()) {
      for (const auto& p : it->second->spans) {
        bool matched = false;
        for (std::size_t i = 0; i < binned.size(); ++i) {
          if (binned[i].entity.span == p.span && binned[i].entity.label == p.label) {
            hit[i] = true;
            matched = true;
            ++(binned[i].is_ooe ? ooe : inv).tp;
            break;
          }
        }
        if (matched || attribution == BinAttribution::kExclude) continue;
        int best = -1, best_overlap = 0;
        for (std::size_t i = 0; i < binned.size(); ++i) {
          const auto& g = binned[i].entity.span;
          const int ov = std::min(g.e, p.span.e) - std::max(g.b, p.span.b) + 1;
          if (ov > best_overlap) {
            best_overlap = ov;
            best = static_cast<int>(i);
          }
        }
        ++((best < 0 || binned[static_cast<std::size_t>(best)].is_ooe) ? ooe : inv).fp;
      }
    }
    for (std::size_t i = 0; i < binned.size(); ++i) {
      if (!hit[i]) ++(binned[i].is_ooe ? ooe : inv).fn;
    }
  }
  if (ooe.gold() > 0) m.ooe = ooe;
  if (inv.gold() > 0) m.in_vocab = inv;
  return m;
}

// conlleval-style export: token, gold tag, predicted tag.
inline void write_prediction_bio(std::ostream& out, const std::vector<Prediction>& predictions,
                                 const Dataset& gold) {
  const auto gidx = detail::index_sentences(gold);
  const auto pidx = detail::index_predictions(predictions, gidx);
  for (const auto& s : gold.sentences) {
    std::vector<LabeledSpan> ents;
    if (auto it = pidx.find(s.id); it != pidx.end()) {
      for (const auto& p : it->second->spans) ents.push_back({p.span, p.label});
    }
    const auto tags = entities_to_bio(s.size(), ents);
    for (int i = 0; i < s.size(); ++i) {
      out << s.tokens[static_cast<std::size_t>(i)] << '\t' << s.bio_tags[static_cast<std::size_t>(i)] << '\t'
          << tags[static_cast<std::size_t>(i)] << '\n';
    }
    out << '\n';
  }
}

}  // namespace sner
