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

// Out-of-entity (OOE) analysis: a test entity is OOE when at least one of its
// tokens never occurs in the training sentences.

#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sner/corpus.hpp"

namespace sner {

struct OoeOptions {
  // Restrict the training token universe to tokens inside gold entities.
  bool entity_tokens_only = false;
};

struct OoeReport {
  double ooe_rate = 0.0;
  std::size_t unique_test_entities = 0;
  std::size_t unique_ooe_entities = 0;
  std::size_t train_token_vocab_size = 0;
  // Set when the test side has no entities; the rate is then reported as 0.
  bool no_test_entities = false;
};

inline void to_json(nlohmann::json& j, const OoeReport& r) {
  j = {{"ooe_rate", r.ooe_rate},
       {"unique_test_entities", r.unique_test_entities},
       {"unique_ooe_entities", r.unique_ooe_entities},
       {"train_token_vocab_size", r.train_token_vocab_size},
       {"no_test_entities", r.no_test_entities}};
}

inline std::unordered_set<std::string> train_token_universe(const Dataset& train,
                                                            const OoeOptions& opt = {}) {
  std::unordered_set<std::string> vocab;
  for (const auto& s : train.sentences) {
    if (opt.entity_tokens_only) {
      for (const auto& e : bio_entities(s)) {
        for (int i = e.span.b; i <= e.span.e; ++i) vocab.insert(s.tokens[i - 1]);
      }
    } else {
      vocab.insert(s.tokens.begin(), s.tokens.end());
    }
  }
  return vocab;
}

inline bool is_ooe_mention(const Sentence& s, const SpanIndex& span,
                           const std::unordered_set<std::string>& vocab) {
  for (int i = span.b; i <= span.e; ++i) {
    if (!vocab.contains(s.tokens[static_cast<std::size_t>(i - 1)])) return true;
  }
  return false;
}

// Test entities are deduplicated by (surface string, type); case is kept.
inline OoeReport compute_ooe_rate(const Dataset& train, const Dataset& test,
                                  const OoeOptions& opt = {}) {
  const auto vocab = train_token_universe(train, opt);
  std::map<std::pair<std::string, std::string>, bool> unique;
  for (const auto& s : test.sentences) {
    for (const auto& e : bio_entities(s)) {
      unique.emplace(std::make_pair(s.text(e.span), e.label), is_ooe_mention(s, e.span, vocab));
    }
  }
  OoeReport r;
  r.train_token_vocab_size = vocab.size();
  r.unique_test_entities = unique.size();
  for (const auto& [key, ooe] : unique) r.unique_ooe_entities += ooe ? 1 : 0;
  r.no_test_entities = unique.empty();
  r.ooe_rate = unique.empty() ? 0.0
                              : static_cast<double>(r.unique_ooe_entities) /
                                    static_cast<double>(r.unique_test_entities);
  return r;
}

struct BinnedEntity {
  LabeledSpan entity;
  bool is_ooe = false;

  bool operator==(const BinnedEntity&) const = default;
};

using OoeBins = std::map<std::string, std::vector<BinnedEntity>>;

// Per-occurrence OOE tagging of every gold test entity, keyed by sentence id.
inline OoeBins bin_entities_by_ooe(const Dataset& train, const Dataset& test,
                                   const OoeOptions& opt = {}) {
  const auto vocab = train_token_universe(train, opt);
  OoeBins bins;
  for (const auto& s : test.sentences) {
    auto& row = bins[s.id];
    for (auto& e : bio_entities(s)) {
      const bool ooe = is_ooe_mention(s, e.span, vocab);
      row.push_back({std::move(e), ooe});
    }
  }
  return bins;
}

struct PartitionSpec {
  double target_ooe_rate = 0.5;
  double rate_tolerance = 0.02;
  double split_fraction = 0.3;
  // Relative to the target test-set size.
  double size_tolerance = 0.05;
  std::uint64_t seed = 0;
  int max_iterations = 5000;
  int candidates_per_iteration = 32;
  OoeOptions ooe;
};

struct PartitionResult {
  Dataset train;
  Dataset test;
  OoeReport report;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

// Incremental bookkeeping for the swap search, over integer token ids.
class PartitionState {
 public:
  PartitionState(const Dataset& corpus, const OoeOptions& opt) {
    std::unordered_map<std::string, int> tok_ids;
    std::map<std::pair<std::string, std::string>, int> key_ids;
    auto tok_id = [&](const std::string& t) {
      auto [it, fresh] = tok_ids.emplace(t, static_cast<int>(tok_ids.size()));
      return it->second;
    };
    for (const auto& s : corpus.sentences) {
      SentenceInfo info;
      std::map<int, int> counts;
      const auto ents = bio_entities(s);
      if (opt.entity_tokens_only) {
        for (const auto& e : ents) {
          for (int i = e.span.b; i <= e.span.e; ++i) ++counts[tok_id(s.tokens[i - 1])];
        }
      } else {
        for (const auto& t : s.tokens) ++counts[tok_id(t)];
      }
      info.token_counts.assign(counts.begin(), counts.end());
      for (const auto& e : ents) {
        auto key = std::make_pair(s.text(e.span), e.label);
        auto [it, fresh] = key_ids.emplace(key, static_cast<int>(key_ids.size()));
        if (fresh) {
          std::vector<int> toks;
          for (int i = e.span.b; i <= e.span.e; ++i) toks.push_back(tok_id(s.tokens[i - 1]));
          std::sort(toks.begin(), toks.end());
          toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
          key_tokens_.push_back(std::move(toks));
        }
        info.entity_keys.push_back(it->second);
      }
      sentences_.push_back(std::move(info));
    }
    train_counts_.assign(tok_ids.size(), 0);
    test_key_counts_.assign(key_tokens_.size(), 0);
  }

  void assign(std::size_t sentence, bool to_test) {
    const auto& info = sentences_[sentence];
    if (to_test) {
      for (int k : info.entity_keys) ++test_key_counts_[static_cast<std::size_t>(k)];
    } else {
      for (auto [tok, c] : info.token_counts) train_counts_[static_cast<std::size_t>(tok)] += c;
    }
  }

  void unassign(std::size_t sentence, bool from_test) {
    const auto& info = sentences_[sentence];
    if (from_test) {
      for (int k : info.entity_keys) --test_key_counts_[static_cast<std::size_t>(k)];
    } else {
      for (auto [tok, c] : info.token_counts) train_counts_[static_cast<std::size_t>(tok)] -= c;
    }
  }

  double rate() const {
    std::size_t unique = 0, ooe = 0;
    for (std::size_t k = 0; k < key_tokens_.size(); ++k) {
      if (test_key_counts_[k] == 0) continue;
      ++unique;
      for (int tok : key_tokens_[k]) {
        if (train_counts_[static_cast<std::size_t>(tok)] == 0) {
          ++ooe;
          break;
        }
      }
    }
    return unique == 0 ? 0.0 : static_cast<double>(ooe) / static_cast<double>(unique);
  }

  std::size_t entity_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences_) n += s.entity_keys.size();
    return n;
  }

 private:
  struct SentenceInfo {
    std::vector<std::pair<int, int>> token_counts;
    std::vector<int> entity_keys;
  };
  std::vector<SentenceInfo> sentences_;
  std::vector<std::vector<int>> key_tokens_;
  std::vector<int> train_counts_;
  std::vector<int> test_key_counts_;
};

}  // namespace detail

// Random split followed by greedy hill climbing over train/test sentence swaps.
// Swaps keep the test-set size fixed at round(split_fraction * N). Returns the
// best split found; `converged` is false when the rate tolerance was not met.
inline PartitionResult repartition(const Dataset& corpus, const PartitionSpec& spec) {
  if (!(spec.rate_tolerance > 0) || !(spec.size_tolerance > 0)) {
    throw InputError("partition tolerances must be positive");
  }
  if (!(spec.split_fraction > 0 && spec.split_fraction < 1)) {
    throw InputError("split_fraction must lie strictly inside (0, 1)");
  }
  if (!(spec.target_ooe_rate >= 0 && spec.target_ooe_rate <= 1)) {
    throw InputError("target OOE rate must lie in [0, 1]");
  }
  if (spec.max_iterations < 1 || spec.candidates_per_iteration < 1) {
    throw InputError("max_iterations and candidates_per_iteration must be positive");
  }
  const std::size_t n = corpus.sentences.size();
  detail::PartitionState state(corpus, spec.ooe);
  if (n < 20 || state.entity_count() < 2) {
    throw InputError("repartition needs at least 20 sentences and 2 entities");
  }

  Rng rng(mix_seed(spec.seed, {0x9a27}));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  auto test_n = static_cast<std::size_t>(std::llround(spec.split_fraction * static_cast<double>(n)));
  test_n = std::clamp<std::size_t>(test_n, 1, n - 1);

  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<long>(test_n));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(test_n), order.end());
  for (auto i : test_idx) state.assign(i, true);
  for (auto i : train_idx) state.assign(i, false);

  auto swap_in = [&](std::size_t ti, std::size_t si) {
    state.unassign(train_idx[ti], false);
    state.unassign(test_idx[si], true);
    std::swap(train_idx[ti], test_idx[si]);
    state.assign(train_idx[ti], false);
    state.assign(test_idx[si], true);
  };
  // Moves one sentence across and puts it last on the other side, so the
  // move is undone by moving that last element back.
  auto move = [&](std::vector<std::size_t>& from, std::vector<std::size_t>& to, std::size_t i, bool to_test) {
    const std::size_t s = from[i];
    state.unassign(s, !to_test);
    from[i] = from.back();
    from.pop_back();
    to.push_back(s);
    state.assign(s, to_test);
  };
  auto unmove = [&](std::vector<std::size_t>& from, std::vector<std::size_t>& to, std::size_t i, bool to_test) {
    const std::size_t s = to.back();
    state.unassign(s, to_test);
    to.pop_back();
    from.push_back(s);
    std::swap(from[i], from.back());
    state.assign(s, !to_test);
  };
  const double target_size = spec.split_fraction * static_cast<double>(n);
  auto size_in_band = [&](std::size_t m) {
    return std::abs(static_cast<double>(m) - target_size) <= spec.size_tolerance * target_size;
  };

  // Candidate kinds: 0 swaps a pair, 1 moves train to test, 2 moves test to
  // train. Ties with the current distance are accepted so the search can
  // drift across plateaus.
  struct Move {
    int kind;
    std::size_t a, b;
  };
  auto apply = [&](const Move& m) {
    if (m.kind == 0) swap_in(m.a, m.b);
    if (m.kind == 1) move(train_idx, test_idx, m.a, true);
    if (m.kind == 2) move(test_idx, train_idx, m.a, false);
  };
  auto undo = [&](const Move& m) {
    if (m.kind == 0) swap_in(m.a, m.b);
    if (m.kind == 1) unmove(train_idx, test_idx, m.a, true);
    if (m.kind == 2) unmove(test_idx, train_idx, m.a, false);
  };

  double dist = std::abs(state.rate() - spec.target_ooe_rate);
  int it = 0;
  while (dist > spec.rate_tolerance && it < spec.max_iterations) {
    ++it;
    double best = dist;
    std::optional<Move> chosen;
    for (int c = 0; c < spec.candidates_per_iteration; ++c) {
      Move m{static_cast<int>(rng.below(3)), 0, 0};
      if (m.kind == 1 && (train_idx.size() < 2 || !size_in_band(test_idx.size() + 1))) m.kind = 0;
      if (m.kind == 2 && (test_idx.size() < 2 || !size_in_band(test_idx.size() - 1))) m.kind = 0;
      m.a = static_cast<std::size_t>(rng.below(m.kind == 2 ? test_idx.size() : train_idx.size()));
      if (m.kind == 0) m.b = static_cast<std::size_t>(rng.below(test_idx.size()));
      apply(m);
      const double d = std::abs(state.rate() - spec.target_ooe_rate);
      undo(m);
      if (d < best || (d == best && !chosen)) {
        best = d;
        chosen = m;
      }
    }
    if (chosen) {
      apply(*chosen);
      dist = best;
    }
  }

  std::vector<bool> in_test(n, false);
  for (auto i : test_idx) in_test[i] = true;
  std::vector<Sentence> tr, te;
  for (std::size_t i = 0; i < n; ++i) {
    (in_test[i] ? te : tr).push_back(corpus.sentences[i]);
  }
  PartitionResult res;
  res.train = make_dataset(std::move(tr));
  res.test = make_dataset(std::move(te));
  res.report = compute_ooe_rate(res.train, res.test, spec.ooe);
  res.iterations = it;
  res.converged = std::abs(res.report.ooe_rate - spec.target_ooe_rate) <= spec.rate_tolerance &&
                  size_in_band(res.test.sentences.size());
  return res;
}

}  // namespace sner
