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

// The full span model: transformer encoder, span head and (training only)
// the template contrastive term, with per-sentence loss and gradients.

#pragma once

#include <string>
#include <vector>

#include "sner/corpus.hpp"
#include "sner/encoder.hpp"
#include "sner/inference.hpp"
#include "sner/span_model.hpp"
#include "sner/templates.hpp"
#include "sner/vocabulary.hpp"

namespace sner {

struct ModelConfig {
  EncoderConfig encoder;
  SpanHeadConfig head;
  // Sentences are truncated to their first max_tokens tokens.
  int max_tokens = 128;
  // Training-time probability of feeding a sentence token to the encoder as
  // UNK, so that the UNK embedding is trained at all.
  double unk_replace_probability = 0.0;
};

struct LossTerms {
  double l1 = 0.0;     // mean span cross-entropy
  double l2 = 0.0;     // mean InfoNCE over contrasted spans
  double total = 0.0;  // l1 + lambda * l2
  int spans = 0;
  int contrasted = 0;
};

struct ContrastSettings {
  const TemplateSet* templates = nullptr;
  double lambda = 0.1;
  double temperature = 1.0;
  // Also contrast O spans (positive NONE, negatives every type).
  bool include_o_spans = false;
};

class SnerModel {
 public:
  SnerModel() = default;

  SnerModel(const ModelConfig& cfg, Vocabulary vocab, LabelSpace labels, std::uint64_t seed)
      : cfg_(cfg), vocab_(std::move(vocab)), labels_(std::move(labels)) {
    if (cfg_.max_tokens < 1 || cfg_.max_tokens > cfg_.encoder.max_positions) {
      throw InputError("max_tokens must lie in [1, max_positions]");
    }
    Rng rng(mix_seed(seed, {0x1417}));
    encoder_ = TransformerEncoder(cfg_.encoder, vocab_.size(), store_, rng);
    head_ = SpanHead(cfg_.head, cfg_.encoder.d, labels_, store_, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const LabelSpace& labels() const { return labels_; }
  const TransformerEncoder& encoder() const { return encoder_; }
  const SpanHead& head() const { return head_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  BoundEncoder bound_encoder() const { return BoundEncoder(encoder_, store_, vocab_); }

  int truncated_length(const Sentence& s) const { return std::min(s.size(), cfg_.max_tokens); }

  // Loss of one sentence. When `grads` is non-null, d(grad_scale * total)/dθ
  // is accumulated into it. Dropout is active only for non-null generators.
  LossTerms sentence_loss(const Sentence& s, const ContrastSettings& contrast, Gradients* grads,
                          double grad_scale = 1.0, Rng* dropout = nullptr,
                          Rng* template_dropout = nullptr) const {
    if (s.tokens.empty()) throw InputError("sentence '" + s.id + "' is empty");
    const int n = truncated_length(s);
    auto ids = vocab_.encode(s.tokens, static_cast<std::size_t>(n));
    // Replaced tokens are also replaced inside the templates' span slot.
    std::vector<std::string> fed(s.tokens.begin(), s.tokens.begin() + n);
    if (dropout && cfg_.unk_replace_probability > 0) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (dropout->uniform() < cfg_.unk_replace_probability) {
          ids[i] = Vocabulary::kUnk;
          fed[i] = Vocabulary::kUnkToken;
        }
      }
    }
    TransformerEncoder::Cache cache;
    const TokenMatrix h = encoder_.forward(store_, ids, grads ? &cache : nullptr, dropout);
    const bool ctx = cfg_.head.use_context;
    const SentenceVector c = ctx ? sentence_embedding(h) : SentenceVector();

    const auto spans = enumerate_spans(n, cfg_.head.max_span_length);
    const auto golds = gold_span_labels(s, spans);
    const Mat& table = store_[head_.length_index()];
    const Mat& w = store_[head_.weight_index()];
    const Mat& b = store_[head_.bias_index()];
    const double head_p = cfg_.head.dropout_rate;

    std::vector<RowVec> zs, masks, scores;
    zs.reserve(spans.size());
    scores.reserve(spans.size());
    for (const auto& sp : spans) {
      RowVec z = span_representation(h, c, sp, table);
      if (dropout && head_p > 0) {
        RowVec m = detail::dropout_mask(1, z.size(), head_p, *dropout);
        z.array() *= m.array();
        masks.push_back(std::move(m));
      }
      scores.push_back(classify_span(w, b, z));
      zs.push_back(std::move(z));
    }
    auto ce = span_loss(scores, golds, labels_);

    LossTerms out;
    out.spans = static_cast<int>(spans.size());
    out.l1 = ce.loss / out.spans;

    const int d = cfg_.encoder.d, dl = cfg_.head.length_dim;
    TokenMatrix dh;
    RowVec dc;
    if (grads) {
      dh = TokenMatrix::Zero(h.rows(), h.cols());
      if (ctx) dc = RowVec::Zero(d);
      const double g1 = grad_scale / out.spans;
      for (std::size_t i = 0; i < spans.size(); ++i) {
        const RowVec ds = ce.d_scores[i] * g1;
        (*grads)[head_.weight_index()].noalias() += ds.transpose() * zs[i];
        (*grads)[head_.bias_index()].row(0) += ds;
        RowVec dz = ds * w;
        if (!masks.empty()) dz.array() *= masks[i].array();
        const auto& sp = spans[i];
        dh.row(sp.b - 1) += dz.segment(0, d);
        dh.row(sp.e - 1) += dz.segment(d, d);
        (*grads)[head_.length_index()].row(sp.length() - 1) += dz.segment(2 * d, dl);
        if (ctx) dc += dz.segment(2 * d + dl, d);
      }
    }

    if (contrast.templates && ctx) {
      contrastive_term(fed, golds, c, contrast, grads, grad_scale, template_dropout, dc, out);
    }
    out.total = out.l1 + contrast.lambda * out.l2;

    if (grads) {
      if (ctx) dh += sentence_embedding_backward(dc, h.rows());
      encoder_.backward(store_, cache, dh, *grads);
    }
    return out;
  }

  std::vector<SpanScores> score_spans(const Sentence& s) const {
    if (s.tokens.empty()) return {};
    const int n = truncated_length(s);
    const TokenMatrix h = encoder_.forward(store_, vocab_.encode(s.tokens, static_cast<std::size_t>(n)));
    const SentenceVector c = cfg_.head.use_context ? sentence_embedding(h) : SentenceVector();
    std::vector<SpanScores> out;
    for (const auto& sp : enumerate_spans(n, cfg_.head.max_span_length)) {
      out.push_back({sp, classify_span(store_[head_.weight_index()], store_[head_.bias_index()],
                                       span_representation(h, c, sp, store_[head_.length_index()]))});
    }
    return out;
  }

  // Evaluation mode: no dropout and no template computation.
  Prediction predict(const Sentence& s) const { return decode(s.id, score_spans(s), labels_); }

 private:
  struct TemplateEncoding {
    TransformerEncoder::Cache cache;
    Eigen::Index rows = 0;
  };

  void contrastive_term(const std::vector<std::string>& tokens, const std::vector<LabeledSpan>& golds, const SentenceVector& c,
                        const ContrastSettings& contrast, Gradients* grads, double grad_scale,
                        Rng* template_dropout, RowVec& dc, LossTerms& out) const {
    const TemplateSet& set = *contrast.templates;
    const auto types = labels_.entity_types();
    const auto k = static_cast<double>(set.size());
    const auto max_pos = static_cast<std::size_t>(cfg_.encoder.max_positions);

    std::vector<const LabeledSpan*> targets;
    for (const auto& g : golds) {
      if (g.label != kOutsideLabel || contrast.include_o_spans) targets.push_back(&g);
    }
    if (targets.empty()) return;
    const double g2 = grad_scale * contrast.lambda / static_cast<double>(targets.size());

    double sum = 0.0;
    for (const LabeledSpan* g : targets) {
      std::vector<TypeTag> tags;
      if (g->label == kOutsideLabel) {
        tags.emplace_back(std::nullopt);
        for (const auto& t : types) tags.emplace_back(t);
      } else {
        tags = contrast_labels(g->label, types);
      }
      const std::vector<std::string> span_toks(tokens.begin() + (g->span.b - 1), tokens.begin() + g->span.e);
      std::vector<RowVec> pooled;
      std::vector<std::vector<TemplateEncoding>> encodings(tags.size());
      for (std::size_t t = 0; t < tags.size(); ++t) {
        RowVec acc = RowVec::Zero(cfg_.encoder.d);
        for (const auto& tpl : set.templates) {
          const auto ids = vocab_.encode(fill_tokens(tpl, span_toks, tags[t], set.translation), max_pos);
          ++template_encode_counter();
          TemplateEncoding enc;
          const TokenMatrix ht = encoder_.forward(store_, ids, grads ? &enc.cache : nullptr, template_dropout);
          enc.rows = ht.rows();
          acc += sentence_embedding(ht);
          if (grads) encodings[t].push_back(std::move(enc));
        }
        pooled.push_back(acc / k);
      }
      std::vector<RowVec> negs(pooled.begin() + 1, pooled.end());
      const auto r = contrastive_loss(c, pooled[0], negs, contrast.temperature);
      sum += r.loss;
      if (grads) {
        dc += g2 * r.d_c;
        for (std::size_t t = 0; t < tags.size(); ++t) {
          const RowVec dp = (t == 0 ? r.d_positive : r.d_negatives[t - 1]) * (g2 / k);
          for (const auto& enc : encodings[t]) {
            encoder_.backward(store_, enc.cache, sentence_embedding_backward(dp, enc.rows), *grads);
          }
        }
      }
    }
    out.contrasted = static_cast<int>(targets.size());
    out.l2 = sum / static_cast<double>(targets.size());
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  LabelSpace labels_;
  ParamStore store_;
  TransformerEncoder encoder_;
  SpanHead head_;
};

}  // namespace sner
