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

// Span representations z = [h_b ; h_e ; length(e-b+1) ; c] and the linear
// span classifier trained with summed softmax cross-entropy.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sner/corpus.hpp"
#include "sner/params.hpp"
#include "sner/pooling.hpp"

namespace sner {

// Canonical label order: entity types as given, then O last, so that the
// lowest-index tie-break never prefers O over an entity.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> entity_types) : labels_(std::move(entity_types)) {
    labels_.emplace_back(kOutsideLabel);
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t outside() const { return labels_.size() - 1; }
  const std::string& name(std::size_t i) const { return labels_.at(i); }
  std::vector<std::string> entity_types() const { return {labels_.begin(), labels_.end() - 1}; }
  const std::vector<std::string>& all() const { return labels_; }

  std::size_t index(const std::string& label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == label) return i;
    }
    throw InputError("label '" + label + "' is not registered");
  }

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<std::string> labels_;
};

inline RowVec boundary_embedding(const TokenMatrix& h, const SpanIndex& span) {
  if (span.b < 1 || span.e < span.b || span.e > h.rows()) {
    throw InputError("span (" + std::to_string(span.b) + "," + std::to_string(span.e) +
                     ") outside a " + std::to_string(h.rows()) + "-token sentence");
  }
  RowVec z(2 * h.cols());
  z << h.row(span.b - 1), h.row(span.e - 1);
  return z;
}

// [h_b ; h_e ; length_table(len) ; c]. An empty c yields the context-free
// backbone representation [h_b ; h_e ; length_table(len)].
inline RowVec span_representation(const TokenMatrix& h, const SentenceVector& c,
                                  const SpanIndex& span, const Mat& length_table) {
  if (span.length() > length_table.rows()) {
    throw InputError("span length " + std::to_string(span.length()) + " exceeds length table of " +
                     std::to_string(length_table.rows()));
  }
  const RowVec zb = boundary_embedding(h, span);
  RowVec z(zb.size() + length_table.cols() + c.size());
  z << zb, length_table.row(span.length() - 1), c;
  return z;
}

// Raw scores W z + b over the canonical label order.
inline RowVec classify_span(const Mat& weight, const Mat& bias, const RowVec& z) {
  if (weight.cols() != z.size() || bias.cols() != weight.rows()) {
    throw InputError("classifier expects input width " + std::to_string(weight.cols()) + ", got " +
                     std::to_string(z.size()));
  }
  return z * weight.transpose() + bias.row(0);
}

// Lowest index wins ties.
inline std::size_t argmax(const RowVec& scores) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

inline RowVec softmax(const RowVec& scores) {
  RowVec p = (scores.array() - scores.maxCoeff()).exp();
  return p / p.sum();
}

struct SpanLossResult {
  double loss = 0.0;
  std::vector<RowVec> d_scores;
};

// Sum over spans of softmax cross-entropy, in nats.
inline SpanLossResult span_loss(const std::vector<RowVec>& scores, const std::vector<LabeledSpan>& golds,
                                const LabelSpace& labels) {
  if (scores.size() != golds.size()) throw InputError("scores and gold labels are not aligned");
  SpanLossResult r;
  r.d_scores.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t y = labels.index(golds[i].label);
    if (static_cast<std::size_t>(scores[i].size()) != labels.size()) {
      throw InputError("score vector arity does not match the label space");
    }
    const double mx = scores[i].maxCoeff();
    const double lse = mx + std::log((scores[i].array() - mx).exp().sum());
    r.loss += lse - scores[i](static_cast<Eigen::Index>(y));
    RowVec g = (scores[i].array() - lse).exp();
    g(static_cast<Eigen::Index>(y)) -= 1.0;
    r.d_scores.push_back(std::move(g));
  }
  return r;
}

struct SpanHeadConfig {
  int max_span_length = 4;
  int length_dim = 8;
  bool use_context = true;
  double dropout_rate = 0.2;
  double init_stddev = 0.02;
};

// Owns the indices of the span-length table and the classifier in a ParamStore.
class SpanHead {
 public:
  SpanHead() = default;
  SpanHead(const SpanHeadConfig& cfg, int d, const LabelSpace& labels, ParamStore& store, Rng& rng)
      : cfg_(cfg), d_(d) {
    if (cfg_.max_span_length < 1 || cfg_.length_dim < 1) throw InputError("span head sizes must be positive");
    length_ = store.add("head.length_embedding", gaussian(cfg_.max_span_length, cfg_.length_dim, cfg_.init_stddev, rng),
                        ParamGroup::kHead);
    weight_ = store.add("head.classifier.weight",
                        gaussian(static_cast<Eigen::Index>(labels.size()), input_width(), cfg_.init_stddev, rng),
                        ParamGroup::kHead);
    bias_ = store.add("head.classifier.bias", Mat::Zero(1, static_cast<Eigen::Index>(labels.size())),
                      ParamGroup::kHead);
  }

  const SpanHeadConfig& config() const { return cfg_; }
  int input_width() const { return (cfg_.use_context ? 3 : 2) * d_ + cfg_.length_dim; }
  std::size_t length_index() const { return length_; }
  std::size_t weight_index() const { return weight_; }
  std::size_t bias_index() const { return bias_; }

 private:
  SpanHeadConfig cfg_;
  int d_ = 0;
  std::size_t length_ = 0, weight_ = 0, bias_ = 0;
};

}  // namespace sner
