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

// Token encoders. TransformerEncoder is a small pre-layer-norm transformer
// with learned positional embeddings and an explicit backward pass;
// MockEncoder returns fixed hash-seeded vectors for tests.
//
// Any type used where an encoder is expected provides
//   TokenMatrix encode(const std::vector<std::string>& tokens) const;
// returning one row per (possibly truncated) token.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sner/params.hpp"
#include "sner/pooling.hpp"
#include "sner/vocabulary.hpp"

namespace sner {

template <class E>
concept TokenEncoder = requires(const E& e, const std::vector<std::string>& toks) {
  { e.encode(toks) } -> std::convertible_to<TokenMatrix>;
};

struct EncoderConfig {
  int d = 64;
  int num_layers = 2;
  int num_heads = 4;
  int feedforward_width = 128;
  int max_positions = 128;
  double dropout_rate = 0.1;
  double init_stddev = 0.02;

  void validate() const {
    if (d < 1 || num_layers < 0 || num_heads < 1 || feedforward_width < 1 || max_positions < 1)
      throw InputError("encoder dimensions must be positive");
    if (d % num_heads != 0) throw InputError("d must be divisible by num_heads");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) throw InputError("dropout_rate must be in [0,1)");
  }
};

namespace detail {

inline constexpr double kLnEps = 1e-5;

struct LnCache {
  Mat xhat;
  Eigen::VectorXd rstd;
};

inline Mat layer_norm(const Mat& x, const Mat& gain, const Mat& bias, LnCache* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat xhat(n, d);
  Eigen::VectorXd rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
  }
  Mat y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

inline Mat layer_norm_backward(const Mat& dy, const LnCache& c, const Mat& gain, Mat& d_gain,
                               Mat& d_bias) {
  d_gain.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gain.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).sum() / d;
    const double m2 = dxhat.row(i).dot(c.xhat.row(i)) / d;
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

inline constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluK * (u + 0.044715 * u * u * u)));
}

inline double gelu_grad(double u) {
  const double t = std::tanh(kGeluK * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * 0.044715 * u * u);
}

// Inverted dropout mask: entries are 0 or 1/(1-p).
inline Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < p ? 0.0 : keep;
  return m;
}

inline void softmax_rows(Mat& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace detail

class TransformerEncoder {
 public:
  struct LayerCache {
    detail::LnCache ln1, ln2;
    Mat a, q, k, v, ctx, x_mid, f, u, g;
    std::vector<Mat> probs;
    Mat drop_attn, drop_ffn;
  };

  struct Cache {
    std::vector<int> ids;
    Mat drop_embed;
    std::vector<LayerCache> layers;
    detail::LnCache ln_final;
  };

  TransformerEncoder() = default;

  // Registers this encoder's tensors in `store`, initialised from `rng`.
  TransformerEncoder(const EncoderConfig& cfg, std::size_t vocab_size, ParamStore& store, Rng& rng)
      : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.d, ff = cfg_.feedforward_width;
    const double s = cfg_.init_stddev;
    auto enc = ParamGroup::kEncoder;
    tok_emb_ = store.add("encoder.token_embedding", gaussian(static_cast<Eigen::Index>(vocab_size), d, s, rng), enc);
    pos_emb_ = store.add("encoder.position_embedding", gaussian(cfg_.max_positions, d, s, rng), enc);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      const std::string p = "encoder.layer" + std::to_string(l) + ".";
      LayerIdx li;
      li.ln1_g = store.add(p + "ln1.gain", Mat::Ones(1, d), enc);
      li.ln1_b = store.add(p + "ln1.bias", Mat::Zero(1, d), enc);
      li.wq = store.add(p + "attn.wq", gaussian(d, d, s, rng), enc);
      li.bq = store.add(p + "attn.bq", Mat::Zero(1, d), enc);
      li.wk = store.add(p + "attn.wk", gaussian(d, d, s, rng), enc);
      li.bk = store.add(p + "attn.bk", Mat::Zero(1, d), enc);
      li.wv = store.add(p + "attn.wv", gaussian(d, d, s, rng), enc);
      li.bv = store.add(p + "attn.bv", Mat::Zero(1, d), enc);
      li.wo = store.add(p + "attn.wo", gaussian(d, d, s, rng), enc);
      li.bo = store.add(p + "attn.bo", Mat::Zero(1, d), enc);
      li.ln2_g = store.add(p + "ln2.gain", Mat::Ones(1, d), enc);
      li.ln2_b = store.add(p + "ln2.bias", Mat::Zero(1, d), enc);
      li.w1 = store.add(p + "ffn.w1", gaussian(d, ff, s, rng), enc);
      li.b1 = store.add(p + "ffn.b1", Mat::Zero(1, ff), enc);
      li.w2 = store.add(p + "ffn.w2", gaussian(ff, d, s, rng), enc);
      li.b2 = store.add(p + "ffn.b2", Mat::Zero(1, d), enc);
      layers_.push_back(li);
    }
    lnf_g_ = store.add("encoder.ln_final.gain", Mat::Ones(1, d), enc);
    lnf_b_ = store.add("encoder.ln_final.bias", Mat::Zero(1, d), enc);
  }

  const EncoderConfig& config() const { return cfg_; }
  int width() const { return cfg_.d; }

  // Encodes token ids (already truncated to max_positions). Dropout is applied
  // only when `dropout` is non-null; pass a cache to enable backward().
  TokenMatrix forward(const ParamStore& ps, std::span<const int> ids, Cache* cache = nullptr,
                      Rng* dropout = nullptr) const {
    const auto n = static_cast<Eigen::Index>(ids.size());
    if (n == 0) throw InputError("cannot encode an empty token sequence");
    if (n > cfg_.max_positions) throw InputError("sequence longer than max_positions");
    const bool drop = dropout != nullptr && cfg_.dropout_rate > 0;
    const int d = cfg_.d, heads = cfg_.num_heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      x.row(i) = ps[tok_emb_].row(ids[static_cast<std::size_t>(i)]) + ps[pos_emb_].row(i);
    }
    if (cache) {
      cache->ids.assign(ids.begin(), ids.end());
      cache->layers.assign(layers_.size(), {});
      cache->drop_embed.resize(0, 0);
    }
    if (drop) {
      Mat m = detail::dropout_mask(n, d, cfg_.dropout_rate, *dropout);
      x.array() *= m.array();
      if (cache) cache->drop_embed = std::move(m);
    }

    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerIdx& li = layers_[l];
      LayerCache local;
      LayerCache& lc = cache ? cache->layers[l] : local;

      lc.a = detail::layer_norm(x, ps[li.ln1_g], ps[li.ln1_b], &lc.ln1);
      lc.q = (lc.a * ps[li.wq]).rowwise() + ps[li.bq].row(0);
      lc.k = (lc.a * ps[li.wk]).rowwise() + ps[li.bk].row(0);
      lc.v = (lc.a * ps[li.wv]).rowwise() + ps[li.bv].row(0);
      lc.ctx.resize(n, d);
      lc.probs.resize(static_cast<std::size_t>(heads));
      for (int h = 0; h < heads; ++h) {
        Mat s = lc.q.middleCols(h * dh, dh) * lc.k.middleCols(h * dh, dh).transpose() * scale;
        detail::softmax_rows(s);
        lc.ctx.middleCols(h * dh, dh) = s * lc.v.middleCols(h * dh, dh);
        lc.probs[static_cast<std::size_t>(h)] = std::move(s);
      }
      Mat attn = (lc.ctx * ps[li.wo]).rowwise() + ps[li.bo].row(0);
      if (drop) {
        lc.drop_attn = detail::dropout_mask(n, d, cfg_.dropout_rate, *dropout);
        attn.array() *= lc.drop_attn.array();
      }
      lc.x_mid = x + attn;

      lc.f = detail::layer_norm(lc.x_mid, ps[li.ln2_g], ps[li.ln2_b], &lc.ln2);
      lc.u = (lc.f * ps[li.w1]).rowwise() + ps[li.b1].row(0);
      lc.g = lc.u.unaryExpr([](double v) { return detail::gelu(v); });
      Mat y = (lc.g * ps[li.w2]).rowwise() + ps[li.b2].row(0);
      if (drop) {
        lc.drop_ffn = detail::dropout_mask(n, d, cfg_.dropout_rate, *dropout);
        y.array() *= lc.drop_ffn.array();
      }
      x = lc.x_mid + y;
    }
    return detail::layer_norm(x, ps[lnf_g_], ps[lnf_b_], cache ? &cache->ln_final : nullptr);
  }

  // Accumulates parameter gradients for upstream gradient d_h into `grads`.
  void backward(const ParamStore& ps, const Cache& cache, const TokenMatrix& d_h,
                Gradients& grads) const {
    const int d = cfg_.d, heads = cfg_.num_heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat dx = detail::layer_norm_backward(d_h, cache.ln_final, ps[lnf_g_], grads[lnf_g_], grads[lnf_b_]);

    for (std::size_t l = layers_.size(); l-- > 0;) {
      const LayerIdx& li = layers_[l];
      const LayerCache& lc = cache.layers[l];

      // x_out = x_mid + dropout(gelu(f W1 + b1) W2 + b2)
      Mat dy = dx;
      if (lc.drop_ffn.size()) dy.array() *= lc.drop_ffn.array();
      grads[li.w2].noalias() += lc.g.transpose() * dy;
      grads[li.b2].row(0) += dy.colwise().sum();
      Mat du = (dy * ps[li.w2].transpose()).array() *
               lc.u.unaryExpr([](double v) { return detail::gelu_grad(v); }).array();
      grads[li.w1].noalias() += lc.f.transpose() * du;
      grads[li.b1].row(0) += du.colwise().sum();
      Mat df = du * ps[li.w1].transpose();
      Mat dx_mid = dx + detail::layer_norm_backward(df, lc.ln2, ps[li.ln2_g], grads[li.ln2_g], grads[li.ln2_b]);

      // x_mid = x_in + dropout(attention(ln1(x_in)))
      Mat dattn = dx_mid;
      if (lc.drop_attn.size()) dattn.array() *= lc.drop_attn.array();
      grads[li.wo].noalias() += lc.ctx.transpose() * dattn;
      grads[li.bo].row(0) += dattn.colwise().sum();
      Mat dctx = dattn * ps[li.wo].transpose();
      Mat dq(lc.q.rows(), d), dk(lc.k.rows(), d), dv(lc.v.rows(), d);
      for (int h = 0; h < heads; ++h) {
        const Mat& p = lc.probs[static_cast<std::size_t>(h)];
        const auto dctx_h = dctx.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh) = p.transpose() * dctx_h;
        Mat dp = dctx_h * lc.v.middleCols(h * dh, dh).transpose();
        Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
        Mat ds = (p.array() * (dp.colwise() - row_dot).array()) * scale;
        dq.middleCols(h * dh, dh) = ds * lc.k.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh) = ds.transpose() * lc.q.middleCols(h * dh, dh);
      }
      grads[li.wq].noalias() += lc.a.transpose() * dq;
      grads[li.wk].noalias() += lc.a.transpose() * dk;
      grads[li.wv].noalias() += lc.a.transpose() * dv;
      grads[li.bq].row(0) += dq.colwise().sum();
      grads[li.bk].row(0) += dk.colwise().sum();
      grads[li.bv].row(0) += dv.colwise().sum();
      Mat da = dq * ps[li.wq].transpose() + dk * ps[li.wk].transpose() + dv * ps[li.wv].transpose();
      dx = dx_mid + detail::layer_norm_backward(da, lc.ln1, ps[li.ln1_g], grads[li.ln1_g], grads[li.ln1_b]);
    }

    if (cache.drop_embed.size()) dx.array() *= cache.drop_embed.array();
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
      grads[tok_emb_].row(cache.ids[static_cast<std::size_t>(i)]) += dx.row(i);
      grads[pos_emb_].row(i) += dx.row(i);
    }
  }

 private:
  struct LayerIdx {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  EncoderConfig cfg_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0;
  std::vector<LayerIdx> layers_;
};

// Binds a transformer, its parameters and a vocabulary into a TokenEncoder
// running in evaluation mode.
class BoundEncoder {
 public:
  BoundEncoder(const TransformerEncoder& enc, const ParamStore& ps, const Vocabulary& vocab)
      : enc_(&enc), ps_(&ps), vocab_(&vocab) {}

  TokenMatrix encode(const std::vector<std::string>& tokens) const {
    if (tokens.empty()) throw InputError("cannot encode an empty token sequence");
    const auto ids = vocab_->encode(tokens, static_cast<std::size_t>(enc_->config().max_positions));
    return enc_->forward(*ps_, ids);
  }

 private:
  const TransformerEncoder* enc_;
  const ParamStore* ps_;
  const Vocabulary* vocab_;
};

// Deterministic stand-in encoder: each row is a fixed function of
// (token, position), seeded by a hash of both. Useful for exercising pooling
// and template code without a trained model.
class MockEncoder {
 public:
  explicit MockEncoder(int d, int max_positions = 128, std::uint64_t seed = 0)
      : d_(d), max_positions_(max_positions), seed_(seed) {}

  TokenMatrix encode(const std::vector<std::string>& tokens) const {
    if (tokens.empty()) throw InputError("cannot encode an empty token sequence");
    const auto n = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(max_positions_));
    TokenMatrix h(static_cast<Eigen::Index>(n), d_);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(mix_seed(seed_, {fnv1a(tokens[i]), i}));
      for (int j = 0; j < d_; ++j) h(static_cast<Eigen::Index>(i), j) = rng.normal();
    }
    return h;
  }

 private:
  int d_;
  int max_positions_;
  std::uint64_t seed_;
};

}  // namespace sner
