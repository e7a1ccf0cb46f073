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

// Joint training under L = L1 + lambda * L2, best-on-dev checkpointing, and
// checkpoint directories.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sner/model.hpp"

namespace sner {

struct TrainConfig {
  double lambda_weight = 0.1;
  double temperature = 1.0;
  double classifier_lr = 5e-5;
  double encoder_lr = 1e-5;
  double dropout_rate = 0.2;
  int max_span_length = 4;
  int max_tokens = 128;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 1;

  int d = 64;
  int length_dim = 8;
  int num_layers = 2;
  int num_heads = 4;
  int feedforward_width = 128;
  int max_positions = 128;
  double encoder_dropout = 0.1;
  double unk_replace_probability = 0.0;

  double weight_decay = 0.01;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // Ablation switches: no sentence vector in the span representation
  // (backbone), and contrasting O spans as well as entity spans.
  bool use_context = true;
  bool contrast_o_spans = false;

  // Full-width profile: a BERT-large sized encoder.
  static TrainConfig full_scale() {
    TrainConfig c;
    c.d = 1024;
    c.length_dim = 50;
    c.num_layers = 24;
    c.num_heads = 16;
    c.feedforward_width = 4096;
    return c;
  }

  // Small from-scratch profile used by the desk-scale experiments. The head
  // and encoder rates are raised because nothing is pretrained. Tokens are
  // swapped for <unk> during training so the unknown embedding gets learned;
  // without it every unseen name maps to an untrained row.
  static TrainConfig desk() {
    TrainConfig c;
    c.d = 32;
    c.length_dim = 8;
    c.num_layers = 1;
    c.num_heads = 2;
    c.feedforward_width = 64;
    c.classifier_lr = 3e-3;
    c.encoder_lr = 1e-3;
    c.epochs = 12;
    c.batch_size = 8;
    c.unk_replace_probability = 0.3;
    return c;
  }

  void validate() const {
    if (!(lambda_weight >= 0)) throw InputError("lambda_weight must be >= 0");
    if (!(temperature > 0)) throw InputError("temperature must be > 0");
    if (!(classifier_lr > 0) || !(encoder_lr > 0)) throw InputError("learning rates must be > 0");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) throw InputError("dropout_rate must be in [0,1)");
    if (!(unk_replace_probability >= 0 && unk_replace_probability < 1))
      throw InputError("unk_replace_probability must be in [0,1)");
    if (max_span_length < 1 || max_tokens < 1 || epochs < 0 || batch_size < 1)
      throw InputError("max_span_length, max_tokens and batch_size must be positive");
    if (max_tokens > max_positions) throw InputError("max_tokens exceeds max_positions");
    if (!(weight_decay >= 0) || !(grad_clip > 0)) throw InputError("weight_decay >= 0 and grad_clip > 0 required");
    model_config().encoder.validate();
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.encoder.d = d;
    m.encoder.num_layers = num_layers;
    m.encoder.num_heads = num_heads;
    m.encoder.feedforward_width = feedforward_width;
    m.encoder.max_positions = max_positions;
    m.encoder.dropout_rate = encoder_dropout;
    m.head.max_span_length = max_span_length;
    m.head.length_dim = length_dim;
    m.head.use_context = use_context;
    m.head.dropout_rate = dropout_rate;
    m.max_tokens = max_tokens;
    m.unk_replace_probability = unk_replace_probability;
    return m;
  }

  bool operator==(const TrainConfig&) const = default;
};

#define SNER_TRAIN_CONFIG_FIELDS(X)                                                                   \
  X(lambda_weight) X(temperature) X(classifier_lr) X(encoder_lr) X(dropout_rate) X(max_span_length) \
  X(max_tokens) X(epochs) X(batch_size) X(seed) X(d) X(length_dim) X(num_layers) X(num_heads)        \
  X(feedforward_width) X(max_positions) X(encoder_dropout) X(unk_replace_probability)                \
  X(weight_decay) X(grad_clip) X(adam_beta1) X(adam_beta2) X(adam_epsilon) X(use_context)            \
  X(contrast_o_spans)

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json::object();
#define X(f) j[#f] = c.f;
  SNER_TRAIN_CONFIG_FIELDS(X)
#undef X
}

// Fields present in `j` override those of `base`; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw InputError("training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(f) \
  if (key == #f) known = true;
    SNER_TRAIN_CONFIG_FIELDS(X)
#undef X
    if (!known) throw InputError("unknown training config key '" + key + "'");
  }
  try {
#define X(f) \
  if (j.contains(#f)) base.f = j.at(#f).get<decltype(base.f)>();
    SNER_TRAIN_CONFIG_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad training config value: ") + e.what());
  }
  base.validate();
  return base;
}

inline double total_loss(double l1, double l2, double lambda) {
  if (!(lambda >= 0)) throw InputError("lambda must be >= 0");
  return l1 + lambda * l2;
}

// Decoupled weight decay Adam with one learning rate per parameter group and
// global-norm gradient clipping.
class AdamW {
 public:
  AdamW(const ParamStore& ps, const TrainConfig& cfg) : cfg_(cfg), m_(ps.zero_gradients()), v_(ps.zero_gradients()) {}

  // Returns the pre-clip global gradient norm.
  double step(ParamStore& ps, Gradients& grads) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) {
      const double s = cfg_.grad_clip / norm;
      for (auto& g : grads) g *= s;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& p = ps.params()[i];
      const double lr = p.group == ParamGroup::kEncoder ? cfg_.encoder_lr : cfg_.classifier_lr;
      m_[i] = cfg_.adam_beta1 * m_[i] + (1.0 - cfg_.adam_beta1) * grads[i];
      v_[i] = cfg_.adam_beta2 * v_[i] + (1.0 - cfg_.adam_beta2) * grads[i].cwiseProduct(grads[i]);
      p.value.array() -= lr * cfg_.weight_decay * p.value.array();
      p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.adam_epsilon);
    }
    return norm;
  }

 private:
  TrainConfig cfg_;
  Gradients m_, v_;
  int t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_l1 = 0.0;
  double train_l2 = 0.0;
  double dev_precision = 0.0;
  double dev_recall = 0.0;
  double dev_f1 = 0.0;
};

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},          {"train_loss", r.train_loss},       {"train_l1", r.train_l1},
       {"train_l2", r.train_l2},    {"dev_precision", r.dev_precision}, {"dev_recall", r.dev_recall},
       {"dev_f1", r.dev_f1}};
}

struct Checkpoint {
  SnerModel model;
  TrainConfig config;
  int epoch = 0;
  double best_dev_f1 = 0.0;
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  // Vocabulary to use instead of building one from train + templates.
  const Vocabulary* vocab = nullptr;
  // Called after every optimizer step with the step number (from 1).
  std::function<void(int, const SnerModel&, const LossTerms&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  // Stop after this many optimizer steps (negative: no limit).
  int max_steps = -1;
};

inline int eval_threads() {
  if (const char* env = std::getenv("SNER_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

// Evaluation-mode predictions; sentences are split across SNER_THREADS workers
// sharing the frozen model.
inline std::vector<Prediction> predict(const SnerModel& model, const std::vector<Sentence>& sentences) {
  std::vector<Prediction> out(sentences.size());
  const auto workers = static_cast<std::size_t>(std::min<int>(eval_threads(), std::max<int>(1, static_cast<int>(sentences.size()))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < sentences.size(); ++i) out[i] = model.predict(sentences[i]);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < sentences.size(); i += workers) out[i] = model.predict(sentences[i]);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

inline std::vector<Prediction> predict(const Checkpoint& ckpt, const std::vector<Sentence>& sentences) {
  return predict(ckpt.model, sentences);
}

// Trains on `train`, evaluating dev micro-F1 before the first epoch (epoch 0)
// and after every epoch; returns the parameters of the best dev epoch
// (earliest on ties). Without templates, or with use_context off, the
// contrastive term is absent.
inline Checkpoint train(const Dataset& train_set, const Dataset& dev, const TemplateSet* templates,
                        const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (train_set.sentences.empty()) throw InputError("training set is empty");
  std::vector<std::string> types = train_set.label_set;
  for (const auto& t : dev.label_set) {
    if (std::find(types.begin(), types.end(), t) == types.end()) {
      throw InputError("dev label '" + t + "' does not occur in the training set");
    }
  }
  if (templates) {
    templates->validate();
    templates->require_labels(types);
  }
  Vocabulary vocab = hooks.vocab ? *hooks.vocab : build_vocabulary(train_set, templates);

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.model = SnerModel(cfg.model_config(), std::move(vocab), LabelSpace(types), cfg.seed);
  SnerModel& model = ckpt.model;
  AdamW opt(model.params(), cfg);

  ContrastSettings contrast;
  contrast.templates = templates;
  contrast.lambda = cfg.lambda_weight;
  contrast.temperature = cfg.temperature;
  contrast.include_o_spans = cfg.contrast_o_spans;

  auto evaluate = [&](EpochRecord& rec) {
    const auto m = micro_f1(predict(model, dev.sentences), dev);
    rec.dev_precision = m.precision();
    rec.dev_recall = m.recall();
    rec.dev_f1 = m.micro_f1();
  };

  EpochRecord first;
  evaluate(first);
  ckpt.history.push_back(first);
  if (hooks.on_epoch) hooks.on_epoch(first);
  ParamStore best = model.params();
  ckpt.best_dev_f1 = first.dev_f1;
  ckpt.epoch = 0;

  std::vector<std::size_t> order(train_set.sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  int step = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, {3, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size() && !stop; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      Gradients grads = model.params().zero_gradients();
      LossTerms batch;
      ++step;
      for (std::size_t i = start; i < end; ++i) {
        const Sentence& s = train_set.sentences[order[i]];
        Rng drop(mix_seed(cfg.seed, {1, static_cast<std::uint64_t>(step), i - start}));
        Rng tdrop(mix_seed(cfg.seed, {2, static_cast<std::uint64_t>(step), i - start}));
        const LossTerms lt = model.sentence_loss(s, contrast, &grads, scale, &drop, &tdrop);
        if (!std::isfinite(lt.total)) {
          throw TrainingError("non-finite loss at step " + std::to_string(step) + ", sentence '" + s.id + "'");
        }
        batch.l1 += lt.l1 * scale;
        batch.l2 += lt.l2 * scale;
        batch.total += lt.total * scale;
      }
      opt.step(model.params(), grads);
      if (!model.params().all_finite()) {
        throw TrainingError("non-finite parameters after step " + std::to_string(step));
      }
      rec.train_loss += batch.total * static_cast<double>(end - start);
      rec.train_l1 += batch.l1 * static_cast<double>(end - start);
      rec.train_l2 += batch.l2 * static_cast<double>(end - start);
      seen += end - start;
      if (hooks.on_step) hooks.on_step(step, model, batch);
      if (hooks.max_steps >= 0 && step >= hooks.max_steps) stop = true;
    }
    if (seen) {
      rec.train_loss /= static_cast<double>(seen);
      rec.train_l1 /= static_cast<double>(seen);
      rec.train_l2 /= static_cast<double>(seen);
    }
    evaluate(rec);
    ckpt.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (rec.dev_f1 > ckpt.best_dev_f1 || dev.sentences.empty()) {
      ckpt.best_dev_f1 = rec.dev_f1;
      ckpt.epoch = epoch;
      best = model.params();
    }
  }
  model.params() = std::move(best);
  return ckpt;
}

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

}  // namespace detail

// Directory layout: params.bin, config.json, vocab.json, metrics_history.jsonl.
inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const SnerModel& m = ckpt.model;
  m.params().save((dir / "params.bin").string());
  nlohmann::json cfg;
  cfg["header"] = {{"d", ckpt.config.d},
                   {"layers", ckpt.config.num_layers},
                   {"heads", ckpt.config.num_heads},
                   {"vocab_hash", m.vocab().hash_hex()},
                   {"seed", ckpt.config.seed},
                   {"labels", m.labels().entity_types()},
                   {"epoch", ckpt.epoch},
                   {"best_dev_f1", ckpt.best_dev_f1}};
  cfg["train_config"] = ckpt.config;
  detail::write_json_file(dir / "config.json", cfg);
  detail::write_json_file(dir / "vocab.json", m.vocab().to_json());
  std::ofstream hist(dir / "metrics_history.jsonl", std::ios::binary);
  for (const auto& r : ckpt.history) hist << nlohmann::json(r).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto cfg = detail::read_json_file(dir / "config.json");
  Checkpoint ckpt;
  try {
    ckpt.config = train_config_from_json(cfg.at("train_config"));
    const auto& header = cfg.at("header");
    Vocabulary vocab = Vocabulary::from_json(detail::read_json_file(dir / "vocab.json"));
    if (vocab.hash_hex() != header.at("vocab_hash").get<std::string>()) {
      throw ArtifactMismatch("vocabulary hash " + vocab.hash_hex() + " does not match checkpoint header " +
                             header.at("vocab_hash").get<std::string>());
    }
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.best_dev_f1 = header.at("best_dev_f1").get<double>();
    ckpt.model = SnerModel(ckpt.config.model_config(), std::move(vocab),
                           LabelSpace(header.at("labels").get<std::vector<std::string>>()), ckpt.config.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactMismatch(dir.string() + ": malformed checkpoint config: " + e.what());
  }
  ckpt.model.params().load_values((dir / "params.bin").string());
  std::ifstream hist(dir / "metrics_history.jsonl");
  std::string line;
  while (std::getline(hist, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch");
    r.train_loss = j.at("train_loss");
    r.train_l1 = j.at("train_l1");
    r.train_l2 = j.at("train_l2");
    r.dev_precision = j.at("dev_precision");
    r.dev_recall = j.at("dev_recall");
    r.dev_f1 = j.at("dev_f1");
    ckpt.history.push_back(r);
  }
  return ckpt;
}

}  // namespace sner
