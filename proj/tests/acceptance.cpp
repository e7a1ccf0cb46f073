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

// Acceptance checks, one PASS/FAIL line per criterion.
//
//   sner_acceptance [--only 1,4,...] [--known-failure N]...
//
// A criterion named by --known-failure still prints FAIL but does not make
// the exit status nonzero.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "sner/synthetic.hpp"
#include "sner/trainer.hpp"
#include "test_util.hpp"

namespace sner {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SyntheticCorpus shipped_corpus() {
  const auto spec = synthetic_spec_from_json(detail::read_json_file(std::string(SNER_SOURCE_DIR) + "/data/synthetic_ooe.json"));
  return generate_synthetic_ooe_corpus(spec, 1);
}

// 1. Every gradient of L1 + 0.1 L2 against central differences.
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const Dataset d = testing::conll("Milan B-LOC\nis O\nnear O\nAcme B-ORG\nsaid O\nAnn B-PER\n");
  TemplateSet set = default_template_set();
  set.templates.resize(2);
  ModelConfig cfg;
  cfg.encoder.d = 16;
  cfg.encoder.num_layers = 2;
  cfg.encoder.num_heads = 2;
  cfg.encoder.feedforward_width = 32;
  cfg.encoder.max_positions = 16;
  cfg.head.max_span_length = 2;
  cfg.max_tokens = 16;
  SnerModel model(cfg, build_vocabulary(d, &set), LabelSpace({"LOC", "ORG", "PER"}), 11);
  Rng rng(12);
  for (auto& p : model.params().params()) p.value += gaussian(p.value.rows(), p.value.cols(), 0.3, rng);
  const ContrastSettings contrast{&set, 0.1, 1.0, false};
  Gradients grads = model.params().zero_gradients();
  const auto lt = model.sentence_loss(d.sentences[0], contrast, &grads);
  auto loss = [&] { return model.sentence_loss(d.sentences[0], contrast, nullptr).total; };
  // Gradients below 1e-6 in magnitude are compared absolutely: attention key
  // biases have an exactly zero gradient.
  const auto r = testing::finite_difference_check(model.params(), grads, loss, 1e-5, 1e-6);
  const double secs = seconds_since(t0);
  return {r.max_rel_error < 1e-4 && secs < 60 && lt.contrasted == 3,
          fmt("max rel err %.2e over %zu scalars (< 1e-4), %.1f s (< 60 s)", r.max_rel_error, r.checked, secs)};
}

// 2. Both losses against straight-loop oracles.
Outcome loss_oracles() {
  Rng rng(21);
  const LabelSpace labels({"LOC", "ORG", "PER"});
  double worst_l1 = 0, worst_l2 = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RowVec> scores;
    std::vector<LabeledSpan> golds;
    double expect = 0;
    const int m = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < m; ++i) {
      scores.push_back(gaussian(1, 4, 3.0, rng));
      const auto y = rng.below(4);
      golds.push_back({{1, 1}, labels.name(y)});
      expect += testing::ce_oracle(testing::to_std(scores.back()), y);
    }
    worst_l1 = std::max(worst_l1, std::abs(span_loss(scores, golds, labels).loss - expect));

    const int dim = 2 + static_cast<int>(rng.below(10));
    const RowVec c = gaussian(1, dim, 1.0, rng), p = gaussian(1, dim, 1.0, rng);
    std::vector<RowVec> negs;
    std::vector<std::vector<double>> onegs;
    for (std::size_t j = 0, n = 1 + rng.below(4); j < n; ++j) {
      negs.push_back(gaussian(1, dim, 1.0, rng));
      onegs.push_back(testing::to_std(negs.back()));
    }
    const double tau = 0.05 + 2 * rng.uniform();
    worst_l2 = std::max(worst_l2, std::abs(contrastive_loss(c, p, negs, tau).loss -
                                           testing::infonce_oracle(testing::to_std(c), testing::to_std(p), onegs, tau)));
  }
  RowVec e1 = RowVec::Zero(2), e2 = RowVec::Zero(2);
  e1(0) = 1;
  e2(1) = 1;
  const double hand = contrastive_loss(e1, e1, {e2}, 1.0).loss;
  const double hand_err = std::abs(hand - (-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))));
  return {worst_l1 <= 1e-12 && worst_l2 <= 1e-12 && hand_err <= 1e-12 && std::abs(hand - 0.3133) < 5e-5,
          fmt("L1 max err %.1e, L2 max err %.1e (<= 1e-12), hand value %.4f", worst_l1, worst_l2, hand)};
}

// 3. lambda = 0 with templates against a run that never sees templates.
Outcome lambda_isolation() {
  const auto c = shipped_corpus();
  const auto set = default_template_set();
  TrainConfig cfg = TrainConfig::desk();
  cfg.lambda_weight = 0.0;
  const Vocabulary vocab = build_vocabulary(c.train, &set);
  std::vector<ParamStore> with, without;
  const std::uint64_t before = template_encode_counter().load();
  train(c.train, Dataset{}, &set, cfg,
        {&vocab, [&](int, const SnerModel& m, const LossTerms&) { with.push_back(m.params()); }, {}, 50});
  const std::uint64_t encoded = template_encode_counter().load() - before;
  train(c.train, Dataset{}, nullptr, cfg,
        {&vocab, [&](int, const SnerModel& m, const LossTerms&) { without.push_back(m.params()); }, {}, 50});
  std::size_t identical = 0;
  for (std::size_t i = 0; i < std::min(with.size(), without.size()); ++i) identical += with[i].bitwise_equal(without[i]);
  return {with.size() == 50 && without.size() == 50 && identical == 50 && encoded > 0,
          fmt("%zu/50 steps bit-identical; %llu template encodings ran in the lambda=0 run", identical,
              static_cast<unsigned long long>(encoded))};
}

// 4. Greedy decoding against the unique conflict-free fixed point found by
// exhaustive search over candidate subsets.
Outcome decode_equivalence() {
  const LabelSpace labels({"LOC", "PER"});
  Rng rng(41);
  int mismatches = 0, overlaps = 0, non_unique = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    auto all = enumerate_spans(n, 4);
    rng.shuffle(all);
    all.resize(std::min<std::size_t>(all.size(), 1 + rng.below(12)));
    std::vector<SpanScores> table;
    for (const auto& sp : all) table.push_back({sp, gaussian(1, 3, 2.0, rng)});
    // Rank the entity candidates: higher probability first, then earlier
    // start, then shorter.
    struct Cand {
      SpanIndex span;
      std::size_t label;
      double p;
    };
    std::vector<Cand> cands;
    for (const auto& t : table) {
      double z = 0;
      std::size_t best = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        z += std::exp(t.scores(static_cast<Eigen::Index>(k)));
        if (t.scores(static_cast<Eigen::Index>(k)) > t.scores(static_cast<Eigen::Index>(best))) best = k;
      }
      if (best != 2) cands.push_back({t.span, best, std::exp(t.scores(static_cast<Eigen::Index>(best))) / z});
    }
    auto beats = [](const Cand& a, const Cand& b) {
      if (a.p != b.p) return a.p > b.p;
      if (a.span.b != b.span.b) return a.span.b < b.span.b;
      return a.span.e < b.span.e;
    };
    auto clash = [](const SpanIndex& a, const SpanIndex& b) { return a.b <= b.e && b.b <= a.e; };
    std::vector<std::vector<SpanIndex>> fixed_points;
    for (std::uint32_t mask = 0; mask < (1u << cands.size()); ++mask) {
      bool ok = true;
      for (std::size_t i = 0; i < cands.size() && ok; ++i) {
        const bool in = mask >> i & 1;
        for (std::size_t j = 0; j < cands.size() && ok; ++j) {
          if (i == j || !(mask >> j & 1)) continue;
          if (in && clash(cands[i].span, cands[j].span)) ok = false;
        }
        if (!in) {
          // Excluded only if blocked by a kept, higher-ranked candidate.
          bool blocked = false;
          for (std::size_t j = 0; j < cands.size(); ++j) {
            if ((mask >> j & 1) && clash(cands[i].span, cands[j].span) && beats(cands[j], cands[i])) blocked = true;
          }
          ok = blocked;
        }
      }
      if (ok) {
        std::vector<SpanIndex> s;
        for (std::size_t i = 0; i < cands.size(); ++i) {
          if (mask >> i & 1) s.push_back(cands[i].span);
        }
        std::sort(s.begin(), s.end());
        fixed_points.push_back(s);
      }
    }
    const auto pred = decode("s", table, labels);
    std::vector<SpanIndex> got;
    for (const auto& s : pred.spans) got.push_back(s.span);
    for (std::size_t i = 0; i < got.size(); ++i) {
      for (std::size_t j = i + 1; j < got.size(); ++j) overlaps += clash(got[i], got[j]);
    }
    if (fixed_points.size() != 1) ++non_unique;
    if (fixed_points.empty() || fixed_points[0] != got) ++mismatches;
  }
  return {mismatches == 0 && overlaps == 0 && non_unique == 0,
          fmt("1000 tables (<= 12 candidates): %d mismatches, %d overlapping outputs, %d non-unique fixed points",
              mismatches, overlaps, non_unique)};
}

// 5. Enumeration counts, the micro-F1 worked example and both OOE rates.
Outcome enumeration_and_metrics() {
  bool counts = true;
  for (int n = 0; n <= 10; ++n) {
    for (int m = 1; m <= 4; ++m) {
      // sum over start positions of min(m, n - i + 1)
      std::size_t closed = 0;
      for (int i = 1; i <= n; ++i) closed += static_cast<std::size_t>(std::min(m, n - i + 1));
      counts &= enumerate_spans(n, m).size() == closed;
    }
  }
  const Dataset gold = testing::conll("Milan B-LOC\nis O\nnice O\n");
  Prediction p{"s1", {{{1, 1}, "LOC", 0.9}, {{3, 3}, "PER", 0.6}}};
  const auto f = micro_f1({p}, gold);
  const bool prf = f.precision() == 0.5 && f.recall() == 1.0 && std::abs(f.micro_f1() - 2.0 / 3.0) < 1e-12;
  const double hand = compute_ooe_rate(testing::conll("Paris B-LOC\nis O\nnice O\n"),
                                       testing::conll("Paris B-LOC\nis O\nbig O\n\nNew B-LOC\nYork I-LOC\nis O\nbig O\n"))
                          .ooe_rate;
  const auto c = shipped_corpus();
  const double syn = compute_ooe_rate(c.train, c.test).ooe_rate;
  return {counts && prf && hand == 0.5 && syn == 1.0,
          fmt("counts %s for n <= 10; P=%.3f R=%.3f F1=%.4f; OOE hand %.3f, synthetic %.3f", counts ? "match" : "differ",
              f.precision(), f.recall(), f.micro_f1(), hand, syn)};
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string join_f1(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += fmt("%s%.3f", s.empty() ? "" : " ", x);
  return s;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

std::vector<double> seed_f1s(const Dataset& train_set, const Dataset& dev, const Dataset& test, const TemplateSet* t,
                             TrainConfig cfg) {
  std::vector<double> out;
  for (auto seed : kSeeds) {
    cfg.seed = seed;
    const auto ck = train(train_set, dev, t, cfg);
    out.push_back(micro_f1(predict(ck, test.sentences), test).micro_f1());
  }
  return out;
}

// 6. Ablation ordering on the all-OOE corpus.
Outcome ablation_trend() {
  const auto t0 = Clock::now();
  const auto c = shipped_corpus();
  const auto set = default_template_set();
  TrainConfig backbone = TrainConfig::desk();
  backbone.use_context = false;
  TrainConfig context = TrainConfig::desk();
  const auto fb = seed_f1s(c.train, c.dev, c.test, nullptr, backbone);
  const auto fc = seed_f1s(c.train, c.dev, c.test, nullptr, context);
  const auto ff = seed_f1s(c.train, c.dev, c.test, &set, context);
  const double b = mean(fb), x = mean(fc), f = mean(ff);
  const double secs = seconds_since(t0);
  std::cout << "    backbone  " << join_f1(fb) << "\n    +context  " << join_f1(fc) << "\n    full      "
            << join_f1(ff) << '\n';
  const std::size_t types = c.train.label_set.size();
  return {b <= x && x <= f && f > b && f > x && c.train.sentences.size() >= 500 && c.test.sentences.size() >= 200 &&
              types >= 3 && secs <= 1800,
          fmt("mean test F1 backbone %.4f, +context %.4f, full %.4f (need b <= c <= f, f strictly greatest); "
              "%zu/%zu sentences, %zu types, %.0f s (<= 1800 s)",
              b, x, f, c.train.sentences.size(), c.test.sentences.size(), types, secs)};
}

// 7. Repartition to three OOE rates, then the F1 trend across them.
Outcome repartition_trend() {
  const auto c = shipped_corpus();
  const Dataset merged = merge_datasets({&c.train, &c.test, &c.dev});
  const auto set = default_template_set();
  bool ok = true;
  std::string detail;
  std::vector<double> f1_means;
  for (double target : {0.2, 0.5, 0.8}) {
    PartitionSpec spec;
    spec.target_ooe_rate = target;
    spec.split_fraction = 0.3;
    spec.seed = 7;
    const auto t0 = Clock::now();
    const auto r = repartition(merged, spec);
    const double secs = seconds_since(t0);
    const auto again = repartition(merged, spec);
    const double rate = compute_ooe_rate(r.train, r.test).ooe_rate;
    const double want = 0.3 * static_cast<double>(merged.sentences.size());
    const bool size_ok = std::abs(static_cast<double>(r.test.sentences.size()) - want) <= 0.05 * want;
    const bool this_ok = r.converged && std::abs(rate - target) <= 0.02 && size_ok && again.test == r.test &&
                         again.train == r.train && secs <= 120;
    ok &= this_ok;
    // No dev split here, so each run keeps its final epoch.
    const auto f1s = seed_f1s(r.train, Dataset{}, r.test, &set, TrainConfig::desk());
    f1_means.push_back(mean(f1s));
    std::cout << fmt("    target %.1f: realized %.4f, test %zu sentences, %.1f s, F1 %s\n", target, rate,
                     r.test.sentences.size(), secs, join_f1(f1s).c_str());
    detail += fmt("%s%.1f->%.3f%s", detail.empty() ? "" : ", ", target, rate, this_ok ? "" : " (bad)");
  }
  const bool shape = f1_means[0] >= f1_means[1] && f1_means[1] >= f1_means[2];
  return {ok && shape, fmt("rates %s; mean F1 %.4f >= %.4f >= %.4f %s", detail.c_str(), f1_means[0], f1_means[1],
                           f1_means[2], shape ? "holds" : "violated")};
}

// 8. Pinned hyperparameters in the serialized defaults.
Outcome hyperparameter_fidelity() {
  const nlohmann::json d = TrainConfig{};
  const nlohmann::json f = TrainConfig::full_scale();
  const bool ok = d.at("lambda_weight") == 0.1 && d.at("temperature") == 1.0 && d.at("dropout_rate") == 0.2 &&
                  d.at("max_span_length") == 4 && d.at("max_tokens") == 128 && d.at("classifier_lr") == 5e-5 &&
                  d.at("encoder_lr") == 1e-5 && f.at("length_dim") == 50 && f.at("lambda_weight") == 0.1 &&
                  f.at("temperature") == 1.0 && train_config_from_json(d) == TrainConfig{};
  return {ok, fmt("defaults lambda=%g tau=%g dropout=%g max_span=%d max_tokens=%d lr=%g/%g, full-scale d'=%d",
                  d.at("lambda_weight").get<double>(), d.at("temperature").get<double>(),
                  d.at("dropout_rate").get<double>(), d.at("max_span_length").get<int>(),
                  d.at("max_tokens").get<int>(), d.at("classifier_lr").get<double>(),
                  d.at("encoder_lr").get<double>(), f.at("length_dim").get<int>())};
}

int run(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only, known;
  app.add_option("--only", only, "Run just these criteria")->delimiter(',');
  app.add_option("--known-failure", known, "Criteria whose failure does not fail the run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient correctness", gradient_correctness},
      {"loss oracles", loss_oracles},
      {"lambda isolation", lambda_isolation},
      {"decode equivalence", decode_equivalence},
      {"enumeration and metric oracles", enumeration_and_metrics},
      {"ablation trend on all-OOE corpus", ablation_trend},
      {"repartition convergence and F1 trend", repartition_trend},
      {"hyperparameter fidelity", hyperparameter_fidelity},
  };
  const std::set<int> chosen(only.begin(), only.end()), tolerated(known.begin(), known.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.contains(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool excused = !o.pass && tolerated.contains(id);
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail
              << fmt(" [%.1f s]", seconds_since(t0)) << (excused ? "  (known failure)" : "") << std::endl;
    if (!o.pass && !excused) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace sner

int main(int argc, char** argv) { return sner::run(argc, argv); }
