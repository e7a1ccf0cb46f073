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

// sner: command-line front end.
//
//   sner analyze        --train FILE --test FILE [--out DIR]
//   sner partition      --corpus FILE... --ooe-rate R --split F --seed S --out DIR
//   sner generate       --spec FILE --seed S --out DIR
//   sner train          --train FILE --dev FILE --out DIR [--config FILE] [--seeds 1,2,3]
//   sner eval           --model DIR --test FILE [--bins --train FILE] [--out DIR]
//   sner fill-templates --span TEXT --type LABEL|NONE [--templates FILE]
//
// Exit status: 0 ok, 1 training failure, 2 input error, 3 partition not
// converged, 4 artifact mismatch.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "sner/synthetic.hpp"
#include "sner/trainer.hpp"

#ifndef SNER_VERSION
#define SNER_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace sner {
namespace {

// Wall-clock UTC time, or SOURCE_DATE_EPOCH when set so that reruns can
// reproduce manifests byte for byte.
std::string timestamp() {
  std::time_t t;
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv) {
    j_["command"] = std::move(command);
    j_["argv"] = argv;
    j_["version"] = SNER_VERSION;
    j_["started_at"] = timestamp();
    j_["outputs"] = json::array();
  }
  json& operator[](const char* key) { return j_[key]; }
  void output(const fs::path& p) { j_["outputs"].push_back(p.generic_string()); }
  void write(const fs::path& path) {
    j_["finished_at"] = timestamp();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << j_.dump(2) << '\n';
  }

 private:
  json j_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir + ": " + ec.message());
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw InputError("bad seed '" + item + "' in --seeds");
    }
  }
  if (out.empty()) throw InputError("--seeds is empty");
  return out;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string train, test, out;
  bool entity_tokens_only = false;
};

int run_analyze(const AnalyzeArgs& a, const std::vector<std::string>& argv) {
  Manifest m("analyze", argv);
  const OoeOptions opts{a.entity_tokens_only};
  const auto report = compute_ooe_rate(parse_conll_file(a.train), parse_conll_file(a.test), opts);
  const json j = report;
  std::cout << j.dump(2) << '\n';
  if (!a.out.empty()) {
    make_dir(a.out);
    const fs::path p = fs::path(a.out) / "ooe_report.json";
    write_text(p, j.dump(2) + "\n");
    m["config"] = {{"train", a.train}, {"test", a.test}, {"entity_tokens_only", a.entity_tokens_only}};
    m.output(p);
    m.write(fs::path(a.out) / "manifest.json");
  }
  return kExitOk;
}

// -------------------------------------------------------------- partition

struct PartitionArgs {
  std::vector<std::string> corpus;
  std::string out;
  PartitionSpec spec;
};

int run_partition(const PartitionArgs& a, const std::vector<std::string>& argv) {
  Manifest m("partition", argv);
  std::vector<Dataset> parts;
  for (const auto& f : a.corpus) parts.push_back(parse_conll_file(f));
  std::vector<const Dataset*> ptrs;
  for (const auto& d : parts) ptrs.push_back(&d);
  const Dataset merged = merge_datasets(ptrs);
  const auto r = repartition(merged, a.spec);
  make_dir(a.out);
  const fs::path tr = fs::path(a.out) / "train.conll", te = fs::path(a.out) / "test.conll";
  write_conll_file(tr.string(), r.train);
  write_conll_file(te.string(), r.test);
  m["config"] = {{"corpus", a.corpus},
                 {"target_ooe_rate", a.spec.target_ooe_rate},
                 {"rate_tolerance", a.spec.rate_tolerance},
                 {"split_fraction", a.spec.split_fraction},
                 {"size_tolerance", a.spec.size_tolerance},
                 {"max_iterations", a.spec.max_iterations},
                 {"entity_tokens_only", a.spec.ooe.entity_tokens_only}};
  m["seeds"] = {a.spec.seed};
  m["converged"] = r.converged;
  m["iterations"] = r.iterations;
  m["report"] = r.report;
  m["sizes"] = {{"train", r.train.sentences.size()}, {"test", r.test.sentences.size()}};
  m.output(tr);
  m.output(te);
  m.write(fs::path(a.out) / "manifest.json");
  std::cout << "realized ooe_rate " << r.report.ooe_rate << (r.converged ? " (converged)" : " (best effort)")
            << " after " << r.iterations << " iterations\n";
  if (!r.converged) {
    std::cerr << "partition did not reach the target within tolerance\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

// --------------------------------------------------------------- generate

struct GenerateArgs {
  std::string spec, out;
  std::uint64_t seed = 1;
};

int run_generate(const GenerateArgs& a, const std::vector<std::string>& argv) {
  Manifest m("generate", argv);
  const auto spec = synthetic_spec_from_json(detail::read_json_file(a.spec));
  const auto c = generate_synthetic_ooe_corpus(spec, a.seed);
  make_dir(a.out);
  const fs::path dir(a.out);
  write_conll_file((dir / "train.conll").string(), c.train);
  write_conll_file((dir / "test.conll").string(), c.test);
  m.output(dir / "train.conll");
  m.output(dir / "test.conll");
  if (!c.dev.sentences.empty()) {
    write_conll_file((dir / "dev.conll").string(), c.dev);
    m.output(dir / "dev.conll");
  }
  m["config"] = {{"spec", a.spec}};
  m["seeds"] = {a.seed};
  m["corpus"] = c.manifest;
  m.write(dir / "manifest.json");
  std::cout << c.manifest.dump(2) << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config, train, dev, templates, out, seeds = "1", profile = "default";
  bool no_templates = false, no_context = false, parallel_seeds = false, contrast_o_spans = false;
  std::optional<double> lambda, temperature, classifier_lr, encoder_lr, dropout, unk_replace;
  std::optional<int> epochs, batch_size, max_span_length, max_tokens;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig base;
  if (a.profile == "desk") {
    base = TrainConfig::desk();
  } else if (a.profile == "full") {
    base = TrainConfig::full_scale();
  } else if (a.profile != "default") {
    throw InputError("unknown profile '" + a.profile + "'");
  }
  if (!a.config.empty()) base = train_config_from_json(detail::read_json_file(a.config), base);
  if (a.lambda) base.lambda_weight = *a.lambda;
  if (a.temperature) base.temperature = *a.temperature;
  if (a.classifier_lr) base.classifier_lr = *a.classifier_lr;
  if (a.encoder_lr) base.encoder_lr = *a.encoder_lr;
  if (a.dropout) base.dropout_rate = *a.dropout;
  if (a.unk_replace) base.unk_replace_probability = *a.unk_replace;
  if (a.epochs) base.epochs = *a.epochs;
  if (a.batch_size) base.batch_size = *a.batch_size;
  if (a.max_span_length) base.max_span_length = *a.max_span_length;
  if (a.max_tokens) base.max_tokens = *a.max_tokens;
  if (a.no_context) base.use_context = false;
  if (a.contrast_o_spans) base.contrast_o_spans = true;
  base.validate();
  return base;
}

int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  const TrainConfig cfg = resolve_config(a);
  const auto seeds = parse_seeds(a.seeds);
  const Dataset train_set = parse_conll_file(a.train);
  const Dataset dev = a.dev.empty() ? Dataset{} : parse_conll_file(a.dev);
  std::optional<TemplateSet> templates;
  if (!a.no_templates) templates = a.templates.empty() ? default_template_set() : load_template_set(a.templates);
  make_dir(a.out);

  std::vector<double> dev_f1(seeds.size());
  std::vector<int> best_epoch(seeds.size());
  std::mutex log_mu;
  auto one = [&](std::size_t i) {
    TrainConfig c = cfg;
    c.seed = seeds[i];
    const fs::path dir = fs::path(a.out) / ("seed-" + std::to_string(seeds[i]));
    Manifest m("train", argv);
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
      std::lock_guard<std::mutex> lock(log_mu);
      std::cerr << "seed " << seeds[i] << " epoch " << r.epoch << " loss " << r.train_loss << " dev_f1 "
                << r.dev_f1 << '\n';
    };
    const Checkpoint ck = train(train_set, dev, templates ? &*templates : nullptr, c, hooks);
    save_checkpoint(ck, dir);
    dev_f1[i] = ck.best_dev_f1;
    best_epoch[i] = ck.epoch;
    m["config"] = c;
    m["inputs"] = {{"train", a.train}, {"dev", a.dev}, {"templates", templates ? (a.templates.empty() ? "builtin" : a.templates) : "none"}};
    m["seeds"] = {seeds[i]};
    m["best_epoch"] = ck.epoch;
    m["best_dev_f1"] = ck.best_dev_f1;
    for (const char* f : {"params.bin", "config.json", "vocab.json", "metrics_history.jsonl"}) m.output(dir / f);
    m.write(dir / "manifest.json");
  };

  if (a.parallel_seeds && seeds.size() > 1) {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      pool.emplace_back([&, i] {
        try {
          one(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (std::size_t i = 0; i < seeds.size(); ++i) one(i);
  }

  json per_seed = json::array();
  double mean = 0.0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    per_seed.push_back({{"seed", seeds[i]}, {"best_dev_f1", dev_f1[i]}, {"best_epoch", best_epoch[i]}});
    mean += dev_f1[i];
  }
  mean /= static_cast<double>(seeds.size());
  const json summary = {{"per_seed", per_seed}, {"mean_dev_f1", mean}, {"config", cfg}};
  write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  std::string model, test, train, out, predictions;
  bool bins = false, entity_tokens_only = false, exclude_unmatched = false;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  if (a.bins && a.train.empty()) throw InputError("--bins needs --train to decide which entities are OOE");
  Manifest m("eval", argv);
  const Checkpoint ck = load_checkpoint(a.model);
  const Dataset test = parse_conll_file(a.test);
  const auto preds = predict(ck, test.sentences);
  MetricsReport report;
  if (a.bins) {
    const auto bins = bin_entities_by_ooe(parse_conll_file(a.train), test, {a.entity_tokens_only});
    report = binned_f1(preds, test, bins,
                       a.exclude_unmatched ? BinAttribution::kExclude : BinAttribution::kNearestOverlap);
  } else {
    report = micro_f1(preds, test);
  }
  const json j = report;
  std::cout << j.dump(2) << '\n';
  if (!a.predictions.empty()) {
    std::ofstream out(a.predictions, std::ios::binary);
    if (!out) throw InputError("cannot write " + a.predictions);
    write_prediction_bio(out, preds, test);
  }
  if (!a.out.empty()) {
    make_dir(a.out);
    const fs::path p = fs::path(a.out) / "metrics.json";
    write_text(p, j.dump(2) + "\n");
    m["config"] = {{"model", a.model}, {"test", a.test}, {"train", a.train}, {"bins", a.bins},
                   {"entity_tokens_only", a.entity_tokens_only}, {"exclude_unmatched", a.exclude_unmatched}};
    m["seeds"] = {ck.config.seed};
    m.output(p);
    if (!a.predictions.empty()) m.output(a.predictions);
    m.write(fs::path(a.out) / "manifest.json");
  }
  return kExitOk;
}

// --------------------------------------------------------- fill-templates

struct FillArgs {
  std::string templates, span, type;
};

int run_fill(const FillArgs& a) {
  const TemplateSet set = a.templates.empty() ? default_template_set() : load_template_set(a.templates);
  const TypeTag tag = a.type == "NONE" ? TypeTag() : TypeTag(a.type);
  for (const auto& t : set.templates) std::cout << fill(t, a.span, tag, set.translation) << '\n';
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Span-based NER with out-of-entity analysis tools"};
  app.set_version_flag("--version", std::string(SNER_VERSION));
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Out-of-entity rate of a test set against a training set");
  analyze->add_option("--train", an.train, "Training CoNLL file")->required();
  analyze->add_option("--test", an.test, "Test CoNLL file")->required();
  analyze->add_option("--out", an.out, "Directory for ooe_report.json and manifest.json");
  analyze->add_flag("--entity-tokens-only", an.entity_tokens_only,
                    "Only tokens of training entities count as seen");

  PartitionArgs pa;
  auto* partition = app.add_subcommand("partition", "Re-split a corpus to a target out-of-entity rate");
  partition->add_option("--corpus", pa.corpus, "CoNLL files to merge")->required();
  partition->add_option("--ooe-rate", pa.spec.target_ooe_rate, "Target rate")->required();
  partition->add_option("--split", pa.spec.split_fraction, "Test fraction")->capture_default_str();
  partition->add_option("--seed", pa.spec.seed, "Random seed")->capture_default_str();
  partition->add_option("--tolerance", pa.spec.rate_tolerance, "Rate tolerance")->capture_default_str();
  partition->add_option("--size-tolerance", pa.spec.size_tolerance, "Relative test size tolerance")
      ->capture_default_str();
  partition->add_option("--max-iterations", pa.spec.max_iterations, "Hill-climbing budget")->capture_default_str();
  partition->add_flag("--entity-tokens-only", pa.spec.ooe.entity_tokens_only,
                      "Only tokens of training entities count as seen");
  partition->add_option("--out", pa.out, "Output directory")->required();

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Write a synthetic all-OOE corpus");
  generate->add_option("--spec", ga.spec, "Synthetic corpus spec (JSON)")->required();
  generate->add_option("--seed", ga.seed, "Random seed")->capture_default_str();
  generate->add_option("--out", ga.out, "Output directory")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train one model per seed");
  trn->add_option("--train", ta.train, "Training CoNLL file")->required();
  trn->add_option("--dev", ta.dev, "Dev CoNLL file used for model selection");
  trn->add_option("--config", ta.config, "Training config (JSON)");
  trn->add_option("--profile", ta.profile, "Base config: default, desk or full")->capture_default_str();
  trn->add_option("--templates", ta.templates, "Template set (JSON); the built-in set when omitted");
  trn->add_flag("--no-templates", ta.no_templates, "Drop the contrastive term");
  trn->add_flag("--no-context", ta.no_context, "Drop the sentence vector from span representations");
  trn->add_flag("--contrast-o-spans", ta.contrast_o_spans, "Also contrast O spans against NONE");
  trn->add_option("--out", ta.out, "Output directory")->required();
  trn->add_option("--seeds", ta.seeds, "Comma-separated seeds")->capture_default_str();
  trn->add_flag("--parallel-seeds", ta.parallel_seeds, "Train seeds concurrently");
  trn->add_option("--lambda", ta.lambda, "Contrastive loss weight");
  trn->add_option("--temperature", ta.temperature, "Contrastive temperature");
  trn->add_option("--classifier-lr", ta.classifier_lr, "Span head learning rate");
  trn->add_option("--encoder-lr", ta.encoder_lr, "Encoder learning rate");
  trn->add_option("--dropout", ta.dropout, "Span representation dropout");
  trn->add_option("--unk-replace", ta.unk_replace, "Probability of feeding a training token as UNK");
  trn->add_option("--epochs", ta.epochs, "Epochs");
  trn->add_option("--batch-size", ta.batch_size, "Sentences per step");
  trn->add_option("--max-span-length", ta.max_span_length, "Longest enumerated span");
  trn->add_option("--max-tokens", ta.max_tokens, "Sentence truncation length");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a test set");
  eval->add_option("--model", ea.model, "Checkpoint directory")->required();
  eval->add_option("--test", ea.test, "Test CoNLL file")->required();
  eval->add_flag("--bins", ea.bins, "Add OOE / in-vocabulary sections");
  eval->add_option("--train", ea.train, "Training CoNLL file, for --bins");
  eval->add_flag("--entity-tokens-only", ea.entity_tokens_only, "Only tokens of training entities count as seen");
  eval->add_flag("--exclude-unmatched", ea.exclude_unmatched, "Leave unmatched predictions out of the bins");
  eval->add_option("--predictions", ea.predictions, "Write token/gold/predicted columns here");
  eval->add_option("--out", ea.out, "Directory for metrics.json and manifest.json");

  FillArgs fa;
  auto* fillc = app.add_subcommand("fill-templates", "Print every template filled with a span and type");
  fillc->add_option("--templates", fa.templates, "Template set (JSON); the built-in set when omitted");
  fillc->add_option("--span", fa.span, "Span text")->required();
  fillc->add_option("--type", fa.type, "Entity label, or NONE")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*analyze) return run_analyze(an, args);
    if (*partition) return run_partition(pa, args);
    if (*generate) return run_generate(ga, args);
    if (*trn) return run_train(ta, args);
    if (*eval) return run_eval(ea, args);
    if (*fillc) return run_fill(fa);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ArtifactMismatch& e) {
    std::cerr << "artifact mismatch: " << e.what() << '\n';
    return kExitMismatch;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return 1;
  }
  return kExitInput;
}

}  // namespace
}  // namespace sner

int main(int argc, char** argv) { return sner::run(argc, argv); }
