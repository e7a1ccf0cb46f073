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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int status = -1;
  std::string out;
};

Run sner(const std::string& args) {
  const std::string cmd = std::string("SOURCE_DATE_EPOCH=1700000000 ") + SNER_CLI_PATH + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sner_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  // A small all-OOE corpus written through the generate command, with
  // `names` train names and half as many test names per type.
  std::string generate(int train = 60, int test = 20, int names = 4) {
    auto name_list = [](const std::string& stem, int n) {
      json out = json::array();
      for (int i = 0; i < n; ++i) out.push_back(stem + std::string(1, static_cast<char>('a' + i % 26)) + std::to_string(i));
      return out;
    };
    json spec = {
        {"types",
         {{{"name", "LOC"},
           {"context_frames", {"we flew to <X> .", "the mayor of <X> spoke .", "<X> is a lovely city ."}},
           {"train_names", name_list("Bra", names)},
           {"test_names", name_list("Quo", names / 2)}},
          {{"name", "PER"},
           {"context_frames", {"<X> said hello .", "we met <X> today .", "<X> won the race ."}},
           {"train_names", name_list("Ann", names)},
           {"test_names", name_list("Gus", names / 2)}}}},
        {"sentences_per_split", {{"train", train}, {"test", test}}}};
    write("spec.json", spec.dump());
    EXPECT_EQ(sner("generate --spec " + path("spec.json") + " --seed 3 --out " + path("corpus")).status, 0);
    return path("corpus");
  }

  fs::path dir_;
};

TEST_F(Cli, FillTemplatesDefaultSet) {
  const auto r = sner("fill-templates --span Milan --type LOC");
  EXPECT_EQ(r.status, 0);
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 10u);
  EXPECT_EQ(ls[0], "Milan is a location entity.");
  const auto none = lines(sner("fill-templates --span Milan --type NONE").out);
  EXPECT_NE(std::find(none.begin(), none.end(), "Milan is not an entity."), none.end());
  EXPECT_EQ(sner("fill-templates --span Milan --type GPE").status, 2);
  EXPECT_EQ(sner("fill-templates --span Milan --type LOC --templates " +
                 std::string(SNER_SOURCE_DIR) + "/templates/default.json").out,
            r.out);
}

TEST_F(Cli, AnalyzeSyntheticIdenticalAndMissing) {
  const auto corpus = generate();
  const auto r = sner("analyze --train " + corpus + "/train.conll --test " + corpus + "/test.conll --out " + path("a"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(json::parse(r.out).at("ooe_rate"), 1.0);
  EXPECT_TRUE(fs::exists(path("a/manifest.json")));
  EXPECT_EQ(json::parse(slurp(path("a/ooe_report.json"))).at("ooe_rate"), 1.0);
  const auto same = sner("analyze --train " + corpus + "/train.conll --test " + corpus + "/train.conll");
  EXPECT_EQ(json::parse(same.out).at("ooe_rate"), 0.0);
  EXPECT_EQ(sner("analyze --train " + path("nope.conll") + " --test " + corpus + "/test.conll").status, 2);
  write("bad.conll", "Milan B-LOC extra\n");
  EXPECT_EQ(sner("analyze --train " + path("bad.conll") + " --test " + corpus + "/test.conll").status, 2);
}

TEST_F(Cli, GenerateIsIdempotent) {
  const auto corpus = generate();
  const auto first = slurp(corpus + "/train.conll") + slurp(corpus + "/manifest.json");
  generate();
  EXPECT_EQ(slurp(corpus + "/train.conll") + slurp(corpus + "/manifest.json"), first);
  const auto m = json::parse(slurp(corpus + "/manifest.json"));
  EXPECT_EQ(m.at("command"), "generate");
  EXPECT_TRUE(m.contains("version"));
  EXPECT_TRUE(m.contains("started_at"));
}

TEST_F(Cli, PartitionStatusAndReproducibility) {
  std::string text;
  for (int i = 0; i < 30; ++i) text += (i % 2 ? "Paris B-LOC\nis O\nnice O\n\n" : "Rome B-LOC\nis O\nold O\n\n");
  write("dup.conll", text);
  const auto ok = sner("partition --corpus " + path("dup.conll") + " --ooe-rate 0.0 --split 0.3 --seed 2 --out " + path("p0"));
  EXPECT_EQ(ok.status, 0);
  const auto m = json::parse(slurp(path("p0/manifest.json")));
  EXPECT_TRUE(m.at("converged").get<bool>());
  EXPECT_EQ(m.at("report").at("ooe_rate"), 0.0);
  EXPECT_EQ(sner("partition --corpus " + path("dup.conll") + " --ooe-rate 1.0 --max-iterations 20 --out " + path("p1"))
                .status,
            3);

  const auto corpus = generate(150, 60, 40);
  const std::string args = "partition --corpus " + corpus + "/train.conll " + corpus +
                           "/test.conll --ooe-rate 0.5 --split 0.3 --seed 5 --out ";
  EXPECT_EQ(sner(args + path("q1")).status, 0);
  EXPECT_EQ(sner(args + path("q2")).status, 0);
  EXPECT_EQ(slurp(path("q1/test.conll")), slurp(path("q2/test.conll")));
  EXPECT_EQ(slurp(path("q1/manifest.json")).size(), slurp(path("q2/manifest.json")).size());
  const auto check = sner("analyze --train " + path("q1/train.conll") + " --test " + path("q1/test.conll"));
  EXPECT_NEAR(json::parse(check.out).at("ooe_rate").get<double>(), 0.5, 0.02);
}

TEST_F(Cli, TrainValidatesConfig) {
  const auto corpus = generate();
  write("bad.json", R"({"lambda_weight": -0.5})");
  EXPECT_EQ(sner("train --train " + corpus + "/train.conll --out " + path("t") + " --config " + path("bad.json")).status,
            2);
  EXPECT_EQ(sner("train --train " + corpus + "/train.conll --out " + path("t") + " --lambda -1").status, 2);
  EXPECT_EQ(sner("train --train " + corpus + "/train.conll --out " + path("t") + " --seeds 1,x").status, 2);
}

TEST_F(Cli, TrainEvalRoundTrip) {
  const auto corpus = generate(40, 20);
  write("cfg.json", R"({"epochs": 3, "d": 16, "feedforward_width": 32})");
  const std::string train = "train --profile desk --config " + path("cfg.json") + " --epochs 12 --train " + corpus +
                            "/train.conll --dev " + corpus + "/train.conll --out " + path("m") +
                            " --seeds 1,2 --no-templates --unk-replace 0";
  const auto r = sner(train);
  ASSERT_EQ(r.status, 0);
  EXPECT_TRUE(fs::exists(path("m/seed-1/manifest.json")));
  EXPECT_TRUE(fs::exists(path("m/seed-2/manifest.json")));
  const auto summary = json::parse(slurp(path("m/summary.json")));
  EXPECT_EQ(summary.at("per_seed").size(), 2u);
  // Flag beats config file beats default.
  EXPECT_EQ(summary.at("config").at("epochs"), 12);
  EXPECT_EQ(summary.at("config").at("d"), 16);
  EXPECT_EQ(summary.at("config").at("lambda_weight"), 0.1);

  // A model scored on its own training data recalls nearly everything.
  const auto mem = sner("eval --model " + path("m/seed-1") + " --test " + corpus + "/train.conll --out " + path("e"));
  ASSERT_EQ(mem.status, 0);
  EXPECT_GT(json::parse(mem.out).at("micro_f1").get<double>(), 0.9);
  EXPECT_TRUE(fs::exists(path("e/metrics.json")));

  const auto binned = sner("eval --model " + path("m/seed-1") + " --test " + corpus + "/test.conll --bins --train " +
                           corpus + "/train.conll");
  ASSERT_EQ(binned.status, 0);
  const auto j = json::parse(binned.out);
  EXPECT_TRUE(j.at("bins").contains("ooe"));
  EXPECT_TRUE(j.at("bins").at("in_vocab").is_null());
  EXPECT_EQ(sner("eval --model " + path("m/seed-1") + " --test " + corpus + "/test.conll --bins").status, 2);

  auto vocab = json::parse(slurp(path("m/seed-1/vocab.json")));
  vocab["tokens"].push_back("tampered");
  write("m/seed-1/vocab.json", vocab.dump());
  EXPECT_EQ(sner("eval --model " + path("m/seed-1") + " --test " + corpus + "/test.conll").status, 4);
}

}  // namespace
