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

#include "sner/corpus.hpp"
#include "sner/synthetic.hpp"
#include "test_util.hpp"

namespace sner {
namespace {

using testing::conll;

// Random well-formed BIO sentence over a small alphabet.
Sentence random_sentence(Rng& rng, int id) {
  static const std::vector<std::string> words{"a", "b", "Milan", "New", "York", ".", "x"};
  static const std::vector<std::string> types{"LOC", "PER", "ORG"};
  Sentence s;
  s.id = "s" + std::to_string(id);
  const int n = 1 + static_cast<int>(rng.below(10));
  std::string prev = "O";
  for (int i = 0; i < n; ++i) {
    s.tokens.push_back(words[rng.below(words.size())]);
    const auto r = rng.below(4);
    if (r == 0) {
      prev = "B-" + types[rng.below(types.size())];
    } else if (r == 1 && prev != "O") {
      prev = "I-" + prev.substr(2);
    } else {
      prev = "O";
    }
    s.bio_tags.push_back(prev);
  }
  return s;
}

TEST(ParseConll, SingleSentence) {
  const Dataset d = conll("Milan B-LOC\nis O\nwonderful O\n. O\n");
  ASSERT_EQ(d.sentences.size(), 1u);
  EXPECT_EQ(d.sentences[0].tokens, (std::vector<std::string>{"Milan", "is", "wonderful", "."}));
  EXPECT_EQ(d.label_set, std::vector<std::string>{"LOC"});
  EXPECT_EQ(d.sentences[0].id, "s1");
}

TEST(ParseConll, EmptyInput) {
  const Dataset d = conll("");
  EXPECT_TRUE(d.sentences.empty());
  EXPECT_TRUE(d.label_set.empty());
}

TEST(ParseConll, MultiTokenEntity) {
  const Dataset d = conll("New B-LOC\nYork I-LOC\n");
  const auto ents = bio_entities(d.sentences[0]);
  ASSERT_EQ(ents.size(), 1u);
  EXPECT_EQ(ents[0], (LabeledSpan{{1, 2}, "LOC"}));
}

TEST(ParseConll, SentencesSplitOnBlankLinesAndTabs) {
  const Dataset d = conll("-DOCSTART- O\n\nA\tB-PER\n\n\nb O\nc B-ORG\r\n");
  ASSERT_EQ(d.sentences.size(), 2u);
  EXPECT_EQ(d.sentences[1].id, "s2");
  EXPECT_EQ(d.label_set, (std::vector<std::string>{"ORG", "PER"}));
}

TEST(ParseConll, WrongFieldCountReportsLine) {
  try {
    conll("Milan B-LOC\nis O extra\n");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conll("Milan LOC\n"), InputError);
}

TEST(ParseConll, DanglingInsideTagRepairedOrRejected) {
  const std::string text = "the O\nBig I-ORG\nCo I-ORG\nand O\nParis I-LOC\n";
  const Dataset d = conll(text);
  EXPECT_EQ(d.sentences[0].bio_tags,
            (std::vector<std::string>{"O", "B-ORG", "I-ORG", "O", "B-LOC"}));
  EXPECT_THROW(conll(text, BioMode::kStrict), InputError);
  // A type switch inside an entity starts a new entity.
  const Dataset e = conll("A B-PER\nB I-ORG\n");
  EXPECT_EQ(bio_entities(e.sentences[0]).size(), 2u);
}

TEST(ParseConll, SerializeParseIsIdentity) {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Sentence> ss;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) ss.push_back(random_sentence(rng, i + 1));
    const Dataset d = make_dataset(ss);
    const Dataset once = conll(to_conll_string(d));
    EXPECT_EQ(once, d);
    EXPECT_EQ(conll(to_conll_string(once)), once);
  }
}

TEST(EnumerateSpans, WorkedExample) {
  EXPECT_EQ(enumerate_spans(3, 3),
            (std::vector<SpanIndex>{{1, 1}, {1, 2}, {1, 3}, {2, 2}, {2, 3}, {3, 3}}));
  EXPECT_EQ(enumerate_spans(3, 1), (std::vector<SpanIndex>{{1, 1}, {2, 2}, {3, 3}}));
  EXPECT_EQ(enumerate_spans(5, 4).size(), 14u);
  EXPECT_THROW(enumerate_spans(3, 0), InputError);
}

TEST(EnumerateSpans, CountMatchesClosedFormAndBruteForce) {
  for (int n = 0; n <= 10; ++n) {
    for (int m = 1; m <= 4; ++m) {
      std::size_t brute = 0;
      for (int b = 1; b <= n; ++b) {
        for (int e = 1; e <= n; ++e) brute += (e >= b && e - b + 1 <= m) ? 1 : 0;
      }
      std::size_t closed = 0;
      for (int i = 1; i <= n; ++i) closed += static_cast<std::size_t>(std::min(m, n - i + 1));
      const auto spans = enumerate_spans(n, m);
      EXPECT_EQ(spans.size(), brute) << n << "," << m;
      EXPECT_EQ(spans.size(), closed);
      EXPECT_TRUE(std::is_sorted(spans.begin(), spans.end()));
    }
  }
}

TEST(GoldSpanLabels, WorkedExample) {
  const Dataset d = conll("Milan B-LOC\nis O\nwonderful. O\n");
  const auto labels = gold_span_labels(d.sentences[0], enumerate_spans(d.sentences[0], 3));
  std::vector<std::string> got;
  for (const auto& l : labels) got.push_back(l.label);
  EXPECT_EQ(got, (std::vector<std::string>{"LOC", "O", "O", "O", "O", "O"}));
}

TEST(GoldSpanLabels, AllOutside) {
  const Dataset d = conll("a O\nb O\nc O\n");
  for (const auto& l : gold_span_labels(d.sentences[0], enumerate_spans(d.sentences[0], 4))) {
    EXPECT_EQ(l.label, "O");
  }
}

TEST(GoldSpanLabels, ExactMatchOnly) {
  const Dataset d = conll("New B-LOC\nYork I-LOC\n");
  const auto l = gold_span_labels(d.sentences[0], enumerate_spans(d.sentences[0], 4));
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], (LabeledSpan{{1, 1}, "O"}));
  EXPECT_EQ(l[1], (LabeledSpan{{1, 2}, "LOC"}));
  EXPECT_EQ(l[2], (LabeledSpan{{2, 2}, "O"}));
}

TEST(GoldSpanLabels, EntityLongerThanMaxIsUnreachable) {
  const Dataset d = conll("The B-ORG\nBank I-ORG\nof I-ORG\nNew I-ORG\nYork I-ORG\n");
  for (const auto& l : gold_span_labels(d.sentences[0], enumerate_spans(d.sentences[0], 4))) {
    EXPECT_EQ(l.label, "O");
  }
  EXPECT_EQ(bio_entities(d.sentences[0]).size(), 1u);
}

TEST(GoldSpanLabels, RoundTripsWithBioDecoding) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Sentence s = random_sentence(rng, 1);
    normalize_bio(s, BioMode::kRepair);
    const auto ents = bio_entities(s);
    std::vector<LabeledSpan> positives;
    for (auto& l : gold_span_labels(s, enumerate_spans(s, s.size()))) {
      if (l.label != "O") positives.push_back(l);
    }
    EXPECT_EQ(positives, ents);
    EXPECT_EQ(entities_to_bio(s.size(), ents), s.bio_tags);
  }
}

SyntheticSpec two_type_spec(int names) {
  SyntheticSpec spec;
  for (const char* t : {"LOC", "PER"}) {
    SyntheticType st;
    st.name = t;
    st.context_frames = {"<X> is a wonderful place .", "we saw <X> today .", "nobody knows <X> ."};
    for (int i = 0; i < names; ++i) {
      st.train_names.push_back(std::string(t) + "train" + std::to_string(i));
      st.test_names.push_back(std::string(t) + "test" + std::to_string(i));
    }
    spec.types.push_back(st);
  }
  spec.train_sentences = 200;
  spec.test_sentences = 80;
  return spec;
}

TEST(SyntheticCorpus, DisjointPoolsGiveFullOoeRate) {
  const auto c = generate_synthetic_ooe_corpus(two_type_spec(50), 5);
  EXPECT_EQ(c.train.sentences.size(), 200u);
  EXPECT_EQ(c.test.sentences.size(), 80u);
  EXPECT_EQ(c.manifest.at("ooe_rate").get<double>(), 1.0);
  EXPECT_EQ(compute_ooe_rate(c.train, c.test).ooe_rate, 1.0);
  EXPECT_EQ(c.train.label_set, (std::vector<std::string>{"LOC", "PER"}));
}

TEST(SyntheticCorpus, DeterministicGivenSeed) {
  const auto a = generate_synthetic_ooe_corpus(two_type_spec(50), 9);
  const auto b = generate_synthetic_ooe_corpus(two_type_spec(50), 9);
  EXPECT_EQ(to_conll_string(a.train), to_conll_string(b.train));
  EXPECT_EQ(to_conll_string(a.test), to_conll_string(b.test));
  EXPECT_EQ(a.manifest.dump(), b.manifest.dump());
  const auto c = generate_synthetic_ooe_corpus(two_type_spec(50), 10);
  EXPECT_NE(to_conll_string(a.train), to_conll_string(c.train));
}

TEST(SyntheticCorpus, OverlappingPoolsRejected) {
  auto spec = two_type_spec(5);
  spec.types[1].test_names.push_back(spec.types[0].train_names[0]);
  EXPECT_THROW(generate_synthetic_ooe_corpus(spec, 1), InputError);
  auto tok = two_type_spec(5);
  tok.types[0].test_names.push_back("wonderful place");  // every token seen in frames
  EXPECT_THROW(generate_synthetic_ooe_corpus(tok, 1), InputError);
  auto few = two_type_spec(5);
  few.types[0].context_frames.pop_back();
  EXPECT_THROW(generate_synthetic_ooe_corpus(few, 1), InputError);
}

TEST(SyntheticCorpus, SpecFromJson) {
  const auto j = nlohmann::json::parse(R"({
    "types": [
      {"name": "LOC", "context_frames": ["<X> is a wonderful city .", "in <X> .", "to <X> ."],
       "train_names": ["Paris"], "test_names": ["Quito"]},
      {"name": "PER", "context_frames": ["<X> said .", "ask <X> .", "<X> laughed ."],
       "train_names": ["Ann Lee"], "test_names": ["Bo Chen"]}],
    "sentences_per_split": {"train": 10, "test": 4}})");
  const auto spec = synthetic_spec_from_json(j);
  EXPECT_EQ(spec.types.size(), 2u);
  EXPECT_EQ(spec.train_sentences, 10);
  const auto c = generate_synthetic_ooe_corpus(spec, 1);
  EXPECT_EQ(c.test.sentences.size(), 4u);
  EXPECT_THROW(synthetic_spec_from_json(nlohmann::json::parse(R"({"types": 3})")), InputError);
}

}  // namespace
}  // namespace sner
