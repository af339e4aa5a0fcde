#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "argmine/corpus.hpp"
#include "fixtures.hpp"

using namespace argmine;
namespace at = argmine::testing;

namespace {

Comment make_comment(std::string id, std::size_t m, std::vector<Link> links = {}) {
  Comment c;
  c.id = std::move(id);
  for (std::size_t i = 0; i < m; ++i) {
    Proposition p;
    p.start = c.text.size();
    c.text += "s" + std::to_string(i);
    p.end = c.text.size();
    p.label = kLabels[i % kNumLabels];
    c.propositions.push_back(p);
    c.text += ' ';
  }
  c.links = std::move(links);
  finalize(c);
  return c;
}

void write_ann(const fs::path& dir, const std::string& id, const std::string& text, const std::string& ann) {
  at::write_file(dir / (id + ".txt"), text);
  at::write_file(dir / (id + ".ann.json"), ann);
}

}  // namespace

TEST(Labels, ParseIsCaseInsensitiveAndRejectsUnknown) {
  EXPECT_EQ(parse_label("value"), Label::Value);
  EXPECT_EQ(parse_label("TESTIMONY"), Label::Testimony);
  EXPECT_EQ(parse_label("Reference"), Label::Reference);
  EXPECT_THROW(parse_label("claim"), ParseError);
}

TEST(CdcpAdapter, ExpandsSourceRangesAndUnionsFamilies) {
  const auto root = at::temp_dir("ranges");
  // offsets: "aa" [0,2), "bb" [3,5), "cc" [6,8), "dd" [9,11)
  write_ann(root / "train", "00001", "aa bb cc dd",
            R"({"prop_offsets": [[0,2],[3,5],[6,8],[9,11]], "prop_labels": ["policy","value","fact","testimony"],
                "reasons": [[[1,3],0]], "evidences": [[[2,2],0],[[3,3],1]], "url": {}})");
  const auto corpus = load_corpus(root, Split::Train);
  ASSERT_EQ(corpus.comments.size(), 1u);
  const auto& c = corpus.comments[0];
  EXPECT_EQ(c.id, "00001");
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.propositions[1].text, "bb");
  EXPECT_EQ(c.propositions[3].label, Label::Testimony);
  // (1,0) (2,0) (3,0) from the reason range; (2,0) again as evidence; (3,1).
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {{1, 0}, {2, 0}, {3, 0}, {3, 1}};
  ASSERT_EQ(c.links.size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    EXPECT_EQ(c.links[k].src, expected[k].first);
    EXPECT_EQ(c.links[k].dst, expected[k].second);
  }
  EXPECT_EQ(c.links[1].family, LinkFamily::Reason);  // first family seen wins
  EXPECT_EQ(c.links[3].family, LinkFamily::Evidence);
}

TEST(CdcpAdapter, OffsetsCountCodePointsAndNewlinesAreNormalized) {
  const auto root = at::temp_dir("codepoints");
  // "é" is two bytes; CRLF collapses to one character.
  write_ann(root / "test", "7", "caf\xC3\xA9 ok.\r\nnext one",
            R"({"prop_offsets": [[0,8],[9,17]], "prop_labels": ["value","fact"], "reasons": null, "evidences": null})");
  const auto corpus = load_corpus(root, Split::Test);
  const auto& c = corpus.comments.at(0);
  EXPECT_EQ(c.split, Split::Test);
  EXPECT_EQ(c.propositions[0].text, "caf\xC3\xA9 ok.");
  EXPECT_EQ(c.propositions[1].text, "next one");
  EXPECT_TRUE(c.links.empty());
}

TEST(CdcpAdapter, MalformedRecordNamesTheComment) {
  const auto root = at::temp_dir("malformed");
  write_ann(root, "00042", "aa bb", R"({"prop_offsets": [[0,2],[3,5]], "prop_labels": ["value"]})");
  try {
    load_corpus(root, Split::Train);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("00042"), std::string::npos) << e.what();
  }
  write_ann(root, "00042", "aa bb", "{not json");
  EXPECT_THROW(load_corpus(root, Split::Train), ParseError);
  write_ann(root, "00042", "aa bb", R"({"prop_offsets": [[0,2]], "prop_labels": ["claim"]})");
  EXPECT_THROW(load_corpus(root, Split::Train), ParseError);
}

TEST(CdcpAdapter, SpanOutsideTextIsAValidationError) {
  const auto root = at::temp_dir("outside");
  write_ann(root, "1", "short", R"({"prop_offsets": [[0,40]], "prop_labels": ["value"]})");
  EXPECT_THROW(load_corpus(root, Split::Train), ValidationError);
}

TEST(CdcpAdapter, LinkOutsideCommentIsAValidationError) {
  const auto root = at::temp_dir("badlink");
  write_ann(root, "1", "aa bb", R"({"prop_offsets": [[0,2],[3,5]], "prop_labels": ["value","fact"], "reasons": [[[0,0],5]]})");
  EXPECT_THROW(load_corpus(root, Split::Train), ValidationError);
  write_ann(root, "1", "aa bb", R"({"prop_offsets": [[0,2],[3,5]], "prop_labels": ["value","fact"], "reasons": [[[0,1],1]]})");
  EXPECT_THROW(load_corpus(root, Split::Train), ValidationError);  // range covers a self-link
}

TEST(LoadCorpus, EmptyDirectoryGivesEmptyCorpus) {
  const auto root = at::temp_dir("empty");
  EXPECT_TRUE(load_corpus(root, Split::Train).comments.empty());
  EXPECT_TRUE(load_corpus(root).comments.empty());
}

TEST(LoadCorpus, MissingDirectoryIsAnIoError) {
  EXPECT_THROW(load_corpus(fs::temp_directory_path() / "argmine-does-not-exist", Split::Train), IoError);
}

TEST(LoadCorpus, SyntheticReleaseRoundTripsThroughTheAdapter) {
  const auto root = at::temp_dir("synthetic-release");
  const auto expected = at::synthetic_corpus();
  at::write_cdcp_release(root, expected);
  const auto loaded = load_corpus(root);
  ASSERT_EQ(loaded.comments.size(), expected.comments.size());
  for (std::size_t k = 0; k < loaded.comments.size(); ++k) EXPECT_EQ(loaded.comments[k], expected.comments[k]) << k;
}

TEST(CandidatePairs, SmallCases) {
  EXPECT_TRUE(candidate_pairs(make_comment("a", 0)).empty());
  EXPECT_TRUE(candidate_pairs(make_comment("a", 1)).empty());
  const auto three = candidate_pairs(make_comment("b", 3));
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {{1, 0}, {2, 0}, {0, 1}, {2, 1}, {0, 2}, {1, 2}};
  EXPECT_EQ(three, expected);
}

TEST(CandidatePairs, TenPropositionsAgainstDoubleLoop) {
  std::mt19937_64 rng(1);
  std::vector<Link> links;
  for (int k = 0; k < 15; ++k) {
    const std::size_t s = rng() % 10, d = rng() % 10;
    if (s != d) links.push_back({s, d});
  }
  const auto c = make_comment("ten", 10, links);
  const auto pairs = candidate_pairs(c);
  ASSERT_EQ(pairs.size(), 90u);
  std::set<std::pair<std::size_t, std::size_t>> oracle;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      if (i != j) oracle.emplace(i, j);
  EXPECT_EQ(std::set(pairs.begin(), pairs.end()), oracle);
  for (const auto& l : c.links) EXPECT_EQ(std::count(pairs.begin(), pairs.end(), std::pair(l.src, l.dst)), 1);
}

TEST(CandidatePairs, SizeIsMTimesMMinusOne) {
  for (std::size_t m = 0; m < 25; ++m) {
    const auto c = make_comment("m", m);
    EXPECT_EQ(candidate_pairs(c).size(), m < 2 ? 0 : m * (m - 1));
    EXPECT_EQ(num_candidate_pairs(c), candidate_pairs(c).size());
  }
}

TEST(NormalizedJson, RoundTripIsStructurallyIdentical) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    at::SyntheticOptions o;
    o.seed = seed;
    o.max_props = 9;
    const auto corpus = at::synthetic_corpus(o);
    std::stringstream buf;
    write_jsonl(buf, corpus);
    EXPECT_EQ(read_jsonl(buf), corpus) << "seed " << seed;
  }
}

TEST(NormalizedJson, RecordLayout) {
  auto c = make_comment("x", 2, {{1, 0, LinkFamily::Reason}});
  c.split = Split::Test;
  const auto j = to_json(c);
  EXPECT_EQ(j.dump(),
            R"({"id":"x","text":"s0 s1 ","propositions":[{"start":0,"end":2,"label":"value"},)"
            R"({"start":3,"end":5,"label":"policy"}],"links":[{"src":1,"dst":0,"family":"reason"}],"split":"test"})");
}

TEST(NormalizedJson, MissingLabelsOnlyAllowedForPredictionInput) {
  std::stringstream in(R"({"id":"q","text":"hello there","propositions":[{"start":0,"end":5}]})");
  EXPECT_THROW(read_jsonl(in), ParseError);
  std::stringstream again(in.str());
  const auto corpus = read_jsonl(again, false);
  EXPECT_EQ(corpus.comments.at(0).propositions.at(0).text, "hello");
}

TEST(NormalizedJson, DuplicateIdsRejected) {
  std::stringstream in(R"({"id":"a","text":"x","propositions":[]})"
                       "\n"
                       R"({"id":"a","text":"y","propositions":[]})");
  EXPECT_THROW(read_jsonl(in), ValidationError);
}

TEST(Stats, DegenerateSingleProposition) {
  Corpus corpus{{make_comment("one", 1)}};
  const auto s = corpus_stats(corpus);
  EXPECT_EQ(s.num_propositions, 1u);
  EXPECT_EQ(s.num_candidate_pairs, 0u);
  EXPECT_EQ(s.link_rate, 0.0);
}

TEST(Stats, CountsFractionsAndLinkRate) {
  Corpus corpus{{make_comment("a", 3, {{1, 0}, {2, 0}}), make_comment("b", 4, {{3, 2}})}};
  const auto s = corpus_stats(corpus);
  EXPECT_EQ(s.num_comments, 2u);
  EXPECT_EQ(s.num_propositions, 7u);
  EXPECT_EQ(s.num_links, 3u);
  EXPECT_EQ(s.num_candidate_pairs, 6u + 12u);
  EXPECT_DOUBLE_EQ(s.link_rate, 3.0 / 18.0);
  // labels cycle VALUE, POLICY, REFERENCE, FACT, ... per comment
  EXPECT_EQ(s.label_counts[index_of(Label::Value)], 2u);
  EXPECT_EQ(s.label_counts[index_of(Label::Policy)], 2u);
  EXPECT_EQ(s.label_counts[index_of(Label::Reference)], 2u);
  EXPECT_EQ(s.label_counts[index_of(Label::Fact)], 1u);
  double sum = 0;
  for (double f : s.label_fractions) sum += f;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Stats, ReferenceCountsAreConsistent) {
  std::size_t train = 0, test = 0;
  for (auto n : kCdcpTrain.labels) train += n;
  for (auto n : kCdcpTest.labels) test += n;
  EXPECT_EQ(train, kCdcpTrain.propositions);
  EXPECT_EQ(test, kCdcpTest.propositions);
  StatsReport s;
  s.num_propositions = 1233;
  s.label_counts = {544, 204, 8, 197, 280};
  EXPECT_TRUE(check_counts(s, kCdcpTest, "test").empty());
  s.label_counts[2] = 9;
  EXPECT_EQ(check_counts(s, kCdcpTest, "test").size(), 1u);
}
