#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "argmine/metrics.hpp"
#include "fixtures.hpp"

using namespace argmine;
namespace at = argmine::testing;

namespace {

// Independent counting oracle: F1 = 2tp / (2tp + fp + fn).
double f1_oracle(std::size_t tp, std::size_t fp, std::size_t fn) {
  return tp == 0 ? 0.0 : 2.0 * double(tp) / double(2 * tp + fp + fn);
}

Comment numbered_comment(const std::string& id, std::size_t m, std::vector<Link> links) {
  Comment c;
  c.id = id;
  for (std::size_t i = 0; i < m; ++i) {
    Proposition p;
    p.start = c.text.size();
    c.text += "x";
    p.end = c.text.size();
    c.text += " ";
    c.propositions.push_back(p);
  }
  c.links = std::move(links);
  finalize(c);
  return c;
}

std::vector<Link> random_edges(std::mt19937_64& rng, std::size_t m, double rate) {
  std::bernoulli_distribution on(rate);
  std::vector<Link> out;
  for (std::size_t d = 0; d < m; ++d)
    for (std::size_t s = 0; s < m; ++s)
      if (s != d && on(rng)) out.push_back({s, d});
  return out;
}

Corpus labelled_corpus(const std::vector<Label>& labels) {
  Comment c;
  c.id = "t";
  for (Label l : labels) {
    Proposition p;
    p.start = c.text.size();
    c.text += "y";
    p.end = c.text.size();
    p.label = l;
    c.propositions.push_back(p);
  }
  finalize(c);
  return Corpus{{c}};
}

}  // namespace

TEST(F1Binary, Examples) {
  EXPECT_DOUBLE_EQ(f1_binary(5, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(f1_binary(0, 3, 4), 0.0);
  EXPECT_DOUBLE_EQ(f1_binary(0, 0, 0), 0.0);
  EXPECT_NEAR(f1_binary(2, 1, 2), 4.0 / 7.0, 1e-15);
}

TEST(F1Binary, SymmetricBoundedAndMatchesOracle) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t tp = rng() % 20, fp = rng() % 20, fn = rng() % 20;
    const double f = f1_binary(tp, fp, fn);
    EXPECT_DOUBLE_EQ(f, f1_binary(tp, fn, fp));
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_NEAR(f, f1_oracle(tp, fp, fn), 1e-12);
  }
}

TEST(EvaluateTypes, PerfectAndAllValue) {
  std::vector<Label> gold;
  for (std::size_t k = 0; k < kNumLabels; ++k)
    gold.insert(gold.end(), kCdcpTest.labels[k], kLabels[k]);
  ASSERT_EQ(gold.size(), 1233u);
  const auto corpus = labelled_corpus(gold);

  const auto perfect = evaluate_types(gold, corpus);
  EXPECT_DOUBLE_EQ(perfect.macro_f1, 1.0);
  for (std::size_t i = 0; i < kNumLabels; ++i)
    for (std::size_t j = 0; j < kNumLabels; ++j)
      EXPECT_EQ(perfect.confusion[i][j], i == j ? kCdcpTest.labels[i] : 0u);

  const auto all_value = evaluate_types(std::vector<Label>(gold.size(), Label::Value), corpus);
  EXPECT_NEAR(all_value.f1[index_of(Label::Value)], 2.0 * 544 / (544 + 1233), 1e-12);
  EXPECT_NEAR(all_value.f1[index_of(Label::Value)], 0.6122, 1e-4);
  EXPECT_NEAR(all_value.macro_f1, 0.1224, 1e-4);
  EXPECT_NEAR(all_value.micro_f1, 544.0 / 1233.0, 1e-12);
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    std::size_t row = 0;
    for (auto v : all_value.confusion[i]) row += v;
    EXPECT_EQ(row, kCdcpTest.labels[i]);
  }
}

TEST(EvaluateTypes, LengthMismatchIsAnError) {
  const auto corpus = labelled_corpus({Label::Fact, Label::Value});
  EXPECT_THROW(evaluate_types({Label::Fact}, corpus), ValidationError);
}

TEST(EvaluateTypes, MatchesConfusionOracleOnRandomFixtures) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Label> gold(20), pred(20);
    for (auto& l : gold) l = kLabels[rng() % kNumLabels];
    for (auto& l : pred) l = kLabels[rng() % kNumLabels];
    const auto m = evaluate_types(pred, labelled_corpus(gold));
    double macro = 0.0;
    for (Label c : kLabels) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        tp += gold[i] == c && pred[i] == c;
        fp += gold[i] != c && pred[i] == c;
        fn += gold[i] == c && pred[i] != c;
      }
      EXPECT_NEAR(m.f1[index_of(c)], f1_oracle(tp, fp, fn), 1e-12);
      macro += f1_oracle(tp, fp, fn) / 5.0;
    }
    EXPECT_NEAR(m.macro_f1, macro, 1e-12);

    // permuting the proposition order leaves macro F1 unchanged
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Label> pg, pp;
    for (auto i : order) {
      pg.push_back(gold[i]);
      pp.push_back(pred[i]);
    }
    EXPECT_NEAR(evaluate_types(pp, labelled_corpus(pg)).macro_f1, m.macro_f1, 1e-12);
  }
}

TEST(EvaluateLinks, PerfectAndEmpty) {
  const auto corpus = at::synthetic_corpus();
  PredictedLinks gold_edges, none;
  for (const auto& c : corpus.comments) gold_edges[c.id] = c.links;
  EXPECT_DOUBLE_EQ(evaluate_links(gold_edges, corpus).f1(), 1.0);
  EXPECT_DOUBLE_EQ(evaluate_links(none, corpus).f1(), 0.0);
  const auto conf = evaluate_links(none, corpus);
  EXPECT_EQ(conf.tp + conf.fp + conf.fn + conf.tn, corpus_stats(corpus).num_candidate_pairs);
}

TEST(EvaluateLinks, ThreeCommentFixtureAgainstPairEnumeration) {
  Corpus gold{{numbered_comment("a", 3, {{1, 0}, {2, 0}}), numbered_comment("b", 4, {{0, 3}, {3, 2}}),
               numbered_comment("c", 2, {{0, 1}})}};
  PredictedLinks pred{{"a", {{1, 0}, {0, 1}}}, {"b", {{0, 3}, {2, 3}, {1, 2}}}, {"c", {}}};
  // a: tp (1,0); fp (0,1); fn (2,0).  b: tp (0,3); fp (2,3),(1,2); fn (3,2).  c: fn (0,1).
  const auto conf = evaluate_links(pred, gold);
  EXPECT_EQ(conf.tp, 2u);
  EXPECT_EQ(conf.fp, 3u);
  EXPECT_EQ(conf.fn, 3u);
  EXPECT_EQ(conf.tn, 6u + 12u + 2u - 8u);
  EXPECT_NEAR(conf.f1(), 0.4, 1e-15);
}

TEST(EvaluateLinks, MatchesBruteForceAndComposes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Corpus gold;
    PredictedLinks pred;
    for (int k = 0; k < 4; ++k) {
      const std::size_t m = rng() % 7;
      const std::string id = "c" + std::to_string(k);
      gold.comments.push_back(numbered_comment(id, m, random_edges(rng, m, 0.2)));
      if (rng() % 4) pred[id] = random_edges(rng, m, 0.25);
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& c : gold.comments) {
      std::set<std::pair<std::size_t, std::size_t>> g, p;
      for (const auto& l : c.links) g.emplace(l.src, l.dst);
      if (pred.count(c.id))
        for (const auto& l : pred[c.id]) p.emplace(l.src, l.dst);
      for (const auto& pair : candidate_pairs(c)) {
        tp += g.count(pair) && p.count(pair);
        fp += !g.count(pair) && p.count(pair);
        fn += g.count(pair) && !p.count(pair);
      }
    }
    const auto conf = evaluate_links(pred, gold);
    EXPECT_EQ(conf.tp, tp);
    EXPECT_EQ(conf.fp, fp);
    EXPECT_EQ(conf.fn, fn);
    EXPECT_NEAR(conf.f1(), f1_oracle(tp, fp, fn), 1e-12);

    // disjoint halves pooled = whole
    Corpus first{{gold.comments.begin(), gold.comments.begin() + 2}};
    Corpus second{{gold.comments.begin() + 2, gold.comments.end()}};
    PredictedLinks p1, p2;
    for (const auto& [id, e] : pred) (id < "c2" ? p1 : p2)[id] = e;
    auto pooled = evaluate_links(p1, first);
    pooled += evaluate_links(p2, second);
    EXPECT_EQ(pooled.tp, conf.tp);
    EXPECT_EQ(pooled.fp, conf.fp);
    EXPECT_EQ(pooled.fn, conf.fn);
    EXPECT_EQ(pooled.tn, conf.tn);
  }
}

TEST(EvaluateLinks, InvalidPredictionsAreErrors) {
  Corpus gold{{numbered_comment("a", 3, {{1, 0}})}};
  EXPECT_THROW(evaluate_links(PredictedLinks{{"zzz", {}}}, gold), ValidationError);
  EXPECT_THROW(evaluate_links(PredictedLinks{{"a", {{3, 0}}}}, gold), ValidationError);
  EXPECT_THROW(evaluate_links(PredictedLinks{{"a", {{1, 1}}}}, gold), ValidationError);
}

TEST(ResultTable, RowExamples) {
  const auto ref = table2_row(0.25, 0.81, "ours", 0.52);
  EXPECT_NEAR(ref.average, 0.53, 1e-12);
  EXPECT_DOUBLE_EQ(ref.average_shown, 0.53);
  EXPECT_FALSE(ref.note.empty());
  EXPECT_DOUBLE_EQ(table2_row(1.0, 1.0).average_shown, 1.0);
  EXPECT_DOUBLE_EQ(table2_row(0.0, 1.0).average_shown, 0.5);
  EXPECT_TRUE(table2_row(0.2, 0.8, "x", 0.5).note.empty());
  EXPECT_DOUBLE_EQ(round_half_up(0.125, 2), 0.13);
  EXPECT_DOUBLE_EQ(round_half_up(0.535, 2), 0.54);
}

TEST(ResultTable, ReportJsonAndText) {
  LinkConfusion lc{2, 3, 3, 12};
  const auto types = type_metrics({Label::Value, Label::Fact}, {Label::Value, Label::Value});
  const auto r = make_report(lc, types, 0.45);
  EXPECT_NEAR(r.average, (r.edge_f1 + r.type_f1) / 2.0, 1e-9);
  const auto j = to_json(r);
  EXPECT_DOUBLE_EQ(j["edge_f1"].get<double>(), 0.4);
  EXPECT_EQ(j["link_confusion"]["tn"], 12);
  EXPECT_EQ(j["confusion"][3][0], 1);
  const auto text = to_text(r);
  EXPECT_NE(text.find("Edge Prediction"), std::string::npos);
  EXPECT_NE(text.find("printed average 0.52 differs from computed mean 0.53"), std::string::npos);
}
