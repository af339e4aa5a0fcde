#include <regex>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "argmine/pipeline.hpp"
#include "fixtures.hpp"

using namespace argmine;
namespace at = argmine::testing;

namespace {

using EdgeSet = std::set<std::tuple<std::string, std::size_t, std::size_t>>;

EdgeSet json_edges(const std::string& jsonl) {
  EdgeSet out;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const auto& l : j["links"]) out.emplace(j["id"], l["src"], l["dst"]);
  }
  return out;
}

EdgeSet dot_edges(const std::string& dot) {
  EdgeSet out;
  static const std::regex header(R"re(^digraph "([^"]*)" \{$)re"), edge(R"(^  p(\d+) -> p(\d+);$)");
  std::istringstream in(dot);
  std::string line, id;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_match(line, m, header))
      id = m[1];
    else if (std::regex_match(line, m, edge))
      out.emplace(id, std::stoul(m[1]), std::stoul(m[2]));
  }
  return out;
}

RunConfig toy_run_config(const fs::path& root) {
  static const fs::path ckpt = at::write_toy_checkpoint(at::temp_dir("toy-ckpt-pipeline"));
  RunConfig cfg;
  cfg.encoder = at::toy_encoder_config(ckpt);
  cfg.type.epochs = 2;
  cfg.type.learning_rate = 1e-3;
  cfg.type.batch_size = 4;
  cfg.link.context_dim = 32;
  cfg.link.num_heads = 4;
  cfg.link.feedforward_dim = 64;
  cfg.link.projection_dim = 16;
  cfg.link.epochs = 3;
  cfg.link.dropout = 0.1;
  cfg.link.dev_fraction = 0.2;
  cfg.paths.artifacts = (root / "artifacts").string();
  cfg.seed = 21;
  return cfg;
}

}  // namespace

TEST(RunConfig, FlatKeysRoundTrip) {
  RunConfig cfg;
  set_config_value(cfg, "link.dropout", 0.25);
  set_config_value(cfg, "type.epochs", "5");
  set_config_value(cfg, "link.loss", "mse");
  set_config_value(cfg, "link.positional_encoding", "false");
  EXPECT_EQ(cfg.link.dropout, 0.25);
  EXPECT_EQ(cfg.type.epochs, 5);
  EXPECT_EQ(cfg.link.loss, LinkLoss::Mse);
  EXPECT_FALSE(cfg.link.positional_encoding);

  RunConfig back;
  apply_flat_json(back, to_flat_json(cfg));
  EXPECT_EQ(to_flat_json(back).dump(), to_flat_json(cfg).dump());
}

TEST(RunConfig, DefaultsFollowTheReferenceSetup) {
  const auto j = to_flat_json(RunConfig{});
  EXPECT_EQ(j["type.epochs"], 3);
  EXPECT_DOUBLE_EQ(j["type.learning_rate"].get<double>(), 5e-3);
  EXPECT_EQ(j["link.pooling_layers"], 4);
  EXPECT_EQ(j["link.context_dim"], 768);
  EXPECT_EQ(j["link.num_heads"], 8);
  EXPECT_EQ(j["link.feedforward_dim"], 2048);
  EXPECT_EQ(j["link.projection_dim"], 100);
  EXPECT_DOUBLE_EQ(j["link.dropout"].get<double>(), 0.4);
  EXPECT_EQ(j["link.epochs"], 100);
}

TEST(RunConfig, BadKeysAndValuesAreConfigErrors) {
  RunConfig cfg;
  EXPECT_THROW(set_config_value(cfg, "link.nope", 1), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "type.epochs", "three"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "link.loss", "hinge"), ConfigError);
  const auto dir = at::temp_dir("config-files");
  at::write_file(dir / "bad.json", "{not json");
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
  at::write_file(dir / "ok.json", R"({"seed": 4, "link.epochs": 7})");
  const auto loaded = load_run_config(dir / "ok.json");
  EXPECT_EQ(loaded.seed, 4u);
  EXPECT_EQ(loaded.link.epochs, 7);
  EXPECT_THROW(load_run_config(dir / "missing.json"), IoError);
}

TEST(RunConfig, HashesAreStableAndScoped) {
  RunConfig a, b;
  EXPECT_EQ(type_config_hash(a), type_config_hash(b));
  EXPECT_EQ(link_config_hash(a), link_config_hash(b));
  b.link.dropout = 0.3;
  EXPECT_EQ(type_config_hash(a), type_config_hash(b));
  EXPECT_NE(link_config_hash(a), link_config_hash(b));
  b = a;
  b.type.epochs = 4;
  EXPECT_NE(type_config_hash(a), type_config_hash(b));
  EXPECT_NE(link_config_hash(a), link_config_hash(b));
  b = a;
  b.paths.artifacts = "elsewhere";
  EXPECT_EQ(link_config_hash(a), link_config_hash(b));
  EXPECT_NE(embedding_cache_stem(a), embedding_cache_stem(b));
}

TEST(GraphExport, JsonAndDotAgree) {
  const auto corpus = at::synthetic_corpus();
  std::vector<PredictedGraph> graphs;
  for (const auto& c : corpus.comments) {
    PredictedGraph g;
    g.comment = &c;
    for (const auto& p : c.propositions) {
      TypePrediction t;
      t.label = p.label;
      t.distribution[index_of(p.label)] = 1.0;
      g.types.push_back(t);
    }
    g.links = c.links;
    g.link_scores.assign(c.links.size(), 0.9);
    graphs.push_back(g);
  }
  std::ostringstream js, dot;
  write_json(js, graphs);
  write_dot(dot, graphs);
  const auto a = json_edges(js.str());
  EXPECT_EQ(a, dot_edges(dot.str()));
  EXPECT_EQ(a.size(), corpus_stats(corpus).num_links);
  EXPECT_NE(dot.str().find("0: POLICY"), std::string::npos);
}

TEST(GraphExport, DotEscapesQuotesAndTruncates) {
  Comment c;
  c.id = "q\"1";
  c.text = std::string("say \"no\" ") + std::string(100, 'a');
  c.propositions.push_back({0, utf8::length(c.text), Label::Value});
  finalize(c);
  PredictedGraph g{&c, {TypePrediction{}}, {}, {}};
  std::ostringstream dot;
  write_dot(dot, {g});
  EXPECT_NE(dot.str().find("digraph \"q\\\"1\""), std::string::npos);
  EXPECT_NE(dot.str().find("say \\\"no\\\""), std::string::npos);
  EXPECT_NE(dot.str().find("..."), std::string::npos);
}

TEST(Pipeline, PrepareWritesJsonlAndReportsMismatches) {
  const auto root = at::temp_dir("prepare");
  const auto corpus = at::synthetic_corpus();
  at::write_cdcp_release(root / "release", corpus);
  Corpus loaded;
  const auto r = pipeline::prepare(root / "release", root / "corpus.jsonl", &loaded);
  EXPECT_EQ(r.train.num_comments, 12u);
  EXPECT_EQ(r.test.num_comments, 4u);
  EXPECT_FALSE(r.mismatches.empty());
  const auto back = read_jsonl(root / "corpus.jsonl");
  ASSERT_EQ(back.comments.size(), corpus.comments.size());
  for (std::size_t i = 0; i < back.comments.size(); ++i) {
    EXPECT_EQ(back.comments[i].id, corpus.comments[i].id);
    EXPECT_EQ(back.comments[i].size(), corpus.comments[i].size());
    EXPECT_EQ(back.comments[i].links.size(), corpus.comments[i].links.size());
  }
  EXPECT_NE(pipeline::format_stats(r).find("TESTIMONY"), std::string::npos);
}

TEST(Pipeline, TrainPredictEvaluateEndToEnd) {
  const auto root = at::temp_dir("pipeline-e2e");
  const auto cfg = toy_run_config(root);
  const auto corpus = at::synthetic_corpus();
  const auto train = filter_split(corpus, Split::Train);

  EXPECT_THROW(pipeline::train_link_phase(cfg, train), LoadError);
  const auto type_dir = pipeline::train_type_phase(cfg, train);
  EXPECT_EQ(type_dir, type_artifact_dir(cfg));
  const auto link_dir = pipeline::train_link_phase(cfg, train);
  EXPECT_EQ(link_dir, link_artifact_dir(cfg));
  EXPECT_TRUE(fs::exists(embedding_cache_stem(cfg).string() + ".json"));

  auto models = pipeline::load_pipeline(cfg, type_dir, link_dir);
  const auto test = filter_split(corpus, Split::Test);
  const auto graphs = pipeline::predict(models, test, models.links.threshold);
  ASSERT_EQ(graphs.size(), test.comments.size());
  for (const auto& g : graphs) {
    EXPECT_EQ(g.types.size(), g.comment->size());
    EXPECT_EQ(g.links.size(), g.link_scores.size());
    for (const auto& l : g.links) {
      EXPECT_LT(l.src, g.comment->size());
      EXPECT_LT(l.dst, g.comment->size());
      EXPECT_NE(l.src, l.dst);
    }
  }

  const auto r1 = pipeline::evaluate(models, test, models.links.threshold);
  const auto r2 = pipeline::evaluate(models, test, models.links.threshold);
  EXPECT_EQ(to_json(r1).dump(), to_json(r2).dump());
  EXPECT_EQ(to_text(r1), to_text(r2));

  // A single-proposition comment has one node and no edges.
  Corpus single;
  Comment one;
  one.id = "solo";
  one.text = "the agency should ban calls after nine at night.";
  one.propositions.push_back({0, utf8::length(one.text), Label::Policy});
  finalize(one);
  single.comments.push_back(one);
  const auto solo = pipeline::predict(models, single, 0.5);
  ASSERT_EQ(solo.size(), 1u);
  EXPECT_EQ(solo[0].types.size(), 1u);
  EXPECT_TRUE(solo[0].links.empty());

  // A link model cannot be paired with a type model from another run.
  auto other = cfg;
  other.seed = 22;
  const auto other_type = pipeline::train_type_phase(other, train);
  EXPECT_THROW(pipeline::load_pipeline(cfg, other_type, link_dir), ConfigError);
}
