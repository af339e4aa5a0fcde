#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "argmine/config.hpp"
#include "argmine/corpus.hpp"
#include "argmine/embedding_cache.hpp"
#include "argmine/encoder.hpp"
#include "argmine/error.hpp"
#include "argmine/graph_export.hpp"
#include "argmine/link_predictor.hpp"
#include "argmine/metrics.hpp"
#include "argmine/type_classifier.hpp"

namespace argmine::pipeline {

namespace detail {

inline void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("corrupt " + path.string() + ": " + e.what());
  }
}

// Builds into a sibling staging directory and renames it into place.
inline fs::path staging_dir(const fs::path& final_dir) {
  fs::path tmp = final_dir;
  tmp += ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  return tmp;
}

inline void commit_dir(const fs::path& tmp, const fs::path& final_dir) {
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// prepare

struct PrepareResult {
  StatsReport train, test, all;
  std::vector<std::string> mismatches;  // against the reference split counts
  std::vector<std::string> notes;       // aggregate differences that are only flagged
};

inline PrepareResult prepare(const fs::path& corpus_dir, const fs::path& out_path, Corpus* loaded = nullptr) {
  const Corpus corpus = load_corpus(corpus_dir);
  write_jsonl(out_path, corpus);
  PrepareResult r;
  r.train = corpus_stats(filter_split(corpus, Split::Train));
  r.test = corpus_stats(filter_split(corpus, Split::Test));
  r.all = corpus_stats(corpus);
  r.mismatches = check_counts(r.train, kCdcpTrain, "train");
  for (auto& m : check_counts(r.test, kCdcpTest, "test")) r.mismatches.push_back(std::move(m));
  if (r.all.num_comments != kCdcpComments)
    r.notes.push_back(std::to_string(r.all.num_comments) + " comments (reference release has " +
                      std::to_string(kCdcpComments) + ")");
  if (loaded) *loaded = corpus;
  return r;
}

inline std::string format_stats(const PrepareResult& r) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-14s %12s %12s %10s\n", "Type", "# Training", "# Test", "Share");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-14s %12zu %12zu %10s\n", "Propositions", r.train.num_propositions,
                r.test.num_propositions, "");
  out += buf;
  for (Label l : kLabels) {
    std::string name(label_name(l));
    for (auto& ch : name) ch = char(std::toupper(static_cast<unsigned char>(ch)));
    std::snprintf(buf, sizeof buf, "%-14s %12zu %12zu %9.1f%%\n", name.c_str(), r.train.label_counts[index_of(l)],
                  r.test.label_counts[index_of(l)], 100.0 * r.all.label_fractions[index_of(l)]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "comments %zu, links %zu, ordered candidate pairs %zu, link rate %.4f\n",
                r.all.num_comments, r.all.num_links, r.all.num_candidate_pairs, r.all.link_rate);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// training

inline nlohmann::ordered_json artifact_manifest(const std::string& kind, const std::string& hash,
                                                const std::string& type_hash = "") {
  nlohmann::ordered_json j = {{"kind", kind}, {"hash", hash}};
  if (!type_hash.empty()) j["type_hash"] = type_hash;
  return j;
}

/// Fine-tunes the classifier and writes artifacts/type-<hash>/.
inline fs::path train_type_phase(RunConfig cfg, const Corpus& corpus) {
  cfg.propagate_seed();
  const auto dir = type_artifact_dir(cfg);
  auto encoder = load_checkpoint(cfg.encoder);
  auto result = train_type_classifier(corpus, std::move(encoder), cfg.type);
  const auto tmp = detail::staging_dir(dir);
  save_type_model(tmp, result.model, result.log);
  detail::write_json_file(tmp / "run_config.json", to_flat_json(cfg));
  detail::write_json_file(tmp / "artifact.json", artifact_manifest("type", type_config_hash(cfg)));
  detail::commit_dir(tmp, dir);
  return dir;
}

inline void require_type_artifact(const fs::path& dir) {
  if (!fs::exists(dir / "artifact.json"))
    throw LoadError("type model not found at " + dir.string() +
                    "; run `argmine train --phase type` with the same encoder/type settings and seed first");
}

inline TypeClassifierModel load_type_artifact(const fs::path& dir, const EncoderConfig& enc) {
  require_type_artifact(dir);
  return load_type_model(dir, enc);
}

/// Layerwise states for the corpus, from the cache when it covers the corpus.
inline StateTable cached_states(const RunConfig& cfg, const Corpus& corpus, Encoder& encoder) {
  const auto stem = embedding_cache_stem(cfg);
  const std::string source = type_config_hash(cfg);
  if (fs::exists(stem.string() + ".json")) {
    try {
      const auto info = read_cache_info(stem);
      if (info.source_hash == source && info.n == cfg.link.pooling_layers) {
        auto table = read_embedding_cache(stem);
        bool covers = true;
        for (const auto& c : corpus.comments) {
          auto it = table.find(c.id);
          covers = covers && it != table.end() && it->second.size() == c.size();
        }
        if (covers) {
          spdlog::info("using cached encoder states from {}", stem.string());
          return table;
        }
      }
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unusable embedding cache: {}", e.what());
    }
  }
  spdlog::info("encoding {} propositions", corpus.num_propositions());
  auto table = compute_states(corpus, encoder, cfg.link.pooling_layers);
  write_embedding_cache(stem, corpus, table,
                        {cfg.encoder.checkpoint_id, source, encoder.bert.num_hidden_layers, cfg.link.pooling_layers,
                         encoder.bert.hidden_size});
  return table;
}

/// Trains the link head on frozen states of the Phase-I encoder and writes
/// artifacts/link-<hash>/.
inline fs::path train_link_phase(RunConfig cfg, const Corpus& corpus) {
  cfg.propagate_seed();
  const auto type_dir = type_artifact_dir(cfg);
  auto type_model = load_type_artifact(type_dir, cfg.encoder);
  if (cfg.link.context_dim != type_model.encoder->bert.hidden_size)
    throw ConfigError("link.context_dim " + std::to_string(cfg.link.context_dim) + " differs from encoder width " +
                      std::to_string(type_model.encoder->bert.hidden_size));
  const auto states = cached_states(cfg, corpus, *type_model.encoder);
  auto result = train_link_predictor<float>(corpus, states, cfg.link);
  const auto dir = link_artifact_dir(cfg);
  const auto tmp = detail::staging_dir(dir);
  nlohmann::ordered_json extra = {{"type_hash", type_config_hash(cfg)},
                                  {"best_epoch", result.best_epoch},
                                  {"positive_weight", round6(result.positive_weight)},
                                  {"dev_ids", result.dev_ids}};
  save_link_model(tmp, result.model, result.threshold, result.log, extra);
  detail::write_json_file(tmp / "run_config.json", to_flat_json(cfg));
  detail::write_json_file(tmp / "artifact.json", artifact_manifest("link", link_config_hash(cfg), type_config_hash(cfg)));
  detail::commit_dir(tmp, dir);
  return dir;
}

// ---------------------------------------------------------------------------
// inference

struct LoadedPipeline {
  TypeClassifierModel types;
  LoadedLinkModel<float> links;
};

inline LoadedPipeline load_pipeline(const RunConfig& cfg, const fs::path& type_dir, const fs::path& link_dir) {
  require_type_artifact(type_dir);
  if (!fs::exists(link_dir / "artifact.json"))
    throw LoadError("link model not found at " + link_dir.string() + "; run `argmine train --phase link` first");
  const auto tm = detail::read_json_file(type_dir / "artifact.json");
  const auto lm = detail::read_json_file(link_dir / "artifact.json");
  if (lm.value("type_hash", "") != tm.value("hash", ""))
    throw ConfigError("link model " + link_dir.string() + " was trained on a different type model (" +
                      lm.value("type_hash", "?") + " vs " + tm.value("hash", "?") + ")");
  return {load_type_model(type_dir, cfg.encoder), load_link_model<float>(link_dir)};
}

/// Predicts types and edges for every comment in `corpus`.
inline std::vector<PredictedGraph> predict(LoadedPipeline& p, const Corpus& corpus, double threshold) {
  std::vector<PredictedGraph> out;
  auto& enc = *p.types.encoder;
  auto& link = p.links.model;
  for (const auto& c : corpus.comments) {
    PredictedGraph g;
    g.comment = &c;
    nn::Matrix<float> seq(Eigen::Index(c.size()), link.config.context_dim);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto layers = encode_layers(enc.tokenize(c.propositions[i].text), enc);
      g.types.push_back(classify_pooled(layers.states.row(layers.num_layers() - 1), p.types));
      seq.row(Eigen::Index(i)) = pool_layers<float>(layers, link.pooling);
    }
    if (c.size() >= 2) {
      const auto scores = decision_scores(link, seq);
      g.links = decode_graph(scores, threshold);
      for (const auto& l : g.links) g.link_scores.push_back(scores.scores(Eigen::Index(l.dst), Eigen::Index(l.src)));
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline EvalReport evaluate(LoadedPipeline& p, const Corpus& gold, double threshold) {
  const auto graphs = predict(p, gold, threshold);
  std::vector<Label> labels;
  PredictedLinks links;
  for (const auto& g : graphs) {
    for (const auto& t : g.types) labels.push_back(t.label);
    links[g.comment->id] = g.links;
  }
  return make_report(evaluate_links(links, gold), evaluate_types(labels, gold), threshold);
}

}  // namespace argmine::pipeline
