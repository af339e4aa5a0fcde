#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "argmine/corpus.hpp"
#include "argmine/encoder.hpp"
#include "argmine/utf8.hpp"

namespace argmine::testing {

namespace fs = std::filesystem;

#ifndef ARGMINE_TEST_DATA_DIR
#define ARGMINE_TEST_DATA_DIR "tests/data"
#endif

inline fs::path data_dir() { return ARGMINE_TEST_DATA_DIR; }
inline fs::path oracle_dir() { return data_dir() / "oracle"; }

/// Fresh empty directory under the system temp dir.
inline fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("argmine-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Sentence templates per label; a comment puts its POLICY claim first and
// the other propositions support it.
inline const std::vector<std::vector<std::string>>& templates() {
  static const std::vector<std::vector<std::string>> t = {
      // VALUE
      {"these collection calls are unfair and abusive.", "harassing people at work is wrong.",
       "this practice is deeply unfair to consumers.", "such pressure is abusive and cruel."},
      // POLICY
      {"the agency should ban calls after nine at night.", "collectors must stop calling people at work.",
       "the rule should limit calls to one per week.", "the bureau should require written notice first."},
      // REFERENCE
      {"see section 1006 of the regulation.", "see www.example.gov/rule for the text."},
      // FACT
      {"collectors called twelve times last week.", "most debts sold to collectors are very old.",
       "the current rule allows calls every day."},
      // TESTIMONY
      {"i was harassed by a collector at my job.", "they called my mother about my debt.",
       "i received seven calls in one day.", "my café shift was interrupted by their calls."},
  };
  return t;
}

/// Every word appearing in the templates, for building a toy vocabulary.
inline std::vector<std::string> template_words() {
  std::set<std::string> words;
  for (const auto& group : templates())
    for (const auto& s : group) {
      std::string cur;
      for (char ch : s) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u) || u >= 0x80) {
          cur.push_back(ch);
        } else {
          if (!cur.empty()) words.insert(cur);
          cur.clear();
        }
      }
      if (!cur.empty()) words.insert(cur);
    }
  words.insert("cafe");  // accent-stripped form
  return {words.begin(), words.end()};
}

struct SyntheticOptions {
  std::size_t train_comments = 12;
  std::size_t test_comments = 4;
  std::size_t min_props = 2;
  std::size_t max_props = 6;
  std::uint64_t seed = 5;
};

/// A small corpus with CDCP-like structure. Links: every VALUE, FACT and
/// TESTIMONY proposition supports the first (POLICY) proposition; a
/// REFERENCE supports the proposition right before it.
inline Corpus synthetic_corpus(const SyntheticOptions& o = {}) {
  std::mt19937_64 rng(o.seed);
  Corpus corpus;
  const std::size_t total = o.train_comments + o.test_comments;
  for (std::size_t k = 0; k < total; ++k) {
    Comment c;
    char id[24];
    std::snprintf(id, sizeof id, "%05zu", k);
    c.id = id;
    c.split = k < o.train_comments ? Split::Train : Split::Test;
    const std::size_t m = o.min_props + rng() % (o.max_props - o.min_props + 1);
    std::vector<Label> labels{Label::Policy};
    for (std::size_t i = 1; i < m; ++i) {
      const auto r = rng() % 10;
      labels.push_back(r < 4 ? Label::Value : r < 6 ? Label::Fact : r < 9 ? Label::Testimony : Label::Reference);
    }
    std::u32string text;
    for (std::size_t i = 0; i < m; ++i) {
      if (i) text += U"  ";
      const auto& group = templates()[index_of(labels[i])];
      const auto sentence = utf8::decode(group[rng() % group.size()]);
      Proposition p;
      p.start = text.size();
      text += sentence;
      p.end = text.size();
      p.label = labels[i];
      c.propositions.push_back(p);
    }
    text += U"\n";
    c.text = utf8::encode(text);
    for (std::size_t i = 1; i < m; ++i) {
      if (labels[i] == Label::Reference)
        c.links.push_back({i, i - 1, LinkFamily::Evidence});
      else
        c.links.push_back({i, 0, labels[i] == Label::Fact ? LinkFamily::Evidence : LinkFamily::Reason});
    }
    finalize(c);
    corpus.comments.push_back(std::move(c));
  }
  validate(corpus);
  return corpus;
}

/// The first `n` propositions of `corpus` (TRAIN split), keeping whole
/// comments and trimming the last one; links to dropped propositions go too.
inline Corpus first_propositions(const Corpus& corpus, std::size_t n) {
  Corpus out;
  std::size_t taken = 0;
  for (const auto& c : corpus.comments) {
    if (taken == n) break;
    if (c.split != Split::Train) continue;
    Comment k = c;
    const std::size_t keep = std::min(k.size(), n - taken);
    k.propositions.resize(keep);
    std::erase_if(k.links, [&](const Link& l) { return l.src >= keep || l.dst >= keep; });
    taken += keep;
    out.comments.push_back(std::move(k));
  }
  return out;
}

/// Writes `corpus` in the release layout (<root>/<split>/<id>.txt and
/// <id>.ann.json). Consecutive premises of one target are written as ranges.
inline void write_cdcp_release(const fs::path& root, const Corpus& corpus) {
  for (const auto& c : corpus.comments) {
    const auto dir = root / split_name(c.split);
    write_file(dir / (c.id + ".txt"), c.text);
    nlohmann::json ann;
    ann["prop_offsets"] = nlohmann::json::array();
    ann["prop_labels"] = nlohmann::json::array();
    for (const auto& p : c.propositions) {
      ann["prop_offsets"].push_back({p.start, p.end});
      ann["prop_labels"].push_back(label_name(p.label));
    }
    for (auto [family, key] : {std::pair{LinkFamily::Reason, "reasons"}, std::pair{LinkFamily::Evidence, "evidences"}}) {
      nlohmann::json list = nlohmann::json::array();
      std::vector<Link> ls;
      for (const auto& l : c.links)
        if (l.family == family) ls.push_back(l);
      std::sort(ls.begin(), ls.end(), [](const Link& a, const Link& b) {
        return std::pair(a.dst, a.src) < std::pair(b.dst, b.src);
      });
      for (std::size_t i = 0; i < ls.size();) {
        std::size_t j = i;
        while (j + 1 < ls.size() && ls[j + 1].dst == ls[i].dst && ls[j + 1].src == ls[j].src + 1) ++j;
        list.push_back({{ls[i].src, ls[j].src}, ls[i].dst});
        i = j + 1;
      }
      ann[key] = list.empty() ? nlohmann::json(nullptr) : list;
    }
    write_file(dir / (c.id + ".ann.json"), ann.dump());
  }
}

/// Vocabulary covering the synthetic templates plus the usual specials.
inline std::vector<std::string> toy_vocab() {
  std::vector<std::string> v{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (const char* p : {".", ",", "/", "-", "'", "!", "?"}) v.emplace_back(p);
  for (auto& w : template_words()) v.push_back(w);
  for (const char* p : {"##s", "##ed", "##ing"}) v.emplace_back(p);
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (auto& w : v)
    if (seen.insert(w).second) out.push_back(w);
  return out;
}

inline BertConfig toy_bert_config(std::size_t vocab_size) {
  BertConfig c;
  c.vocab_size = int(vocab_size);
  c.hidden_size = 32;
  c.num_hidden_layers = 4;
  c.num_attention_heads = 4;
  c.intermediate_size = 64;
  c.max_position_embeddings = 64;
  c.hidden_dropout_prob = 0.1;
  c.attention_probs_dropout_prob = 0.1;
  return c;
}

/// Writes a randomly initialized checkpoint that load_checkpoint accepts.
inline fs::path write_toy_checkpoint(const fs::path& dir, std::uint64_t seed = 3) {
  const auto vocab = toy_vocab();
  const auto config = toy_bert_config(vocab.size());
  BertModel<float> model(config);
  nn::Rng rng(seed);
  model.init_random(rng, 0.1);
  save_checkpoint(dir, config, vocab, model);
  return dir;
}

inline EncoderConfig toy_encoder_config(const fs::path& checkpoint) {
  EncoderConfig e;
  e.checkpoint_id = checkpoint.string();
  e.max_tokens = 32;
  e.num_layers = 4;
  e.hidden_dim = 32;
  return e;
}

}  // namespace argmine::testing
