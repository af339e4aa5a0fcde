#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "argmine/error.hpp"
#include "argmine/utf8.hpp"

namespace argmine {

namespace fs = std::filesystem;

// Fixed label order; it doubles as the argmax tie-break order.
enum class Label : std::uint8_t { Value = 0, Policy, Reference, Fact, Testimony };

inline constexpr std::size_t kNumLabels = 5;
inline constexpr std::array<Label, kNumLabels> kLabels = {Label::Value, Label::Policy, Label::Reference,
                                                          Label::Fact, Label::Testimony};

constexpr std::size_t index_of(Label l) { return static_cast<std::size_t>(l); }

inline std::string_view label_name(Label l) {
  static constexpr std::array<std::string_view, kNumLabels> names = {"value", "policy", "reference", "fact",
                                                                     "testimony"};
  return names[index_of(l)];
}

inline Label parse_label(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (Label l : kLabels)
    if (label_name(l) == lower) return l;
  throw ParseError("unknown proposition label '" + std::string(name) + "'");
}

enum class Split : std::uint8_t { Train, Test };

inline std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw ParseError("unknown split '" + std::string(name) + "'");
}

struct Proposition {
  std::size_t start = 0;  // code points, inclusive
  std::size_t end = 0;    // code points, exclusive
  Label label = Label::Value;
  std::string text;

  bool operator==(const Proposition&) const = default;
};

enum class LinkFamily : std::uint8_t { Unknown, Reason, Evidence };

// src is the premise, dst the conclusion. Identity is (src, dst); the
// family is carried along as metadata only.
struct Link {
  std::size_t src = 0;
  std::size_t dst = 0;
  LinkFamily family = LinkFamily::Unknown;

  friend bool operator==(const Link& a, const Link& b) { return a.src == b.src && a.dst == b.dst; }
  friend auto operator<=>(const Link& a, const Link& b) {
    return std::pair(a.dst, a.src) <=> std::pair(b.dst, b.src);
  }
};

struct Comment {
  std::string id;
  std::string text;
  std::vector<Proposition> propositions;
  std::vector<Link> links;  // sorted by (dst, src), unique
  Split split = Split::Train;

  std::size_t size() const { return propositions.size(); }

  bool has_link(std::size_t src, std::size_t dst) const {
    return std::binary_search(links.begin(), links.end(), Link{src, dst});
  }

  bool operator==(const Comment& o) const {
    if (id != o.id || text != o.text || propositions != o.propositions || split != o.split ||
        links.size() != o.links.size())
      return false;
    for (std::size_t i = 0; i < links.size(); ++i)
      if (!(links[i] == o.links[i]) || links[i].family != o.links[i].family) return false;
    return true;
  }
};

struct Corpus {
  std::vector<Comment> comments;

  std::size_t num_propositions() const {
    std::size_t n = 0;
    for (const auto& c : comments) n += c.size();
    return n;
  }
  bool operator==(const Corpus&) const = default;
};

// Sorts and deduplicates links, keeping the first family seen for a pair.
inline void normalize_links(std::vector<Link>& links) {
  std::stable_sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());
}

inline void validate(const Comment& c) {
  const auto where = [&] { return "comment " + c.id + ": "; };
  const auto cps = utf8::decode(c.text);
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < c.propositions.size(); ++i) {
    const auto& p = c.propositions[i];
    if (!(p.start < p.end && p.end <= cps.size()))
      throw ValidationError(where() + "proposition " + std::to_string(i) + " span [" + std::to_string(p.start) +
                            ", " + std::to_string(p.end) + ") outside text of length " +
                            std::to_string(cps.size()));
    if (i > 0 && p.start < prev_end)
      throw ValidationError(where() + "proposition " + std::to_string(i) + " overlaps or precedes its predecessor");
    prev_end = p.end;
    if (p.text != utf8::encode(std::u32string_view(cps).substr(p.start, p.end - p.start)))
      throw ValidationError(where() + "proposition " + std::to_string(i) + " text does not match its span");
  }
  for (std::size_t i = 0; i < c.links.size(); ++i) {
    const auto& l = c.links[i];
    if (l.src == l.dst) throw ValidationError(where() + "self-link on proposition " + std::to_string(l.src));
    if (l.src >= c.size() || l.dst >= c.size())
      throw ValidationError(where() + "link (" + std::to_string(l.src) + " -> " + std::to_string(l.dst) +
                            ") references a proposition outside the comment");
    if (i > 0 && !(c.links[i - 1] < l)) throw ValidationError(where() + "duplicate or unsorted links");
  }
}

inline void validate(const Corpus& corpus) {
  std::set<std::string_view> ids;
  for (const auto& c : corpus.comments) {
    if (!ids.insert(c.id).second) throw ValidationError("duplicate comment id " + c.id);
    validate(c);
  }
}

// Fills proposition text from the spans and validates the result.
inline void finalize(Comment& c) {
  const auto cps = utf8::decode(c.text);
  for (std::size_t i = 0; i < c.propositions.size(); ++i) {
    auto& p = c.propositions[i];
    if (!(p.start < p.end && p.end <= cps.size()))
      throw ValidationError("comment " + c.id + ": proposition " + std::to_string(i) + " span [" +
                            std::to_string(p.start) + ", " + std::to_string(p.end) + ") outside text of length " +
                            std::to_string(cps.size()));
    p.text = utf8::encode(std::u32string_view(cps).substr(p.start, p.end - p.start));
  }
  normalize_links(c.links);
  validate(c);
}

/// All ordered (src, dst) pairs with src != dst, row-major by dst then src.
inline std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(const Comment& c) {
  const std::size_t m = c.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (m > 1) pairs.reserve(m * (m - 1));
  for (std::size_t dst = 0; dst < m; ++dst)
    for (std::size_t src = 0; src < m; ++src)
      if (src != dst) pairs.emplace_back(src, dst);
  return pairs;
}

inline std::size_t num_candidate_pairs(const Comment& c) { return c.size() < 2 ? 0 : c.size() * (c.size() - 1); }

// ---------------------------------------------------------------------------
// Raw release adapters

class CorpusAdapter {
 public:
  virtual ~CorpusAdapter() = default;
  virtual std::vector<Comment> read(const fs::path& split_dir, Split split) const = 0;
};

namespace detail {

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Python text mode (used to produce the release offsets) maps CRLF and CR to LF.
inline std::string universal_newlines(std::string s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

}  // namespace detail

/// Reader for the public CDCP release: `<id>.txt` holds the comment and
/// `<id>.ann.json` holds `prop_offsets`, `prop_labels`, and `reasons` /
/// `evidences` lists of `[[first, last], target]` with inclusive source ranges.
class CdcpAdapter final : public CorpusAdapter {
 public:
  std::vector<Comment> read(const fs::path& split_dir, Split split) const override {
    std::vector<fs::path> annotations;
    for (const auto& entry : fs::directory_iterator(split_dir)) {
      const auto name = entry.path().filename().string();
      if (entry.is_regular_file() && name.size() > 9 && name.ends_with(".ann.json")) annotations.push_back(entry.path());
    }
    std::sort(annotations.begin(), annotations.end());
    std::vector<Comment> out;
    out.reserve(annotations.size());
    for (const auto& ann : annotations) out.push_back(read_one(ann, split));
    return out;
  }

  static Comment read_one(const fs::path& ann_path, Split split) {
    const auto fname = ann_path.filename().string();
    Comment c;
    c.id = fname.substr(0, fname.size() - std::string_view(".ann.json").size());
    c.split = split;
    const auto txt_path = ann_path.parent_path() / (c.id + ".txt");
    c.text = detail::universal_newlines(detail::read_file(txt_path));

    nlohmann::json ann;
    try {
      ann = nlohmann::json::parse(detail::read_file(ann_path));
      const auto& offsets = ann.at("prop_offsets");
      const auto& labels = ann.at("prop_labels");
      if (!offsets.is_array() || !labels.is_array() || offsets.size() != labels.size())
        throw ParseError("prop_offsets and prop_labels must be arrays of equal length");
      for (std::size_t i = 0; i < offsets.size(); ++i) {
        const auto& o = offsets[i];
        if (!o.is_array() || o.size() != 2) throw ParseError("prop_offsets entry must be [start, end]");
        Proposition p;
        p.start = o[0].get<std::size_t>();
        p.end = o[1].get<std::size_t>();
        p.label = parse_label(labels[i].get<std::string>());
        c.propositions.push_back(std::move(p));
      }
      read_links(ann, "reasons", LinkFamily::Reason, c);
      read_links(ann, "evidences", LinkFamily::Evidence, c);
    } catch (const ParseError& e) {
      throw ParseError("comment " + c.id + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("comment " + c.id + ": malformed annotation: " + e.what());
    }
    finalize(c);
    return c;
  }

 private:
  static void read_links(const nlohmann::json& ann, const char* key, LinkFamily family, Comment& c) {
    if (!ann.contains(key) || ann[key].is_null()) return;
    const auto& list = ann[key];
    if (!list.is_array()) throw ParseError(std::string(key) + " must be an array");
    for (const auto& rec : list) {
      if (!rec.is_array() || rec.size() != 2 || !rec[0].is_array() || rec[0].size() != 2)
        throw ParseError(std::string(key) + " entry must be [[first, last], target]");
      const auto first = rec[0][0].get<std::size_t>();
      const auto last = rec[0][1].get<std::size_t>();
      const auto dst = rec[1].get<std::size_t>();
      if (last < first) throw ParseError(std::string(key) + " source range is reversed");
      for (std::size_t src = first; src <= last; ++src) c.links.push_back({src, dst, family});
    }
  }
};

/// Loads one split. `directory` may be the release root (containing
/// `train/` and `test/`) or the split directory itself.
inline Corpus load_corpus(const fs::path& directory, Split split, const CorpusAdapter& adapter = CdcpAdapter{}) {
  if (!fs::is_directory(directory)) throw IoError("corpus directory not found: " + directory.string());
  auto split_dir = directory / split_name(split);
  if (!fs::is_directory(split_dir)) split_dir = directory;
  Corpus corpus{adapter.read(split_dir, split)};
  validate(corpus);
  return corpus;
}

inline Corpus load_corpus(const fs::path& directory) {
  auto corpus = load_corpus(directory, Split::Train);
  auto test = load_corpus(directory, Split::Test);
  for (auto& c : test.comments) corpus.comments.push_back(std::move(c));
  validate(corpus);
  return corpus;
}

inline Corpus filter_split(const Corpus& corpus, Split split) {
  Corpus out;
  for (const auto& c : corpus.comments)
    if (c.split == split) out.comments.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Normalized newline-delimited JSON

inline std::string_view family_name(LinkFamily f) {
  switch (f) {
    case LinkFamily::Reason:
      return "reason";
    case LinkFamily::Evidence:
      return "evidence";
    default:
      return "";
  }
}

inline nlohmann::ordered_json to_json(const Comment& c) {
  nlohmann::ordered_json props = nlohmann::ordered_json::array();
  for (const auto& p : c.propositions)
    props.push_back({{"start", p.start}, {"end", p.end}, {"label", label_name(p.label)}});
  nlohmann::ordered_json links = nlohmann::ordered_json::array();
  for (const auto& l : c.links) {
    nlohmann::ordered_json j = {{"src", l.src}, {"dst", l.dst}};
    if (l.family != LinkFamily::Unknown) j["family"] = family_name(l.family);
    links.push_back(std::move(j));
  }
  return {{"id", c.id}, {"text", c.text}, {"propositions", props}, {"links", links}, {"split", split_name(c.split)}};
}

/// Parses one normalized record. With `require_labels = false` a missing
/// label defaults to VALUE (prediction inputs carry no gold labels).
inline Comment comment_from_json(const nlohmann::json& j, bool require_labels = true) {
  Comment c;
  try {
    c.id = j.at("id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("record without a valid id: ") + e.what());
  }
  try {
    c.text = j.at("text").get<std::string>();
    for (const auto& p : j.at("propositions")) {
      Proposition prop;
      prop.start = p.at("start").get<std::size_t>();
      prop.end = p.at("end").get<std::size_t>();
      if (p.contains("label") && !p["label"].is_null())
        prop.label = parse_label(p["label"].get<std::string>());
      else if (require_labels)
        throw ParseError("proposition without label");
      c.propositions.push_back(std::move(prop));
    }
    if (j.contains("links"))
      for (const auto& l : j["links"]) {
        Link link{l.at("src").get<std::size_t>(), l.at("dst").get<std::size_t>()};
        if (l.contains("family")) {
          const auto f = l["family"].get<std::string>();
          link.family = f == "reason" ? LinkFamily::Reason : f == "evidence" ? LinkFamily::Evidence : LinkFamily::Unknown;
        }
        c.links.push_back(link);
      }
    c.split = j.contains("split") ? parse_split(j["split"].get<std::string>()) : Split::Test;
  } catch (const ParseError& e) {
    throw ParseError("comment " + c.id + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("comment " + c.id + ": " + e.what());
  }
  finalize(c);
  return c;
}

inline void write_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& c : corpus.comments) out << to_json(c).dump() << '\n';
}

inline void write_jsonl(const fs::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_jsonl(out, corpus);
  if (!out) throw IoError("write failed for " + path.string());
}

inline Corpus read_jsonl(std::istream& in, bool require_labels = true) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    corpus.comments.push_back(comment_from_json(j, require_labels));
  }
  validate(corpus);
  return corpus;
}

inline Corpus read_jsonl(const fs::path& path, bool require_labels = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_jsonl(in, require_labels);
}

// ---------------------------------------------------------------------------
// Statistics

struct StatsReport {
  std::size_t num_comments = 0;
  std::size_t num_propositions = 0;
  std::array<std::size_t, kNumLabels> label_counts{};
  std::array<double, kNumLabels> label_fractions{};
  std::size_t num_links = 0;
  std::size_t num_candidate_pairs = 0;
  double link_rate = 0.0;  // links / ordered candidate pairs; 0 when there are no pairs
};

inline StatsReport corpus_stats(const Corpus& corpus) {
  StatsReport s;
  s.num_comments = corpus.comments.size();
  for (const auto& c : corpus.comments) {
    s.num_propositions += c.size();
    for (const auto& p : c.propositions) ++s.label_counts[index_of(p.label)];
    s.num_links += c.links.size();
    s.num_candidate_pairs += num_candidate_pairs(c);
  }
  for (std::size_t k = 0; k < kNumLabels; ++k)
    s.label_fractions[k] = s.num_propositions ? double(s.label_counts[k]) / double(s.num_propositions) : 0.0;
  s.link_rate = s.num_candidate_pairs ? double(s.num_links) / double(s.num_candidate_pairs) : 0.0;
  return s;
}

/// Published CDCP split sizes used to verify a freshly prepared corpus.
struct ReferenceCounts {
  std::size_t propositions;
  std::array<std::size_t, kNumLabels> labels;
};

inline constexpr ReferenceCounts kCdcpTrain{3698, {1633, 611, 24, 592, 838}};
inline constexpr ReferenceCounts kCdcpTest{1233, {544, 204, 8, 197, 280}};
inline constexpr std::size_t kCdcpComments = 731;

/// Returns one message per mismatch against the reference counts.
inline std::vector<std::string> check_counts(const StatsReport& s, const ReferenceCounts& ref, std::string_view what) {
  std::vector<std::string> problems;
  if (s.num_propositions != ref.propositions)
    problems.push_back(std::string(what) + ": " + std::to_string(s.num_propositions) + " propositions, expected " +
                       std::to_string(ref.propositions));
  for (Label l : kLabels)
    if (s.label_counts[index_of(l)] != ref.labels[index_of(l)])
      problems.push_back(std::string(what) + ": " + std::to_string(s.label_counts[index_of(l)]) + " " +
                         std::string(label_name(l)) + ", expected " + std::to_string(ref.labels[index_of(l)]));
  return problems;
}

}  // namespace argmine
