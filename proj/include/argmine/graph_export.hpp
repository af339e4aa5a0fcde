#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "argmine/corpus.hpp"
#include "argmine/metrics.hpp"
#include "argmine/type_classifier.hpp"

namespace argmine {

/// Predicted argument graph for one comment.
struct PredictedGraph {
  const Comment* comment = nullptr;
  std::vector<TypePrediction> types;  // one per proposition
  std::vector<Link> links;            // src = premise, dst = conclusion
  std::vector<double> link_scores;    // aligned with links
};

/// One JSON object per comment, in the normalized corpus layout with predicted
/// labels and edges plus label distributions and edge scores.
inline nlohmann::ordered_json to_json(const PredictedGraph& g) {
  const Comment& c = *g.comment;
  nlohmann::ordered_json props = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < c.size(); ++i) {
    nlohmann::ordered_json dist;
    for (Label l : kLabels) dist[std::string(label_name(l))] = round6(g.types[i].distribution[index_of(l)]);
    props.push_back({{"start", c.propositions[i].start},
                     {"end", c.propositions[i].end},
                     {"label", label_name(g.types[i].label)},
                     {"distribution", dist}});
  }
  nlohmann::ordered_json links = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < g.links.size(); ++k)
    links.push_back({{"src", g.links[k].src}, {"dst", g.links[k].dst}, {"score", round6(g.link_scores[k])}});
  return {{"id", c.id}, {"text", c.text}, {"propositions", props}, {"links", links}, {"split", split_name(c.split)}};
}

inline void write_json(std::ostream& out, const std::vector<PredictedGraph>& graphs) {
  for (const auto& g : graphs) out << to_json(g).dump() << '\n';
}

namespace detail {

inline std::string dot_escape(std::string_view s, std::size_t max_chars) {
  std::string out;
  const auto cps = utf8::decode(s);
  const bool cut = cps.size() > max_chars;
  for (char32_t cp : std::u32string_view(cps).substr(0, max_chars)) {
    if (cp == U'"' || cp == U'\\')
      out.push_back('\\'), out.push_back(char(cp));
    else if (cp == U'\n' || cp == U'\r')
      out.push_back(' ');
    else
      utf8::append(out, cp);
  }
  if (cut) out += "...";
  return out;
}

}  // namespace detail

/// One digraph per comment; nodes are labeled with index and predicted type,
/// edges run premise -> conclusion.
inline void write_dot(std::ostream& out, const std::vector<PredictedGraph>& graphs) {
  for (const auto& g : graphs) {
    const Comment& c = *g.comment;
    out << "digraph \"" << detail::dot_escape(c.id, 200) << "\" {\n";
    out << "  rankdir=BT;\n  node [shape=box];\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::string type(label_name(g.types[i].label));
      for (auto& ch : type) ch = char(std::toupper(static_cast<unsigned char>(ch)));
      out << "  p" << i << " [label=\"" << i << ": " << type << "\\n"
          << detail::dot_escape(c.propositions[i].text, 60) << "\"];\n";
    }
    for (const auto& l : g.links) out << "  p" << l.src << " -> p" << l.dst << ";\n";
    out << "}\n";
  }
}

}  // namespace argmine
