#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "argmine/corpus.hpp"
#include "argmine/error.hpp"

namespace argmine {

/// Harmonic mean of precision and recall; 0 whenever tp is 0.
inline double f1_binary(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  const double precision = double(tp) / double(tp + fp);
  const double recall = double(tp) / double(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

struct LinkConfusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  LinkConfusion& operator+=(const LinkConfusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  double precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
  double f1() const { return f1_binary(tp, fp, fn); }
};

/// Predicted edges per comment id. Comments absent from the map predict no edges.
using PredictedLinks = std::map<std::string, std::vector<Link>>;

inline LinkConfusion link_confusion(const Comment& gold, const std::vector<Link>& predicted) {
  std::set<std::pair<std::size_t, std::size_t>> pred;
  for (const auto& l : predicted) {
    if (l.src >= gold.size() || l.dst >= gold.size() || l.src == l.dst)
      throw ValidationError("comment " + gold.id + ": predicted edge (" + std::to_string(l.src) + " -> " +
                            std::to_string(l.dst) + ") is not a candidate pair");
    pred.emplace(l.src, l.dst);
  }
  LinkConfusion c;
  for (const auto& l : gold.links) {
    if (pred.count({l.src, l.dst}))
      ++c.tp;
    else
      ++c.fn;
  }
  c.fp = pred.size() - c.tp;
  c.tn = num_candidate_pairs(gold) - c.tp - c.fp - c.fn;
  return c;
}

/// Positive-class confusion over every directed candidate pair of `gold`.
inline LinkConfusion evaluate_links(const PredictedLinks& predicted, const Corpus& gold) {
  std::map<std::string_view, const Comment*> by_id;
  for (const auto& c : gold.comments) by_id[c.id] = &c;
  for (const auto& [id, edges] : predicted)
    if (!by_id.count(id)) throw ValidationError("prediction for unknown comment " + id);
  LinkConfusion total;
  static const std::vector<Link> none;
  for (const auto& c : gold.comments) {
    auto it = predicted.find(c.id);
    total += link_confusion(c, it == predicted.end() ? none : it->second);
  }
  return total;
}

struct TypeMetrics {
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion{};  // [gold][predicted]
  std::array<double, kNumLabels> precision{}, recall{}, f1{};
  std::array<std::size_t, kNumLabels> support{};
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;  // equals accuracy for single-label prediction
  double weighted_f1 = 0.0;
};

inline TypeMetrics type_metrics(const std::vector<Label>& gold, const std::vector<Label>& predicted) {
  if (gold.size() != predicted.size())
    throw ValidationError("type prediction count " + std::to_string(predicted.size()) + " differs from gold count " +
                          std::to_string(gold.size()));
  TypeMetrics m;
  for (std::size_t i = 0; i < gold.size(); ++i) ++m.confusion[index_of(gold[i])][index_of(predicted[i])];
  std::size_t correct = 0;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    const std::size_t tp = m.confusion[k][k];
    std::size_t pred_k = 0, gold_k = 0;
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      pred_k += m.confusion[j][k];
      gold_k += m.confusion[k][j];
    }
    m.support[k] = gold_k;
    m.precision[k] = pred_k ? double(tp) / double(pred_k) : 0.0;
    m.recall[k] = gold_k ? double(tp) / double(gold_k) : 0.0;
    m.f1[k] = f1_binary(tp, pred_k - tp, gold_k - tp);
    correct += tp;
    m.macro_f1 += m.f1[k] / double(kNumLabels);
    if (!gold.empty()) m.weighted_f1 += m.f1[k] * double(gold_k) / double(gold.size());
  }
  m.micro_f1 = gold.empty() ? 0.0 : double(correct) / double(gold.size());
  return m;
}

/// Scores one predicted label per proposition, in corpus order.
inline TypeMetrics evaluate_types(const std::vector<Label>& predicted, const Corpus& gold) {
  std::vector<Label> g;
  g.reserve(gold.num_propositions());
  for (const auto& c : gold.comments)
    for (const auto& p : c.propositions) g.push_back(p.label);
  return type_metrics(g, predicted);
}

// ---------------------------------------------------------------------------
// Result table

/// Half-up rounding to `digits` decimals, tolerant of binary representation error.
inline double round_half_up(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::floor(x * scale + 0.5 + 1e-9) / scale;
}

inline double round6(double x) { return std::round(x * 1e6) / 1e6; }

struct ResultRow {
  std::string system;
  double edge_f1 = 0.0;
  double type_f1 = 0.0;
  double average = 0.0;        // exact mean
  double average_shown = 0.0;  // rounded half-up to two decimals
  std::string note;
};

/// Published reference row for this approach: edge 0.25, type 0.81, printed average 0.52.
inline constexpr double kReferenceEdgeF1 = 0.25;
inline constexpr double kReferenceTypeF1 = 0.81;
inline constexpr double kReferencePrintedAverage = 0.52;

inline ResultRow table2_row(double edge_f1, double type_f1, std::string system = "this run",
                            std::optional<double> printed_average = std::nullopt) {
  ResultRow r;
  r.system = std::move(system);
  r.edge_f1 = edge_f1;
  r.type_f1 = type_f1;
  r.average = (edge_f1 + type_f1) / 2.0;
  r.average_shown = round_half_up(r.average, 2);
  if (printed_average && std::abs(*printed_average - r.average_shown) > 1e-9) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "printed average %.2f differs from computed mean %.2f", *printed_average,
                  r.average_shown);
    r.note = buf;
  }
  return r;
}

inline ResultRow reference_row() {
  return table2_row(kReferenceEdgeF1, kReferenceTypeF1, "reference", kReferencePrintedAverage);
}

struct EvalReport {
  double edge_f1 = 0.0;
  double type_f1 = 0.0;  // macro
  double average = 0.0;
  double type_micro_f1 = 0.0;
  double type_weighted_f1 = 0.0;
  std::array<double, kNumLabels> per_class_f1{};
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion{};
  LinkConfusion link_confusion;
  double threshold = 0.5;
};

inline EvalReport make_report(const LinkConfusion& links, const TypeMetrics& types, double threshold) {
  EvalReport r;
  r.edge_f1 = links.f1();
  r.type_f1 = types.macro_f1;
  r.average = (r.edge_f1 + r.type_f1) / 2.0;
  r.type_micro_f1 = types.micro_f1;
  r.type_weighted_f1 = types.weighted_f1;
  r.per_class_f1 = types.f1;
  r.confusion = types.confusion;
  r.link_confusion = links;
  r.threshold = threshold;
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json per_class;
  for (Label l : kLabels) per_class[std::string(label_name(l))] = round6(r.per_class_f1[index_of(l)]);
  nlohmann::ordered_json confusion = nlohmann::ordered_json::array();
  for (const auto& row : r.confusion) confusion.push_back(row);
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (Label l : kLabels) labels.push_back(label_name(l));
  const auto& lc = r.link_confusion;
  return {{"edge_f1", round6(r.edge_f1)},
          {"type_f1", round6(r.type_f1)},
          {"average", round6(r.average)},
          {"type_micro_f1", round6(r.type_micro_f1)},
          {"type_weighted_f1", round6(r.type_weighted_f1)},
          {"per_class_f1", per_class},
          {"labels", labels},
          {"confusion", confusion},
          {"link_confusion", {{"tp", lc.tp}, {"fp", lc.fp}, {"fn", lc.fn}, {"tn", lc.tn}}},
          {"link_precision", round6(lc.precision())},
          {"link_recall", round6(lc.recall())},
          {"threshold", round6(r.threshold)}};
}

/// Aligned text table in the Edge / Type / Average column layout.
inline std::string to_text(const EvalReport& r) {
  std::ostringstream os;
  char buf[256];
  auto row = [&](const ResultRow& x) {
    std::snprintf(buf, sizeof buf, "%-12s %16.2f %16.2f %10.2f", x.system.c_str(), x.edge_f1, x.type_f1,
                  x.average_shown);
    os << buf;
    if (!x.note.empty()) os << "   (" << x.note << ')';
    os << '\n';
  };
  std::snprintf(buf, sizeof buf, "%-12s %16s %16s %10s\n", "Model", "Edge Prediction", "Type Prediction", "Average");
  os << buf;
  row(reference_row());
  row(table2_row(r.edge_f1, r.type_f1));
  os << '\n';
  std::snprintf(buf, sizeof buf, "type F1: macro %.4f  micro %.4f  weighted %.4f\n", r.type_f1, r.type_micro_f1,
                r.type_weighted_f1);
  os << buf;
  for (Label l : kLabels) {
    std::snprintf(buf, sizeof buf, "  %-10s F1 %.4f\n", std::string(label_name(l)).c_str(), r.per_class_f1[index_of(l)]);
    os << buf;
  }
  const auto& lc = r.link_confusion;
  std::snprintf(buf, sizeof buf, "links: tp %zu fp %zu fn %zu tn %zu  precision %.4f recall %.4f F1 %.4f (threshold %.2f)\n",
                lc.tp, lc.fp, lc.fn, lc.tn, lc.precision(), lc.recall(), lc.f1(), r.threshold);
  os << buf;
  os << "confusion (rows gold, columns predicted):\n";
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    std::snprintf(buf, sizeof buf, "  %-10s", std::string(label_name(kLabels[i])).c_str());
    os << buf;
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      std::snprintf(buf, sizeof buf, " %6zu", r.confusion[i][j]);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace argmine
