#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "argmine/encoder.hpp"
#include "argmine/error.hpp"
#include "argmine/link_predictor.hpp"
#include "argmine/type_classifier.hpp"

namespace argmine {

struct RunPaths {
  std::string corpus;                  // normalized JSONL
  std::string artifacts = "artifacts"; // model directories live here
  std::string cache;                   // embedding cache; defaults under artifacts
};

/// Every tunable of a run, addressable by flat dotted keys such as
/// "link.dropout". The top-level seed overrides the per-phase seeds.
struct RunConfig {
  EncoderConfig encoder;
  TypeClassifierConfig type;
  LinkModelConfig link;
  RunPaths paths;
  std::uint64_t seed = 13;

  void propagate_seed() {
    type.seed = seed;
    link.seed = seed;
  }
};

namespace detail {

template <class V>
V as(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<V, std::string>) {
      if (v.is_string()) return v.get<std::string>();
      throw ConfigError("");
    } else if constexpr (std::is_same_v<V, bool>) {
      if (v.is_boolean()) return v.get<bool>();
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
      }
      throw ConfigError("");
    } else {
      if (v.is_number()) return v.get<V>();
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        std::size_t pos = 0;
        double d = std::stod(s, &pos);
        if (pos != s.size()) throw ConfigError("");
        return V(d);
      }
      throw ConfigError("");
    }
  } catch (const std::exception&) {
    throw ConfigError("invalid value " + v.dump() + " for config key " + key);
  }
}

struct Binding {
  std::function<void(RunConfig&, const nlohmann::json&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

#define ARGMINE_BIND(KEY, MEMBER, TYPE)                                                          \
  {                                                                                              \
    KEY, Binding {                                                                               \
      [](RunConfig& c, const nlohmann::json& v) { c.MEMBER = as<TYPE>(v, KEY); },                \
          [](const RunConfig& c) { return nlohmann::json(c.MEMBER); }                            \
    }                                                                                            \
  }

inline const std::vector<std::pair<std::string, Binding>>& bindings() {
  static const std::vector<std::pair<std::string, Binding>> table = {
      ARGMINE_BIND("seed", seed, std::uint64_t),
      ARGMINE_BIND("encoder.checkpoint_id", encoder.checkpoint_id, std::string),
      ARGMINE_BIND("encoder.max_tokens", encoder.max_tokens, std::size_t),
      ARGMINE_BIND("encoder.num_layers", encoder.num_layers, int),
      ARGMINE_BIND("encoder.hidden_dim", encoder.hidden_dim, int),
      ARGMINE_BIND("type.epochs", type.epochs, int),
      ARGMINE_BIND("type.learning_rate", type.learning_rate, double),
      ARGMINE_BIND("type.weight_decay", type.weight_decay, double),
      ARGMINE_BIND("type.batch_size", type.batch_size, int),
      ARGMINE_BIND("type.max_grad_norm", type.max_grad_norm, double),
      ARGMINE_BIND("type.linear_decay", type.linear_decay, bool),
      ARGMINE_BIND("type.head_dropout", type.head_dropout, double),
      ARGMINE_BIND("link.pooling_layers", link.pooling_layers, int),
      ARGMINE_BIND("link.progression_difference", link.progression_difference, double),
      ARGMINE_BIND("link.context_dim", link.context_dim, int),
      ARGMINE_BIND("link.num_heads", link.num_heads, int),
      ARGMINE_BIND("link.feedforward_dim", link.feedforward_dim, int),
      ARGMINE_BIND("link.projection_dim", link.projection_dim, int),
      ARGMINE_BIND("link.dropout", link.dropout, double),
      ARGMINE_BIND("link.epochs", link.epochs, int),
      ARGMINE_BIND("link.learning_rate", link.learning_rate, double),
      ARGMINE_BIND("link.weight_decay", link.weight_decay, double),
      ARGMINE_BIND("link.early_stop_patience", link.early_stop_patience, int),
      ARGMINE_BIND("link.decision_threshold", link.decision_threshold, double),
      ARGMINE_BIND("link.positive_weight", link.positive_weight, double),
      ARGMINE_BIND("link.logit_scale", link.logit_scale, double),
      {"link.loss",
       {[](RunConfig& c, const nlohmann::json& v) { c.link.loss = parse_link_loss(as<std::string>(v, "link.loss")); },
        [](const RunConfig& c) { return nlohmann::json(c.link.loss == LinkLoss::Mse ? "mse" : "bce"); }}},
      {"link.decision_score",
       {[](RunConfig& c, const nlohmann::json& v) {
          c.link.decision_score = parse_decision_score(as<std::string>(v, "link.decision_score"));
        },
        [](const RunConfig& c) {
          return nlohmann::json(c.link.decision_score == DecisionScore::Raw ? "raw" : "calibrated");
        }}},
      ARGMINE_BIND("link.positional_encoding", link.positional_encoding, bool),
      ARGMINE_BIND("link.tune_threshold", link.tune_threshold, bool),
      ARGMINE_BIND("link.batch_comments", link.batch_comments, int),
      ARGMINE_BIND("link.dev_fraction", link.dev_fraction, double),
      ARGMINE_BIND("link.max_propositions", link.max_propositions, int),
      ARGMINE_BIND("link.max_grad_norm", link.max_grad_norm, double),
      ARGMINE_BIND("paths.corpus", paths.corpus, std::string),
      ARGMINE_BIND("paths.artifacts", paths.artifacts, std::string),
      ARGMINE_BIND("paths.cache", paths.cache, std::string),
  };
  return table;
}

#undef ARGMINE_BIND

inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

inline void set_config_value(RunConfig& cfg, const std::string& key, const nlohmann::json& value) {
  for (const auto& [k, b] : detail::bindings())
    if (k == key) {
      b.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

/// All settings as flat dotted keys in a fixed order.
inline nlohmann::ordered_json to_flat_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& [k, b] : detail::bindings()) j[k] = b.get(cfg);
  return j;
}

inline void apply_flat_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object of dotted keys");
  for (const auto& [k, v] : j.items()) set_config_value(cfg, k, v);
}

inline RunConfig load_run_config(const fs::path& path) {
  RunConfig cfg;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_flat_json(cfg, j);
  return cfg;
}

namespace detail {

inline nlohmann::ordered_json subset(const RunConfig& cfg, std::initializer_list<std::string_view> prefixes) {
  nlohmann::ordered_json out;
  const auto flat = to_flat_json(cfg);
  for (const auto& [k, v] : flat.items())
    for (auto p : prefixes)
      if (k.starts_with(p)) out[k] = v;
  return out;
}

}  // namespace detail

/// Content address of a type-classifier run: encoder and type settings plus seed.
inline std::string type_config_hash(const RunConfig& cfg) {
  return detail::fnv1a_hex(detail::subset(cfg, {"seed", "encoder.", "type."}).dump());
}

/// Content address of a link run; chains the type hash so the two phases
/// cannot be mixed across encoder settings.
inline std::string link_config_hash(const RunConfig& cfg) {
  auto j = detail::subset(cfg, {"seed", "link."});
  j["type_hash"] = type_config_hash(cfg);
  return detail::fnv1a_hex(j.dump());
}

inline fs::path type_artifact_dir(const RunConfig& cfg) {
  return fs::path(cfg.paths.artifacts) / ("type-" + type_config_hash(cfg));
}

inline fs::path link_artifact_dir(const RunConfig& cfg) {
  return fs::path(cfg.paths.artifacts) / ("link-" + link_config_hash(cfg));
}

inline fs::path embedding_cache_stem(const RunConfig& cfg) {
  const fs::path root = cfg.paths.cache.empty() ? fs::path(cfg.paths.artifacts) / "cache" : fs::path(cfg.paths.cache);
  return root / ("states-" + type_config_hash(cfg) + "-n" + std::to_string(cfg.link.pooling_layers));
}

}  // namespace argmine
