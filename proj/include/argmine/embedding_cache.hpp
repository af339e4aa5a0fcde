#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "argmine/corpus.hpp"
#include "argmine/encoder.hpp"
#include "argmine/error.hpp"
#include "argmine/link_predictor.hpp"

namespace argmine {

/// Precomputes the last `keep_layers` sentence-token states of every proposition.
inline StateTable compute_states(const Corpus& corpus, Encoder& encoder, int keep_layers) {
  if (keep_layers < 1 || keep_layers > encoder.bert.num_hidden_layers)
    throw ValidationError("cannot keep " + std::to_string(keep_layers) + " of " +
                          std::to_string(encoder.bert.num_hidden_layers) + " layers");
  StateTable table;
  std::size_t done = 0;
  const std::size_t total = corpus.num_propositions();
  for (const auto& c : corpus.comments) {
    auto& rows = table[c.id];
    for (const auto& p : c.propositions) {
      const auto all = encode_layers(encoder.tokenize(p.text), encoder);
      rows.push_back({all.states.bottomRows(keep_layers)});
      if (++done % 500 == 0) spdlog::info("encoded {}/{} propositions", done, total);
    }
  }
  return table;
}

/// Binary store `<stem>.bin` (little-endian float32 rows, one per
/// (comment, proposition, layer) in manifest order) with JSON sidecar
/// `<stem>.json` recording checkpoint, stored layers and row offsets.
struct EmbeddingCacheInfo {
  std::string checkpoint_id;
  std::string source_hash;  // identifies the encoder weights that produced the states
  int num_layers = 12;      // depth of the producing encoder
  int n = 4;                // stored layers: the deepest n
  int hidden_dim = 768;
};

inline void write_embedding_cache(const fs::path& stem, const Corpus& corpus, const StateTable& states,
                                  const EmbeddingCacheInfo& info) {
  fs::create_directories(stem.parent_path().empty() ? fs::path(".") : stem.parent_path());
  const fs::path bin = fs::path(stem.string() + ".bin"), manifest_path = fs::path(stem.string() + ".json");
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError("cannot write " + bin.string());
  nlohmann::ordered_json comments = nlohmann::ordered_json::array();
  std::uint64_t row = 0;
  std::vector<int> layers;
  for (int k = info.num_layers - info.n + 1; k <= info.num_layers; ++k) layers.push_back(k);
  for (const auto& c : corpus.comments) {
    const auto& rows = states.at(c.id);
    comments.push_back({{"id", c.id}, {"propositions", rows.size()}, {"row", row}});
    for (const auto& l : rows) {
      if (l.num_layers() != info.n || l.hidden_dim() != info.hidden_dim)
        throw ValidationError("state shape mismatch for comment " + c.id);
      out.write(reinterpret_cast<const char*>(l.states.data()), std::streamsize(l.states.size() * sizeof(float)));
      row += std::uint64_t(info.n);
    }
  }
  if (!out) throw IoError("write failed for " + bin.string());
  nlohmann::ordered_json manifest = {{"checkpoint_id", info.checkpoint_id},
                                     {"source_hash", info.source_hash},
                                     {"num_layers", info.num_layers},
                                     {"n", info.n},
                                     {"layers", layers},
                                     {"hidden_dim", info.hidden_dim},
                                     {"dtype", "f32"},
                                     {"rows", row},
                                     {"comments", comments}};
  std::ofstream(manifest_path) << manifest.dump(1) << '\n';
}

inline EmbeddingCacheInfo read_cache_info(const fs::path& stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw IoError("missing embedding manifest " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(in);
  return {j.at("checkpoint_id"), j.at("source_hash"), j.at("num_layers"), j.at("n"), j.at("hidden_dim")};
}

inline StateTable read_embedding_cache(const fs::path& stem) {
  std::ifstream min(stem.string() + ".json");
  if (!min) throw IoError("missing embedding manifest " + stem.string() + ".json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt embedding manifest: " + std::string(e.what()));
  }
  const int n = manifest.at("n"), dim = manifest.at("hidden_dim");
  const fs::path bin = stem.string() + ".bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("missing embedding store " + bin.string());
  const auto rows = manifest.at("rows").get<std::uint64_t>();
  if (fs::file_size(bin) != rows * std::uint64_t(dim) * sizeof(float))
    throw IoError("embedding store size does not match its manifest");
  StateTable table;
  for (const auto& c : manifest.at("comments")) {
    auto& list = table[c.at("id").get<std::string>()];
    const auto count = c.at("propositions").get<std::size_t>();
    in.seekg(std::streamoff(c.at("row").get<std::uint64_t>() * std::uint64_t(dim) * sizeof(float)));
    for (std::size_t p = 0; p < count; ++p) {
      LayerwiseCLS l{nn::Matrix<float>(n, dim)};
      in.read(reinterpret_cast<char*>(l.states.data()), std::streamsize(l.states.size() * sizeof(float)));
      list.push_back(std::move(l));
    }
  }
  if (!in) throw IoError("short read from " + bin.string());
  return table;
}

}  // namespace argmine
