#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "argmine/error.hpp"
#include "argmine/nn/encoder_layer.hpp"
#include "argmine/nn/layers.hpp"
#include "argmine/nn/tensor.hpp"
#include "argmine/safetensors.hpp"
#include "argmine/tokenizer.hpp"

namespace argmine {

namespace fs = std::filesystem;

/// Environment variable naming the directory that holds checkpoints by id.
inline constexpr const char* kCheckpointDirEnv = "ARGMINE_CHECKPOINT_DIR";

struct EncoderConfig {
  std::string checkpoint_id = "bert-base-uncased";
  std::size_t max_tokens = 128;
  int num_layers = 12;
  int hidden_dim = 768;
};

/// Architecture hyperparameters as found in a checkpoint's config.json.
struct BertConfig {
  int vocab_size = 30522;
  int hidden_size = 768;
  int num_hidden_layers = 12;
  int num_attention_heads = 12;
  int intermediate_size = 3072;
  int max_position_embeddings = 512;
  int type_vocab_size = 2;
  double layer_norm_eps = 1e-12;
  double hidden_dropout_prob = 0.1;
  double attention_probs_dropout_prob = 0.1;
  std::string hidden_act = "gelu";

  nlohmann::ordered_json to_json() const {
    return {{"model_type", "bert"},
            {"vocab_size", vocab_size},
            {"hidden_size", hidden_size},
            {"num_hidden_layers", num_hidden_layers},
            {"num_attention_heads", num_attention_heads},
            {"intermediate_size", intermediate_size},
            {"max_position_embeddings", max_position_embeddings},
            {"type_vocab_size", type_vocab_size},
            {"layer_norm_eps", layer_norm_eps},
            {"hidden_dropout_prob", hidden_dropout_prob},
            {"attention_probs_dropout_prob", attention_probs_dropout_prob},
            {"hidden_act", hidden_act}};
  }

  static BertConfig from_json(const nlohmann::json& j) {
    BertConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.num_hidden_layers = j.value("num_hidden_layers", c.num_hidden_layers);
    c.num_attention_heads = j.value("num_attention_heads", c.num_attention_heads);
    c.intermediate_size = j.value("intermediate_size", c.intermediate_size);
    c.max_position_embeddings = j.value("max_position_embeddings", c.max_position_embeddings);
    c.type_vocab_size = j.value("type_vocab_size", c.type_vocab_size);
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    c.hidden_dropout_prob = j.value("hidden_dropout_prob", c.hidden_dropout_prob);
    c.attention_probs_dropout_prob = j.value("attention_probs_dropout_prob", c.attention_probs_dropout_prob);
    c.hidden_act = j.value("hidden_act", c.hidden_act);
    if (c.hidden_act != "gelu") throw ConfigError("unsupported hidden_act " + c.hidden_act);
    return c;
  }
};

/// Sentence-token hidden state after each encoder layer, shallow to deep.
struct LayerwiseCLS {
  nn::Matrix<float> states;  // num_layers x hidden_dim

  Eigen::Index num_layers() const { return states.rows(); }
  Eigen::Index hidden_dim() const { return states.cols(); }
};

/// Token/position/segment embeddings followed by a stack of post-norm GELU
/// encoder layers. Sequences are processed one at a time without padding,
/// so no attention mask is needed.
template <class T>
class BertModel {
 public:
  nn::Param<T> word_embeddings, position_embeddings, token_type_embeddings;
  nn::LayerNorm<T> embedding_norm;
  std::vector<nn::EncoderLayer<T>> layers;

  BertModel() = default;
  explicit BertModel(const BertConfig& c)
      : word_embeddings("embeddings.word_embeddings.weight", c.vocab_size, c.hidden_size),
        position_embeddings("embeddings.position_embeddings.weight", c.max_position_embeddings, c.hidden_size),
        token_type_embeddings("embeddings.token_type_embeddings.weight", c.type_vocab_size, c.hidden_size),
        embedding_norm("embeddings.LayerNorm", c.hidden_size, c.layer_norm_eps),
        config_(c),
        embed_drop_(c.hidden_dropout_prob) {
    if (c.hidden_size % c.num_attention_heads != 0) throw ConfigError("hidden_size not divisible by head count");
    nn::EncoderLayerOptions o;
    o.dim = c.hidden_size;
    o.heads = c.num_attention_heads;
    o.feedforward_dim = c.intermediate_size;
    o.dropout = c.hidden_dropout_prob;
    o.attention_dropout = c.attention_probs_dropout_prob;
    o.inner_dropout = false;
    o.activation = nn::Activation::Gelu;
    o.layer_norm_eps = c.layer_norm_eps;
    for (int i = 0; i < c.num_hidden_layers; ++i) layers.emplace_back("encoder.layer." + std::to_string(i), o);
  }

  const BertConfig& config() const { return config_; }

  void init_random(nn::Rng& rng, double stddev = 0.02) {
    for (auto* p : params())
      if (p->decay) nn::init_normal(*p, rng, stddev);
  }

  nn::ParamList<T> params() {
    nn::ParamList<T> ps{&word_embeddings, &position_embeddings, &token_type_embeddings};
    embedding_norm.collect(ps);
    for (auto& l : layers) l.collect(ps);
    return ps;
  }

  void check_ids(const std::vector<std::int32_t>& ids) const {
    if (ids.empty()) throw EncodingError("empty token sequence");
    if (ids.size() > std::size_t(config_.max_position_embeddings))
      throw EncodingError("sequence of " + std::to_string(ids.size()) + " tokens exceeds positional capacity " +
                          std::to_string(config_.max_position_embeddings));
    for (auto id : ids)
      if (id < 0 || id >= config_.vocab_size)
        throw EncodingError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(config_.vocab_size));
  }

  /// Runs the stack and returns row 0 of every layer output (num_layers x hidden).
  nn::Matrix<T> forward(const std::vector<std::int32_t>& ids, bool training = false, nn::Rng* rng = nullptr) {
    check_ids(ids);
    ids_ = ids;
    const auto n = Eigen::Index(ids.size());
    nn::Matrix<T> x(n, config_.hidden_size);
    for (Eigen::Index i = 0; i < n; ++i)
      x.row(i) = word_embeddings.value.row(ids[std::size_t(i)]) + position_embeddings.value.row(i) +
                 token_type_embeddings.value.row(0);
    x = embed_drop_.forward(embedding_norm.forward(x), training, rng);
    nn::Matrix<T> cls(Eigen::Index(layers.size()), config_.hidden_size);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      x = layers[l].forward(x, training, rng);
      cls.row(Eigen::Index(l)) = x.row(0);
    }
    seq_len_ = n;
    return cls;
  }

  /// Backpropagates a gradient on the deepest layer's sentence-token state.
  void backward(const nn::RowVector<T>& d_cls) {
    nn::Matrix<T> dx = nn::Matrix<T>::Zero(seq_len_, config_.hidden_size);
    dx.row(0) = d_cls;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) dx = it->backward(dx);
    dx = embedding_norm.backward(embed_drop_.backward(dx));
    for (Eigen::Index i = 0; i < seq_len_; ++i) {
      word_embeddings.grad.row(ids_[std::size_t(i)]) += dx.row(i);
      position_embeddings.grad.row(i) += dx.row(i);
    }
    token_type_embeddings.grad.row(0) += dx.colwise().sum();
  }

 private:
  BertConfig config_;
  nn::Dropout<T> embed_drop_;
  std::vector<std::int32_t> ids_;
  Eigen::Index seq_len_ = 0;
};

namespace detail {

// Checkpoints may prefix names with "bert." and use gamma/beta for norms.
inline std::string resolve_tensor(const safetensors::Reader& r, const std::string& name) {
  std::vector<std::string> candidates{name, "bert." + name};
  auto swap_suffix = [](const std::string& n, const std::string& from, const std::string& to) {
    return n.ends_with(from) ? n.substr(0, n.size() - from.size()) + to : n;
  };
  if (name.find("LayerNorm") != std::string::npos) {
    for (const auto& base : std::vector<std::string>{name, "bert." + name}) {
      candidates.push_back(swap_suffix(base, ".weight", ".gamma"));
      candidates.push_back(swap_suffix(base, ".bias", ".beta"));
    }
  }
  for (const auto& c : candidates)
    if (r.contains(c)) return c;
  throw LoadError("checkpoint lacks tensor " + name);
}

}  // namespace detail

struct Encoder {
  EncoderConfig config;
  BertConfig bert;
  WordPieceTokenizer tokenizer;
  BertModel<float> model;
  fs::path source;

  TokenSequence tokenize(std::string_view text) const { return tokenizer.encode(text, config.max_tokens); }
};

/// Checkpoint directory for an id: a literal path if it exists, otherwise
/// `$ARGMINE_CHECKPOINT_DIR/<id>`.
inline fs::path resolve_checkpoint(const std::string& checkpoint_id) {
  if (fs::is_directory(checkpoint_id)) return checkpoint_id;
  if (const char* root = std::getenv(kCheckpointDirEnv); root && *root) {
    const fs::path p = fs::path(root) / checkpoint_id;
    if (fs::is_directory(p)) return p;
  }
  throw LoadError("checkpoint '" + checkpoint_id + "' not found; place config.json, vocab.txt and model.safetensors in " +
                  "a directory named after it under $" + kCheckpointDirEnv + " or pass a directory path");
}

inline BertConfig read_bert_config(const fs::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw LoadError("missing config.json in " + dir.string());
  try {
    return BertConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("corrupt config.json in " + dir.string() + ": " + e.what());
  }
}

template <class T>
void load_weights(BertModel<T>& model, const fs::path& weights) {
  safetensors::Reader reader(weights);
  for (auto* p : model.params()) reader.read_into(detail::resolve_tensor(reader, p->name), p->value);
}

inline std::unique_ptr<Encoder> load_checkpoint(const EncoderConfig& config) {
  const auto dir = resolve_checkpoint(config.checkpoint_id);
  auto bert = read_bert_config(dir);
  if (bert.num_hidden_layers != config.num_layers)
    throw ConfigError("checkpoint has " + std::to_string(bert.num_hidden_layers) + " layers, config expects " +
                      std::to_string(config.num_layers));
  if (bert.hidden_size != config.hidden_dim)
    throw ConfigError("checkpoint hidden size " + std::to_string(bert.hidden_size) + " differs from configured " +
                      std::to_string(config.hidden_dim));
  if (config.max_tokens > std::size_t(bert.max_position_embeddings) || config.max_tokens < 3)
    throw ConfigError("max_tokens " + std::to_string(config.max_tokens) + " outside [3, " +
                      std::to_string(bert.max_position_embeddings) + "]");
  auto tokenizer = WordPieceTokenizer::from_file(dir / "vocab.txt");
  if (tokenizer.vocab_size() != std::size_t(bert.vocab_size))
    throw LoadError("vocab.txt has " + std::to_string(tokenizer.vocab_size()) + " entries, config says " +
                    std::to_string(bert.vocab_size));
  auto enc = std::make_unique<Encoder>(Encoder{config, bert, std::move(tokenizer), BertModel<float>(bert), dir});
  load_weights(enc->model, dir / "model.safetensors");
  return enc;
}

/// Writes config.json, vocab.txt and model.safetensors; the result is a
/// checkpoint directory accepted by load_checkpoint.
template <class T>
void save_checkpoint(const fs::path& dir, const BertConfig& bert, const std::vector<std::string>& vocab,
                     BertModel<T>& model) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
    out << bert.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "vocab.txt", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "vocab.txt").string());
    for (const auto& v : vocab) out << v << '\n';
  }
  nn::ParamList<T> ps = model.params();
  std::vector<nn::Param<T>> renamed;
  renamed.reserve(ps.size());
  nn::ParamList<T> out;
  for (auto* p : ps) {
    renamed.push_back(*p);
    renamed.back().name = "bert." + p->name;
  }
  for (auto& p : renamed) out.push_back(&p);
  safetensors::write(dir / "model.safetensors", out, {{"format", "pt"}});
}

inline LayerwiseCLS encode_layers(const TokenSequence& tokens, Encoder& encoder) {
  return {encoder.model.forward(tokens.ids, false, nullptr)};
}

inline std::vector<LayerwiseCLS> encode_batch(const std::vector<TokenSequence>& batch, Encoder& encoder) {
  std::vector<LayerwiseCLS> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(encode_layers(t, encoder));
  return out;
}

}  // namespace argmine
