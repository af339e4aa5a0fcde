#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "argmine/corpus.hpp"
#include "argmine/encoder.hpp"
#include "argmine/error.hpp"
#include "argmine/nn/adamw.hpp"
#include "argmine/nn/layers.hpp"
#include "argmine/safetensors.hpp"

namespace argmine {

struct TypeClassifierConfig {
  int epochs = 3;
  double learning_rate = 5e-3;
  double weight_decay = 0.01;
  int batch_size = 16;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
  bool linear_decay = true;    // learning rate decays linearly to zero over training
  double head_dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("type.epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("type.learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("type.batch_size must be >= 1");
    if (head_dropout < 0.0 || head_dropout >= 1.0) throw ConfigError("type.head_dropout must be in [0, 1)");
  }
};

struct TypePrediction {
  std::array<double, kNumLabels> distribution{};
  Label label = Label::Value;
};

/// Softmax over logits with the argmax tie broken by the fixed label order.
inline TypePrediction make_prediction(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  TypePrediction p;
  const double mx = logits.maxCoeff();
  double z = 0.0;
  for (std::size_t k = 0; k < kNumLabels; ++k) z += std::exp(logits[Eigen::Index(k)] - mx);
  std::size_t best = 0;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    p.distribution[k] = std::exp(logits[Eigen::Index(k)] - mx) / z;
    if (p.distribution[k] > p.distribution[best]) best = k;
  }
  p.label = kLabels[best];
  return p;
}

/// Encoder plus one affine layer on the deepest sentence-token state.
template <class T>
class SequenceClassifier {
 public:
  BertModel<T> encoder;
  nn::Linear<T> head;

  SequenceClassifier() = default;
  SequenceClassifier(BertModel<T> enc, double head_dropout)
      : encoder(std::move(enc)), head("classifier", encoder.config().hidden_size, Eigen::Index(kNumLabels)),
        drop_(head_dropout) {}

  void init_head(nn::Rng& rng, double stddev = 0.02) {
    nn::init_normal(head.weight, rng, stddev);
    head.bias.value.setZero();
  }

  nn::ParamList<T> params() {
    auto ps = encoder.params();
    head.collect(ps);
    return ps;
  }

  /// Logits for one token sequence; also returns the pooled input when asked.
  nn::RowVector<T> forward(const std::vector<std::int32_t>& ids, bool training, nn::Rng* rng,
                           nn::RowVector<T>* pooled = nullptr) {
    const nn::Matrix<T> cls = encoder.forward(ids, training, rng);
    const nn::Matrix<T> last = cls.row(cls.rows() - 1);
    if (pooled) *pooled = last;
    return head.forward(drop_.forward(last, training, rng)).row(0);
  }

  /// Cross-entropy against `gold` (scaled by `weight`); backpropagates and
  /// returns the unscaled loss. Must follow a forward on the same input.
  double backward_cross_entropy(const nn::RowVector<T>& logits, Label gold, double weight) {
    nn::Matrix<T> probs = logits;
    nn::softmax_rows(probs);
    const double loss = -std::log(std::max(double(probs(0, Eigen::Index(index_of(gold)))), 1e-300));
    nn::Matrix<T> dlogits = probs;
    dlogits(0, Eigen::Index(index_of(gold))) -= T(1);
    dlogits *= T(weight);
    const nn::Matrix<T> dpooled = drop_.backward(head.backward(dlogits));
    encoder.backward(dpooled.row(0));
    return loss;
  }

 private:
  nn::Dropout<T> drop_;
};

struct TypeClassifierModel {
  std::unique_ptr<Encoder> encoder;  // owns tokenizer and configuration
  nn::Linear<float> head;
  TypeClassifierConfig config;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TypeTrainResult {
  TypeClassifierModel model;
  std::vector<EpochLog> log;
};

namespace detail {

struct TypeExample {
  std::vector<std::int32_t> ids;
  Label label;
};

inline std::vector<TypeExample> type_examples(const Corpus& corpus, const Encoder& enc) {
  std::vector<TypeExample> out;
  for (const auto& c : corpus.comments)
    for (const auto& p : c.propositions) out.push_back({enc.tokenize(p.text).ids, p.label});
  return out;
}

}  // namespace detail

/// Fine-tunes the whole encoder together with a freshly initialized head.
/// The encoder is consumed and returned inside the model.
inline TypeTrainResult train_type_classifier(const Corpus& corpus, std::unique_ptr<Encoder> encoder,
                                             const TypeClassifierConfig& config) {
  config.validate();
  const Corpus train = filter_split(corpus, Split::Train);
  auto examples = detail::type_examples(train, *encoder);
  if (examples.empty()) throw ValidationError("no TRAIN propositions to fine-tune on");

  nn::Rng rng(config.seed);
  SequenceClassifier<float> net(std::move(encoder->model), config.head_dropout);
  net.init_head(rng);
  auto params = net.params();
  nn::AdamW<float> optim(params, {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});

  const std::size_t batches_per_epoch = (examples.size() + std::size_t(config.batch_size) - 1) / std::size_t(config.batch_size);
  const double total_steps = double(batches_per_epoch) * config.epochs;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * std::size_t(config.batch_size);
      const std::size_t end = std::min(begin + std::size_t(config.batch_size), examples.size());
      nn::zero_grad(params);
      for (std::size_t k = begin; k < end; ++k) {
        const auto& ex = examples[order[k]];
        const auto logits = net.forward(ex.ids, true, &rng);
        if (make_prediction(logits.template cast<double>()).label == ex.label) ++correct;
        loss_sum += net.backward_cross_entropy(logits, ex.label, 1.0 / double(end - begin));
      }
      if (config.max_grad_norm > 0.0) nn::clip_grad_norm(params, config.max_grad_norm);
      const double progress = double(optim.steps()) / total_steps;
      optim.step(config.linear_decay ? config.learning_rate * (1.0 - progress) : config.learning_rate);
    }
    log.push_back({epoch, loss_sum / double(examples.size()), double(correct) / double(examples.size())});
    spdlog::info("type epoch {}: loss {:.6f} train-acc {:.4f}", epoch, log.back().loss, log.back().accuracy);
  }

  encoder->model = std::move(net.encoder);
  TypeClassifierModel model{std::move(encoder), std::move(net.head), config};
  return {std::move(model), std::move(log)};
}

/// A model with a zero-initialized head, for inference before training.
inline TypeClassifierModel untrained_type_classifier(std::unique_ptr<Encoder> encoder) {
  nn::Linear<float> head("classifier", encoder->bert.hidden_size, Eigen::Index(kNumLabels));
  return {std::move(encoder), std::move(head), {}};
}

/// The head's input: the deepest layer's sentence-token state.
inline nn::RowVector<float> pooled_sentence(const std::string& text, TypeClassifierModel& model) {
  const auto layers = encode_layers(model.encoder->tokenize(text), *model.encoder);
  return layers.states.row(layers.states.rows() - 1);
}

inline TypePrediction classify_pooled(const nn::RowVector<float>& pooled, const TypeClassifierModel& model) {
  const nn::Matrix<float> logits = model.head.infer(pooled);
  return make_prediction(logits.row(0).cast<double>());
}

inline TypePrediction classify(const std::string& prop_text, TypeClassifierModel& model) {
  return classify_pooled(pooled_sentence(prop_text, model), model);
}

inline std::vector<TypePrediction> predict_distributions(const Corpus& corpus, TypeClassifierModel& model) {
  std::vector<TypePrediction> out;
  out.reserve(corpus.num_propositions());
  for (const auto& c : corpus.comments)
    for (const auto& p : c.propositions) out.push_back(classify(p.text, model));
  return out;
}

inline std::vector<Label> predict_types(const Corpus& corpus, TypeClassifierModel& model) {
  std::vector<Label> out;
  for (const auto& p : predict_distributions(corpus, model)) out.push_back(p.label);
  return out;
}

// ---------------------------------------------------------------------------
// Artifact directory: a loadable checkpoint (config.json, vocab.txt,
// model.safetensors) plus head.safetensors, labels.json and train_log.jsonl.

inline void write_epoch_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : log) {
    nlohmann::ordered_json j = {{"epoch", e.epoch},
                                {"loss", std::round(e.loss * 1e6) / 1e6},
                                {"train_accuracy", std::round(e.accuracy * 1e6) / 1e6}};
    out << j.dump() << '\n';
  }
}

inline void save_type_model(const fs::path& dir, TypeClassifierModel& model, const std::vector<EpochLog>& log = {}) {
  save_checkpoint(dir, model.encoder->bert, model.encoder->tokenizer.vocab(), model.encoder->model);
  nn::ParamList<float> head_params;
  model.head.collect(head_params);
  safetensors::write(dir / "head.safetensors", head_params);
  nlohmann::json labels = nlohmann::json::array();
  for (Label l : kLabels) labels.push_back(label_name(l));
  std::ofstream(dir / "labels.json") << labels.dump() << '\n';
  write_epoch_log(dir / "train_log.jsonl", log);
}

inline TypeClassifierModel load_type_model(const fs::path& dir, EncoderConfig encoder_config) {
  if (!fs::is_directory(dir)) throw LoadError("type model directory not found: " + dir.string());
  std::ifstream lin(dir / "labels.json");
  if (!lin) throw LoadError("missing labels.json in " + dir.string());
  const auto labels = nlohmann::json::parse(lin);
  if (labels.size() != kNumLabels) throw LoadError("labels.json does not list 5 labels");
  for (std::size_t k = 0; k < kNumLabels; ++k)
    if (labels[k].get<std::string>() != label_name(kLabels[k])) throw LoadError("label order in labels.json differs");
  encoder_config.checkpoint_id = dir.string();
  auto model = untrained_type_classifier(load_checkpoint(encoder_config));
  safetensors::Reader reader(dir / "head.safetensors");
  nn::ParamList<float> head_params;
  model.head.collect(head_params);
  safetensors::load_params(reader, head_params);
  return model;
}

}  // namespace argmine
