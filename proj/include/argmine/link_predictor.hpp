#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "argmine/corpus.hpp"
#include "argmine/encoder.hpp"
#include "argmine/error.hpp"
#include "argmine/metrics.hpp"
#include "argmine/nn/adamw.hpp"
#include "argmine/nn/encoder_layer.hpp"
#include "argmine/safetensors.hpp"

namespace argmine {

// ---------------------------------------------------------------------------
// Layer pooling

/// Convex weights over the last n encoder layers, ordered shallow to deep.
struct PoolingWeights {
  std::vector<double> weights;

  std::size_t n() const { return weights.size(); }
};

/// Terms 1, 1+d, ..., 1+(n-1)d normalized to sum to one.
inline PoolingWeights arithmetic_weights(int n, double common_difference) {
  if (n < 1) throw ValidationError("pooling needs at least one layer");
  PoolingWeights p;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double term = 1.0 + k * common_difference;
    if (!(term > 0.0))
      throw ValidationError("arithmetic progression term " + std::to_string(k) + " is not positive (" +
                            std::to_string(term) + ")");
    p.weights.push_back(term);
    sum += term;
  }
  for (auto& w : p.weights) w /= sum;
  return p;
}

/// Weighted sum of the last n rows of the layerwise states.
template <class T = double>
nn::RowVector<T> pool_layers(const LayerwiseCLS& layerwise, const PoolingWeights& pooling) {
  const auto rows = std::size_t(layerwise.num_layers());
  if (pooling.n() == 0 || pooling.n() > rows)
    throw ValidationError("pooling over " + std::to_string(pooling.n()) + " layers but only " + std::to_string(rows) +
                          " are available");
  nn::RowVector<T> out = nn::RowVector<T>::Zero(layerwise.hidden_dim());
  const std::size_t first = rows - pooling.n();
  for (std::size_t j = 0; j < pooling.n(); ++j)
    out += T(pooling.weights[j]) * layerwise.states.row(Eigen::Index(first + j)).template cast<T>();
  if (!out.allFinite()) throw ValidationError("pooled embedding is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

enum class LinkLoss { WeightedBce, Mse };
enum class DecisionScore { Calibrated, Raw };

struct LinkModelConfig {
  int pooling_layers = 4;
  double progression_difference = 1.0;
  int context_dim = 768;
  int num_heads = 8;
  int feedforward_dim = 2048;
  int projection_dim = 100;
  double dropout = 0.4;
  int epochs = 100;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  int early_stop_patience = 10;  // <= 0 disables early stopping
  double decision_threshold = 0.5;
  double positive_weight = 0.0;  // <= 0 means inverse training link rate
  double logit_scale = 5.0;
  LinkLoss loss = LinkLoss::WeightedBce;
  DecisionScore decision_score = DecisionScore::Calibrated;
  bool positional_encoding = true;
  bool tune_threshold = true;
  int batch_comments = 8;
  double dev_fraction = 0.1;
  int max_propositions = 128;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (context_dim <= 0 || num_heads <= 0 || context_dim % num_heads != 0)
      throw ConfigError("link.context_dim must be divisible by link.num_heads");
    if (feedforward_dim <= 0 || projection_dim <= 0) throw ConfigError("link dimensions must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("link.dropout must be in [0, 1)");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
      throw ConfigError("link.decision_threshold must be in (0, 1)");
    if (epochs < 1) throw ConfigError("link.epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("link.learning_rate must be > 0");
    if (batch_comments < 1) throw ConfigError("link.batch_comments must be >= 1");
    if (dev_fraction < 0.0 || dev_fraction >= 1.0) throw ConfigError("link.dev_fraction must be in [0, 1)");
    if (pooling_layers < 1) throw ConfigError("link.pooling_layers must be >= 1");
  }

  nn::EncoderLayerOptions layer_options() const {
    nn::EncoderLayerOptions o;
    o.dim = context_dim;
    o.heads = num_heads;
    o.feedforward_dim = feedforward_dim;
    o.dropout = dropout;
    o.attention_dropout = dropout;
    o.inner_dropout = true;
    o.activation = nn::Activation::Relu;
    o.layer_norm_eps = 1e-5;
    return o;
  }
};

inline nlohmann::ordered_json to_json(const LinkModelConfig& c) {
  return {{"pooling_layers", c.pooling_layers},
          {"progression_difference", c.progression_difference},
          {"context_dim", c.context_dim},
          {"num_heads", c.num_heads},
          {"feedforward_dim", c.feedforward_dim},
          {"projection_dim", c.projection_dim},
          {"dropout", c.dropout},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"early_stop_patience", c.early_stop_patience},
          {"decision_threshold", c.decision_threshold},
          {"positive_weight", c.positive_weight},
          {"logit_scale", c.logit_scale},
          {"loss", c.loss == LinkLoss::Mse ? "mse" : "bce"},
          {"decision_score", c.decision_score == DecisionScore::Raw ? "raw" : "calibrated"},
          {"positional_encoding", c.positional_encoding},
          {"tune_threshold", c.tune_threshold},
          {"batch_comments", c.batch_comments},
          {"dev_fraction", c.dev_fraction},
          {"max_propositions", c.max_propositions},
          {"max_grad_norm", c.max_grad_norm},
          {"seed", c.seed}};
}

inline LinkLoss parse_link_loss(const std::string& s) {
  if (s == "bce") return LinkLoss::WeightedBce;
  if (s == "mse") return LinkLoss::Mse;
  throw ConfigError("link.loss must be 'bce' or 'mse', got '" + s + "'");
}

inline DecisionScore parse_decision_score(const std::string& s) {
  if (s == "calibrated") return DecisionScore::Calibrated;
  if (s == "raw") return DecisionScore::Raw;
  throw ConfigError("link.decision_score must be 'calibrated' or 'raw', got '" + s + "'");
}

inline LinkModelConfig link_config_from_json(const nlohmann::json& j) {
  LinkModelConfig c;
  c.pooling_layers = j.value("pooling_layers", c.pooling_layers);
  c.progression_difference = j.value("progression_difference", c.progression_difference);
  c.context_dim = j.value("context_dim", c.context_dim);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.feedforward_dim = j.value("feedforward_dim", c.feedforward_dim);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
  c.positive_weight = j.value("positive_weight", c.positive_weight);
  c.logit_scale = j.value("logit_scale", c.logit_scale);
  c.loss = parse_link_loss(j.value("loss", std::string("bce")));
  c.decision_score = parse_decision_score(j.value("decision_score", std::string("calibrated")));
  c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
  c.tune_threshold = j.value("tune_threshold", c.tune_threshold);
  c.batch_comments = j.value("batch_comments", c.batch_comments);
  c.dev_fraction = j.value("dev_fraction", c.dev_fraction);
  c.max_propositions = j.value("max_propositions", c.max_propositions);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------
// Scores and decoding

/// scores(i, j) = conclusion_i . premise_j, i.e. support for the link j => i.
/// The diagonal is masked: it holds 0 and is never decoded.
struct LinkScoreMatrix {
  nn::Matrix<double> scores;

  std::size_t size() const { return std::size_t(scores.rows()); }
  static bool masked(std::size_t i, std::size_t j) { return i == j; }
};

/// Link(src = j, dst = i) for every unmasked scores(i, j) >= threshold,
/// ordered by dst then src.
inline std::vector<Link> decode_graph(const LinkScoreMatrix& m, double threshold) {
  std::vector<Link> out;
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!LinkScoreMatrix::masked(i, j) && m.scores(Eigen::Index(i), Eigen::Index(j)) >= threshold)
        out.push_back({j, i});
  return out;
}

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Maps cosine scores to link probabilities sigma(scale * s).
inline LinkScoreMatrix calibrate(const LinkScoreMatrix& raw, double logit_scale) {
  LinkScoreMatrix out{raw.scores.unaryExpr([&](double s) { return sigmoid(logit_scale * s); })};
  out.scores.diagonal().setZero();
  return out;
}

// ---------------------------------------------------------------------------
// Model

template <class T>
struct Projection {
  nn::Matrix<T> conclusion;  // rows are unit vectors
  nn::Matrix<T> premise;
};

template <class T>
struct UnitRow {
  nn::RowVector<T> unit;
  T denom;
};

// x / ||x||, with 1e-12 added to the denominator (and a warning) when the norm vanishes.
template <class T>
UnitRow<T> normalize_row(const nn::RowVector<T>& x) {
  const T norm = x.norm();
  T denom = norm;
  if (!(norm > T(1e-12))) {
    spdlog::warn("zero-norm projection; adding 1e-12 to the normalizer");
    denom = norm + T(1e-12);
  }
  return {x / denom, denom};
}

/// Scores from unit-normalized projections: conclusion_i . premise_j, diagonal masked.
template <class T>
LinkScoreMatrix score_links(const Projection<T>& proj) {
  LinkScoreMatrix m{(proj.conclusion * proj.premise.transpose()).template cast<double>()};
  m.scores.diagonal().setZero();
  return m;
}

/// Positional encoding, one post-norm encoder layer over the proposition
/// sequence of a comment, and two independent projections C (Conclusion)
/// and P (Premise) followed by L2 normalization.
template <class T>
class LinkModel {
 public:
  PoolingWeights pooling;
  LinkModelConfig config;
  nn::EncoderLayer<T> context;
  nn::Param<T> conclusion_proj;  // C: projection_dim x context_dim
  nn::Param<T> premise_proj;     // P: projection_dim x context_dim

  LinkModel() = default;
  LinkModel(const LinkModelConfig& c, PoolingWeights pw)
      : pooling(std::move(pw)),
        config((c.validate(), c)),
        context("context", c.layer_options()),
        conclusion_proj("conclusion_projection.weight", c.projection_dim, c.context_dim),
        premise_proj("premise_projection.weight", c.projection_dim, c.context_dim) {}

  void init(nn::Rng& rng) {
    context.init_xavier_weights(rng);
    nn::init_xavier(conclusion_proj, rng);
    nn::init_xavier(premise_proj, rng);
  }

  nn::ParamList<T> params() {
    nn::ParamList<T> ps;
    context.collect(ps);
    ps.push_back(&conclusion_proj);
    ps.push_back(&premise_proj);
    return ps;
  }

  /// One z_i per pooled sentence vector e_i of the comment.
  nn::Matrix<T> contextualize(const nn::Matrix<T>& sequence, bool training, nn::Rng* rng) {
    if (sequence.rows() < 1) throw ValidationError("contextualize needs at least one proposition");
    if (sequence.rows() > config.max_propositions)
      throw ValidationError("comment has " + std::to_string(sequence.rows()) + " propositions; the limit is " +
                            std::to_string(config.max_propositions));
    if (sequence.cols() != config.context_dim)
      throw ValidationError("sentence vectors have width " + std::to_string(sequence.cols()) + ", expected " +
                            std::to_string(config.context_dim));
    nn::Matrix<T> x = sequence;
    if (config.positional_encoding) x += nn::sinusoidal_positions<T>(x.rows(), x.cols());
    z_ = context.forward(x, training, rng);
    return z_;
  }

  Projection<T> project_all(const nn::Matrix<T>& z) {
    const nn::Matrix<T> cz = z * conclusion_proj.value.transpose();
    const nn::Matrix<T> pz = z * premise_proj.value.transpose();
    Projection<T> out{nn::Matrix<T>(cz.rows(), cz.cols()), nn::Matrix<T>(pz.rows(), pz.cols())};
    c_denom_.resize(cz.rows());
    p_denom_.resize(pz.rows());
    for (Eigen::Index i = 0; i < cz.rows(); ++i) {
      auto c = normalize_row<T>(cz.row(i));
      auto p = normalize_row<T>(pz.row(i));
      out.conclusion.row(i) = c.unit;
      out.premise.row(i) = p.unit;
      c_denom_[std::size_t(i)] = c.denom;
      p_denom_[std::size_t(i)] = p.denom;
    }
    proj_ = out;
    return out;
  }

  /// (conclusion_emb, premise_emb) for a single contextual vector.
  std::pair<nn::RowVector<T>, nn::RowVector<T>> project(const nn::RowVector<T>& z) const {
    return {normalize_row<T>(z * conclusion_proj.value.transpose()).unit,
            normalize_row<T>(z * premise_proj.value.transpose()).unit};
  }

  /// Raw cosine scores for one comment given its pooled sentence vectors.
  LinkScoreMatrix score(const nn::Matrix<T>& sequence) {
    return score_links(project_all(contextualize(sequence, false, nullptr)));
  }

  /// Pair loss over all off-diagonal (i, j) with target 1 iff j => i. Each
  /// pair's loss is multiplied by `scale`; gradients accumulate into params.
  /// Returns the unscaled loss sum.
  double forward_backward(const nn::Matrix<T>& sequence, const Comment& gold, double positive_weight, double scale,
                          bool training, nn::Rng* rng) {
    const nn::Matrix<T> z = contextualize(sequence, training, rng);
    const Projection<T> proj = project_all(z);
    const Eigen::Index m = z.rows();
    const nn::Matrix<T> s = proj.conclusion * proj.premise.transpose();
    nn::Matrix<T> ds = nn::Matrix<T>::Zero(m, m);
    double loss = 0.0;
    const double kappa = config.logit_scale;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        if (i == j) continue;
        const bool y = gold.has_link(std::size_t(j), std::size_t(i));
        const double w = y ? positive_weight : 1.0;
        const double sij = double(s(i, j));
        double g;
        if (config.loss == LinkLoss::WeightedBce) {
          const double x = kappa * sij;
          // softplus(-x) for positives, softplus(x) for negatives
          const double sp = y ? std::log1p(std::exp(-std::abs(x))) + std::max(-x, 0.0)
                              : std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
          loss += w * sp;
          g = w * kappa * (sigmoid(x) - (y ? 1.0 : 0.0));
        } else {
          const double r = sij - (y ? 1.0 : 0.0);
          loss += w * r * r;
          g = 2.0 * w * r;
        }
        ds(i, j) = T(g * scale);
      }
    // s = c p^T
    const nn::Matrix<T> dc = ds * proj.premise;
    const nn::Matrix<T> dp = ds.transpose() * proj.conclusion;
    nn::Matrix<T> dcz(m, config.projection_dim), dpz(m, config.projection_dim);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto c = proj.conclusion.row(i);
      const auto p = proj.premise.row(i);
      dcz.row(i) = (dc.row(i) - c * c.dot(dc.row(i))) / c_denom_[std::size_t(i)];
      dpz.row(i) = (dp.row(i) - p * p.dot(dp.row(i))) / p_denom_[std::size_t(i)];
    }
    conclusion_proj.grad.noalias() += dcz.transpose() * z;
    premise_proj.grad.noalias() += dpz.transpose() * z;
    nn::Matrix<T> dz = dcz * conclusion_proj.value;
    dz.noalias() += dpz * premise_proj.value;
    context.backward(dz);
    return loss;
  }

 private:
  nn::Matrix<T> z_;
  Projection<T> proj_;
  std::vector<T> c_denom_, p_denom_;
};

// ---------------------------------------------------------------------------
// Training

/// Frozen layerwise states: per comment id, one entry per proposition.
using StateTable = std::map<std::string, std::vector<LayerwiseCLS>>;

template <class T>
nn::Matrix<T> pooled_sequence(const Comment& c, const StateTable& states, const PoolingWeights& pooling) {
  auto it = states.find(c.id);
  if (it == states.end()) throw ValidationError("no cached encoder states for comment " + c.id);
  if (it->second.size() != c.size())
    throw ValidationError("comment " + c.id + " has " + std::to_string(c.size()) + " propositions but " +
                          std::to_string(it->second.size()) + " cached states");
  if (c.size() == 0) return nn::Matrix<T>(0, 0);
  nn::Matrix<T> out(Eigen::Index(c.size()), it->second.front().hidden_dim());
  for (std::size_t i = 0; i < c.size(); ++i) out.row(Eigen::Index(i)) = pool_layers<T>(it->second[i], pooling);
  return out;
}

struct LinkEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double monitor_f1 = 0.0;  // dev F1 (train F1 when no dev split)
};

template <class T = float>
struct LinkTrainResult {
  LinkModel<T> model;
  std::vector<LinkEpochLog> log;
  int best_epoch = 0;
  double threshold = 0.5;  // dev-tuned when enabled
  double positive_weight = 1.0;
  std::vector<std::string> dev_ids;
};

/// Scores used for decisions under the configured decision mode.
template <class T>
LinkScoreMatrix decision_scores(LinkModel<T>& model, const nn::Matrix<T>& sequence) {
  auto raw = model.score(sequence);
  return model.config.decision_score == DecisionScore::Calibrated ? calibrate(raw, model.config.logit_scale) : raw;
}

template <class T>
std::vector<Link> predict_links(LinkModel<T>& model, const nn::Matrix<T>& sequence, double threshold) {
  if (sequence.rows() < 2) return {};
  return decode_graph(decision_scores(model, sequence), threshold);
}

namespace detail {

template <class T>
struct LinkExample {
  const Comment* comment;
  nn::Matrix<T> sequence;
};

template <class T>
LinkConfusion confusion_at(LinkModel<T>& model, const std::vector<LinkExample<T>>& set, double threshold) {
  LinkConfusion total;
  for (const auto& ex : set) total += link_confusion(*ex.comment, predict_links(model, ex.sequence, threshold));
  return total;
}

// Best threshold on a 0.05 grid; ties go to the value closest to `preferred`.
template <class T>
double tune_threshold(LinkModel<T>& model, const std::vector<LinkExample<T>>& set, double preferred) {
  std::vector<LinkScoreMatrix> scored;
  for (const auto& ex : set)
    if (ex.sequence.rows() >= 2) scored.push_back(decision_scores(model, ex.sequence));
  double best_t = preferred, best_f1 = -1.0;
  for (int k = 1; k < 20; ++k) {
    const double t = 0.05 * k;
    LinkConfusion total;
    std::size_t idx = 0;
    for (const auto& ex : set)
      if (ex.sequence.rows() >= 2) total += link_confusion(*ex.comment, decode_graph(scored[idx++], t));
    const double f1 = total.f1();
    if (f1 > best_f1 + 1e-12 || (std::abs(f1 - best_f1) <= 1e-12 && std::abs(t - preferred) < std::abs(best_t - preferred))) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace detail

/// Trains context layer, C and P on TRAIN comments against binary pair
/// targets with class weighting. A seeded dev subset of TRAIN drives early
/// stopping and threshold tuning; the best-dev parameters are returned.
template <class T = float>
LinkTrainResult<T> train_link_predictor(const Corpus& corpus, const StateTable& states, const LinkModelConfig& config) {
  config.validate();
  nn::Rng rng(config.seed);
  const PoolingWeights pooling = arithmetic_weights(config.pooling_layers, config.progression_difference);

  std::vector<const Comment*> train;
  for (const auto& c : corpus.comments)
    if (c.split == Split::Train) train.push_back(&c);
  if (train.empty()) throw ValidationError("no TRAIN comments for link training");

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_dev = std::size_t(std::llround(config.dev_fraction * double(train.size())));
  if (config.dev_fraction > 0.0 && n_dev == 0 && train.size() >= 2) n_dev = 1;
  if (n_dev >= train.size()) n_dev = train.size() - 1;

  std::vector<detail::LinkExample<T>> fit, dev;
  LinkTrainResult<T> result;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Comment* c = train[order[k]];
    detail::LinkExample<T> ex{c, pooled_sequence<T>(*c, states, pooling)};
    if (k < n_dev) {
      result.dev_ids.push_back(c->id);
      dev.push_back(std::move(ex));
    } else {
      fit.push_back(std::move(ex));
    }
  }
  std::sort(result.dev_ids.begin(), result.dev_ids.end());

  std::size_t links = 0, pairs = 0;
  for (const auto& ex : fit) {
    links += ex.comment->links.size();
    pairs += num_candidate_pairs(*ex.comment);
  }
  if (links == 0) throw ValidationError("training comments contain no links");
  const double pos_weight = config.positive_weight > 0.0 ? config.positive_weight : double(pairs) / double(links);
  result.positive_weight = pos_weight;

  // Comments with fewer than two propositions have no pairs to learn from.
  std::vector<std::size_t> trainable;
  for (std::size_t k = 0; k < fit.size(); ++k)
    if (fit[k].sequence.rows() >= 2) trainable.push_back(k);

  LinkModel<T> model(config, pooling);
  model.init(rng);
  auto params = model.params();
  nn::AdamW<T> optim(params, {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  const auto& monitor = dev.empty() ? fit : dev;

  double best_f1 = -1.0;
  int since_best = 0;
  std::vector<nn::Matrix<T>> best = nn::snapshot(params);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(trainable.begin(), trainable.end(), rng);
    double loss_sum = 0.0;
    std::size_t pair_count = 0;
    for (std::size_t b = 0; b < trainable.size(); b += std::size_t(config.batch_comments)) {
      const std::size_t e = std::min(b + std::size_t(config.batch_comments), trainable.size());
      std::size_t batch_pairs = 0;
      for (std::size_t k = b; k < e; ++k) batch_pairs += num_candidate_pairs(*fit[trainable[k]].comment);
      nn::zero_grad(params);
      for (std::size_t k = b; k < e; ++k) {
        const auto& ex = fit[trainable[k]];
        loss_sum += model.forward_backward(ex.sequence, *ex.comment, pos_weight, 1.0 / double(batch_pairs), true, &rng);
      }
      pair_count += batch_pairs;
      if (config.max_grad_norm > 0.0) nn::clip_grad_norm(params, config.max_grad_norm);
      optim.step();
    }
    const double f1 = detail::confusion_at(model, monitor, config.decision_threshold).f1();
    result.log.push_back({epoch, pair_count ? loss_sum / double(pair_count) : 0.0, f1});
    spdlog::info("link epoch {}: loss {:.6f} {}-F1 {:.4f}", epoch, result.log.back().loss, dev.empty() ? "train" : "dev", f1);
    if (f1 > best_f1) {
      best_f1 = f1;
      result.best_epoch = epoch;
      best = nn::snapshot(params);
      since_best = 0;
    } else if (config.early_stop_patience > 0 && ++since_best >= config.early_stop_patience) {
      spdlog::info("early stop at epoch {}; best epoch {}", epoch, result.best_epoch);
      break;
    }
  }
  nn::restore(params, best);
  result.threshold = config.decision_threshold;
  if (config.tune_threshold && !dev.empty()) result.threshold = detail::tune_threshold(model, dev, config.decision_threshold);
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Artifact: link.safetensors plus link_model.json (config, pooling, threshold)

template <class T>
void save_link_model(const fs::path& dir, LinkModel<T>& model, double threshold, const std::vector<LinkEpochLog>& log = {},
                     const nlohmann::ordered_json& extra = {}) {
  fs::create_directories(dir);
  safetensors::write(dir / "link.safetensors", model.params());
  nlohmann::ordered_json j;
  j["config"] = to_json(model.config);
  j["pooling_weights"] = model.pooling.weights;
  j["threshold"] = round6(threshold);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream(dir / "link_model.json") << j.dump(2) << '\n';
  std::ofstream out(dir / "train_log.jsonl");
  for (const auto& e : log)
    out << nlohmann::ordered_json{{"epoch", e.epoch}, {"loss", round6(e.loss)}, {"dev_f1", round6(e.monitor_f1)}}.dump()
        << '\n';
}

template <class T>
struct LoadedLinkModel {
  LinkModel<T> model;
  double threshold = 0.5;
  nlohmann::json manifest;
};

template <class T = float>
LoadedLinkModel<T> load_link_model(const fs::path& dir) {
  std::ifstream in(dir / "link_model.json");
  if (!in) throw LoadError("missing link_model.json in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("corrupt link_model.json: " + std::string(e.what()));
  }
  const auto config = link_config_from_json(j.at("config"));
  PoolingWeights pooling{j.at("pooling_weights").get<std::vector<double>>()};
  LoadedLinkModel<T> out{LinkModel<T>(config, pooling), j.value("threshold", config.decision_threshold), j};
  safetensors::Reader reader(dir / "link.safetensors");
  safetensors::load_params(reader, out.model.params());
  return out;
}

}  // namespace argmine
