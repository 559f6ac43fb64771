#pragma once
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "biosent/encoder.hpp"

// Task heads and training objectives on top of the encoder: a classification
// head (ELU + linear), supervised losses (cross-entropy, BCE, focal), and the
// contrastive pre-training objective with its channel/token perturbation.

namespace biosent {

// ---- classification head ----

template <typename T>
struct HeadParamsT {
  T w;  // l x n_classes
  T b;  // 1 x n_classes
};

template <typename S>
using HeadParams = HeadParamsT<Mat<S>>;

template <typename P, typename F>
void visit_head_params(P&& p, F&& fn) {
  fn("head.w", p.w);
  fn("head.b", p.b);
}

template <typename S>
HeadParams<S> init_head_params(int embed_dim, int n_classes, Rng& rng) {
  if (embed_dim < 1 || n_classes < 1)
    throw Error(ErrorCode::BadConfig, "head dimensions must be positive");
  HeadParams<S> p;
  p.w = uniform_init<S>(rng, embed_dim, n_classes,
                        1.0 / std::sqrt(static_cast<double>(embed_dim)));
  p.b = Mat<S>::Zero(1, n_classes);
  return p;
}

template <typename S>
HeadParamsT<Tensor<S>> lift_head_params(Graph<S>& g, const HeadParams<S>& p) {
  return HeadParamsT<Tensor<S>>{g.parameter(p.w), g.parameter(p.b)};
}

// logits = ELU(z) W + b; works on a single embedding row or a whole batch
template <typename V>
V classify(const V& z, const HeadParamsT<V>& head) {
  return add_rowvec(matmul(elu(z), head.w), head.b);
}

// ---- supervised losses ----

enum class LossKind { CrossEntropy, Bce, Focal };

// Mean loss over a batch of logits rows. CrossEntropy expects n_classes >= 2
// columns and labels in [0, n_classes); Bce and Focal expect a single-column
// logit with labels in {0, 1}. Focal with gamma = 0 collapses to Bce exactly.
template <typename B>
typename B::Value supervised_loss(const typename B::Value& logits,
                                  const std::vector<int>& labels, LossKind kind, B& b,
                                  double gamma = 2.0) {
  using S = typename B::Scalar;
  const auto n = logits.rows();
  const auto c = logits.cols();
  if (n < 1 || static_cast<std::size_t>(n) != labels.size())
    throw Error(ErrorCode::ShapeError, "one label per logits row required");

  if (kind == LossKind::CrossEntropy) {
    if (c < 2)
      throw Error(ErrorCode::BadConfig, "cross-entropy needs at least 2 classes");
    Mat<S> onehot = Mat<S>::Zero(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      int y = labels[static_cast<std::size_t>(i)];
      if (y < 0 || y >= c)
        throw Error(ErrorCode::BadConfig,
                    "label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
      onehot(i, y) = S(1);
    }
    auto picked = mul(log_softmax_rows(logits), b.lift(onehot));
    return scale(sum_all(picked), -1.0 / static_cast<double>(n));
  }

  if (c != 1)
    throw Error(ErrorCode::BadConfig, "binary losses need a single logit column");
  Mat<S> sign(n, 1);  // u = sign .* x with sign = -1 for positives, +1 for negatives
  for (Eigen::Index i = 0; i < n; ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1)
      throw Error(ErrorCode::BadConfig, "binary labels must be 0 or 1");
    sign(i, 0) = y == 1 ? S(-1) : S(1);
  }
  auto u = mul(logits, b.lift(sign));
  auto bce = softplus(u);  // -log p_t
  if (kind == LossKind::Bce) return mean_all(bce);
  // (1 - p_t)^gamma = exp(-gamma * softplus(-u)); gamma = 0 makes this exactly 1
  auto mod = exp_elem(scale(softplus(scale(u, -1.0)), -gamma));
  return mean_all(mul(mod, bce));
}

// ---- perturbation for contrastive pre-training ----

struct PerturbConfig {
  double channel_drop_max_frac = 0.25;
  double token_drop_max_frac = 0.25;

  void validate() const {
    if (channel_drop_max_frac < 0.0 || channel_drop_max_frac >= 1.0 ||
        token_drop_max_frac < 0.0 || token_drop_max_frac >= 1.0)
      throw Error(ErrorCode::BadConfig, "drop fractions must be in [0, 1)");
  }
};

// Shared core of both perturbation paths: given the channel index of every
// token, draw the channels to drop and then the surviving tokens to drop, and
// return the kept token indices in their original order. At least one channel
// and one token always survive. The draw sequence is fixed, so one seed gives
// the same perturbation whether applied to a sentence or a prepared one.
inline std::vector<std::size_t> select_perturbation(const std::vector<int>& channels,
                                                    const PerturbConfig& cfg, Rng& rng) {
  cfg.validate();
  if (channels.empty())
    throw Error(ErrorCode::EmptySentence, "cannot perturb an empty sentence");

  std::vector<int> distinct(channels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const auto n_channels = distinct.size();

  double cfrac = uniform(rng, 0.0, cfg.channel_drop_max_frac);
  auto n_drop_c = std::min(static_cast<std::size_t>(cfrac * static_cast<double>(n_channels)),
                           n_channels - 1);
  std::vector<std::size_t> channel_order(n_channels);
  std::iota(channel_order.begin(), channel_order.end(), std::size_t{0});
  shuffle_indices(channel_order, rng);
  std::unordered_set<int> dropped;
  for (std::size_t i = 0; i < n_drop_c; ++i) dropped.insert(distinct[channel_order[i]]);

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (!dropped.count(channels[i])) survivors.push_back(i);

  double tfrac = uniform(rng, 0.0, cfg.token_drop_max_frac);
  auto n_drop_t = std::min(static_cast<std::size_t>(tfrac * static_cast<double>(survivors.size())),
                           survivors.size() - 1);
  std::vector<std::size_t> token_order(survivors.size());
  std::iota(token_order.begin(), token_order.end(), std::size_t{0});
  shuffle_indices(token_order, rng);
  std::vector<std::size_t> kept;
  kept.reserve(survivors.size() - n_drop_t);
  for (std::size_t i = n_drop_t; i < token_order.size(); ++i)
    kept.push_back(survivors[token_order[i]]);
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline BiosignalSentence perturb(const BiosignalSentence& sentence, const PerturbConfig& cfg,
                                 Rng& rng) {
  std::vector<int> channels;
  channels.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) channels.push_back(t.channel_index);
  auto kept = select_perturbation(channels, cfg, rng);

  BiosignalSentence out;
  out.config = sentence.config;
  out.tokens.reserve(kept.size());
  for (auto i : kept) out.tokens.push_back(sentence.tokens[i]);
  return out;
}

// Same perturbation applied as a row subset, skipping the spectral transform.
template <typename S>
PreparedSentence<S> perturb_prepared(const PreparedSentence<S>& ps, const PerturbConfig& cfg,
                                     Rng& rng) {
  auto kept = select_perturbation(ps.channels, cfg, rng);
  PreparedSentence<S> out;
  out.features.resize(static_cast<Eigen::Index>(kept.size()), ps.features.cols());
  out.positional.resize(static_cast<Eigen::Index>(kept.size()), ps.positional.cols());
  out.channels.reserve(kept.size());
  out.positions.reserve(kept.size());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    auto src = static_cast<Eigen::Index>(kept[r]);
    out.features.row(static_cast<Eigen::Index>(r)) = ps.features.row(src);
    out.positional.row(static_cast<Eigen::Index>(r)) = ps.positional.row(src);
    out.channels.push_back(ps.channels[kept[r]]);
    out.positions.push_back(ps.positions[kept[r]]);
  }
  return out;
}

// ---- predictor + contrastive objective ----

template <typename T>
struct PredictorParamsT {
  T w1, b1;  // l x l, 1 x l
  T w2, b2;  // l x l, 1 x l
};

template <typename S>
using PredictorParams = PredictorParamsT<Mat<S>>;

template <typename P, typename F>
void visit_predictor_params(P&& p, F&& fn) {
  fn("predictor.w1", p.w1);
  fn("predictor.b1", p.b1);
  fn("predictor.w2", p.w2);
  fn("predictor.b2", p.b2);
}

template <typename S>
PredictorParams<S> init_predictor_params(int embed_dim, Rng& rng) {
  if (embed_dim < 1) throw Error(ErrorCode::BadConfig, "predictor dimension must be positive");
  double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  PredictorParams<S> p;
  p.w1 = uniform_init<S>(rng, embed_dim, embed_dim, bound);
  p.b1 = Mat<S>::Zero(1, embed_dim);
  p.w2 = uniform_init<S>(rng, embed_dim, embed_dim, bound);
  p.b2 = Mat<S>::Zero(1, embed_dim);
  return p;
}

template <typename S>
PredictorParamsT<Tensor<S>> lift_predictor_params(Graph<S>& g, const PredictorParams<S>& p) {
  return PredictorParamsT<Tensor<S>>{g.parameter(p.w1), g.parameter(p.b1), g.parameter(p.w2),
                                     g.parameter(p.b2)};
}

template <typename V>
V predictor_apply(const V& z, const PredictorParamsT<V>& p) {
  return add_rowvec(matmul(relu(add_rowvec(matmul(z, p.w1), p.b1)), p.w2), p.b2);
}

// Mean diagonal cross-entropy between L2-normalized embedding rows: clean rows
// of z anchor the softmax over all z_pert rows at the given temperature.
template <typename B>
typename B::Value contrastive_loss(const typename B::Value& z, const typename B::Value& z_pert,
                                   double temperature, B& b) {
  using S = typename B::Scalar;
  const auto n = z.rows();
  if (n < 2) throw Error(ErrorCode::BadConfig, "contrastive loss needs a batch of at least 2");
  if (z_pert.rows() != n || z_pert.cols() != z.cols())
    throw Error(ErrorCode::ShapeError, "contrastive batches must have matching shapes");
  if (!(temperature > 0.0)) throw Error(ErrorCode::BadConfig, "temperature must be positive");

  auto logits = scale(matmul(l2_normalize_rows(z), transpose(l2_normalize_rows(z_pert))),
                      1.0 / temperature);
  auto diag = mul(log_softmax_rows(logits), b.lift(Mat<S>(Mat<S>::Identity(n, n))));
  return scale(sum_all(diag), -1.0 / static_cast<double>(n));
}

// One pre-training objective evaluation: encode each sentence clean and
// perturbed (predictor on the perturbed branch), then contrast the batches.
// Gradients flow through both branches unless stop_gradient detaches the
// clean one.
template <typename B>
typename B::Value pretrain_step(const std::vector<PreparedSentence<typename B::Scalar>>& batch,
                                const EncoderParamsT<typename B::Value>& enc,
                                const PredictorParamsT<typename B::Value>& pred,
                                const EncoderConfig& cfg, const PerturbConfig& pcfg,
                                double temperature, bool stop_gradient, Rng& rng, B& b) {
  using S = typename B::Scalar;
  using V = typename B::Value;
  if (batch.size() < 2)
    throw Error(ErrorCode::BadConfig, "pre-training needs a batch of at least 2");

  std::vector<V> clean, pert;
  clean.reserve(batch.size());
  pert.reserve(batch.size());
  for (const auto& ps : batch) {
    clean.push_back(encode<S>(ps, enc, cfg, b));
    pert.push_back(predictor_apply(encode<S>(perturb_prepared(ps, pcfg, rng), enc, cfg, b), pred));
  }
  auto z = concat_rows(clean);
  if (stop_gradient) z = detach(z);
  return contrastive_loss(z, concat_rows(pert), temperature, b);
}

}  // namespace biosent
