#pragma once
#include <cmath>
#include <string>
#include <vector>

#include "biosent/graph.hpp"
#include "biosent/spectral.hpp"
#include "biosent/tokenizer.hpp"

// The sentence encoder: per-token embeddings (spectral FCN + channel table +
// sinusoidal position), a stack of pre-norm transformer blocks whose attention
// projects the N keys/values down to d learned pseudo-tokens, and mean pooling
// to one embedding row. Forward code is templated over a builder (graph.hpp)
// so eval mode runs tape-free while training records gradients.

namespace biosent {

// Dense mode materializes the full N x N attention (reference/baseline only);
// RankReduced is the production path with O(N d) cost.
enum class AttentionKind { RankReduced, Dense };

struct EncoderConfig {
  int embed_dim = 256;  // l; must divide by n_heads
  int n_heads = 8;
  int n_layers = 4;
  int rank = 64;          // d: pseudo-token count of the key/value projections
  int max_tokens = 2048;  // N_max: column count of the learned E/F projections
  double dropout_rate = 0.1;
  int fft_size = 200;  // token sample count m; feature width is m/2 + 1
  int fcn_hidden = 256;
  int channel_vocab_size = 0;
  AttentionKind attention = AttentionKind::RankReduced;
  bool log_compress = true;  // raw magnitudes when false

  int head_dim() const { return embed_dim / n_heads; }
  int feature_bins() const { return fft_size / 2 + 1; }
  void validate() const {
    if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0)
      throw Error(ErrorCode::BadConfig, "embed_dim must be a positive multiple of n_heads");
    if (n_layers < 0) throw Error(ErrorCode::BadConfig, "n_layers must be >= 0");
    if (rank < 1 || rank > max_tokens)
      throw Error(ErrorCode::BadConfig, "rank must satisfy 1 <= rank <= max_tokens");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw Error(ErrorCode::BadConfig, "dropout_rate must be in [0, 1)");
    if (fft_size < 2) throw Error(ErrorCode::BadFftSize, "fft_size must be >= 2");
    if (fcn_hidden < 1) throw Error(ErrorCode::BadConfig, "fcn_hidden must be >= 1");
    if (channel_vocab_size < 1)
      throw Error(ErrorCode::BadConfig, "channel_vocab_size must be >= 1");
  }
};

// All learnable state, templated on the value type: Mat<S> at rest / in eval,
// Tensor<S> when lifted onto a graph for a training step.
template <typename T>
struct LayerParamsT {
  T ln1_gamma, ln1_beta;  // 1 x l each
  T wq, wk, wv;           // l x l; heads live in column groups of head_dim
  T e, f;                 // rank x max_tokens; first N columns used
  T wo, bo;               // l x l, 1 x l
  T ln2_gamma, ln2_beta;  // 1 x l
  T ff_w1, ff_b1;         // l x 4l, 1 x 4l
  T ff_w2, ff_b2;         // 4l x l, 1 x l
};

template <typename T>
struct EncoderParamsT {
  T fcn_w1, fcn_b1;  // bins x hidden, 1 x hidden
  T fcn_w2, fcn_b2;  // hidden x l, 1 x l
  T channel_table;   // C x l
  std::vector<LayerParamsT<T>> layers;
};

template <typename S>
using EncoderParams = EncoderParamsT<Mat<S>>;

// Visits every parameter as (dotted name, field) in a fixed order — the order
// is the checkpoint blob layout and the optimizer state layout.
template <typename P, typename F>
void visit_params(P&& p, F&& fn) {
  fn("fcn.w1", p.fcn_w1);
  fn("fcn.b1", p.fcn_b1);
  fn("fcn.w2", p.fcn_w2);
  fn("fcn.b2", p.fcn_b2);
  fn("channel_table", p.channel_table);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& layer = p.layers[i];
    std::string base = "layers." + std::to_string(i) + ".";
    fn(base + "ln1_gamma", layer.ln1_gamma);
    fn(base + "ln1_beta", layer.ln1_beta);
    fn(base + "wq", layer.wq);
    fn(base + "wk", layer.wk);
    fn(base + "wv", layer.wv);
    fn(base + "e", layer.e);
    fn(base + "f", layer.f);
    fn(base + "wo", layer.wo);
    fn(base + "bo", layer.bo);
    fn(base + "ln2_gamma", layer.ln2_gamma);
    fn(base + "ln2_beta", layer.ln2_beta);
    fn(base + "ff_w1", layer.ff_w1);
    fn(base + "ff_b1", layer.ff_b1);
    fn(base + "ff_w2", layer.ff_w2);
    fn(base + "ff_b2", layer.ff_b2);
  }
}

// Rebuilds the parameter struct with fn applied to every field; used to lift
// matrices onto a graph (and anything else shape-preserving).
template <typename T, typename F>
auto map_params(const EncoderParamsT<T>& p, F&& fn) {
  using U = decltype(fn(p.fcn_w1));
  EncoderParamsT<U> out;
  out.fcn_w1 = fn(p.fcn_w1);
  out.fcn_b1 = fn(p.fcn_b1);
  out.fcn_w2 = fn(p.fcn_w2);
  out.fcn_b2 = fn(p.fcn_b2);
  out.channel_table = fn(p.channel_table);
  out.layers.reserve(p.layers.size());
  for (const auto& layer : p.layers) {
    LayerParamsT<U> lo;
    lo.ln1_gamma = fn(layer.ln1_gamma);
    lo.ln1_beta = fn(layer.ln1_beta);
    lo.wq = fn(layer.wq);
    lo.wk = fn(layer.wk);
    lo.wv = fn(layer.wv);
    lo.e = fn(layer.e);
    lo.f = fn(layer.f);
    lo.wo = fn(layer.wo);
    lo.bo = fn(layer.bo);
    lo.ln2_gamma = fn(layer.ln2_gamma);
    lo.ln2_beta = fn(layer.ln2_beta);
    lo.ff_w1 = fn(layer.ff_w1);
    lo.ff_b1 = fn(layer.ff_b1);
    lo.ff_w2 = fn(layer.ff_w2);
    lo.ff_b2 = fn(layer.ff_b2);
    out.layers.push_back(std::move(lo));
  }
  return out;
}

template <typename S>
EncoderParamsT<Tensor<S>> lift_params(Graph<S>& g, const EncoderParams<S>& p) {
  return map_params(p, [&g](const Mat<S>& m) { return g.parameter(m); });
}

// Linear maps: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); channel table:
// normal(0, 0.02); norms gamma=1/beta=0; biases zero. Draw order is fixed so a
// seed pins the whole initialization.
template <typename S>
EncoderParams<S> init_encoder_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  int l = cfg.embed_dim, bins = cfg.feature_bins();
  auto linear = [&rng](int rows, int cols) {
    return uniform_init<S>(rng, rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)));
  };
  EncoderParams<S> p;
  p.fcn_w1 = linear(bins, cfg.fcn_hidden);
  p.fcn_b1 = Mat<S>::Zero(1, cfg.fcn_hidden);
  p.fcn_w2 = linear(cfg.fcn_hidden, l);
  p.fcn_b2 = Mat<S>::Zero(1, l);
  p.channel_table = normal_init<S>(rng, cfg.channel_vocab_size, l, 0.02);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& layer : p.layers) {
    layer.ln1_gamma = Mat<S>::Ones(1, l);
    layer.ln1_beta = Mat<S>::Zero(1, l);
    layer.wq = linear(l, l);
    layer.wk = linear(l, l);
    layer.wv = linear(l, l);
    double eb = 1.0 / std::sqrt(static_cast<double>(cfg.max_tokens));
    layer.e = uniform_init<S>(rng, cfg.rank, cfg.max_tokens, eb);
    layer.f = uniform_init<S>(rng, cfg.rank, cfg.max_tokens, eb);
    layer.wo = linear(l, l);
    layer.bo = Mat<S>::Zero(1, l);
    layer.ln2_gamma = Mat<S>::Ones(1, l);
    layer.ln2_beta = Mat<S>::Zero(1, l);
    layer.ff_w1 = linear(l, 4 * l);
    layer.ff_b1 = Mat<S>::Zero(1, 4 * l);
    layer.ff_w2 = linear(4 * l, l);
    layer.ff_b2 = Mat<S>::Zero(1, l);
  }
  return p;
}

// Sinusoidal position row for within-channel index k (1-based): evaluated at
// k-1, dims 2i/2i+1 = sin/cos((k-1) / 10000^(2i/l)). Same k across channels
// shares the row, grouping tokens temporally.
template <typename S>
Mat<S> positional_embedding(int position, int embed_dim) {
  Mat<S> row(1, embed_dim);
  double pos = static_cast<double>(position - 1);
  for (int j = 0; j < embed_dim; ++j) {
    double freq = std::pow(10000.0, static_cast<double>(2 * (j / 2)) / embed_dim);
    double angle = pos / freq;
    row(0, j) = static_cast<S>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
  }
  return row;
}

// Everything about a sentence the encoder consumes, precomputed once: spectral
// features and positional rows are fixed by the config, so datasets cache
// PreparedSentences instead of re-running the transform every epoch.
template <typename S>
struct PreparedSentence {
  Mat<S> features;    // N x bins
  Mat<S> positional;  // N x l
  std::vector<int> channels;
  std::vector<int> positions;

  Eigen::Index size() const { return features.rows(); }
};

template <typename S>
PreparedSentence<S> prepare_sentence(const BiosignalSentence& sentence,
                                     const EncoderConfig& cfg) {
  cfg.validate();
  auto n = static_cast<Eigen::Index>(sentence.tokens.size());
  if (n == 0) throw Error(ErrorCode::EmptySentence, "cannot encode an empty sentence");
  if (n > cfg.max_tokens)
    throw Error(ErrorCode::SentenceTooLong,
                "sentence has " + std::to_string(n) + " tokens, max_tokens is " +
                    std::to_string(cfg.max_tokens));

  PreparedSentence<S> ps;
  ps.features.resize(n, cfg.feature_bins());
  ps.positional.resize(n, cfg.embed_dim);
  ps.channels.reserve(sentence.tokens.size());
  ps.positions.reserve(sentence.tokens.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Token& tok = sentence.tokens[static_cast<std::size_t>(i)];
    if (static_cast<int>(tok.values.size()) != cfg.fft_size)
      throw Error(ErrorCode::BadFftSize,
                  "token has " + std::to_string(tok.values.size()) + " samples, fft_size is " +
                      std::to_string(cfg.fft_size));
    if (tok.channel_index < 0 || tok.channel_index >= cfg.channel_vocab_size)
      throw Error(ErrorCode::UnknownChannel, "token channel index outside the vocabulary");
    auto feat = energy_features(tok.values, cfg.log_compress);
    for (std::size_t b = 0; b < feat.size(); ++b)
      ps.features(i, static_cast<Eigen::Index>(b)) = static_cast<S>(feat[b]);
    ps.positional.row(i) = positional_embedding<S>(tok.position, cfg.embed_dim);
    ps.channels.push_back(tok.channel_index);
    ps.positions.push_back(tok.position);
  }
  return ps;
}

// ---- forward passes, generic over the builder ----

template <typename S, typename B>
typename B::Value embed_sentence(const PreparedSentence<S>& ps,
                                 const EncoderParamsT<typename B::Value>& p,
                                 const EncoderConfig& cfg, B& b) {
  auto feat = b.lift(ps.features);
  auto hidden = relu(add_rowvec(matmul(feat, p.fcn_w1), p.fcn_b1));
  auto segment = add_rowvec(matmul(hidden, p.fcn_w2), p.fcn_b2);
  auto channel = embedding_lookup(p.channel_table, ps.channels);
  return add(add(segment, channel), b.lift(ps.positional));
}

template <typename S, typename B>
typename B::Value linear_attention(const typename B::Value& x,
                                   const LayerParamsT<typename B::Value>& lp,
                                   const EncoderConfig& cfg, B& b) {
  using V = typename B::Value;
  Eigen::Index n = x.rows();
  if (n > cfg.max_tokens)
    throw Error(ErrorCode::SentenceTooLong, "attention input exceeds max_tokens");
  int hd = cfg.head_dim();
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  auto q = matmul(x, lp.wq);
  auto key = matmul(x, lp.wk);
  auto val = matmul(x, lp.wv);

  std::vector<V> heads;
  heads.reserve(static_cast<std::size_t>(cfg.n_heads));
  if (cfg.attention == AttentionKind::RankReduced) {
    // keys/values shrink to `rank` pseudo-tokens via the first n columns of E/F
    auto eslice = col_slice(lp.e, 0, n);
    auto fslice = col_slice(lp.f, 0, n);
    for (int h = 0; h < cfg.n_heads; ++h) {
      auto qh = col_slice(q, h * hd, hd);
      auto kh = matmul(eslice, col_slice(key, h * hd, hd));  // rank x hd
      auto vh = matmul(fslice, col_slice(val, h * hd, hd));  // rank x hd
      auto attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));  // n x rank
      heads.push_back(matmul(attn, vh));
    }
  } else {
    for (int h = 0; h < cfg.n_heads; ++h) {
      auto qh = col_slice(q, h * hd, hd);
      auto kh = col_slice(key, h * hd, hd);
      auto vh = col_slice(val, h * hd, hd);
      auto attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));  // n x n
      heads.push_back(matmul(attn, vh));
    }
  }
  return add_rowvec(matmul(concat_cols(heads), lp.wo), lp.bo);
}

template <typename S, typename B>
typename B::Value transformer_block(const typename B::Value& x,
                                    const LayerParamsT<typename B::Value>& lp,
                                    const EncoderConfig& cfg, B& b) {
  auto normed1 = layer_norm_rows(x, lp.ln1_gamma, lp.ln1_beta);
  auto attn = linear_attention<S>(b.dropout(normed1, cfg.dropout_rate), lp, cfg, b);
  auto x1 = add(x, attn);

  auto normed2 = layer_norm_rows(x1, lp.ln2_gamma, lp.ln2_beta);
  auto pre = b.dropout(normed2, cfg.dropout_rate);
  auto ff = add_rowvec(
      matmul(elu(add_rowvec(matmul(pre, lp.ff_w1), lp.ff_b1)), lp.ff_w2), lp.ff_b2);
  return add(x1, ff);
}

// Full pipeline to one 1 x l embedding row.
template <typename S, typename B>
typename B::Value encode(const PreparedSentence<S>& ps,
                         const EncoderParamsT<typename B::Value>& p, const EncoderConfig& cfg,
                         B& b) {
  auto x = embed_sentence(ps, p, cfg, b);
  for (const auto& lp : p.layers) x = transformer_block<S>(x, lp, cfg, b);
  return mean_rows(x);
}

// Eval-mode conveniences.
template <typename S>
Mat<S> encode(const PreparedSentence<S>& ps, const EncoderParams<S>& p,
              const EncoderConfig& cfg) {
  PlainBuilder<S> b;
  return encode<S>(ps, p, cfg, b);
}

template <typename S>
Mat<S> encode(const BiosignalSentence& sentence, const EncoderParams<S>& p,
              const EncoderConfig& cfg) {
  return encode<S>(prepare_sentence<S>(sentence, cfg), p, cfg);
}

}  // namespace biosent
