#include "biosent/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace biosent {

namespace {

using MatD = Mat<double>;

std::vector<std::size_t> shuffled_range(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle_indices(idx, rng);
  return idx;
}

// Chunks an index order into batches, dropping any trailing batch below
// min_batch (contrastive batches cannot shrink to one sample).
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   int batch_size, std::size_t min_batch) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    if (end - start < min_batch) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

nlohmann::json history_entry(const EpochRecord& er) {
  return nlohmann::json{{"epoch", er.epoch},
                        {"train_loss", er.train_loss},
                        {"monitor", er.monitor_value},
                        {"metrics", er.val.values}};
}

}  // namespace

void adam_step(const std::vector<MatD*>& params, const std::vector<const MatD*>& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw Error(ErrorCode::ShapeError, "parameter and gradient lists differ in length");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto* p : params) {
      state.m.push_back(MatD::Zero(p->rows(), p->cols()));
      state.v.push_back(MatD::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size())
    throw Error(ErrorCode::ShapeError, "optimizer state does not match the parameter list");

  ++state.t;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    MatD& p = *params[i];
    const MatD& g = *grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].rows() != p.rows() ||
        state.m[i].cols() != p.cols())
      throw Error(ErrorCode::ShapeError, "gradient or state shape mismatch");
    if (!g.allFinite())
      throw Error(ErrorCode::NaNGradient, "non-finite gradient in optimizer step");

    if (cfg.decoupled && cfg.weight_decay != 0.0) p *= (1.0 - cfg.lr * cfg.weight_decay);
    MatD geff = g;
    if (!cfg.decoupled && cfg.weight_decay != 0.0) geff += cfg.weight_decay * p;

    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * geff;
    state.v[i] =
        cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * geff.cwiseProduct(geff);
    p.array() -=
        cfg.lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + cfg.eps);
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorCode::BadConfig, "lr must be positive");
  if (weight_decay < 0.0) throw Error(ErrorCode::BadConfig, "weight_decay must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::BadConfig, "batch_size must be >= 1");
  if (max_epochs < 1) throw Error(ErrorCode::BadConfig, "max_epochs must be >= 1");
  if (monitor_metric != "auroc" && monitor_metric != "cohen_kappa")
    throw Error(ErrorCode::BadConfig, "monitor_metric must be 'auroc' or 'cohen_kappa'");
  if (focal_gamma < 0.0) throw Error(ErrorCode::BadConfig, "focal_gamma must be >= 0");
  if (!(temperature > 0.0)) throw Error(ErrorCode::BadConfig, "temperature must be positive");
  perturb.validate();
}

ModelBundle make_supervised_model(EncoderConfig encoder_cfg, const TokenizerConfig& tokenizer_cfg,
                                  std::vector<std::string> channel_ids, int n_classes,
                                  std::uint64_t seed) {
  tokenizer_cfg.validate();
  if (channel_ids.empty()) throw Error(ErrorCode::BadConfig, "a model needs at least one channel");
  encoder_cfg.channel_vocab_size = static_cast<int>(channel_ids.size());
  if (encoder_cfg.fft_size != tokenizer_cfg.samples_per_token())
    throw Error(ErrorCode::BadConfig,
                "encoder fft_size must equal the tokenizer's samples per token");
  encoder_cfg.validate();

  ModelBundle m;
  m.encoder_cfg = encoder_cfg;
  m.tokenizer_cfg = tokenizer_cfg;
  m.channel_ids = std::move(channel_ids);
  Rng rng(seed);
  m.encoder = init_encoder_params<double>(encoder_cfg, rng);
  m.head = init_head_params<double>(encoder_cfg.embed_dim, n_classes, rng);
  return m;
}

ModelBundle make_pretrain_model(EncoderConfig encoder_cfg, const TokenizerConfig& tokenizer_cfg,
                                std::vector<std::string> channel_ids, std::uint64_t seed) {
  auto m = make_supervised_model(std::move(encoder_cfg), tokenizer_cfg, std::move(channel_ids),
                                 1, seed);
  m.head.reset();
  Rng rng(mix_seed(seed, 0x9e3779b97f4a7c15ull));
  m.predictor = init_predictor_params<double>(m.encoder_cfg.embed_dim, rng);
  return m;
}

std::vector<std::string> collect_channel_ids(const std::vector<RawRecording>& recordings) {
  std::set<std::string> ids;
  for (const auto& rec : recordings)
    for (const auto& ch : rec.channels) ids.insert(ch.channel_id);
  return {ids.begin(), ids.end()};
}

ModelBundle extend_channels(const ModelBundle& m, const std::vector<std::string>& ids,
                            std::uint64_t seed) {
  std::set<std::string> known(m.channel_ids.begin(), m.channel_ids.end());
  std::set<std::string> fresh;
  for (const auto& id : ids)
    if (!known.count(id)) fresh.insert(id);

  ModelBundle out = m;
  if (fresh.empty()) return out;

  auto old_rows = out.encoder.channel_table.rows();
  auto cols = out.encoder.channel_table.cols();
  out.encoder.channel_table.conservativeResize(
      old_rows + static_cast<Eigen::Index>(fresh.size()), cols);
  Rng rng(mix_seed(seed, 0xc5ab1e5ull));
  for (const auto& id : fresh) {
    out.channel_ids.push_back(id);
    for (Eigen::Index j = 0; j < cols; ++j)
      out.encoder.channel_table(old_rows, j) = normal(rng, 0.0, 0.02);
    ++old_rows;
  }
  out.encoder_cfg.channel_vocab_size = static_cast<int>(out.channel_ids.size());
  return out;
}

SupervisedData prepare_supervised(const std::vector<RawRecording>& recordings,
                                  const ModelBundle& m) {
  SupervisedData data;
  auto vocab = m.vocabulary();
  data.x.reserve(recordings.size());
  data.y.reserve(recordings.size());
  for (const auto& rec : recordings) {
    if (!rec.label)
      throw Error(ErrorCode::BadConfig, "recording '" + rec.id + "' has no label");
    data.x.push_back(
        prepare_sentence<double>(build_sentence(rec, m.tokenizer_cfg, vocab), m.encoder_cfg));
    data.y.push_back(*rec.label);
  }
  return data;
}

std::vector<PreparedSentence<double>> prepare_unlabeled(
    const std::vector<RawRecording>& recordings, const ModelBundle& m) {
  std::vector<PreparedSentence<double>> out;
  auto vocab = m.vocabulary();
  out.reserve(recordings.size());
  for (const auto& rec : recordings)
    out.push_back(
        prepare_sentence<double>(build_sentence(rec, m.tokenizer_cfg, vocab), m.encoder_cfg));
  return out;
}

Predictions predict(const ModelBundle& m, const std::vector<PreparedSentence<double>>& data) {
  if (!m.head) throw Error(ErrorCode::BadConfig, "model has no classification head");
  Predictions out;
  out.label.reserve(data.size());
  const bool binary = m.head->w.cols() == 1;
  for (const auto& ps : data) {
    MatD logits = classify(encode(ps, m.encoder, m.encoder_cfg), *m.head);
    if (binary) {
      double score = 1.0 / (1.0 + std::exp(-logits(0, 0)));
      out.score.push_back(score);
      out.label.push_back(score > 0.5 ? 1 : 0);
    } else {
      Eigen::Index best = 0;
      logits.row(0).maxCoeff(&best);
      out.label.push_back(static_cast<int>(best));
    }
  }
  return out;
}

double monitor_value(const std::string& metric, const std::vector<int>& labels,
                     const Predictions& pred) {
  if (metric == "auroc") {
    if (pred.score.empty())
      throw Error(ErrorCode::BadConfig, "auroc monitoring needs a binary head");
    return auroc(labels, pred.score);
  }
  if (metric == "cohen_kappa") return cohen_kappa(labels, pred.label);
  throw Error(ErrorCode::BadConfig, "unknown monitor metric '" + metric + "'");
}

EvalReport evaluate(const ModelBundle& m, const SupervisedData& data) {
  auto pred = predict(m, data.x);
  EvalReport report;
  report.n_samples = data.size();
  const bool binary = m.head->w.cols() == 1;
  report.n_classes = binary ? 2 : static_cast<int>(m.head->w.cols());
  report.values["balanced_accuracy"] = balanced_accuracy(data.y, pred.label);
  if (binary) {
    report.values["auroc"] = auroc(data.y, pred.score);
    report.values["auc_pr"] = auc_pr(data.y, pred.score);
  } else {
    report.values["cohen_kappa"] = cohen_kappa(data.y, pred.label);
    report.values["weighted_f1"] = weighted_f1(data.y, pred.label);
  }
  return report;
}

TrainResult train_supervised(const SupervisedData& train, const SupervisedData& val,
                             const ModelBundle& init, const TrainConfig& cfg) {
  cfg.validate();
  if (train.x.empty() || val.x.empty())
    throw Error(ErrorCode::BadConfig, "train and validation splits must be non-empty");
  if (train.x.size() != train.y.size() || val.x.size() != val.y.size())
    throw Error(ErrorCode::ShapeError, "labels and sentences differ in length");
  if (!init.head) throw Error(ErrorCode::BadConfig, "supervised training needs a head");

  ModelBundle work = init;
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.weight_decay = cfg.weight_decay;
  acfg.decoupled = cfg.decoupled_weight_decay;
  AdamState state;
  Rng rng(cfg.seed);

  TrainResult result;
  result.best_value = -std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto batches = make_batches(shuffled_range(train.x.size(), rng), cfg.batch_size, 1);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      Graph<double> g;
      auto enc_t = lift_params(g, work.encoder);
      auto head_t = lift_head_params(g, *work.head);
      GraphBuilder<double> b{&g, &rng, true};

      std::vector<Tensor<double>> rows;
      std::vector<int> labels;
      rows.reserve(batch.size());
      labels.reserve(batch.size());
      for (auto i : batch) {
        rows.push_back(encode<double>(train.x[i], enc_t, work.encoder_cfg, b));
        labels.push_back(train.y[i]);
      }
      auto loss =
          supervised_loss(classify(concat_rows(rows), head_t), labels, cfg.loss, b,
                          cfg.focal_gamma);
      g.backward(loss);

      std::vector<MatD*> params;
      std::vector<const MatD*> grads;
      visit_params(work.encoder, [&](const std::string&, MatD& p) { params.push_back(&p); });
      visit_head_params(*work.head, [&](const std::string&, MatD& p) { params.push_back(&p); });
      visit_params(enc_t, [&](const std::string&, Tensor<double>& t) { grads.push_back(&t.grad()); });
      visit_head_params(head_t,
                        [&](const std::string&, Tensor<double>& t) { grads.push_back(&t.grad()); });
      adam_step(params, grads, state, acfg);

      loss_sum += loss.value()(0, 0);
      ++work.step;
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = loss_sum / static_cast<double>(batches.size());
    auto preds = predict(work, val.x);
    er.monitor_value = monitor_value(cfg.monitor_metric, val.y, preds);
    er.val = evaluate(work, val);
    work.history.push_back(history_entry(er));
    result.history.push_back(er);

    if (er.monitor_value > result.best_value) {
      result.best_value = er.monitor_value;
      result.best_epoch = epoch;
      result.best = work;
    }
  }
  result.last = std::move(work);
  return result;
}

TrainResult pretrain_unsupervised(
    const std::vector<std::vector<PreparedSentence<double>>>& corpora, const ModelBundle& init,
    const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.batch_size < 2)
    throw Error(ErrorCode::BadConfig, "pre-training needs batch_size >= 2");
  if (corpora.empty()) throw Error(ErrorCode::BadConfig, "pre-training needs at least one corpus");
  std::size_t total = 0;
  for (const auto& corpus : corpora) total += corpus.size();
  if (total < 2) throw Error(ErrorCode::BadConfig, "pre-training corpora are too small");
  if (!init.predictor) throw Error(ErrorCode::BadConfig, "pre-training needs a predictor");

  ModelBundle work = init;
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.weight_decay = cfg.weight_decay;
  acfg.decoupled = cfg.decoupled_weight_decay;
  AdamState state;
  Rng rng(cfg.seed);

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // queue one shuffled batch list per corpus, then interleave round-robin
    std::vector<std::vector<std::vector<std::size_t>>> queues;
    queues.reserve(corpora.size());
    for (const auto& corpus : corpora)
      queues.push_back(make_batches(shuffled_range(corpus.size(), rng), cfg.batch_size, 2));

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    std::vector<std::size_t> cursor(corpora.size(), 0);
    bool any = true;
    while (any) {
      any = false;
      for (std::size_t c = 0; c < corpora.size(); ++c) {
        if (cursor[c] >= queues[c].size()) continue;
        const auto& batch_idx = queues[c][cursor[c]++];
        any = true;

        std::vector<PreparedSentence<double>> batch;
        batch.reserve(batch_idx.size());
        for (auto i : batch_idx) batch.push_back(corpora[c][i]);

        Graph<double> g;
        auto enc_t = lift_params(g, work.encoder);
        auto pred_t = lift_predictor_params(g, *work.predictor);
        GraphBuilder<double> b{&g, &rng, true};
        auto loss = pretrain_step(batch, enc_t, pred_t, work.encoder_cfg, cfg.perturb,
                                  cfg.temperature, cfg.stop_gradient, rng, b);
        g.backward(loss);

        std::vector<MatD*> params;
        std::vector<const MatD*> grads;
        visit_params(work.encoder, [&](const std::string&, MatD& p) { params.push_back(&p); });
        visit_predictor_params(*work.predictor,
                               [&](const std::string&, MatD& p) { params.push_back(&p); });
        visit_params(enc_t,
                     [&](const std::string&, Tensor<double>& t) { grads.push_back(&t.grad()); });
        visit_predictor_params(
            pred_t, [&](const std::string&, Tensor<double>& t) { grads.push_back(&t.grad()); });
        adam_step(params, grads, state, acfg);

        loss_sum += loss.value()(0, 0);
        ++n_batches;
        ++work.step;
      }
    }
    if (n_batches == 0)
      throw Error(ErrorCode::BadConfig, "no batch reached the contrastive minimum of 2");

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = loss_sum / static_cast<double>(n_batches);
    work.history.push_back(history_entry(er));
    result.history.push_back(er);
  }
  result.best_epoch = cfg.max_epochs;
  result.best_value = result.history.back().train_loss;
  result.best = work;  // unsupervised: no validation selection, keep the last
  result.last = std::move(work);
  return result;
}

TrainResult fine_tune(const ModelBundle& pretrained, const std::vector<RawRecording>& train,
                      const std::vector<RawRecording>& val, int n_classes,
                      const TrainConfig& cfg) {
  cfg.validate();
  std::vector<RawRecording> all(train);
  all.insert(all.end(), val.begin(), val.end());
  auto m = extend_channels(pretrained, collect_channel_ids(all), cfg.seed);

  Rng head_rng(mix_seed(cfg.seed, 0x6ead5eedull));
  m.head = init_head_params<double>(m.encoder_cfg.embed_dim, n_classes, head_rng);
  m.predictor.reset();  // prediction layers are replaced, not carried over

  return train_supervised(prepare_supervised(train, m), prepare_supervised(val, m), m, cfg);
}

}  // namespace biosent
