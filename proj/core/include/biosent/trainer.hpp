#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biosent/metrics.hpp"
#include "biosent/objectives.hpp"

// Training plumbing: Adam, the on-disk model bundle (encoder + optional head
// or predictor + the channel/tokenizer context needed to run it), supervised
// training with validation monitoring, multi-corpus contrastive pre-training,
// and fine-tuning that extends the channel table and swaps in a fresh head.

namespace biosent {

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;  // added to gradients (L2) unless decoupled
  bool decoupled = false;      // true: decay applied directly to parameters
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Mat<double>> m, v;
  std::int64_t t = 0;
};

// One update over an aligned parameter/gradient list. State tensors are
// allocated on first use and must keep their shapes afterwards.
void adam_step(const std::vector<Mat<double>*>& params,
               const std::vector<const Mat<double>*>& grads, AdamState& state,
               const AdamConfig& cfg);

// ---- model bundle ----

struct ModelBundle {
  EncoderConfig encoder_cfg;
  TokenizerConfig tokenizer_cfg;
  std::vector<std::string> channel_ids;  // row order of the channel table
  EncoderParams<double> encoder;
  std::optional<HeadParams<double>> head;
  std::optional<PredictorParams<double>> predictor;
  std::int64_t step = 0;
  nlohmann::json history = nlohmann::json::array();

  ChannelVocabulary vocabulary() const { return ChannelVocabulary(channel_ids); }
  int n_classes() const { return head ? static_cast<int>(head->w.cols()) : 0; }
};

// encoder_cfg.channel_vocab_size is overwritten from channel_ids.
ModelBundle make_supervised_model(EncoderConfig encoder_cfg, const TokenizerConfig& tokenizer_cfg,
                                  std::vector<std::string> channel_ids, int n_classes,
                                  std::uint64_t seed);
ModelBundle make_pretrain_model(EncoderConfig encoder_cfg, const TokenizerConfig& tokenizer_cfg,
                                std::vector<std::string> channel_ids, std::uint64_t seed);

// Sorted unique channel ids across recordings.
std::vector<std::string> collect_channel_ids(const std::vector<RawRecording>& recordings);

// Appends freshly initialized channel-table rows for ids the bundle has not
// seen; existing rows and their order stay bit-identical.
ModelBundle extend_channels(const ModelBundle& m, const std::vector<std::string>& ids,
                            std::uint64_t seed);

// ---- data preparation ----

struct SupervisedData {
  std::vector<PreparedSentence<double>> x;
  std::vector<int> y;

  std::size_t size() const { return x.size(); }
};

// Tokenizes + prepares against the bundle's tokenizer config and vocabulary.
SupervisedData prepare_supervised(const std::vector<RawRecording>& recordings,
                                  const ModelBundle& m);
std::vector<PreparedSentence<double>> prepare_unlabeled(
    const std::vector<RawRecording>& recordings, const ModelBundle& m);

// ---- training ----

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  bool decoupled_weight_decay = false;
  int batch_size = 32;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  std::string monitor_metric = "cohen_kappa";  // or "auroc"
  LossKind loss = LossKind::CrossEntropy;
  double focal_gamma = 2.0;
  // pre-training only
  double temperature = 0.2;
  bool stop_gradient = false;
  PerturbConfig perturb{};

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double monitor_value = 0.0;
  EvalReport val;
};

struct TrainResult {
  ModelBundle best;  // highest validation monitor metric (pre-training: last)
  ModelBundle last;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_value = 0.0;
};

TrainResult train_supervised(const SupervisedData& train, const SupervisedData& val,
                             const ModelBundle& init, const TrainConfig& cfg);

// Round-robin over corpora: each epoch interleaves one batch per corpus until
// all are exhausted. Trailing batches smaller than 2 are dropped.
TrainResult pretrain_unsupervised(const std::vector<std::vector<PreparedSentence<double>>>& corpora,
                                  const ModelBundle& init, const TrainConfig& cfg);

// Extends the channel table for unseen ids, replaces the head (n_classes,
// fresh init) and the training-only predictor, then trains end-to-end.
TrainResult fine_tune(const ModelBundle& pretrained, const std::vector<RawRecording>& train,
                      const std::vector<RawRecording>& val, int n_classes,
                      const TrainConfig& cfg);

// ---- inference and evaluation ----

struct Predictions {
  std::vector<int> label;
  std::vector<double> score;  // sigmoid(logit), binary heads only
};

Predictions predict(const ModelBundle& m, const std::vector<PreparedSentence<double>>& data);

// Binary heads report balanced accuracy, AUROC and AUC-PR; multi-class heads
// report balanced accuracy, Cohen's kappa and weighted F1.
EvalReport evaluate(const ModelBundle& m, const SupervisedData& data);

double monitor_value(const std::string& metric, const std::vector<int>& labels,
                     const Predictions& pred);

// ---- checkpoints: <stem>.ckpt.json manifest + <stem>.ckpt.f32 blob ----

void save_checkpoint(const ModelBundle& m, const std::string& stem);
ModelBundle load_checkpoint(const std::string& stem);

}  // namespace biosent
