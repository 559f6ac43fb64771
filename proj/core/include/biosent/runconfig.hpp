#pragma once
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "biosent/synthgen.hpp"
#include "biosent/trainer.hpp"

// Run configuration: one versioned JSON document that pins everything
// affecting results (tokenizer, encoder, optimization, task, pre-training
// perturbations, synthetic-data generation). Every block is optional and
// falls back to the struct defaults; unknown keys are rejected with every
// offender listed, so typos cannot silently revert a field to its default.
//
// Schema (schema_version 1):
//   tokenizer: target_rate_hz, token_length_s, overlap_s
//   encoder:   embed_dim, n_heads, n_layers, rank, max_tokens, dropout_rate,
//              fft_size, fcn_hidden, attention ("rank_reduced"|"dense"),
//              log_compress
//   train:     lr, weight_decay, decoupled_weight_decay, batch_size,
//              max_epochs, seed, monitor_metric ("cohen_kappa"|"auroc")
//   task:      n_classes, loss ("cross_entropy"|"bce"|"focal"), focal_gamma,
//              val_fraction
//   pretrain:  temperature, stop_gradient, channel_drop_max_frac,
//              token_drop_max_frac
//   synth:     n_classes, n_channels, duration_s, rate_hz, snr, seed,
//              n_samples
//
// When the encoder block does not pin fft_size, the spectral frame follows
// the tokenizer (fft_size = samples per token), which is what nearly every
// run wants.

namespace biosent {

struct RunConfig {
  TokenizerConfig tokenizer{};
  EncoderConfig encoder{};
  TrainConfig train{};  // loss/gamma/perturbation fields come from task + pretrain blocks
  int n_classes = 5;
  double val_fraction = 0.2;
  SynthTaskConfig synth{};
  int synth_samples = 1000;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

// Evaluation-time masking, given as a JSON object (e.g. on the command line):
//   mode ("segments"|"channels"|"both"), segments_per_channel,
//   channels_to_mask, segment_len_s, strategy ("drop_tokens"|"zero_impute"),
//   seed
struct MaskRequest {
  MaskSpec spec{};
  std::uint64_t seed = 0;
};

MaskRequest parse_mask_request(const nlohmann::json& doc);

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

}  // namespace biosent
