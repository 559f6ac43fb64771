#include "biosent/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace biosent {

namespace {

using nlohmann::json;

const json kEmptyObject = json::object();

std::string dotted(std::string_view prefix, const std::string& key) {
  return prefix.empty() ? key : std::string(prefix) + "." + key;
}

// Returns doc[key] if present, insisting it is an object; missing -> {}.
const json& section(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) return kEmptyObject;
  if (!it->is_object())
    throw Error(ErrorCode::BadConfig, std::string("config block '") + key +
                                          "' must be a JSON object");
  return *it;
}

void collect_unknown(const json& obj, std::string_view prefix,
                     std::initializer_list<std::string_view> allowed,
                     std::vector<std::string>& unknown) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      unknown.push_back(dotted(prefix, it.key()));
  }
}

[[noreturn]] void wrong_type(std::string_view prefix, const char* key, const char* want) {
  throw Error(ErrorCode::BadConfig,
              "config key '" + dotted(prefix, key) + "' must be " + want);
}

void read(const json& obj, std::string_view prefix, const char* key, double& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_number()) wrong_type(prefix, key, "a number");
  out = it->get<double>();
}

void read(const json& obj, std::string_view prefix, const char* key, int& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_number_integer()) wrong_type(prefix, key, "an integer");
  out = it->get<int>();
}

void read(const json& obj, std::string_view prefix, const char* key, std::uint64_t& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_number_integer()) wrong_type(prefix, key, "a non-negative integer");
  if (it->is_number_unsigned()) {
    out = it->get<std::uint64_t>();
    return;
  }
  auto v = it->get<std::int64_t>();
  if (v < 0) wrong_type(prefix, key, "a non-negative integer");
  out = static_cast<std::uint64_t>(v);
}

void read(const json& obj, std::string_view prefix, const char* key, bool& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_boolean()) wrong_type(prefix, key, "a boolean");
  out = it->get<bool>();
}

void read(const json& obj, std::string_view prefix, const char* key, std::string& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_string()) wrong_type(prefix, key, "a string");
  out = it->get<std::string>();
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ", ";
    out += p;
  }
  return out;
}

}  // namespace

std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::CrossEntropy: return "cross_entropy";
    case LossKind::Bce: return "bce";
    case LossKind::Focal: return "focal";
  }
  return "cross_entropy";
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "cross_entropy") return LossKind::CrossEntropy;
  if (name == "bce") return LossKind::Bce;
  if (name == "focal") return LossKind::Focal;
  throw Error(ErrorCode::BadConfig,
              "loss must be 'cross_entropy', 'bce' or 'focal', not '" + name + "'");
}

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object())
    throw Error(ErrorCode::BadConfig, "run config must be a JSON object");

  // First sweep the whole document for unknown keys so one error names every
  // offender, then do the typed reads.
  std::vector<std::string> unknown;
  collect_unknown(doc, "",
                  {"schema_version", "tokenizer", "encoder", "train", "task", "pretrain",
                   "synth"},
                  unknown);
  const json& tok = section(doc, "tokenizer");
  const json& enc = section(doc, "encoder");
  const json& train = section(doc, "train");
  const json& task = section(doc, "task");
  const json& pretrain = section(doc, "pretrain");
  const json& synth = section(doc, "synth");
  collect_unknown(tok, "tokenizer", {"target_rate_hz", "token_length_s", "overlap_s"}, unknown);
  collect_unknown(enc, "encoder",
                  {"embed_dim", "n_heads", "n_layers", "rank", "max_tokens", "dropout_rate",
                   "fft_size", "fcn_hidden", "attention", "log_compress"},
                  unknown);
  collect_unknown(train, "train",
                  {"lr", "weight_decay", "decoupled_weight_decay", "batch_size", "max_epochs",
                   "seed", "monitor_metric"},
                  unknown);
  collect_unknown(task, "task", {"n_classes", "loss", "focal_gamma", "val_fraction"}, unknown);
  collect_unknown(pretrain, "pretrain",
                  {"temperature", "stop_gradient", "channel_drop_max_frac",
                   "token_drop_max_frac"},
                  unknown);
  collect_unknown(synth, "synth",
                  {"n_classes", "n_channels", "duration_s", "rate_hz", "snr", "seed",
                   "n_samples"},
                  unknown);
  if (!unknown.empty())
    throw Error(ErrorCode::BadConfig, "unknown config keys: " + join(unknown));

  int version = 1;
  read(doc, "", "schema_version", version);
  if (version != 1)
    throw Error(ErrorCode::BadConfig,
                "unsupported schema_version " + std::to_string(version) + " (expected 1)");

  RunConfig cfg;
  read(tok, "tokenizer", "target_rate_hz", cfg.tokenizer.target_rate_hz);
  read(tok, "tokenizer", "token_length_s", cfg.tokenizer.token_length_s);
  read(tok, "tokenizer", "overlap_s", cfg.tokenizer.overlap_s);
  cfg.tokenizer.validate();

  read(enc, "encoder", "embed_dim", cfg.encoder.embed_dim);
  read(enc, "encoder", "n_heads", cfg.encoder.n_heads);
  read(enc, "encoder", "n_layers", cfg.encoder.n_layers);
  read(enc, "encoder", "rank", cfg.encoder.rank);
  read(enc, "encoder", "max_tokens", cfg.encoder.max_tokens);
  read(enc, "encoder", "dropout_rate", cfg.encoder.dropout_rate);
  read(enc, "encoder", "fcn_hidden", cfg.encoder.fcn_hidden);
  read(enc, "encoder", "log_compress", cfg.encoder.log_compress);
  if (enc.contains("fft_size")) {
    read(enc, "encoder", "fft_size", cfg.encoder.fft_size);
  } else {
    cfg.encoder.fft_size = cfg.tokenizer.samples_per_token();
  }
  std::string attention = cfg.encoder.attention == AttentionKind::Dense ? "dense"
                                                                        : "rank_reduced";
  read(enc, "encoder", "attention", attention);
  if (attention == "dense")
    cfg.encoder.attention = AttentionKind::Dense;
  else if (attention == "rank_reduced")
    cfg.encoder.attention = AttentionKind::RankReduced;
  else
    throw Error(ErrorCode::BadConfig,
                "encoder.attention must be 'rank_reduced' or 'dense', not '" + attention + "'");

  read(train, "train", "lr", cfg.train.lr);
  read(train, "train", "weight_decay", cfg.train.weight_decay);
  read(train, "train", "decoupled_weight_decay", cfg.train.decoupled_weight_decay);
  read(train, "train", "batch_size", cfg.train.batch_size);
  read(train, "train", "max_epochs", cfg.train.max_epochs);
  read(train, "train", "seed", cfg.train.seed);
  read(train, "train", "monitor_metric", cfg.train.monitor_metric);

  read(task, "task", "n_classes", cfg.n_classes);
  std::string loss = loss_kind_name(cfg.train.loss);
  read(task, "task", "loss", loss);
  cfg.train.loss = loss_kind_from_name(loss);
  read(task, "task", "focal_gamma", cfg.train.focal_gamma);
  read(task, "task", "val_fraction", cfg.val_fraction);
  if (cfg.n_classes < 1)
    throw Error(ErrorCode::BadConfig, "task.n_classes must be >= 1");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0))
    throw Error(ErrorCode::BadConfig, "task.val_fraction must lie in (0, 1)");

  read(pretrain, "pretrain", "temperature", cfg.train.temperature);
  read(pretrain, "pretrain", "stop_gradient", cfg.train.stop_gradient);
  read(pretrain, "pretrain", "channel_drop_max_frac", cfg.train.perturb.channel_drop_max_frac);
  read(pretrain, "pretrain", "token_drop_max_frac", cfg.train.perturb.token_drop_max_frac);
  cfg.train.validate();

  read(synth, "synth", "n_classes", cfg.synth.n_classes);
  read(synth, "synth", "n_channels", cfg.synth.n_channels);
  read(synth, "synth", "duration_s", cfg.synth.duration_s);
  read(synth, "synth", "rate_hz", cfg.synth.rate_hz);
  read(synth, "synth", "snr", cfg.synth.snr);
  read(synth, "synth", "seed", cfg.synth.seed);
  read(synth, "synth", "n_samples", cfg.synth_samples);
  cfg.synth.validate();
  if (cfg.synth_samples < 1)
    throw Error(ErrorCode::BadConfig, "synth.n_samples must be >= 1");

  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::BadConfig,
                "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

MaskRequest parse_mask_request(const json& doc) {
  if (!doc.is_object())
    throw Error(ErrorCode::BadConfig, "mask spec must be a JSON object");
  std::vector<std::string> unknown;
  collect_unknown(doc, "mask",
                  {"mode", "segments_per_channel", "channels_to_mask", "segment_len_s",
                   "strategy", "seed"},
                  unknown);
  if (!unknown.empty())
    throw Error(ErrorCode::BadConfig, "unknown config keys: " + join(unknown));

  MaskRequest req;
  std::string mode = "both";
  read(doc, "mask", "mode", mode);
  if (mode == "segments")
    req.spec.mode = MaskMode::Segments;
  else if (mode == "channels")
    req.spec.mode = MaskMode::Channels;
  else if (mode == "both")
    req.spec.mode = MaskMode::Both;
  else
    throw Error(ErrorCode::BadConfig,
                "mask.mode must be 'segments', 'channels' or 'both', not '" + mode + "'");

  std::string strategy = "drop_tokens";
  read(doc, "mask", "strategy", strategy);
  if (strategy == "drop_tokens")
    req.spec.strategy = MaskStrategy::DropTokens;
  else if (strategy == "zero_impute")
    req.spec.strategy = MaskStrategy::ZeroImpute;
  else
    throw Error(ErrorCode::BadConfig,
                "mask.strategy must be 'drop_tokens' or 'zero_impute', not '" + strategy + "'");

  read(doc, "mask", "segments_per_channel", req.spec.segments_per_channel);
  read(doc, "mask", "channels_to_mask", req.spec.channels_to_mask);
  read(doc, "mask", "segment_len_s", req.spec.segment_len_s);
  read(doc, "mask", "seed", req.seed);
  req.spec.validate();
  return req;
}

}  // namespace biosent
