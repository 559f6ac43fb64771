#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biosent/runconfig.hpp"

// biosent: batch front end over the library. Everything that affects results
// lives in the JSON run config (see runconfig.hpp for the schema); flags only
// name files and output formats, so a command line plus its config reproduces
// a run exactly. Successful commands print a one-line JSON summary (or the
// requested payload) to stdout; failures print {"error": {code, message}} to
// stderr and exit nonzero.

namespace {

using biosent::Error;
using biosent::ErrorCode;
using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path.string() + "'");
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text << "\n";
  else
    write_text(out_path, text + "\n");
}

json history_json(const std::vector<biosent::EpochRecord>& history) {
  auto rows = json::array();
  for (const auto& er : history)
    rows.push_back({{"epoch", er.epoch},
                    {"train_loss", er.train_loss},
                    {"monitor", er.monitor_value},
                    {"metrics", er.val.values}});
  return rows;
}

// Deterministic train/validation split: shuffled by (seed, salt), at least
// one recording on each side.
std::pair<std::vector<biosent::RawRecording>, std::vector<biosent::RawRecording>> split_train_val(
    const std::vector<biosent::RawRecording>& recs, double val_fraction, std::uint64_t seed) {
  if (recs.size() < 2)
    throw Error(ErrorCode::BadConfig, "need at least 2 recordings to split train/validation");
  std::vector<std::size_t> idx(recs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  biosent::Rng rng(biosent::mix_seed(seed, 0x5eedf01dull));
  biosent::shuffle_indices(idx, rng);

  auto n = static_cast<std::int64_t>(recs.size());
  auto n_val = std::clamp<std::int64_t>(std::llround(val_fraction * static_cast<double>(n)), 1,
                                        n - 1);
  std::pair<std::vector<biosent::RawRecording>, std::vector<biosent::RawRecording>> out;
  for (std::int64_t i = 0; i < n; ++i)
    (i < n_val ? out.second : out.first).push_back(recs[idx[static_cast<std::size_t>(i)]]);
  return out;
}

// Shared tail of train/finetune: persist best + last checkpoints and the
// metric history, then summarize on stdout.
void report_training(const biosent::TrainResult& result, const std::string& command,
                     const std::string& monitor, const std::string& out_stem) {
  biosent::save_checkpoint(result.best, out_stem);
  biosent::save_checkpoint(result.last, out_stem + ".last");

  json metrics = {{"schema_version", 1},
                  {"command", command},
                  {"monitor_metric", monitor},
                  {"best_epoch", result.best_epoch},
                  {"best_value", result.best_value},
                  {"history", history_json(result.history)}};
  write_text(out_stem + ".metrics.json", metrics.dump(2) + "\n");

  const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
  json summary = {{"command", command},
                  {"checkpoint", out_stem},
                  {"epochs", result.history.size()},
                  {"best_epoch", result.best_epoch},
                  {"best_" + monitor, result.best_value},
                  {"val", best.val.values}};
  std::cout << summary.dump() << "\n";
}

void cmd_synth(const std::string& config_path, const std::string& out_dir) {
  auto cfg = biosent::load_run_config(config_path);
  auto recs = biosent::generate_dataset(cfg.synth, cfg.synth_samples);
  biosent::save_dataset(recs, out_dir);
  json summary = {{"command", "synth"},
                  {"out", out_dir},
                  {"n_samples", recs.size()},
                  {"n_classes", cfg.synth.n_classes},
                  {"n_channels", cfg.synth.n_channels},
                  {"rate_hz", cfg.synth.rate_hz},
                  {"seed", cfg.synth.seed}};
  std::cout << summary.dump() << "\n";
}

void cmd_train(const std::string& config_path, const std::string& corpus,
               const std::string& out_stem) {
  auto cfg = biosent::load_run_config(config_path);
  auto recs = biosent::load_dataset(corpus);
  auto [train_recs, val_recs] = split_train_val(recs, cfg.val_fraction, cfg.train.seed);

  auto model = biosent::make_supervised_model(cfg.encoder, cfg.tokenizer,
                                              biosent::collect_channel_ids(recs), cfg.n_classes,
                                              cfg.train.seed);
  auto result = biosent::train_supervised(biosent::prepare_supervised(train_recs, model),
                                          biosent::prepare_supervised(val_recs, model), model,
                                          cfg.train);
  report_training(result, "train", cfg.train.monitor_metric, out_stem);
}

void cmd_finetune(const std::string& config_path, const std::string& ckpt,
                  const std::string& corpus, const std::string& out_stem) {
  auto cfg = biosent::load_run_config(config_path);
  auto pretrained = biosent::load_checkpoint(ckpt);
  auto recs = biosent::load_dataset(corpus);
  auto [train_recs, val_recs] = split_train_val(recs, cfg.val_fraction, cfg.train.seed);

  auto result = biosent::fine_tune(pretrained, train_recs, val_recs, cfg.n_classes, cfg.train);
  report_training(result, "finetune", cfg.train.monitor_metric, out_stem);
}

void cmd_pretrain(const std::string& config_path, const std::vector<std::string>& corpus_dirs,
                  const std::string& out_stem) {
  auto cfg = biosent::load_run_config(config_path);
  std::vector<std::vector<biosent::RawRecording>> datasets;
  std::vector<biosent::RawRecording> all;
  for (const auto& dir : corpus_dirs) {
    datasets.push_back(biosent::load_dataset(dir));
    all.insert(all.end(), datasets.back().begin(), datasets.back().end());
  }

  auto model = biosent::make_pretrain_model(cfg.encoder, cfg.tokenizer,
                                            biosent::collect_channel_ids(all), cfg.train.seed);
  std::vector<std::vector<biosent::PreparedSentence<double>>> corpora;
  for (const auto& ds : datasets) corpora.push_back(biosent::prepare_unlabeled(ds, model));

  auto result = biosent::pretrain_unsupervised(corpora, model, cfg.train);
  biosent::save_checkpoint(result.last, out_stem);

  json metrics = {{"schema_version", 1},
                  {"command", "pretrain"},
                  {"history", history_json(result.history)}};
  write_text(out_stem + ".metrics.json", metrics.dump(2) + "\n");

  json summary = {{"command", "pretrain"},
                  {"checkpoint", out_stem},
                  {"n_corpora", corpora.size()},
                  {"epochs", result.history.size()},
                  {"final_loss", result.history.back().train_loss}};
  std::cout << summary.dump() << "\n";
}

void cmd_eval(const std::string& ckpt, const std::string& corpus, const std::string& mask_arg,
              const std::string& format, const std::string& out_path) {
  auto model = biosent::load_checkpoint(ckpt);
  auto recs = biosent::load_dataset(corpus);

  json mask_doc;
  if (!mask_arg.empty()) {
    try {
      mask_doc = json::parse(mask_arg);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::BadConfig, std::string("--mask is not valid JSON: ") + e.what());
    }
    auto req = biosent::parse_mask_request(mask_doc);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      biosent::Rng rng(biosent::mix_seed(req.seed, static_cast<std::uint64_t>(i)));
      recs[i] = biosent::apply_mask(recs[i], req.spec, rng);
    }
  }

  auto report = biosent::evaluate(model, biosent::prepare_supervised(recs, model));
  if (format == "csv") {
    emit(report.csv_header() + "\n" + report.csv_row(), out_path);
  } else {
    json doc = {{"schema_version", 1},
                {"command", "eval"},
                {"checkpoint", ckpt},
                {"corpus", corpus},
                {"mask", mask_arg.empty() ? json(nullptr) : mask_doc},
                {"report", json::parse(report.to_json())}};
    emit(doc.dump(2), out_path);
  }
}

void cmd_encode(const std::string& ckpt, const std::vector<std::string>& recordings,
                const std::string& out_path) {
  auto model = biosent::load_checkpoint(ckpt);
  auto vocab = model.vocabulary();

  std::ostringstream csv;
  csv << "id";
  for (int j = 0; j < model.encoder_cfg.embed_dim; ++j) csv << ",e" << j;
  for (const auto& path : recordings) {
    auto rec = biosent::load_recording(path, biosent::RecordingFormat::Bsr, &vocab);
    auto z = biosent::encode(biosent::build_sentence(rec, model.tokenizer_cfg, vocab),
                             model.encoder, model.encoder_cfg);
    csv << "\n" << rec.id;
    for (int j = 0; j < z.cols(); ++j) csv << "," << format_double(z(0, j));
  }
  emit(csv.str(), out_path);
}

void cmd_ablate(const std::string& config_path, const std::string& corpus,
                const std::string& axis, const std::vector<double>& values,
                const std::string& out_path) {
  auto cfg = biosent::load_run_config(config_path);
  auto recs = biosent::load_dataset(corpus);
  auto [train_recs, val_recs] = split_train_val(recs, cfg.val_fraction, cfg.train.seed);
  auto ids = biosent::collect_channel_ids(recs);

  std::ostringstream csv;
  csv << "axis,value,tokens_per_channel,best_epoch," << cfg.train.monitor_metric
      << ",balanced_accuracy";
  for (double v : values) {
    auto sweep = cfg;
    if (axis == "rate")
      sweep.tokenizer.target_rate_hz = v;
    else if (axis == "token_len")
      sweep.tokenizer.token_length_s = v;
    else if (axis == "overlap")
      sweep.tokenizer.overlap_s = v;
    else
      throw Error(ErrorCode::BadConfig,
                  "--axis must be 'rate', 'token_len' or 'overlap', not '" + axis + "'");
    sweep.tokenizer.validate();
    // the spectral frame always follows the swept tokenizer
    sweep.encoder.fft_size = sweep.tokenizer.samples_per_token();

    auto model = biosent::make_supervised_model(sweep.encoder, sweep.tokenizer, ids,
                                                sweep.n_classes, sweep.train.seed);
    auto result =
        biosent::train_supervised(biosent::prepare_supervised(train_recs, model),
                                  biosent::prepare_supervised(val_recs, model), model,
                                  sweep.train);
    const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];

    int per_channel = biosent::tokens_per_channel(recs[0].channels[0].duration_s(),
                                                  sweep.tokenizer.token_length_s,
                                                  sweep.tokenizer.overlap_s);
    csv << "\n"
        << axis << "," << format_double(v) << "," << per_channel << "," << result.best_epoch
        << "," << format_double(result.best_value) << ","
        << format_double(best.val.values.at("balanced_accuracy"));
  }
  emit(csv.str(), out_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biosignal sentence encoder: synthesize corpora, train, pre-train, fine-tune,"
               " evaluate, embed and ablate"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config, corpus, ckpt, out, mask, format = "json", axis;
  std::vector<std::string> corpora, recordings;
  std::vector<double> values;

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic corpus");
  synth->add_option("--config", config, "run config JSON")->required();
  synth->add_option("--out", out, "output corpus directory")->required();
  synth->callback([&] { cmd_synth(config, out); });

  auto* train = app.add_subcommand("train", "Train a supervised model from scratch");
  train->add_option("--config", config, "run config JSON")->required();
  train->add_option("--corpus", corpus, "labeled corpus directory")->required();
  train->add_option("--out", out, "checkpoint stem (writes <stem>.ckpt.*, <stem>.last.ckpt.*,"
                                  " <stem>.metrics.json)")
      ->required();
  train->callback([&] { cmd_train(config, corpus, out); });

  auto* pretrain = app.add_subcommand("pretrain", "Contrastively pre-train an encoder on one or"
                                                  " more corpora (labels ignored)");
  pretrain->add_option("--config", config, "run config JSON")->required();
  pretrain->add_option("--out", out, "checkpoint stem")->required();
  pretrain->add_option("corpora", corpora, "corpus directories")->required()->expected(-1);
  pretrain->callback([&] { cmd_pretrain(config, corpora, out); });

  auto* finetune = app.add_subcommand("finetune", "Fine-tune a pre-trained checkpoint with a"
                                                  " fresh classification head");
  finetune->add_option("--config", config, "run config JSON")->required();
  finetune->add_option("--ckpt", ckpt, "pre-trained checkpoint stem")->required();
  finetune->add_option("--corpus", corpus, "labeled corpus directory")->required();
  finetune->add_option("--out", out, "checkpoint stem")->required();
  finetune->callback([&] { cmd_finetune(config, ckpt, corpus, out); });

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled corpus");
  eval->add_option("--ckpt", ckpt, "checkpoint stem")->required();
  eval->add_option("--corpus", corpus, "labeled corpus directory")->required();
  eval->add_option("--mask", mask, "inline JSON mask spec (mode, segments_per_channel,"
                                   " channels_to_mask, segment_len_s, strategy, seed)");
  eval->add_option("--format", format, "output format")->check(CLI::IsMember({"json", "csv"}));
  eval->add_option("--out", out, "write the report here instead of stdout");
  eval->callback([&] { cmd_eval(ckpt, corpus, mask, format, out); });

  auto* encode = app.add_subcommand("encode", "Embed recordings; one CSV row per recording");
  encode->add_option("--ckpt", ckpt, "checkpoint stem")->required();
  encode->add_option("--out", out, "write the CSV here instead of stdout");
  encode->add_option("recordings", recordings, "recording files (BSR)")->required()->expected(-1);
  encode->callback([&] { cmd_encode(ckpt, recordings, out); });

  auto* ablate = app.add_subcommand("ablate", "Sweep one tokenizer axis, training per value;"
                                              " emits metric-vs-value CSV");
  ablate->add_option("--config", config, "run config JSON")->required();
  ablate->add_option("--corpus", corpus, "labeled corpus directory")->required();
  ablate->add_option("--axis", axis, "tokenizer axis to sweep")
      ->required()
      ->check(CLI::IsMember({"rate", "token_len", "overlap"}));
  ablate->add_option("--values", values, "comma-separated axis values")
      ->required()
      ->delimiter(',');
  ablate->add_option("--out", out, "write the CSV here instead of stdout");
  ablate->callback([&] { cmd_ablate(config, corpus, axis, values, out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    json err = {{"error", {{"code", "UsageError"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return e.get_exit_code();
  } catch (const Error& e) {
    json err = {{"error",
                 {{"code", biosent::error_code_name(e.code())}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err = {{"error", {{"code", "Internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
