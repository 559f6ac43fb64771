#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "biosent/runconfig.hpp"

using biosent::Error;
using biosent::ErrorCode;
using nlohmann::json;

TEST_SUITE_BEGIN("runconfig");

TEST_CASE("an empty document yields the documented defaults") {
  auto cfg = biosent::parse_run_config(json::object());
  CHECK(cfg.tokenizer.target_rate_hz == 200.0);
  CHECK(cfg.tokenizer.token_length_s == 1.0);
  CHECK(cfg.tokenizer.overlap_s == 0.0);
  CHECK(cfg.encoder.embed_dim == 256);
  CHECK(cfg.encoder.n_heads == 8);
  CHECK(cfg.encoder.n_layers == 4);
  CHECK(cfg.encoder.rank == 64);
  CHECK(cfg.encoder.fft_size == 200);  // follows 200 Hz x 1 s tokens
  CHECK(cfg.encoder.attention == biosent::AttentionKind::RankReduced);
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.train.weight_decay == 1e-5);
  CHECK(cfg.train.max_epochs == 100);
  CHECK(cfg.train.monitor_metric == "cohen_kappa");
  CHECK(cfg.train.loss == biosent::LossKind::CrossEntropy);
  CHECK(cfg.train.temperature == 0.2);
  CHECK(cfg.train.perturb.channel_drop_max_frac == 0.25);
  CHECK(cfg.n_classes == 5);
  CHECK(cfg.val_fraction == 0.2);
  CHECK(cfg.synth.rate_hz == 200.0);
  CHECK(cfg.synth_samples == 1000);
}

TEST_CASE("every key lands in its struct field") {
  json doc = {
      {"schema_version", 1},
      {"tokenizer", {{"target_rate_hz", 128.0}, {"token_length_s", 2.0}, {"overlap_s", 0.5}}},
      {"encoder",
       {{"embed_dim", 32},
        {"n_heads", 4},
        {"n_layers", 2},
        {"rank", 8},
        {"max_tokens", 64},
        {"dropout_rate", 0.2},
        {"fft_size", 256},
        {"fcn_hidden", 48},
        {"attention", "dense"},
        {"log_compress", false}}},
      {"train",
       {{"lr", 0.01},
        {"weight_decay", 0.001},
        {"decoupled_weight_decay", true},
        {"batch_size", 4},
        {"max_epochs", 7},
        {"seed", 42},
        {"monitor_metric", "auroc"}}},
      {"task",
       {{"n_classes", 2}, {"loss", "focal"}, {"focal_gamma", 3.0}, {"val_fraction", 0.3}}},
      {"pretrain",
       {{"temperature", 0.5},
        {"stop_gradient", true},
        {"channel_drop_max_frac", 0.1},
        {"token_drop_max_frac", 0.4}}},
      {"synth",
       {{"n_classes", 2},
        {"n_channels", 3},
        {"duration_s", 4.0},
        {"rate_hz", 64.0},
        {"snr", 8.0},
        {"seed", 9},
        {"n_samples", 50}}}};

  auto cfg = biosent::parse_run_config(doc);
  CHECK(cfg.tokenizer.target_rate_hz == 128.0);
  CHECK(cfg.tokenizer.token_length_s == 2.0);
  CHECK(cfg.tokenizer.overlap_s == 0.5);
  CHECK(cfg.encoder.embed_dim == 32);
  CHECK(cfg.encoder.n_heads == 4);
  CHECK(cfg.encoder.n_layers == 2);
  CHECK(cfg.encoder.rank == 8);
  CHECK(cfg.encoder.max_tokens == 64);
  CHECK(cfg.encoder.dropout_rate == 0.2);
  CHECK(cfg.encoder.fft_size == 256);  // pinned, does not follow the tokenizer
  CHECK(cfg.encoder.fcn_hidden == 48);
  CHECK(cfg.encoder.attention == biosent::AttentionKind::Dense);
  CHECK(cfg.encoder.log_compress == false);
  CHECK(cfg.train.lr == 0.01);
  CHECK(cfg.train.weight_decay == 0.001);
  CHECK(cfg.train.decoupled_weight_decay == true);
  CHECK(cfg.train.batch_size == 4);
  CHECK(cfg.train.max_epochs == 7);
  CHECK(cfg.train.seed == 42);
  CHECK(cfg.train.monitor_metric == "auroc");
  CHECK(cfg.train.loss == biosent::LossKind::Focal);
  CHECK(cfg.train.focal_gamma == 3.0);
  CHECK(cfg.train.temperature == 0.5);
  CHECK(cfg.train.stop_gradient == true);
  CHECK(cfg.train.perturb.channel_drop_max_frac == 0.1);
  CHECK(cfg.train.perturb.token_drop_max_frac == 0.4);
  CHECK(cfg.n_classes == 2);
  CHECK(cfg.val_fraction == 0.3);
  CHECK(cfg.synth.n_classes == 2);
  CHECK(cfg.synth.n_channels == 3);
  CHECK(cfg.synth.duration_s == 4.0);
  CHECK(cfg.synth.rate_hz == 64.0);
  CHECK(cfg.synth.snr == 8.0);
  CHECK(cfg.synth.seed == 9);
  CHECK(cfg.synth_samples == 50);
}

TEST_CASE("the spectral frame follows the tokenizer unless pinned") {
  json doc = {{"tokenizer", {{"target_rate_hz", 100.0}, {"token_length_s", 0.5}}}};
  CHECK(biosent::parse_run_config(doc).encoder.fft_size == 50);

  doc["encoder"] = {{"fft_size", 64}};
  CHECK(biosent::parse_run_config(doc).encoder.fft_size == 64);
}

TEST_CASE("unknown keys are rejected with every offender named") {
  json doc = {{"trian", json::object()},
              {"encoder", {{"embd_dim", 2}, {"n_heads", 2}}},
              {"task", {{"classes", 3}}}};
  try {
    biosent::parse_run_config(doc);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadConfig);
    std::string msg = e.what();
    CHECK(msg.find("trian") != std::string::npos);
    CHECK(msg.find("encoder.embd_dim") != std::string::npos);
    CHECK(msg.find("task.classes") != std::string::npos);
    CHECK(msg.find("n_heads") == std::string::npos);  // valid keys are not listed
  }
}

TEST_CASE("types and value ranges are enforced with dotted paths") {
  CHECK_THROWS_WITH_AS(biosent::parse_run_config({{"encoder", {{"embed_dim", "big"}}}}),
                       doctest::Contains("encoder.embed_dim"), Error);
  CHECK_THROWS_WITH_AS(biosent::parse_run_config({{"train", {{"lr", "fast"}}}}),
                       doctest::Contains("train.lr"), Error);
  CHECK_THROWS_WITH_AS(biosent::parse_run_config({{"train", {{"seed", -1}}}}),
                       doctest::Contains("train.seed"), Error);
  CHECK_THROWS_WITH_AS(biosent::parse_run_config({{"encoder", {{"log_compress", 1}}}}),
                       doctest::Contains("boolean"), Error);
  CHECK_THROWS_WITH_AS(biosent::parse_run_config({{"encoder", {{"n_layers", 2.5}}}}),
                       doctest::Contains("integer"), Error);
  CHECK_THROWS_AS(biosent::parse_run_config({{"tokenizer", 7}}), Error);
  CHECK_THROWS_AS(biosent::parse_run_config(json::array()), Error);

  CHECK_THROWS_AS(biosent::parse_run_config({{"task", {{"n_classes", 0}}}}), Error);
  CHECK_THROWS_AS(biosent::parse_run_config({{"task", {{"val_fraction", 1.0}}}}), Error);
  CHECK_THROWS_AS(biosent::parse_run_config({{"task", {{"loss", "hinge"}}}}), Error);
  CHECK_THROWS_AS(biosent::parse_run_config({{"train", {{"monitor_metric", "accuracy"}}}}),
                  Error);
  CHECK_THROWS_AS(biosent::parse_run_config({{"encoder", {{"attention", "sparse"}}}}), Error);
  CHECK_THROWS_AS(biosent::parse_run_config({{"synth", {{"n_samples", 0}}}}), Error);
  CHECK_THROWS_AS(biosent::parse_run_config({{"tokenizer", {{"overlap_s", 2.0}}}}), Error);
}

TEST_CASE("only schema_version 1 is accepted") {
  CHECK(biosent::parse_run_config({{"schema_version", 1}}).n_classes == 5);
  CHECK_THROWS_WITH_AS(biosent::parse_run_config({{"schema_version", 2}}),
                       doctest::Contains("schema_version"), Error);
}

TEST_CASE("loss kind names round-trip") {
  for (auto kind :
       {biosent::LossKind::CrossEntropy, biosent::LossKind::Bce, biosent::LossKind::Focal})
    CHECK(biosent::loss_kind_from_name(biosent::loss_kind_name(kind)) == kind);
  CHECK_THROWS_AS(biosent::loss_kind_from_name("mse"), Error);
}

TEST_CASE("mask requests parse and validate") {
  auto req = biosent::parse_mask_request(json::object());
  CHECK(req.spec.mode == biosent::MaskMode::Both);
  CHECK(req.spec.segments_per_channel == 0);
  CHECK(req.spec.channels_to_mask == 0);
  CHECK(req.spec.segment_len_s == 0.5);
  CHECK(req.spec.strategy == biosent::MaskStrategy::DropTokens);
  CHECK(req.seed == 0);

  req = biosent::parse_mask_request({{"mode", "channels"},
                                     {"segments_per_channel", 2},
                                     {"channels_to_mask", 1},
                                     {"segment_len_s", 0.25},
                                     {"strategy", "zero_impute"},
                                     {"seed", 7}});
  CHECK(req.spec.mode == biosent::MaskMode::Channels);
  CHECK(req.spec.segments_per_channel == 2);
  CHECK(req.spec.channels_to_mask == 1);
  CHECK(req.spec.segment_len_s == 0.25);
  CHECK(req.spec.strategy == biosent::MaskStrategy::ZeroImpute);
  CHECK(req.seed == 7);

  CHECK_THROWS_WITH_AS(biosent::parse_mask_request({{"segments", 2}}),
                       doctest::Contains("mask.segments"), Error);
  CHECK_THROWS_AS(biosent::parse_mask_request({{"mode", "rows"}}), Error);
  CHECK_THROWS_AS(biosent::parse_mask_request({{"strategy", "interpolate"}}), Error);
  CHECK_THROWS_AS(biosent::parse_mask_request({{"segments_per_channel", 6}}), Error);
  CHECK_THROWS_AS(biosent::parse_mask_request(json(3)), Error);
}

TEST_CASE("configs load from disk with io and syntax errors distinguished") {
  auto dir = std::filesystem::temp_directory_path();
  auto good = dir / "biosent-runconfig-good.json";
  auto bad = dir / "biosent-runconfig-bad.json";
  std::ofstream(good) << R"({"task": {"n_classes": 2}})";
  std::ofstream(bad) << "{ nope";

  CHECK(biosent::load_run_config(good).n_classes == 2);
  try {
    biosent::load_run_config(bad);
    FAIL("expected a syntax error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadConfig);
  }
  try {
    biosent::load_run_config(dir / "biosent-runconfig-missing.json");
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}

TEST_SUITE_END();
