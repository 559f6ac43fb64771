#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "biosent/trainer.hpp"

// Checkpoint layout: a JSON manifest (<stem>.ckpt.json) describing configs and
// the ordered tensor table, plus a raw little-endian float32 blob
// (<stem>.ckpt.f32) holding every tensor row-major in manifest order. Both
// files are written to a temp path and renamed so a crash never leaves a
// half-written checkpoint behind.

namespace biosent {

namespace {

using MatD = Mat<double>;
namespace fs = std::filesystem;

constexpr int kSchemaVersion = 1;

std::string attention_name(AttentionKind k) {
  return k == AttentionKind::Dense ? "dense" : "rank_reduced";
}

AttentionKind attention_from_name(const std::string& s) {
  if (s == "dense") return AttentionKind::Dense;
  if (s == "rank_reduced") return AttentionKind::RankReduced;
  throw Error(ErrorCode::CorruptCheckpoint, "unknown attention kind '" + s + "'");
}

// Walks every tensor of the bundle in the fixed serialization order:
// encoder, then head (if any), then predictor (if any).
template <typename Bundle, typename F>
void visit_bundle(Bundle&& m, F&& fn) {
  visit_params(m.encoder, fn);
  if (m.head) visit_head_params(*m.head, fn);
  if (m.predictor) visit_predictor_params(*m.predictor, fn);
}

void atomic_write(const fs::path& target, const std::string& bytes) {
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw Error(ErrorCode::IoError, "cannot rename '" + tmp.string() + "' into place: " +
                                        ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

void save_checkpoint(const ModelBundle& m, const std::string& stem) {
  nlohmann::json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["encoder"] = {{"embed_dim", m.encoder_cfg.embed_dim},
                         {"n_heads", m.encoder_cfg.n_heads},
                         {"n_layers", m.encoder_cfg.n_layers},
                         {"rank", m.encoder_cfg.rank},
                         {"max_tokens", m.encoder_cfg.max_tokens},
                         {"dropout_rate", m.encoder_cfg.dropout_rate},
                         {"fft_size", m.encoder_cfg.fft_size},
                         {"fcn_hidden", m.encoder_cfg.fcn_hidden},
                         {"attention", attention_name(m.encoder_cfg.attention)},
                         {"log_compress", m.encoder_cfg.log_compress}};
  manifest["tokenizer"] = {{"target_rate_hz", m.tokenizer_cfg.target_rate_hz},
                           {"token_length_s", m.tokenizer_cfg.token_length_s},
                           {"overlap_s", m.tokenizer_cfg.overlap_s}};
  manifest["channels"] = m.channel_ids;
  manifest["step"] = m.step;
  manifest["history"] = m.history;

  auto tensors = nlohmann::json::array();
  std::string blob;
  visit_bundle(m, [&](const std::string& name, const MatD& p) {
    tensors.push_back({{"name", name}, {"rows", p.rows()}, {"cols", p.cols()}});
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      float f = static_cast<float>(p.data()[i]);
      blob.append(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  });
  manifest["tensors"] = std::move(tensors);

  atomic_write(stem + ".ckpt.f32", blob);
  atomic_write(stem + ".ckpt.json", manifest.dump(2) + "\n");
}

ModelBundle load_checkpoint(const std::string& stem) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(stem + ".ckpt.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::CorruptCheckpoint,
                std::string("manifest is not valid JSON: ") + e.what());
  }

  try {
    if (!manifest.contains("schema_version") || !manifest["schema_version"].is_number_integer())
      throw Error(ErrorCode::CorruptCheckpoint, "manifest lacks a schema_version");
    int version = manifest["schema_version"].get<int>();
    if (version != kSchemaVersion)
      throw Error(ErrorCode::IncompatibleCheckpoint,
                  "checkpoint schema_version " + std::to_string(version) + " is not supported");

    ModelBundle m;
    const auto& enc = manifest.at("encoder");
    m.encoder_cfg.embed_dim = enc.at("embed_dim").get<int>();
    m.encoder_cfg.n_heads = enc.at("n_heads").get<int>();
    m.encoder_cfg.n_layers = enc.at("n_layers").get<int>();
    m.encoder_cfg.rank = enc.at("rank").get<int>();
    m.encoder_cfg.max_tokens = enc.at("max_tokens").get<int>();
    m.encoder_cfg.dropout_rate = enc.at("dropout_rate").get<double>();
    m.encoder_cfg.fft_size = enc.at("fft_size").get<int>();
    m.encoder_cfg.fcn_hidden = enc.at("fcn_hidden").get<int>();
    m.encoder_cfg.attention = attention_from_name(enc.at("attention").get<std::string>());
    m.encoder_cfg.log_compress = enc.at("log_compress").get<bool>();

    const auto& tok = manifest.at("tokenizer");
    m.tokenizer_cfg.target_rate_hz = tok.at("target_rate_hz").get<double>();
    m.tokenizer_cfg.token_length_s = tok.at("token_length_s").get<double>();
    m.tokenizer_cfg.overlap_s = tok.at("overlap_s").get<double>();

    m.channel_ids = manifest.at("channels").get<std::vector<std::string>>();
    m.encoder_cfg.channel_vocab_size = static_cast<int>(m.channel_ids.size());
    m.step = manifest.at("step").get<std::int64_t>();
    m.history = manifest.value("history", nlohmann::json::array());

    m.encoder_cfg.validate();
    m.tokenizer_cfg.validate();

    const auto& tensors = manifest.at("tensors");
    bool has_head = false, has_predictor = false;
    int n_classes = 0;
    for (const auto& t : tensors) {
      const auto name = t.at("name").get<std::string>();
      if (name == "head.w") {
        has_head = true;
        n_classes = t.at("cols").get<int>();
      }
      if (name == "predictor.w1") has_predictor = true;
    }

    // Allocate parameters at the recorded shapes (values are overwritten from
    // the blob below), then verify the manifest against the walk in lockstep.
    Rng scratch(0);
    m.encoder = init_encoder_params<double>(m.encoder_cfg, scratch);
    if (has_head) m.head = init_head_params<double>(m.encoder_cfg.embed_dim, n_classes, scratch);
    if (has_predictor)
      m.predictor = init_predictor_params<double>(m.encoder_cfg.embed_dim, scratch);

    std::string blob = read_file(stem + ".ckpt.f32");
    std::size_t cursor = 0, entry = 0;
    visit_bundle(m, [&](const std::string& name, MatD& p) {
      if (entry >= tensors.size())
        throw Error(ErrorCode::CorruptCheckpoint, "tensor table ends before '" + name + "'");
      const auto& t = tensors[entry++];
      if (t.at("name").get<std::string>() != name ||
          t.at("rows").get<Eigen::Index>() != p.rows() ||
          t.at("cols").get<Eigen::Index>() != p.cols())
        throw Error(ErrorCode::CorruptCheckpoint,
                    "tensor table entry does not match '" + name + "'");
      std::size_t need = static_cast<std::size_t>(p.size()) * sizeof(float);
      if (cursor + need > blob.size())
        throw Error(ErrorCode::CorruptCheckpoint, "weight blob is shorter than the manifest");
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        float f;
        std::memcpy(&f, blob.data() + cursor + static_cast<std::size_t>(i) * sizeof(float),
                    sizeof(float));
        p.data()[i] = static_cast<double>(f);
      }
      cursor += need;
    });
    if (entry != tensors.size())
      throw Error(ErrorCode::CorruptCheckpoint, "tensor table lists tensors the model lacks");
    if (cursor != blob.size())
      throw Error(ErrorCode::CorruptCheckpoint, "weight blob is longer than the manifest");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace biosent
