#include <benchmark/benchmark.h>

#include "biosent/encoder.hpp"
#include "biosent/spectral.hpp"
#include "biosent/tokenizer.hpp"

// Forward-pass scaling in the token count: the rank-reduced path should grow
// linearly with N while the dense reference grows quadratically, at the
// production-scale width (256-dim embeddings, rank 64). Tokenizer and
// spectral throughput round out the preprocessing picture.

namespace {

using biosent::Mat;
using MatD = Mat<double>;

biosent::EncoderConfig bench_config(int max_tokens, biosent::AttentionKind kind) {
  biosent::EncoderConfig cfg;
  cfg.embed_dim = 256;
  cfg.n_heads = 8;
  cfg.n_layers = 1;
  cfg.rank = 64;
  cfg.max_tokens = max_tokens;
  cfg.dropout_rate = 0.0;
  cfg.fft_size = 200;
  cfg.fcn_hidden = 256;
  cfg.channel_vocab_size = 1;
  cfg.attention = kind;
  return cfg;
}

// Synthetic prepared sentence: random spectral features, all on one channel.
biosent::PreparedSentence<double> bench_sentence(int n, const biosent::EncoderConfig& cfg,
                                                 biosent::Rng& rng) {
  biosent::PreparedSentence<double> ps;
  ps.features = MatD(n, cfg.feature_bins());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.feature_bins(); ++j) ps.features(i, j) = biosent::normal(rng, 0.0, 1.0);
  ps.channels.assign(static_cast<std::size_t>(n), 0);
  ps.positions.resize(static_cast<std::size_t>(n));
  ps.positional = MatD(n, cfg.embed_dim);
  for (int i = 0; i < n; ++i) {
    ps.positions[static_cast<std::size_t>(i)] = i + 1;
    ps.positional.row(i) = biosent::positional_embedding<double>(i + 1, cfg.embed_dim);
  }
  return ps;
}

void encode_forward(benchmark::State& state, biosent::AttentionKind kind) {
  auto n = static_cast<int>(state.range(0));
  auto cfg = bench_config(n, kind);
  biosent::Rng rng(7);
  auto params = biosent::init_encoder_params<double>(cfg, rng);
  auto ps = bench_sentence(n, cfg, rng);

  for (auto _ : state) {
    auto z = biosent::encode(ps, params, cfg);
    benchmark::DoNotOptimize(z.data());
  }
  state.SetComplexityN(n);
}

void BM_EncodeRankReduced(benchmark::State& state) {
  encode_forward(state, biosent::AttentionKind::RankReduced);
}

void BM_EncodeDense(benchmark::State& state) {
  encode_forward(state, biosent::AttentionKind::Dense);
}

void BM_Tokenize(benchmark::State& state) {
  auto seconds = static_cast<int>(state.range(0));
  biosent::TokenizerConfig cfg;  // 200 Hz, 1 s tokens
  biosent::Rng rng(11);
  biosent::RawRecording rec;
  rec.id = "bench";
  for (int c = 0; c < 4; ++c) {
    biosent::ChannelTrace tr;
    tr.channel_id = "ch" + std::to_string(c);
    tr.rate_hz = 250.0;  // forces the resample path
    tr.samples.resize(static_cast<std::size_t>(seconds) * 250);
    for (auto& s : tr.samples) s = biosent::normal(rng, 0.0, 1.0);
    rec.channels.push_back(std::move(tr));
  }
  biosent::ChannelVocabulary vocab({"ch0", "ch1", "ch2", "ch3"});

  for (auto _ : state) {
    auto sentence = biosent::build_sentence(rec, cfg, vocab);
    benchmark::DoNotOptimize(sentence.tokens.data());
  }
  state.SetItemsProcessed(state.iterations() * 4 * seconds);  // tokens per pass
}

void BM_SpectralFeatures(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  biosent::Rng rng(13);
  std::vector<double> samples(n);
  for (auto& s : samples) s = biosent::normal(rng, 0.0, 1.0);

  for (auto _ : state) {
    auto f = biosent::energy_features(samples);
    benchmark::DoNotOptimize(f.data());
  }
}

BENCHMARK(BM_EncodeRankReduced)
    ->RangeMultiplier(2)
    ->Range(512, 4096)
    ->Unit(benchmark::kMillisecond)
    ->Complexity(benchmark::oN);
BENCHMARK(BM_EncodeDense)
    ->RangeMultiplier(2)
    ->Range(512, 4096)
    ->Unit(benchmark::kMillisecond)
    ->Complexity(benchmark::oNSquared);
BENCHMARK(BM_Tokenize)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpectralFeatures)->Arg(200)->Arg(256)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
