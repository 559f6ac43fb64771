#pragma once
#include <vector>

#include "biosent/signal.hpp"

namespace biosent {

// One t-second slice of one channel. `position` is the within-channel token
// index k, counted from 1 in stride order; dropped tokens leave gaps.
struct Token {
  int channel_index = 0;
  int position = 1;
  std::vector<double> values;  // exactly round(t * r) samples
};

// target rate r (Hz), token length t (s), overlap p (s); stride is t - p.
struct TokenizerConfig {
  double target_rate_hz = 200.0;
  double token_length_s = 1.0;
  double overlap_s = 0.0;

  // Samples per token at the target rate.
  int samples_per_token() const;
  // Throws InvalidOverlap / BadRate / BadConfig on a bad combination.
  void validate() const;
};

// Flat channel-major token list: all surviving tokens of vocabulary channel 0
// (positions ascending), then channel 1, and so on.
struct BiosignalSentence {
  std::vector<Token> tokens;
  TokenizerConfig config;

  std::size_t size() const { return tokens.size(); }
};

// Number of stride-aligned tokens fitting a J-second channel:
// 0 if J < t, else floor((J - t)/(t - p)) + 1. Throws InvalidOverlap if p >= t.
int tokens_per_channel(double duration_s, double token_length_s, double overlap_s);

// Slices one channel (already at cfg.target_rate_hz) into tokens and drops
// every token whose [start, start + t) span intersects a missing interval.
// Surviving tokens keep their original position k.
std::vector<Token> tokenize_channel(const ChannelTrace& trace, const TokenizerConfig& cfg,
                                    int channel_index);

// Full pipeline for one recording: resample each channel to cfg.target_rate_hz,
// normalize it, tokenize it, then concatenate channel-major in vocabulary
// order. Channels absent from the recording are simply skipped; a channel id
// missing from `vocab` is an error, as is a sentence with zero tokens.
BiosignalSentence build_sentence(const RawRecording& rec, const TokenizerConfig& cfg,
                                 const ChannelVocabulary& vocab);

}  // namespace biosent
