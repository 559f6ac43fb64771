#include "biosent/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

namespace biosent {

int TokenizerConfig::samples_per_token() const {
  return static_cast<int>(std::llround(token_length_s * target_rate_hz));
}

void TokenizerConfig::validate() const {
  if (target_rate_hz <= 0.0) throw Error(ErrorCode::BadRate, "target rate must be > 0");
  if (overlap_s < 0.0 || overlap_s >= token_length_s)
    throw Error(ErrorCode::InvalidOverlap, "overlap must satisfy 0 <= p < t");
  if (samples_per_token() < 2)
    throw Error(ErrorCode::BadConfig, "token length times rate must give at least 2 samples");
}

int tokens_per_channel(double duration_s, double token_length_s, double overlap_s) {
  if (overlap_s >= token_length_s)
    throw Error(ErrorCode::InvalidOverlap, "overlap must satisfy p < t");
  if (duration_s < token_length_s) return 0;
  // Largest k with (t-p)(k-1) + t <= J. The small slack absorbs float noise
  // when the ratio is exactly integral (e.g. J=10, t=1, p=0.5 -> 19).
  double ratio = (duration_s - token_length_s) / (token_length_s - overlap_s);
  return static_cast<int>(std::floor(ratio + 1e-9)) + 1;
}

std::vector<Token> tokenize_channel(const ChannelTrace& trace, const TokenizerConfig& cfg,
                                    int channel_index) {
  cfg.validate();
  if (std::abs(trace.rate_hz - cfg.target_rate_hz) >
      1e-9 * std::max(1.0, cfg.target_rate_hz))
    throw Error(ErrorCode::RateMismatch, "channel '" + trace.channel_id +
                                             "' is not at the tokenizer target rate");

  double t = cfg.token_length_s;
  double stride = t - cfg.overlap_s;
  int count = tokens_per_channel(trace.duration_s(), t, cfg.overlap_s);
  int m = cfg.samples_per_token();
  auto n = static_cast<std::int64_t>(trace.samples.size());

  std::vector<Token> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 1; k <= count; ++k) {
    double start_s = stride * static_cast<double>(k - 1);
    double end_s = start_s + t;
    bool dropped = false;
    for (auto [a, b] : trace.missing) {
      if (start_s < b && a < end_s) {
        dropped = true;
        break;
      }
    }
    if (dropped) continue;

    auto start_idx = std::llround(start_s * cfg.target_rate_hz);
    if (start_idx + m > n)
      throw Error(ErrorCode::ShapeError,
                  "token " + std::to_string(k) + " of channel '" + trace.channel_id +
                      "' would read past the end of the trace");
    Token tok;
    tok.channel_index = channel_index;
    tok.position = k;
    tok.values.assign(trace.samples.begin() + start_idx, trace.samples.begin() + start_idx + m);
    out.push_back(std::move(tok));
  }
  return out;
}

BiosignalSentence build_sentence(const RawRecording& rec, const TokenizerConfig& cfg,
                                 const ChannelVocabulary& vocab) {
  cfg.validate();
  validate_recording(rec);

  // Present channels keyed by vocabulary index so flattening follows vocab order.
  std::vector<const ChannelTrace*> by_index(static_cast<std::size_t>(vocab.size()), nullptr);
  for (const auto& ch : rec.channels)
    by_index[static_cast<std::size_t>(vocab.index_of(ch.channel_id))] = &ch;

  BiosignalSentence sentence;
  sentence.config = cfg;
  for (int idx = 0; idx < vocab.size(); ++idx) {
    const ChannelTrace* ch = by_index[static_cast<std::size_t>(idx)];
    if (!ch) continue;
    if (ch->samples.size() < 2) continue;  // too short to resample, nothing to emit
    ChannelTrace prepared = normalize_channel(resample(*ch, cfg.target_rate_hz));
    auto toks = tokenize_channel(prepared, cfg, idx);
    std::move(toks.begin(), toks.end(), std::back_inserter(sentence.tokens));
  }
  if (sentence.tokens.empty())
    throw Error(ErrorCode::EmptySentence,
                "recording '" + rec.id + "' produced no tokens (all too short or dropped)");
  return sentence;
}

}  // namespace biosent
