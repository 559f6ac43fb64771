#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "biosent/rng.hpp"
#include "biosent/signal.hpp"

// Synthetic corpora for desk-scale experiments: each sample is one class-coded
// sinusoid (same frequency on every channel, independent phases) plus white
// noise, and a masking harness that hides channels and/or fixed-length
// segments either natively (missing intervals / removed channels) or by
// zero-imputation.

namespace biosent {

struct Band {
  double lo_hz, hi_hz;
};

// One frequency band per class, in class order.
inline constexpr std::array<Band, 5> kSynthBands = {
    Band{1.0, 4.0}, Band{4.0, 8.0}, Band{8.0, 12.0}, Band{12.0, 30.0}, Band{30.0, 70.0}};

struct SynthTaskConfig {
  int n_classes = 5;
  int n_channels = 4;
  double duration_s = 10.0;
  double rate_hz = 200.0;
  double snr = 2.0;  // sinusoid amplitude over noise amplitude
  std::uint64_t seed = 0;

  void validate() const;
};

// n_samples labeled recordings, ids "synth-<index>". Every sample derives its
// own rng from (seed, index), so the corpus is stable under any generation
// order or parallel split.
std::vector<RawRecording> generate_dataset(const SynthTaskConfig& cfg, int n_samples);

enum class MaskMode { Segments, Channels, Both };
enum class MaskStrategy { DropTokens, ZeroImpute };

struct MaskSpec {
  MaskMode mode = MaskMode::Both;
  int segments_per_channel = 0;  // masked segments per surviving channel
  int channels_to_mask = 0;
  double segment_len_s = 0.5;
  MaskStrategy strategy = MaskStrategy::DropTokens;

  void validate() const;
};

// DropTokens records the damage (removes channels, appends missing intervals)
// so the tokenizer skips it; ZeroImpute overwrites the same regions with
// zeros, keeping every channel and sample count. Labels are never touched.
RawRecording apply_mask(const RawRecording& rec, const MaskSpec& spec, Rng& rng);

// ---- corpus on disk: one BSR pair per recording plus labels.csv ----

void save_dataset(const std::vector<RawRecording>& recordings,
                  const std::filesystem::path& dir);

// Loads every id listed in labels.csv; labels attach to the recordings.
std::vector<RawRecording> load_dataset(const std::filesystem::path& dir,
                                       const ChannelVocabulary* vocab = nullptr);

}  // namespace biosent
