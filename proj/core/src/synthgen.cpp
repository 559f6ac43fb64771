#include "biosent/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

#include "biosent/error.hpp"

namespace biosent {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string sample_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth-%06d", index);
  return buf;
}

// Draws `count` non-overlapping index ranges of `len` samples each from
// [0, n); returns sorted start indices. Sorted draws over the slack space,
// each shifted by the blocks before it, cover every valid placement without
// rejection. Working in sample space keeps the masked region identical
// between strategies for a given rng state.
std::vector<std::int64_t> draw_segments(std::int64_t n, std::int64_t len, int count, Rng& rng) {
  if (len < 1 || len * count > n)
    throw Error(ErrorCode::BadConfig, "masked segments do not fit in the signal");
  auto slack = static_cast<std::uint64_t>(n - len * count);
  std::vector<std::int64_t> starts(static_cast<std::size_t>(count));
  for (auto& s : starts) s = static_cast<std::int64_t>(uniform_index(rng, slack + 1));
  std::sort(starts.begin(), starts.end());
  for (std::size_t i = 0; i < starts.size(); ++i)
    starts[i] += static_cast<std::int64_t>(i) * len;
  return starts;
}

}  // namespace

void SynthTaskConfig::validate() const {
  if (n_classes < 1 || n_classes > static_cast<int>(kSynthBands.size()))
    throw Error(ErrorCode::BadConfig,
                "n_classes must be in [1, " + std::to_string(kSynthBands.size()) + "]");
  if (n_channels < 1) throw Error(ErrorCode::BadConfig, "n_channels must be >= 1");
  if (!(duration_s > 0.0)) throw Error(ErrorCode::BadConfig, "duration_s must be positive");
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::BadRate, "rate_hz must be positive");
  if (!(snr > 0.0)) throw Error(ErrorCode::BadConfig, "snr must be positive");
  for (int c = 0; c < n_classes; ++c)
    if (kSynthBands[static_cast<std::size_t>(c)].hi_hz >= rate_hz / 2.0)
      throw Error(ErrorCode::BadConfig, "class band reaches the Nyquist frequency");
}

std::vector<RawRecording> generate_dataset(const SynthTaskConfig& cfg, int n_samples) {
  cfg.validate();
  if (n_samples < 0) throw Error(ErrorCode::BadConfig, "n_samples must be >= 0");

  auto n = static_cast<std::int64_t>(std::llround(cfg.duration_s * cfg.rate_hz));
  if (n < 2) throw Error(ErrorCode::BadConfig, "duration too short for the sample rate");

  std::vector<RawRecording> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(s)));
    int label = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.n_classes)));
    const Band& band = kSynthBands[static_cast<std::size_t>(label)];
    double freq = uniform(rng, band.lo_hz, band.hi_hz);  // shared by all channels

    RawRecording rec;
    rec.id = sample_id(s);
    rec.label = label;
    for (int c = 0; c < cfg.n_channels; ++c) {
      ChannelTrace trace;
      trace.channel_id = "ch" + std::to_string(c);
      trace.rate_hz = cfg.rate_hz;
      trace.samples.resize(static_cast<std::size_t>(n));
      double phase = uniform(rng, 0.0, 2.0 * kPi);
      for (std::int64_t j = 0; j < n; ++j) {
        double t = static_cast<double>(j) / cfg.rate_hz;
        trace.samples[static_cast<std::size_t>(j)] =
            std::sin(2.0 * kPi * freq * t + phase) + normal(rng, 0.0, 1.0 / cfg.snr);
      }
      rec.channels.push_back(std::move(trace));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void MaskSpec::validate() const {
  if (segments_per_channel < 0 || segments_per_channel > 5)
    throw Error(ErrorCode::BadConfig, "segments_per_channel must be in [0, 5]");
  if (channels_to_mask < 0 || channels_to_mask > 4)
    throw Error(ErrorCode::BadConfig, "channels_to_mask must be in [0, 4]");
  if (!(segment_len_s > 0.0))
    throw Error(ErrorCode::BadConfig, "segment_len_s must be positive");
}

RawRecording apply_mask(const RawRecording& rec, const MaskSpec& spec, Rng& rng) {
  spec.validate();
  RawRecording out = rec;

  bool mask_channels = spec.mode != MaskMode::Segments && spec.channels_to_mask > 0;
  bool mask_segments = spec.mode != MaskMode::Channels && spec.segments_per_channel > 0;

  std::vector<bool> channel_masked(out.channels.size(), false);
  if (mask_channels) {
    if (static_cast<std::size_t>(spec.channels_to_mask) >= out.channels.size())
      throw Error(ErrorCode::BadConfig, "channels_to_mask must stay below the channel count");
    std::vector<std::size_t> order(out.channels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_indices(order, rng);
    for (int i = 0; i < spec.channels_to_mask; ++i) channel_masked[order[static_cast<std::size_t>(i)]] = true;
  }

  if (mask_segments) {
    for (std::size_t c = 0; c < out.channels.size(); ++c) {
      if (channel_masked[c]) continue;  // already fully hidden
      auto& trace = out.channels[c];
      auto n = static_cast<std::int64_t>(trace.samples.size());
      auto len = std::llround(spec.segment_len_s * trace.rate_hz);
      auto starts = draw_segments(n, len, spec.segments_per_channel, rng);
      for (auto start : starts) {
        if (spec.strategy == MaskStrategy::ZeroImpute) {
          std::fill(trace.samples.begin() + static_cast<std::ptrdiff_t>(start),
                    trace.samples.begin() + static_cast<std::ptrdiff_t>(start + len), 0.0);
        } else {
          trace.missing.emplace_back(static_cast<double>(start) / trace.rate_hz,
                                     static_cast<double>(start + len) / trace.rate_hz);
        }
      }
      std::sort(trace.missing.begin(), trace.missing.end());
    }
  }

  if (mask_channels) {
    if (spec.strategy == MaskStrategy::ZeroImpute) {
      for (std::size_t c = 0; c < out.channels.size(); ++c)
        if (channel_masked[c])
          std::fill(out.channels[c].samples.begin(), out.channels[c].samples.end(), 0.0);
    } else {
      std::vector<ChannelTrace> kept;
      for (std::size_t c = 0; c < out.channels.size(); ++c)
        if (!channel_masked[c]) kept.push_back(std::move(out.channels[c]));
      out.channels = std::move(kept);
    }
  }
  return out;
}

void save_dataset(const std::vector<RawRecording>& recordings,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw Error(ErrorCode::IoError, "cannot write " + (dir / "labels.csv").string());
  labels << "id,class\n";
  for (const auto& rec : recordings) {
    if (!rec.label)
      throw Error(ErrorCode::BadConfig, "recording '" + rec.id + "' has no label to save");
    save_recording_bsr(rec, (dir / rec.id).string());
    labels << rec.id << ',' << *rec.label << '\n';
  }
}

std::vector<RawRecording> load_dataset(const std::filesystem::path& dir,
                                       const ChannelVocabulary* vocab) {
  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw Error(ErrorCode::IoError, "cannot open " + (dir / "labels.csv").string());
  std::string line;
  if (!std::getline(labels, line) || line.rfind("id,class", 0) != 0)
    throw Error(ErrorCode::MalformedHeader, "labels.csv must start with an 'id,class' header");

  std::vector<RawRecording> out;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorCode::MalformedHeader, "labels.csv row without a class: " + line);
    std::string id = line.substr(0, comma);
    int label;
    try {
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedHeader, "labels.csv row with a bad class: " + line);
    }
    auto rec = load_recording((dir / id).string(), RecordingFormat::Bsr, vocab);
    rec.label = label;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace biosent
