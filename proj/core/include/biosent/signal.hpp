#pragma once
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "biosent/error.hpp"

namespace biosent {

// One electrode/lead/sensor stream. Missing intervals are half-open [start_s,
// end_s) in seconds so they survive resampling untouched.
struct ChannelTrace {
  std::string channel_id;
  double rate_hz = 0.0;
  std::vector<double> samples;
  std::vector<std::pair<double, double>> missing;

  double duration_s() const {
    return rate_hz > 0.0 ? static_cast<double>(samples.size()) / rate_hz : 0.0;
  }
};

// Immutable after construction. Channels may have different rates and lengths.
struct RawRecording {
  std::string id;
  std::vector<ChannelTrace> channels;
  std::optional<int> label;
};

// Global channel id -> dense index table; index order is the flattening order
// of sentences and the row order of the learned channel embedding table.
class ChannelVocabulary {
public:
  ChannelVocabulary() = default;
  explicit ChannelVocabulary(std::vector<std::string> ids);

  // Appends a new id; returns its index. Throws DuplicateChannel if present.
  int add(const std::string& id);
  // Appends only if absent; returns the index either way.
  int add_or_get(const std::string& id);

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  int index_of(const std::string& id) const;  // UnknownChannel if absent
  const std::string& id_at(int index) const { return ids_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }

private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> index_;
};

enum class RecordingFormat { Bsr, Csv };

// path: for Bsr the `<name>.bsr.json` header (or the `<name>` stem), for Csv
// the csv file. When `vocab` is given, channel ids are validated against it.
RawRecording load_recording(const std::string& path, RecordingFormat format,
                            const ChannelVocabulary* vocab = nullptr);

// Writes `<stem>.bsr.json` plus `<stem>.bsr.f32` (little-endian float32,
// channel-major, concatenated in header order). `stem` must not carry the
// .bsr.json suffix.
void save_recording_bsr(const RawRecording& rec, const std::string& stem);

// Linear interpolation, endpoint-preserving: first and last output samples
// map to the first and last source samples. Output length
// n' = round(n * target/source). Missing intervals carried over unchanged.
ChannelTrace resample(const ChannelTrace& trace, double target_rate_hz);

// Divides by the 95th percentile of |samples| (linear interpolation between
// order statistics at rank 0.95*(n-1)); guards q < eps by dividing by eps.
ChannelTrace normalize_channel(const ChannelTrace& trace, double eps = 1e-8);

// Percentile by linear interpolation between closest order statistics,
// p in [0, 100], rank p/100*(n-1) on the sorted values.
double percentile(std::vector<double> values, double p);

// Validates all RawRecording invariants; throws on violation.
void validate_recording(const RawRecording& rec);

}  // namespace biosent
