#include "biosent/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace biosent {

using nlohmann::json;

ChannelVocabulary::ChannelVocabulary(std::vector<std::string> ids) {
  for (auto& id : ids) add(id);
}

int ChannelVocabulary::add(const std::string& id) {
  if (index_.count(id))
    throw Error(ErrorCode::DuplicateChannel, "channel '" + id + "' already in vocabulary");
  int idx = static_cast<int>(ids_.size());
  ids_.push_back(id);
  index_[id] = idx;
  return idx;
}

int ChannelVocabulary::add_or_get(const std::string& id) {
  auto it = index_.find(id);
  if (it != index_.end()) return it->second;
  return add(id);
}

int ChannelVocabulary::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw Error(ErrorCode::UnknownChannel, "channel '" + id + "' not in vocabulary");
  return it->second;
}

void validate_recording(const RawRecording& rec) {
  if (rec.channels.empty())
    throw Error(ErrorCode::MalformedHeader, "recording '" + rec.id + "' has no channels");
  std::unordered_map<std::string, int> seen;
  for (const auto& ch : rec.channels) {
    if (ch.rate_hz <= 0.0)
      throw Error(ErrorCode::BadRate, "channel '" + ch.channel_id + "' rate must be > 0");
    if (seen.count(ch.channel_id))
      throw Error(ErrorCode::DuplicateChannel,
                  "channel '" + ch.channel_id + "' appears twice in recording '" + rec.id + "'");
    seen[ch.channel_id] = 1;
    double dur = ch.duration_s();
    double prev_end = 0.0;
    bool first = true;
    for (auto [s, e] : ch.missing) {
      if (s < 0.0 || e > dur + 1e-9 || s >= e)
        throw Error(ErrorCode::MalformedHeader,
                    "channel '" + ch.channel_id + "' has a missing interval outside [0, duration]");
      if (!first && s < prev_end)
        throw Error(ErrorCode::MalformedHeader,
                    "channel '" + ch.channel_id + "' missing intervals overlap or are unsorted");
      prev_end = e;
      first = false;
    }
  }
}

namespace {

std::string bsr_header_path(const std::string& path) {
  if (path.size() >= 9 && path.substr(path.size() - 9) == ".bsr.json") return path;
  return path + ".bsr.json";
}

std::string bsr_blob_path(const std::string& header_path) {
  return header_path.substr(0, header_path.size() - 5) + ".f32";
}

RawRecording load_bsr(const std::string& path) {
  std::string hpath = bsr_header_path(path);
  std::ifstream in(hpath);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + hpath + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("bad bsr header json: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("channels") || !j["channels"].is_array())
    throw Error(ErrorCode::MalformedHeader, "bsr header must have 'id' and 'channels' fields");

  RawRecording rec;
  rec.id = j["id"].get<std::string>();
  if (j.contains("label") && !j["label"].is_null()) rec.label = j["label"].get<int>();

  std::size_t total = 0;
  for (const auto& cj : j["channels"]) {
    if (!cj.contains("channel_id") || !cj.contains("rate_hz") || !cj.contains("n_samples"))
      throw Error(ErrorCode::MalformedHeader,
                  "bsr channel entry needs channel_id, rate_hz, n_samples");
    ChannelTrace ch;
    ch.channel_id = cj["channel_id"].get<std::string>();
    ch.rate_hz = cj["rate_hz"].get<double>();
    if (ch.rate_hz <= 0.0)
      throw Error(ErrorCode::BadRate, "channel '" + ch.channel_id + "' rate must be > 0");
    auto n = cj["n_samples"].get<std::int64_t>();
    if (n < 0) throw Error(ErrorCode::MalformedHeader, "negative n_samples");
    ch.samples.resize(static_cast<std::size_t>(n));
    if (cj.contains("missing")) {
      for (const auto& mj : cj["missing"]) {
        if (!mj.is_array() || mj.size() != 2)
          throw Error(ErrorCode::MalformedHeader, "missing interval must be [start, end]");
        ch.missing.emplace_back(mj[0].get<double>(), mj[1].get<double>());
      }
    }
    total += static_cast<std::size_t>(n);
    rec.channels.push_back(std::move(ch));
  }

  std::string bpath = bsr_blob_path(hpath);
  std::ifstream blob(bpath, std::ios::binary);
  if (!blob) throw Error(ErrorCode::IoError, "cannot open '" + bpath + "'");
  std::vector<float> raw(total);
  blob.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
  if (static_cast<std::size_t>(blob.gcount()) != total * sizeof(float))
    throw Error(ErrorCode::MalformedHeader,
                "bsr blob '" + bpath + "' shorter than header sample counts");

  std::size_t off = 0;
  for (auto& ch : rec.channels) {
    for (std::size_t i = 0; i < ch.samples.size(); ++i)
      ch.samples[i] = static_cast<double>(raw[off + i]);
    off += ch.samples.size();
  }
  validate_recording(rec);
  return rec;
}

RawRecording load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::MalformedHeader, "csv '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.empty() || cols[0] != "t")
    throw Error(ErrorCode::MalformedHeader, "csv first column must be 't'");
  if (cols.size() < 2)
    throw Error(ErrorCode::MalformedHeader, "csv needs at least one channel column");

  RawRecording rec;
  rec.id = std::filesystem::path(path).stem().string();
  for (std::size_t c = 1; c < cols.size(); ++c) {
    ChannelTrace ch;
    ch.channel_id = cols[c];
    rec.channels.push_back(std::move(ch));
  }

  std::vector<double> times;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::size_t c = 0;
    while (std::getline(ss, tok, ',')) {
      double v;
      try {
        v = std::stod(tok);
      } catch (...) {
        throw Error(ErrorCode::MalformedHeader,
                    "csv row " + std::to_string(row) + ": bad number '" + tok + "'");
      }
      if (c == 0)
        times.push_back(v);
      else if (c - 1 < rec.channels.size())
        rec.channels[c - 1].samples.push_back(v);
      ++c;
    }
    if (c != cols.size())
      throw Error(ErrorCode::MalformedHeader,
                  "csv row " + std::to_string(row) + " has " + std::to_string(c) +
                      " fields, expected " + std::to_string(cols.size()));
  }
  if (times.size() < 2)
    throw Error(ErrorCode::MalformedHeader, "csv needs at least 2 rows to define a rate");
  double step = times[1] - times[0];
  if (step <= 0.0) throw Error(ErrorCode::BadRate, "csv time column must be increasing");
  for (std::size_t i = 2; i < times.size(); ++i) {
    double s = times[i] - times[i - 1];
    if (std::abs(s - step) > 1e-6 * std::max(1.0, std::abs(step)))
      throw Error(ErrorCode::MalformedHeader, "csv time column step is not uniform");
  }
  double rate = 1.0 / step;
  for (auto& ch : rec.channels) ch.rate_hz = rate;
  validate_recording(rec);
  return rec;
}

}  // namespace

RawRecording load_recording(const std::string& path, RecordingFormat format,
                            const ChannelVocabulary* vocab) {
  RawRecording rec = format == RecordingFormat::Bsr ? load_bsr(path) : load_csv(path);
  if (vocab) {
    for (const auto& ch : rec.channels)
      if (!vocab->contains(ch.channel_id))
        throw Error(ErrorCode::UnknownChannel,
                    "channel '" + ch.channel_id + "' not in vocabulary");
  }
  return rec;
}

void save_recording_bsr(const RawRecording& rec, const std::string& stem) {
  validate_recording(rec);
  json j;
  j["id"] = rec.id;
  if (rec.label) j["label"] = *rec.label;
  j["channels"] = json::array();
  for (const auto& ch : rec.channels) {
    json cj;
    cj["channel_id"] = ch.channel_id;
    cj["rate_hz"] = ch.rate_hz;
    cj["n_samples"] = ch.samples.size();
    json mj = json::array();
    for (auto [s, e] : ch.missing) mj.push_back(json::array({s, e}));
    cj["missing"] = mj;
    j["channels"].push_back(cj);
  }

  std::string hpath = stem + ".bsr.json";
  std::string bpath = stem + ".bsr.f32";
  {
    std::ofstream out(hpath, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + hpath + "'");
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(bpath, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + bpath + "'");
    for (const auto& ch : rec.channels) {
      for (double v : ch.samples) {
        float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof(float));
      }
    }
  }
}

ChannelTrace resample(const ChannelTrace& trace, double target_rate_hz) {
  if (target_rate_hz <= 0.0) throw Error(ErrorCode::BadRate, "target rate must be > 0");
  if (trace.samples.size() < 2)
    throw Error(ErrorCode::TooShort, "resample needs at least 2 samples");
  if (trace.rate_hz == target_rate_hz) return trace;

  std::size_t n = trace.samples.size();
  auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate_hz / trace.rate_hz));
  if (n_out < 2) n_out = 2;

  ChannelTrace out;
  out.channel_id = trace.channel_id;
  out.rate_hz = target_rate_hz;
  out.missing = trace.missing;
  out.samples.resize(n_out);
  double scale = static_cast<double>(n - 1) / static_cast<double>(n_out - 1);
  for (std::size_t j = 0; j < n_out; ++j) {
    double pos = static_cast<double>(j) * scale;
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) {
      out.samples[j] = trace.samples[n - 1];
      continue;
    }
    double frac = pos - static_cast<double>(lo);
    out.samples[j] = (1.0 - frac) * trace.samples[lo] + frac * trace.samples[lo + 1];
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::EmptyChannel, "percentile of empty range");
  std::sort(values.begin(), values.end());
  double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(rank);
  if (lo >= values.size() - 1) return values.back();
  double frac = rank - static_cast<double>(lo);
  return (1.0 - frac) * values[lo] + frac * values[lo + 1];
}

ChannelTrace normalize_channel(const ChannelTrace& trace, double eps) {
  if (trace.samples.empty())
    throw Error(ErrorCode::EmptyChannel, "cannot normalize empty channel '" + trace.channel_id + "'");
  std::vector<double> mags(trace.samples.size());
  for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(trace.samples[i]);
  double q = percentile(std::move(mags), 95.0);
  if (q < eps) q = eps;
  ChannelTrace out = trace;
  for (auto& v : out.samples) v /= q;
  return out;
}

}  // namespace biosent
