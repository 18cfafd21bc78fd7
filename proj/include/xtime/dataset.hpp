#ifndef XTIME_DATASET_HPP
#define XTIME_DATASET_HPP

// Recording CSV ingestion, repetition split, synthetic recordings and the
// preprocessed-window file.
//
// Recording CSV: a header row naming emg0..emg{C-1}, stimulus and repetition
// (any order; other columns are ignored), then one row per sample at the
// recording's sampling rate.
//
// Preprocessed-window file (little-endian):
//   magic    "XTWINDOW" (8 bytes)
//   version  u32 (= 1)
//   header   u32 length + "key=value\n" text (shape, provenance and fitted
//            normalization statistics)
//   windows  `count` times: i32 label, i32 repetition, i32 subject,
//            then channels*window_samples f32 values, channel-major

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xtime/io.hpp"
#include "xtime/record.hpp"

namespace xtime {

inline SignalRecord parse_record_csv(std::istream& in, std::size_t channels = 10, int max_label = 52,
                                     const std::string& source = "<csv>") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = io::split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = header[i];
    name.erase(0, name.find_first_not_of(" \t"));
    name.erase(name.find_last_not_of(" \t") + 1);
    col[name] = i;
  }
  std::vector<std::size_t> emg_cols;
  for (std::size_t c = 0; c < channels; ++c) {
    const std::string name = "emg" + std::to_string(c);
    if (!col.count(name)) throw DataError(source + ": missing column '" + name + "'");
    emg_cols.push_back(col[name]);
  }
  for (const char* name : {"stimulus", "repetition"}) {
    if (!col.count(name)) throw DataError(source + ": missing column '" + std::string(name) + "'");
  }
  const std::size_t stim_col = col["stimulus"], rep_col = col["repetition"];

  SignalRecord r;
  r.channels = channels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = io::split(line, ',');
    if (cells.size() != header.size()) {
      throw DataError(source + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < channels; ++c) {
      double v = 0.0;
      if (!io::parse_double(cells[emg_cols[c]], v) || !std::isfinite(v)) {
        throw DataError(source + ": row " + std::to_string(row) + ", column emg" + std::to_string(c) +
                        ": non-numeric value '" + cells[emg_cols[c]] + "'");
      }
      r.emg.push_back(v);
    }
    int stim = 0, rep = 0;
    if (!io::parse_int(cells[stim_col], stim)) {
      throw DataError(source + ": row " + std::to_string(row) + ": non-integer stimulus '" + cells[stim_col] + "'");
    }
    if (!io::parse_int(cells[rep_col], rep)) {
      throw DataError(source + ": row " + std::to_string(row) + ": non-integer repetition '" + cells[rep_col] + "'");
    }
    if (stim < 0 || stim > max_label) {
      throw DataError(source + ": row " + std::to_string(row) + ": stimulus " + std::to_string(stim) +
                      " outside 0.." + std::to_string(max_label));
    }
    if (rep < 0) throw DataError(source + ": row " + std::to_string(row) + ": negative repetition");
    r.stimulus.push_back(stim);
    r.repetition.push_back(rep);
  }
  r.validate(max_label);
  return r;
}

inline SignalRecord load_record(const std::string& path, std::size_t channels = 10, int max_label = 52) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_record_csv(in, channels, max_label, path);
}

inline void write_record_csv(std::ostream& os, const SignalRecord& r) {
  for (std::size_t c = 0; c < r.channels; ++c) os << "emg" << c << ',';
  os << "stimulus,repetition\n";
  for (std::size_t t = 0; t < r.samples(); ++t) {
    for (std::size_t c = 0; c < r.channels; ++c) os << io::format_double(r.at(t, c)) << ',';
    os << r.stimulus[t] << ',' << r.repetition[t] << '\n';
  }
}

inline void save_record(const std::string& path, const SignalRecord& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  write_record_csv(os, r);
  if (!os) throw DataError("write failed for '" + path + "'");
}

struct SplitSpec {
  std::set<int> test_repetitions{2, 5, 7};
  std::set<int> train_repetitions{1, 3, 4, 6, 8, 9, 10};

  /// Test set as given; training set is its complement within 1..total.
  static SplitSpec with_test(std::set<int> test, int total_repetitions = 10) {
    SplitSpec s;
    s.test_repetitions = std::move(test);
    s.train_repetitions.clear();
    for (int r = 1; r <= total_repetitions; ++r)
      if (!s.test_repetitions.count(r)) s.train_repetitions.insert(r);
    s.validate();
    return s;
  }

  void validate() const {
    if (test_repetitions.empty()) throw UsageError("split: test repetition set is empty");
    if (train_repetitions.empty()) throw UsageError("split: train repetition set is empty");
    for (int r : test_repetitions)
      if (train_repetitions.count(r)) throw UsageError("split: repetition " + std::to_string(r) + " in both sets");
  }
};

/// Partitions windows by repetition id.
inline std::pair<WindowedDataset, WindowedDataset> split_by_repetition(const WindowedDataset& ds,
                                                                       const SplitSpec& spec) {
  spec.validate();
  auto train = ds.empty_like();
  auto test = ds.empty_like();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int rep = ds.repetitions[i];
    if (spec.test_repetitions.count(rep)) {
      test.append_from(ds, i);
    } else if (spec.train_repetitions.count(rep)) {
      train.append_from(ds, i);
    } else {
      throw std::logic_error("split_by_repetition: window " + std::to_string(i) + " has repetition " +
                             std::to_string(rep) + " in neither set");
    }
  }
  if (train.empty()) warn("split_by_repetition: training split is empty");
  if (test.empty()) warn("split_by_repetition: test split is empty");
  return {std::move(train), std::move(test)};
}

struct SyntheticOptions {
  std::size_t num_classes = 8;
  std::size_t channels = 10;
  int repetitions = 10;
  std::uint64_t seed = 1;
  double fs = 100.0;
  double gesture_seconds = 5.0;
  double rest_seconds = 3.0;
  double snr_db = 10.0;
  double amplitude_disparity = 20.0;  // largest / smallest channel gain
  int subject_id = 1;
};

/// DB1-shaped recording: for each class, `repetitions` gesture segments each
/// followed by rest. During a gesture, channel c of class k is a positive
/// envelope level plus two slow sinusoids whose frequencies, amplitudes and
/// level are class- and channel-specific, scaled by a fixed channel gain that
/// spans `amplitude_disparity`. White Gaussian noise is added at `snr_db`
/// relative to the mean gesture power of that channel.
inline SignalRecord generate_synthetic(const SyntheticOptions& opt) {
  if (opt.num_classes < 2) throw UsageError("generate_synthetic: need at least 2 classes");
  if (opt.channels < 1 || opt.repetitions < 1) throw UsageError("generate_synthetic: channels and reps must be >= 1");
  if (!(opt.amplitude_disparity >= 1.0)) throw UsageError("generate_synthetic: amplitude disparity must be >= 1");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t C = opt.channels, K = opt.num_classes;

  std::vector<double> gain(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double frac = C > 1 ? static_cast<double>(c) / static_cast<double>(C - 1) : 0.0;
    gain[c] = std::pow(opt.amplitude_disparity, frac);
  }
  // A small channel permutation keeps gain order unrelated to channel index.
  std::shuffle(gain.begin(), gain.end(), rng);

  struct Shape {
    double level, amp1, freq1, amp2, freq2;
  };
  std::vector<Shape> shapes(K * C);
  for (auto& s : shapes) {
    s.level = 0.15 + 0.85 * unit(rng);
    s.amp1 = 0.1 + 0.3 * unit(rng);
    s.freq1 = 0.3 + 2.2 * unit(rng);
    s.amp2 = 0.05 + 0.15 * unit(rng);
    s.freq2 = 0.3 + 2.2 * unit(rng);
  }
  const double rest_level = 0.05;

  // Mean gesture power per channel sets the noise scale.
  std::vector<double> noise_sd(C);
  for (std::size_t c = 0; c < C; ++c) {
    double p = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& s = shapes[k * C + c];
      p += s.level * s.level + 0.5 * (s.amp1 * s.amp1 + s.amp2 * s.amp2) * s.level * s.level;
    }
    p = p / static_cast<double>(K) * gain[c] * gain[c];
    noise_sd[c] = std::sqrt(p / std::pow(10.0, opt.snr_db / 10.0));
  }

  const auto gesture_n = static_cast<std::size_t>(std::llround(opt.gesture_seconds * opt.fs));
  const auto rest_n = static_cast<std::size_t>(std::llround(opt.rest_seconds * opt.fs));
  std::normal_distribution<double> noise(0.0, 1.0);
  SignalRecord r;
  r.subject_id = opt.subject_id;
  r.channels = C;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t k = 0; k < K; ++k) {
    for (int rep = 1; rep <= opt.repetitions; ++rep) {
      std::vector<double> phase1(C), phase2(C), jitter(C);
      for (std::size_t c = 0; c < C; ++c) {
        phase1[c] = two_pi * unit(rng);
        phase2[c] = two_pi * unit(rng);
        jitter[c] = 0.9 + 0.2 * unit(rng);
      }
      for (std::size_t t = 0; t < gesture_n + rest_n; ++t) {
        const bool active = t < gesture_n;
        const double sec = static_cast<double>(t) / opt.fs;
        for (std::size_t c = 0; c < C; ++c) {
          double v = rest_level;
          if (active) {
            const auto& s = shapes[k * C + c];
            v = jitter[c] * s.level *
                (1.0 + s.amp1 * std::sin(two_pi * s.freq1 * sec + phase1[c]) +
                 s.amp2 * std::sin(two_pi * s.freq2 * sec + phase2[c]));
          }
          r.emg.push_back(gain[c] * v + noise_sd[c] * noise(rng));
        }
        r.stimulus.push_back(active ? static_cast<int>(k + 1) : 0);
        r.repetition.push_back(active ? rep : 0);
      }
    }
  }
  return r;
}

namespace detail {
constexpr char kWindowMagic[8] = {'X', 'T', 'W', 'I', 'N', 'D', 'O', 'W'};
constexpr std::uint32_t kWindowVersion = 1;
}  // namespace detail

inline io::KeyValues window_header(const WindowedDataset& ds) {
  io::KeyValues kv;
  kv["channels"] = std::to_string(ds.channels);
  kv["window_samples"] = std::to_string(ds.window_samples);
  kv["window_ms"] = std::to_string(ds.window_ms);
  kv["step_ms"] = std::to_string(ds.step_ms);
  kv["fs"] = io::format_double(ds.fs);
  kv["num_classes"] = std::to_string(ds.num_classes);
  kv["count"] = std::to_string(ds.size());
  kv["norm"] = norm_name(ds.norm.kind);
  kv["mu"] = io::format_double(ds.norm.mu);
  kv["prescale"] = io::format_double(ds.norm.prescale);
  kv["minmax_min"] = io::join(ds.norm.mins);
  kv["minmax_max"] = io::join(ds.norm.maxs);
  kv["cutoff_hz"] = io::format_double(ds.cutoff_hz);
  kv["two_pass"] = ds.two_pass ? "true" : "false";
  kv["test_repetitions"] = io::join(ds.test_repetitions);
  return kv;
}

inline void write_windows(std::ostream& os, const WindowedDataset& ds) {
  os.write(detail::kWindowMagic, sizeof(detail::kWindowMagic));
  io::write_le(os, detail::kWindowVersion);
  io::write_string(os, io::format_key_values(window_header(ds)));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    io::write_i32(os, ds.labels[i]);
    io::write_i32(os, ds.repetitions[i]);
    io::write_i32(os, ds.subjects[i]);
    for (float v : ds.window(i)) io::write_f32(os, v);
  }
}

inline WindowedDataset read_windows(std::istream& is, const std::string& source = "<windows>") {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, detail::kWindowMagic)) {
    throw DataError(source + ": not a preprocessed window file");
  }
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != detail::kWindowVersion) {
    throw DataError(source + ": unsupported window file version " + std::to_string(version));
  }
  const auto kv = io::parse_key_values(io::read_string(is, 1 << 24));
  WindowedDataset ds;
  ds.channels = static_cast<std::size_t>(io::require_int(kv, "channels"));
  ds.window_samples = static_cast<std::size_t>(io::require_int(kv, "window_samples"));
  ds.window_ms = io::require_int(kv, "window_ms");
  ds.step_ms = io::require_int(kv, "step_ms");
  ds.fs = io::require_double(kv, "fs");
  ds.num_classes = static_cast<std::size_t>(io::require_int(kv, "num_classes"));
  ds.norm.kind = parse_norm(io::require(kv, "norm"));
  ds.norm.mu = io::require_double(kv, "mu");
  ds.norm.prescale = io::require_double(kv, "prescale");
  ds.norm.mins = io::parse_double_list(io::require(kv, "minmax_min"));
  ds.norm.maxs = io::parse_double_list(io::require(kv, "minmax_max"));
  ds.cutoff_hz = io::require_double(kv, "cutoff_hz");
  ds.two_pass = io::require(kv, "two_pass") == "true";
  ds.test_repetitions = io::parse_int_list(io::require(kv, "test_repetitions"));
  const auto count = static_cast<std::size_t>(io::require_int(kv, "count"));
  if (ds.channels == 0 || ds.window_samples == 0) throw DataError(source + ": empty window shape");
  const std::size_t stride = ds.window_stride();
  ds.windows.reserve(count * stride);
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels.push_back(io::read_i32(is));
    ds.repetitions.push_back(io::read_i32(is));
    ds.subjects.push_back(io::read_i32(is));
    if (ds.labels.back() < 0 || static_cast<std::size_t>(ds.labels.back()) >= ds.num_classes) {
      throw DataError(source + ": window " + std::to_string(i) + " has label outside class range");
    }
    for (std::size_t j = 0; j < stride; ++j) ds.windows.push_back(io::read_f32(is));
  }
  return ds;
}

inline void save_windows(const std::string& path, const WindowedDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  write_windows(os, ds);
  if (!os) throw DataError("write failed for '" + path + "'");
}

inline WindowedDataset load_windows(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_windows(is, path);
}

}  // namespace xtime

#endif  // XTIME_DATASET_HPP
