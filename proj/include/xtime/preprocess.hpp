#ifndef XTIME_PREPROCESS_HPP
#define XTIME_PREPROCESS_HPP

// Record -> window pipeline: filter, fit statistics on training repetitions,
// prescale + normalize, then cut label-pure windows.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xtime/record.hpp"
#include "xtime/signal.hpp"

namespace xtime {

inline std::size_t ms_to_samples(int ms, double fs, const char* what) {
  if (ms <= 0) throw UsageError(std::string(what) + " must be positive, got " + std::to_string(ms) + " ms");
  const double n = static_cast<double>(ms) * fs / 1000.0;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 || r < 1.0) {
    throw UsageError(std::string(what) + " of " + std::to_string(ms) + " ms is not a whole number of samples at " +
                     std::to_string(fs) + " Hz");
  }
  return static_cast<std::size_t>(r);
}

/// Cuts windows from every maximal run of constant (stimulus, repetition)
/// with stimulus != 0. Inside a run of length L the window starts are
/// 0, stride, 2*stride, ... so each run yields floor((L - W) / stride) + 1
/// windows when L >= W. Labels are remapped from 1..K to 0..K-1.
inline WindowedDataset segment_windows(const SignalRecord& record, int window_ms, int step_ms, double fs,
                                       std::size_t num_classes = 0) {
  const std::size_t w = ms_to_samples(window_ms, fs, "window length");
  const std::size_t stride = ms_to_samples(step_ms, fs, "window step");
  if (window_ms > 300) {
    warn("window of " + std::to_string(window_ms) + " ms exceeds the 300 ms acceptable control delay");
  }
  record.validate(std::numeric_limits<int>::max());
  WindowedDataset ds;
  ds.channels = record.channels;
  ds.window_samples = w;
  ds.window_ms = window_ms;
  ds.step_ms = step_ms;
  ds.fs = fs;
  int max_label = 0;
  for (int s : record.stimulus) max_label = std::max(max_label, s);
  ds.num_classes = num_classes != 0 ? num_classes : static_cast<std::size_t>(max_label);

  const std::size_t n = record.samples();
  std::size_t run_start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    const bool boundary = i == n || record.stimulus[i] != record.stimulus[run_start] ||
                          record.repetition[i] != record.repetition[run_start];
    if (!boundary) continue;
    const int label = record.stimulus[run_start];
    if (label != 0 && static_cast<std::size_t>(label) > ds.num_classes) {
      throw DataError("segment_windows: stimulus " + std::to_string(label) + " exceeds class count " +
                      std::to_string(ds.num_classes));
    }
    if (label != 0) {
      for (std::size_t s = run_start; s + w <= i; s += stride) {
        for (std::size_t c = 0; c < record.channels; ++c) {
          for (std::size_t t = 0; t < w; ++t) ds.windows.push_back(static_cast<float>(record.at(s + t, c)));
        }
        ds.labels.push_back(label - 1);
        ds.repetitions.push_back(record.repetition[run_start]);
        ds.subjects.push_back(record.subject_id);
      }
    }
    run_start = i;
  }
  if (ds.empty()) throw DataError("segment_windows: no label-pure gesture windows of " + std::to_string(w) + " samples");
  return ds;
}

struct PreprocessConfig {
  double fs = 100.0;
  double cutoff_hz = 1.0;
  bool two_pass = false;
  NormKind norm = NormKind::mu_law;
  double mu = 256.0;
  int window_ms = 200;
  int step_ms = 10;
  std::vector<int> test_repetitions{2, 5, 7};
  std::size_t num_classes = 0;  // 0: largest stimulus label present
};

/// Low-pass filters every channel of a record in place.
inline void filter_record(SignalRecord& r, const FilterCoeffs& coeffs, bool two_pass) {
  std::vector<double> column(r.samples());
  for (std::size_t c = 0; c < r.channels; ++c) {
    for (std::size_t t = 0; t < r.samples(); ++t) column[t] = r.at(t, c);
    auto y = two_pass ? filter_apply_two_pass(column, coeffs) : filter_apply(column, coeffs);
    for (std::size_t t = 0; t < r.samples(); ++t) r.emg[t * r.channels + c] = y[t];
  }
}

/// filter -> prescale/normalize -> segment. Statistics are fitted on samples
/// whose repetition is a training repetition (nonzero and not held out),
/// unless `stats` is supplied.
inline WindowedDataset preprocess(std::vector<SignalRecord> records, const PreprocessConfig& cfg,
                                  std::optional<NormalizationStats> stats = std::nullopt) {
  if (records.empty()) throw DataError("preprocess: no records");
  const std::size_t channels = records.front().channels;
  const auto coeffs = butterworth_lowpass(cfg.cutoff_hz, cfg.fs);
  const std::set<int> held_out(cfg.test_repetitions.begin(), cfg.test_repetitions.end());
  std::size_t num_classes = cfg.num_classes;
  if (num_classes == 0) {
    for (const auto& r : records)
      for (int s : r.stimulus) num_classes = std::max<std::size_t>(num_classes, static_cast<std::size_t>(s));
  }

  for (auto& r : records) {
    if (r.channels != channels) throw DataError("preprocess: records have different channel counts");
    filter_record(r, coeffs, cfg.two_pass);
  }
  if (!stats) {
    std::vector<double> all;
    std::vector<char> use;
    for (const auto& r : records) {
      all.insert(all.end(), r.emg.begin(), r.emg.end());
      for (int rep : r.repetition) use.push_back(rep != 0 && held_out.count(rep) == 0 ? 1 : 0);
    }
    stats = fit_normalization(all, channels, use, cfg.norm, cfg.mu);
  }

  WindowedDataset out;
  bool first = true;
  for (auto& r : records) {
    apply_normalization(r.emg, channels, *stats);
    auto part = segment_windows(r, cfg.window_ms, cfg.step_ms, cfg.fs, num_classes);
    if (first) {
      out = std::move(part);
      first = false;
    } else {
      out.windows.insert(out.windows.end(), part.windows.begin(), part.windows.end());
      out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
      out.repetitions.insert(out.repetitions.end(), part.repetitions.begin(), part.repetitions.end());
      out.subjects.insert(out.subjects.end(), part.subjects.begin(), part.subjects.end());
    }
  }
  out.norm = *stats;
  out.cutoff_hz = cfg.cutoff_hz;
  out.two_pass = cfg.two_pass;
  out.test_repetitions = cfg.test_repetitions;
  return out;
}

}  // namespace xtime

#endif  // XTIME_PREPROCESS_HPP
