#ifndef XTIME_RECORD_HPP
#define XTIME_RECORD_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xtime/errors.hpp"
#include "xtime/signal.hpp"

namespace xtime {

/// One subject's continuous recording. `emg` is [samples x channels] row-major;
/// stimulus 0 and repetition 0 mark rest.
struct SignalRecord {
  int subject_id = 1;
  std::size_t channels = 10;
  std::vector<double> emg;
  std::vector<int> stimulus;
  std::vector<int> repetition;

  std::size_t samples() const { return stimulus.size(); }
  double at(std::size_t sample, std::size_t channel) const { return emg[sample * channels + channel]; }

  void validate(int max_label = 52) const {
    if (channels == 0) throw DataError("record: channel count must be positive");
    if (emg.size() != stimulus.size() * channels || repetition.size() != stimulus.size()) {
      throw DataError("record: emg, stimulus and repetition sample counts differ");
    }
    for (std::size_t i = 0; i < stimulus.size(); ++i) {
      if (stimulus[i] < 0 || stimulus[i] > max_label) {
        throw DataError("record: stimulus " + std::to_string(stimulus[i]) + " at sample " + std::to_string(i) +
                        " outside 0.." + std::to_string(max_label));
      }
      if (repetition[i] < 0) {
        throw DataError("record: negative repetition at sample " + std::to_string(i));
      }
    }
  }

  bool operator==(const SignalRecord&) const = default;
};

/// Fixed-length labelled windows. Each window is stored channel-major as
/// [channels x window_samples], matching the network's [C, L] input layout.
struct WindowedDataset {
  std::size_t channels = 0;
  std::size_t window_samples = 0;
  int window_ms = 0;
  int step_ms = 0;
  double fs = 100.0;
  std::size_t num_classes = 0;
  std::vector<float> windows;
  std::vector<int> labels;  // 0-based gesture class
  std::vector<int> repetitions;
  std::vector<int> subjects;

  // Preprocessing provenance, persisted with the data.
  NormalizationStats norm;
  double cutoff_hz = 1.0;
  bool two_pass = false;
  std::vector<int> test_repetitions{2, 5, 7};

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t window_stride() const { return channels * window_samples; }
  std::span<const float> window(std::size_t i) const {
    return std::span<const float>(windows).subspan(i * window_stride(), window_stride());
  }

  /// Copy of metadata with no windows.
  WindowedDataset empty_like() const {
    WindowedDataset d = *this;
    d.windows.clear();
    d.labels.clear();
    d.repetitions.clear();
    d.subjects.clear();
    return d;
  }

  void append_from(const WindowedDataset& src, std::size_t i) {
    auto w = src.window(i);
    windows.insert(windows.end(), w.begin(), w.end());
    labels.push_back(src.labels[i]);
    repetitions.push_back(src.repetitions[i]);
    subjects.push_back(src.subjects[i]);
  }
};

}  // namespace xtime

#endif  // XTIME_RECORD_HPP
