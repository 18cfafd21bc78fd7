#ifndef XTIME_SIGNAL_HPP
#define XTIME_SIGNAL_HPP

// sEMG preprocessing: first-order Butterworth low-pass, global prescale,
// mu-law or min-max normalization, and sliding-window segmentation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "xtime/errors.hpp"

namespace xtime {

/// y[t] = b0 x[t] + b1 x[t-1] - a1 y[t-1]
struct FilterCoeffs {
  double b0 = 0.0;
  double b1 = 0.0;
  double a1 = 0.0;

  double dc_gain() const { return (b0 + b1) / (1.0 + a1); }

  /// |H(e^{jw})| at frequency `hz` for sampling rate `fs`.
  double gain_at(double hz, double fs) const {
    const double w = 2.0 * std::numbers::pi * hz / fs;
    const double nr = b0 + b1 * std::cos(w), ni = -b1 * std::sin(w);
    const double dr = 1.0 + a1 * std::cos(w), di = -a1 * std::sin(w);
    return std::sqrt((nr * nr + ni * ni) / (dr * dr + di * di));
  }
};

/// Bilinear transform of H(s) = wc / (s + wc) with prewarped cutoff.
inline FilterCoeffs butterworth_lowpass(double fc, double fs) {
  if (!(fs > 0.0) || !(fc > 0.0) || !(fc < fs / 2.0)) {
    throw UsageError("butterworth_lowpass: cutoff " + std::to_string(fc) + " Hz must lie in (0, fs/2) for fs=" +
                     std::to_string(fs));
  }
  const double wc = 2.0 * fs * std::tan(std::numbers::pi * fc / fs);
  const double k = 2.0 * fs;
  FilterCoeffs c;
  c.b0 = wc / (k + wc);
  c.b1 = c.b0;
  c.a1 = (wc - k) / (k + wc);
  return c;
}

/// Causal direct-form filtering of one channel, zero initial state.
inline std::vector<double> filter_apply(std::span<const double> x, const FilterCoeffs& c) {
  std::vector<double> y(x.size());
  double x_prev = 0.0, y_prev = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    y[t] = c.b0 * x[t] + c.b1 * x_prev - c.a1 * y_prev;
    x_prev = x[t];
    y_prev = y[t];
  }
  return y;
}

/// Forward then time-reversed pass (zero phase, squared magnitude response).
inline std::vector<double> filter_apply_two_pass(std::span<const double> x, const FilterCoeffs& c) {
  auto y = filter_apply(x, c);
  std::reverse(y.begin(), y.end());
  y = filter_apply(y, c);
  std::reverse(y.begin(), y.end());
  return y;
}

/// sign(x) ln(1 + mu|x|) / ln(1 + mu)
inline double mu_law(double x, double mu = 256.0) {
  if (!(mu > 0.0)) throw UsageError("mu_law: mu must be positive");
  if (!(std::abs(x) <= 1.0 + 1e-12)) {
    throw DataError("mu_law: input " + std::to_string(x) + " outside [-1, 1]");
  }
  const double mag = std::log1p(mu * std::abs(x)) / std::log1p(mu);
  return x < 0.0 ? -mag : (x > 0.0 ? mag : 0.0);
}

/// Elementwise mu-law over a [samples x channels] row-major matrix.
inline void mu_law_normalize(std::span<double> values, std::size_t channels, double mu = 256.0) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(std::abs(values[i]) <= 1.0 + 1e-12)) {
      throw DataError("mu_law_normalize: |x| > 1 at sample " + std::to_string(i / channels) + ", channel " +
                      std::to_string(i % channels) + " (value " + std::to_string(values[i]) + ")");
    }
    values[i] = mu_law(std::clamp(values[i], -1.0, 1.0), mu);
  }
}

enum class NormKind { mu_law, minmax, none };

inline const char* norm_name(NormKind k) {
  switch (k) {
    case NormKind::mu_law: return "mu-law";
    case NormKind::minmax: return "minmax";
    case NormKind::none: return "none";
  }
  return "none";
}

inline NormKind parse_norm(const std::string& s) {
  if (s == "mu-law" || s == "mulaw" || s == "mu_law") return NormKind::mu_law;
  if (s == "minmax") return NormKind::minmax;
  if (s == "none") return NormKind::none;
  throw UsageError("unknown normalization '" + s + "' (expected mu-law, minmax or none)");
}

/// Fitted normalization state. Statistics come from training samples only.
struct NormalizationStats {
  NormKind kind = NormKind::mu_law;
  double mu = 256.0;
  double prescale = 1.0;          // global max |x| over all training channels
  std::vector<double> mins;       // per channel, minmax only
  std::vector<double> maxs;
};

/// Fits statistics on the rows of a [samples x channels] matrix where
/// `use_row` is true.
inline NormalizationStats fit_normalization(std::span<const double> values, std::size_t channels,
                                            std::span<const char> use_row, NormKind kind,
                                            double mu = 256.0) {
  NormalizationStats s;
  s.kind = kind;
  s.mu = mu;
  const std::size_t rows = values.size() / channels;
  double amax = 0.0;
  s.mins.assign(channels, std::numeric_limits<double>::infinity());
  s.maxs.assign(channels, -std::numeric_limits<double>::infinity());
  std::size_t used = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!use_row[r]) continue;
    ++used;
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = values[r * channels + c];
      amax = std::max(amax, std::abs(v));
      s.mins[c] = std::min(s.mins[c], v);
      s.maxs[c] = std::max(s.maxs[c], v);
    }
  }
  if (used == 0) throw DataError("fit_normalization: no training samples to fit statistics on");
  s.prescale = amax > 0.0 ? amax : 1.0;
  if (kind != NormKind::minmax) {
    s.mins.clear();
    s.maxs.clear();
  }
  return s;
}

/// Linear map of [min, max] onto [-1, 1] per channel. Constant channels map to 0.
inline void minmax_normalize(std::span<double> values, std::size_t channels, std::span<const double> mins,
                             std::span<const double> maxs) {
  for (std::size_t c = 0; c < channels; ++c) {
    if (!(maxs[c] > mins[c])) warn("minmax_normalize: channel " + std::to_string(c) + " is constant; mapped to 0");
  }
  const std::size_t rows = values.size() / channels;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      double& v = values[r * channels + c];
      v = maxs[c] > mins[c] ? 2.0 * (v - mins[c]) / (maxs[c] - mins[c]) - 1.0 : 0.0;
    }
  }
}

/// Applies fitted statistics: mu-law divides by the global prescale first and
/// clamps test-split excursions to [-1, 1]; minmax uses per-channel ranges.
inline void apply_normalization(std::span<double> values, std::size_t channels, const NormalizationStats& s) {
  switch (s.kind) {
    case NormKind::mu_law:
      for (double& v : values) v = std::clamp(v / s.prescale, -1.0, 1.0);
      mu_law_normalize(values, channels, s.mu);
      break;
    case NormKind::minmax:
      minmax_normalize(values, channels, s.mins, s.maxs);
      break;
    case NormKind::none:
      break;
  }
}

}  // namespace xtime

#endif  // XTIME_SIGNAL_HPP
