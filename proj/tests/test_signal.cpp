#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "xtime/preprocess.hpp"
#include "xtime/signal.hpp"

using namespace xtime;

TEST(Butterworth, CoefficientsForOneHertzAtHundred) {
  auto c = butterworth_lowpass(1.0, 100.0);
  const double K = std::tan(std::numbers::pi / 100.0);
  EXPECT_NEAR(c.b0, K / (1 + K), 1e-15);
  EXPECT_NEAR(c.b1, K / (1 + K), 1e-15);
  EXPECT_NEAR(c.a1, (K - 1) / (K + 1), 1e-15);
  EXPECT_NEAR(c.b0, 0.0304687, 1e-7);
  EXPECT_NEAR(c.a1, -0.9390625, 1e-7);
}

TEST(Butterworth, DcGainIsOne) {
  for (double fc : {0.5, 1.0, 5.0, 20.0, 45.0}) EXPECT_NEAR(butterworth_lowpass(fc, 100.0).dc_gain(), 1.0, 1e-12);
}

TEST(Butterworth, HalfPowerAtCutoff) {
  auto c = butterworth_lowpass(1.0, 100.0);
  EXPECT_NEAR(c.gain_at(1.0, 100.0), 1.0 / std::sqrt(2.0), 1e-12);
  auto wide = butterworth_lowpass(45.0, 100.0);
  EXPECT_GT(wide.gain_at(25.0, 100.0), 0.9);
}

TEST(Butterworth, RejectsCutoffOutsideRange) {
  EXPECT_THROW(butterworth_lowpass(0.0, 100.0), UsageError);
  EXPECT_THROW(butterworth_lowpass(50.0, 100.0), UsageError);
  EXPECT_THROW(butterworth_lowpass(60.0, 100.0), UsageError);
}

TEST(Filter, ImpulseResponse) {
  auto c = butterworth_lowpass(1.0, 100.0);
  std::vector<double> x(5, 0.0);
  x[0] = 1.0;
  auto y = filter_apply(x, c);
  EXPECT_NEAR(y[0], c.b0, 1e-15);
  EXPECT_NEAR(y[1], c.b1 - c.a1 * c.b0, 1e-15);
  for (std::size_t t = 2; t < 5; ++t) EXPECT_NEAR(y[t], -c.a1 * y[t - 1], 1e-15);
}

TEST(Filter, ConstantInputConverges) {
  auto c = butterworth_lowpass(1.0, 100.0);
  std::vector<double> x(2000, 3.0);
  auto y = filter_apply(x, c);
  EXPECT_NEAR(y.back(), 3.0, 1e-9);
  auto z = filter_apply_two_pass(x, c);
  EXPECT_NEAR(z[1000], 3.0, 1e-9);
}

TEST(Filter, TwoPassIsSymmetric) {
  auto c = butterworth_lowpass(5.0, 100.0);
  std::vector<double> x(101, 0.0);
  x[50] = 1.0;
  auto y = filter_apply_two_pass(x, c);
  for (std::size_t k = 1; k < 20; ++k) EXPECT_NEAR(y[50 - k], y[50 + k], 1e-12);
}

TEST(MuLaw, FixedPoints) {
  EXPECT_EQ(mu_law(0.0), 0.0);
  EXPECT_EQ(mu_law(1.0), 1.0);
  EXPECT_EQ(mu_law(-1.0), -1.0);
  EXPECT_NEAR(mu_law(0.5), std::log(129.0) / std::log(257.0), 1e-12);
}

TEST(MuLaw, MonotoneOddAndExpanding) {
  double prev = -2.0;
  for (int i = 0; i <= 10000; ++i) {
    const double x = -1.0 + 2.0 * i / 10000.0;
    const double y = mu_law(x);
    ASSERT_GT(y, prev) << x;
    ASSERT_GE(std::abs(y), std::abs(x) - 1e-15) << x;
    ASSERT_EQ(mu_law(-x), -y);
    prev = y;
  }
}

TEST(MuLaw, RejectsOutOfRange) {
  EXPECT_THROW(mu_law(1.5), DataError);
  std::vector<double> v{0.1, 0.2, 0.3, 1.7};
  try {
    mu_law_normalize(v, 2);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 1, channel 1"), std::string::npos);
  }
}

TEST(MuLaw, NotIdempotent) {
  EXPECT_NE(mu_law(mu_law(0.3)), mu_law(0.3));
}

TEST(MinMax, MapsRangeAndWarnsOnConstant) {
  std::vector<std::string> warnings;
  auto prev = set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  std::vector<double> v{0, 5, 10, 5, 5, 5};
  std::vector<double> mins{0, 5}, maxs{10, 5};
  minmax_normalize(v, 2, mins, maxs);
  set_warning_handler(prev);
  EXPECT_EQ(v, (std::vector<double>{-1, 0, 1, 0, 0, 0}));
  ASSERT_EQ(warnings.size(), 1u);
}

TEST(Normalization, FitsOnSelectedRowsOnly) {
  std::vector<double> v{1, -2, 100, 100, 3, 0.5};
  std::vector<char> use{1, 0, 1};
  auto s = fit_normalization(v, 2, use, NormKind::minmax);
  EXPECT_EQ(s.prescale, 3.0);
  EXPECT_EQ(s.mins, (std::vector<double>{1, -2}));
  EXPECT_EQ(s.maxs, (std::vector<double>{3, 0.5}));
  std::vector<char> none{0, 0, 0};
  EXPECT_THROW(fit_normalization(v, 2, none, NormKind::mu_law), DataError);
}

TEST(Normalization, MuLawClampsUnseenExcursions) {
  NormalizationStats s;
  s.prescale = 2.0;
  std::vector<double> v{1.0, 4.0, -8.0};
  apply_normalization(v, 1, s);
  EXPECT_NEAR(v[0], mu_law(0.5), 1e-15);
  EXPECT_EQ(v[1], 1.0);
  EXPECT_EQ(v[2], -1.0);
}

namespace {

SignalRecord make_record(const std::vector<int>& stim, const std::vector<int>& rep, std::size_t channels = 2) {
  SignalRecord r;
  r.channels = channels;
  r.stimulus = stim;
  r.repetition = rep;
  for (std::size_t t = 0; t < stim.size(); ++t)
    for (std::size_t c = 0; c < channels; ++c) r.emg.push_back(static_cast<double>(t * 10 + c));
  return r;
}

}  // namespace

TEST(Segmentation, CountsAndPurity) {
  std::vector<int> stim, rep;
  for (int i = 0; i < 5; ++i) stim.push_back(0), rep.push_back(0);
  for (int i = 0; i < 30; ++i) stim.push_back(1), rep.push_back(1);
  for (int i = 0; i < 5; ++i) stim.push_back(0), rep.push_back(0);
  for (int i = 0; i < 25; ++i) stim.push_back(2), rep.push_back(1);
  auto r = make_record(stim, rep);
  auto ds = segment_windows(r, 200, 10, 100.0);
  EXPECT_EQ(ds.window_samples, 20u);
  EXPECT_EQ(ds.size(), (30u - 20 + 1) + (25u - 20 + 1));
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_TRUE(ds.labels[i] == 0 || ds.labels[i] == 1);
  auto w = ds.window(0);
  EXPECT_EQ(w[0], 50.0f);
  EXPECT_EQ(w[20], 51.0f);
  auto strided = segment_windows(r, 200, 50, 100.0);
  EXPECT_EQ(strided.size(), 3u + 2u);
}

TEST(Segmentation, SplitsOnRepetitionChange) {
  std::vector<int> stim(40, 1), rep(40, 1);
  for (int i = 20; i < 40; ++i) rep[i] = 2;
  auto ds = segment_windows(make_record(stim, rep), 150, 10, 100.0);
  EXPECT_EQ(ds.size(), 12u);
  std::set<int> reps(ds.repetitions.begin(), ds.repetitions.end());
  EXPECT_EQ(reps, (std::set<int>{1, 2}));
}

TEST(Segmentation, ErrorsAndWarnings) {
  std::vector<int> stim(10, 1), rep(10, 1);
  auto r = make_record(stim, rep);
  EXPECT_THROW(segment_windows(r, 200, 10, 100.0), DataError);
  EXPECT_THROW(segment_windows(r, 25, 10, 100.0), UsageError);
  EXPECT_THROW(segment_windows(r, 0, 10, 100.0), UsageError);
  std::vector<int> long_stim(40, 1), long_rep(40, 1);
  std::vector<std::string> warnings;
  auto prev = set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  segment_windows(make_record(long_stim, long_rep), 350, 10, 100.0);
  set_warning_handler(prev);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Preprocess, StatisticsIgnoreHeldOutRepetitions) {
  std::vector<int> stim, rep;
  for (int r = 1; r <= 3; ++r)
    for (int i = 0; i < 30; ++i) stim.push_back(1), rep.push_back(r);
  auto rec = make_record(stim, rep, 1);
  for (std::size_t t = 0; t < rec.samples(); ++t) rec.emg[t] = rec.repetition[t] == 2 ? 50.0 : 1.0;
  PreprocessConfig cfg;
  cfg.cutoff_hz = 45.0;
  cfg.test_repetitions = {2};
  auto ds = preprocess({rec}, cfg);
  EXPECT_LT(ds.norm.prescale, 50.0);
  for (float v : ds.windows) EXPECT_LE(std::abs(v), 1.0f);
}
