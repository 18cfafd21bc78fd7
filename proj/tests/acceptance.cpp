#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "xtime/dataset.hpp"
#include "xtime/model.hpp"
#include "xtime/preprocess.hpp"
#include "xtime/signal.hpp"
#include "xtime/train.hpp"
#include "xtime/verify.hpp"

using namespace xtime;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << "  " << id << "  " << detail << std::endl;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

constexpr int kEpochs = 30;
constexpr int kStepMs = 100;

struct Run {
  std::string log;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double seconds = 0.0;
};

Run desk_run(NormKind norm, int epochs, bool evaluate_test) {
  const auto t0 = Clock::now();
  SyntheticOptions synth;
  PreprocessConfig prep;
  prep.norm = norm;
  prep.step_ms = kStepMs;
  auto ds = preprocess({generate_synthetic(synth)}, prep);
  auto [train_ds, test_ds] = split_by_repetition(ds, SplitSpec{});
  XTimeNetworkSpec spec;
  spec.num_classes = ds.num_classes;
  Rng rng(1);
  XTimeNetwork net(spec, rng);
  TrainConfig cfg;
  cfg.epochs = epochs;
  auto result = train(net, train_ds, cfg);
  Run r;
  r.log = format_metrics_log(result.log);
  r.train_accuracy = result.log.back().accuracy;
  if (evaluate_test) r.test_accuracy = evaluate(net, test_ds).accuracy;
  r.seconds = seconds_since(t0);
  return r;
}

}  // namespace

int main() {
  {
    const auto t0 = Clock::now();
    Rng rng(0);
    const auto base = count_parameters(build_xtime_network({}, rng));
    const auto v2 = count_parameters(build_v2_network({}, rng));
    const double s = seconds_since(t0);
    const double db = std::abs(static_cast<double>(base) - 413516.0) / 413516.0;
    const double dv = std::abs(static_cast<double>(v2) - 1918476.0) / 1918476.0;
    const double ratio = static_cast<double>(v2) / static_cast<double>(base);
    report("AC1 parameter counts", db <= 0.02 && dv <= 0.02 && ratio > 4.0 && s < 1.0,
           "base=" + std::to_string(base) + " v2=" + std::to_string(v2) +
               fmt(" ratio=%.3f dev_base=%.4f dev_v2=%.4f time=%.3fs", ratio, db, dv, s));
  }

  {
    const auto t0 = Clock::now();
    GradCheckOptions opt;
    opt.network_samples = 50;
    auto entries = network_gradcheck_case(opt).run();
    const double err = max_error(entries);
    std::size_t coords = 0, min_coords = SIZE_MAX;
    for (const auto& e : entries) {
      coords += e.coordinates;
      min_coords = std::min(min_coords, e.coordinates);
    }
    const double s = seconds_since(t0);
    report("AC2 full-network gradient check", err < 1e-4 && s < 300.0,
           fmt("max_rel_err=%.3e eps=1e-5 tensors=%.0f coords=%.0f min_per_tensor=%.0f", err,
               static_cast<double>(entries.size()), static_cast<double>(coords), static_cast<double>(min_coords)) +
               fmt(" time=%.1fs", s));
  }

  {
    Rng rng(2);
    auto net = build_xtime_network({}, rng);
    net.set_mode(BnMode::eval);
    bool ok = true;
    std::string shapes;
    for (std::size_t L : {5, 10, 15, 20, 50}) {
      auto y = net.forward(random_tensor({2, 10, L}, rng));
      ok = ok && y.shape() == Shape{2, 52};
      for (double v : y.data()) ok = ok && std::isfinite(v);
      shapes += " L=" + std::to_string(L) + "->" + shape_str(y.shape());
    }
    report("AC3 window-size independence", ok, shapes.substr(1));
  }

  {
    bool ok = mu_law(0.0) == 0.0 && mu_law(1.0) == 1.0 && mu_law(-1.0) == -1.0;
    const double half_err = std::abs(mu_law(0.5) - std::log(129.0) / std::log(257.0));
    ok = ok && half_err <= 1e-12;
    bool grid_ok = true;
    double prev = -2.0;
    for (int i = 0; i <= 10000; ++i) {
      const double x = -1.0 + 2.0 * i / 10000.0;
      const double y = mu_law(x);
      grid_ok = grid_ok && y > prev && std::abs(y) >= std::abs(x);
      prev = y;
    }
    report("AC4 mu-law", ok && grid_ok, fmt("|F(0.5)-ln129/ln257|=%.2e grid=10001 monotone_and_expanding=%.0f", half_err,
                                             grid_ok ? 1.0 : 0.0));
  }

  {
    auto c = butterworth_lowpass(1.0, 100.0);
    const double e0 = std::abs(c.b0 - 0.0304687), e1 = std::abs(c.b1 - 0.0304687), ea = std::abs(c.a1 + 0.9390625);
    const double K = std::tan(3.14159265358979323846 / 100.0);
    const double closed = std::max({std::abs(c.b0 - K / (1 + K)), std::abs(c.a1 - (K - 1) / (K + 1))});
    const double dc = std::abs(c.dc_gain() - 1.0);
    report("AC5 Butterworth coefficients",
           closed <= 1e-9 && std::max({e0, e1, ea}) <= 1e-7 && dc <= 1e-12,
           fmt("b0=%.10f a1=%.10f closed_form_err=%.1e dc_gain_err=%.1e", c.b0, c.a1, closed, dc));
  }

  Run mu = desk_run(NormKind::mu_law, kEpochs, true);
  report("AC6 desk-scale learning", mu.test_accuracy >= 0.90 && mu.seconds < 900.0,
         fmt("test_acc=%.4f train_acc=%.4f epochs=%.0f time=%.0fs", mu.test_accuracy, mu.train_accuracy, kEpochs,
             mu.seconds));

  Run mm = desk_run(NormKind::minmax, kEpochs, false);
  report("AC7 normalization ablation direction", mu.train_accuracy >= mm.train_accuracy,
         fmt("mu-law_train_acc=%.4f minmax_train_acc=%.4f epoch=%.0f", mu.train_accuracy, mm.train_accuracy, kEpochs));

  Run again = desk_run(NormKind::mu_law, 3, false);
  Run again2 = desk_run(NormKind::mu_law, 3, false);
  report("AC8 determinism", again.log == again2.log && !again.log.empty() &&
                                mu.log.substr(0, again.log.size()) == again.log,
         fmt("log_bytes=%.0f identical=%.0f", static_cast<double>(again.log.size()), again.log == again2.log ? 1.0 : 0.0));

  std::cout << (failures == 0 ? "PASS" : "FAIL") << "  all acceptance criteria (" << 8 - failures << "/8)" << std::endl;
  return failures == 0 ? 0 : 1;
}
