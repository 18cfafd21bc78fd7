#ifndef XTIME_GRADCHECK_HPP
#define XTIME_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "xtime/tensor.hpp"

namespace xtime {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

using ScalarFn = std::function<Tensor(const Tensor&, Tape*)>;
using LossFn = std::function<Tensor(Tape*)>;

struct GradCheckEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

namespace detail {

inline double eval_scalar(const Tensor& t) {
  if (t.size() != 1) throw AutodiffError("grad_check: function must return a scalar, got " +
                                         shape_str(t.shape()));
  return t.item();
}

inline double central_difference(Tensor& x, std::size_t i, double eps, const LossFn& f) {
  const double saved = x[i];
  x[i] = saved + eps;
  const double up = eval_scalar(f(nullptr));
  x[i] = saved - eps;
  const double down = eval_scalar(f(nullptr));
  x[i] = saved;
  return (up - down) / (2.0 * eps);
}

}  // namespace detail

/// Compares tape gradients of `loss` against central differences on sampled
/// coordinates of each tensor in `params`. `samples_per_tensor == 0` checks
/// every coordinate. One entry per tensor, in input order.
inline std::vector<GradCheckEntry> grad_check_tensors(const LossFn& loss,
                                                      std::vector<NamedTensor> params,
                                                      double eps = 1e-5,
                                                      std::size_t samples_per_tensor = 0,
                                                      std::uint64_t seed = 0) {
  if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.clear_grad();
  }
  {
    Tape tape;
    Tensor out = loss(&tape);
    detail::eval_scalar(out);
    backward(out, tape);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    p.tensor.ensure_grad();
    auto g = std::as_const(p.tensor).grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& x = params[k].tensor;
    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (samples_per_tensor != 0 && samples_per_tensor < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(samples_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    GradCheckEntry entry{params[k].name, coords.size()};
    for (auto i : coords) {
      const double numeric = detail::central_difference(x, i, eps, loss);
      const double err = relative_error(analytic[k][i], numeric);
      if (!std::isfinite(err)) throw NumericalError("grad_check: non-finite error at " + params[k].name);
      if (err >= entry.max_relative_error) {
        entry.max_relative_error = err;
        entry.worst_index = i;
        entry.worst_analytic = analytic[k][i];
        entry.worst_numeric = numeric;
      }
    }
    report.push_back(entry);
  }
  return report;
}

/// Max relative error between the tape gradient of f at x and central
/// differences over every coordinate of x.
inline double grad_check(const ScalarFn& f, Tensor x, double eps = 1e-5) {
  LossFn loss = [&](Tape* tape) { return f(x, tape); };
  auto report = grad_check_tensors(loss, {{"x", x}}, eps);
  return report.front().max_relative_error;
}

inline double max_error(const std::vector<GradCheckEntry>& report) {
  double m = 0.0;
  for (const auto& e : report) m = std::max(m, e.max_relative_error);
  return m;
}

}  // namespace xtime

#endif  // XTIME_GRADCHECK_HPP
