#ifndef XTIME_VERIFY_HPP
#define XTIME_VERIFY_HPP

// Gradient verification suite: every layer in isolation, then the full
// network, each compared against central differences.

#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "xtime/gradcheck.hpp"
#include "xtime/layers.hpp"
#include "xtime/model.hpp"

namespace xtime {

struct GradCheckCase {
  std::string name;
  std::function<std::vector<GradCheckEntry>()> run;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::size_t network_samples = 50;  // coordinates per parameter tensor
  std::size_t batch = 2;
  std::size_t length = 20;
  std::size_t num_classes = 52;
};

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = false) {
  std::normal_distribution<double> nd(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = nd(rng);
  t.set_requires_grad(requires_grad);
  return t;
}

/// Random, well-separated values: no ties within any pooling window and no
/// entries near zero, so max-pool and ReLU are differentiable at the point.
inline Tensor separated_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::vector<double> levels(t.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.05 * static_cast<double>(i + 1);
  std::shuffle(levels.begin(), levels.end(), rng);
  for (std::size_t i = 0; i < levels.size(); ++i) t[i] = (i % 2 ? -1.0 : 1.0) * levels[i];
  t.set_requires_grad(true);
  return t;
}

/// Weighted sum with fixed random weights, so every output coordinate
/// contributes a distinct sensitivity.
inline Tensor probe_loss(const Tensor& y, const Tensor& weights, Tape* tape) {
  return sum(mul(y, weights, tape), tape);
}

inline std::vector<GradCheckCase> layer_gradcheck_cases(const GradCheckOptions& opt) {
  std::vector<GradCheckCase> cases;
  const double eps = opt.eps;
  const std::uint64_t seed = opt.seed;

  auto conv_case = [eps, seed](std::string name, std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t g) {
    return GradCheckCase{name, [=]() {
                           Rng rng(seed);
                           auto p = make_conv1d(c_in, c_out, k, g, true, rng);
                           for (double& b : p.bias->data()) b = std::normal_distribution<double>(0, 0.5)(rng);
                           Tensor x = random_tensor({2, c_in, 9}, rng, 1.0, true);
                           Tensor w = random_tensor({2, c_out, 9}, rng);
                           LossFn f = [&](Tape* t) { return probe_loss(conv1d(x, p, t), w, t); };
                           return grad_check_tensors(f, {{"x", x}, {"weight", p.weight}, {"bias", *p.bias}}, eps);
                         }};
  };
  cases.push_back(conv_case("conv1d k=5", 3, 4, 5, 1));
  cases.push_back(conv_case("conv1d k=11 (L<k)", 2, 3, 11, 1));
  cases.push_back(conv_case("pointwise conv k=1", 4, 3, 1, 1));
  cases.push_back(conv_case("depthwise conv k=5", 4, 4, 5, 4));
  cases.push_back(conv_case("grouped conv k=3 g=2", 4, 6, 3, 2));

  cases.push_back({"depthwise separable k=11", [eps, seed]() {
                     Rng rng(seed);
                     DepthwiseSeparableParams p{make_conv1d(3, 3, 11, 3, true, rng), make_conv1d(3, 4, 1, 1, true, rng)};
                     Tensor x = random_tensor({2, 3, 12}, rng, 1.0, true);
                     Tensor w = random_tensor({2, 4, 12}, rng);
                     LossFn f = [&](Tape* t) { return probe_loss(depthwise_separable_conv1d(x, p, t), w, t); };
                     return grad_check_tensors(f,
                                               {{"x", x},
                                                {"dw.weight", p.depthwise.weight},
                                                {"pw.weight", p.pointwise.weight},
                                                {"pw.bias", *p.pointwise.bias}},
                                               eps);
                   }});

  for (auto mode : {BnMode::train, BnMode::eval}) {
    cases.push_back({mode == BnMode::train ? "batch_norm1d train" : "batch_norm1d eval", [eps, seed, mode]() {
                       Rng rng(seed);
                       auto p = make_batch_norm(3);
                       p.mode = mode;
                       for (std::size_t c = 0; c < 3; ++c) {
                         p.gamma[c] = 0.5 + 0.3 * static_cast<double>(c);
                         p.beta[c] = -0.2 * static_cast<double>(c);
                         p.running_mean[c] = 0.1 * static_cast<double>(c);
                         p.running_var[c] = 0.5 + static_cast<double>(c);
                       }
                       Tensor x = random_tensor({2, 3, 5}, rng, 2.0, true);
                       Tensor w = random_tensor({2, 3, 5}, rng);
                       LossFn f = [&](Tape* t) { return probe_loss(batch_norm1d(x, p, t), w, t); };
                       return grad_check_tensors(f, {{"x", x}, {"gamma", p.gamma}, {"beta", p.beta}}, eps);
                     }});
  }

  cases.push_back({"relu", [eps, seed]() {
                     Rng rng(seed);
                     Tensor x = separated_tensor({2, 3, 6}, rng);
                     Tensor w = random_tensor({2, 3, 6}, rng);
                     LossFn f = [&](Tape* t) { return probe_loss(relu(x, t), w, t); };
                     return grad_check_tensors(f, {{"x", x}}, eps);
                   }});
  cases.push_back({"max_pool1d k=3", [eps, seed]() {
                     Rng rng(seed);
                     Tensor x = separated_tensor({2, 3, 7}, rng);
                     Tensor w = random_tensor({2, 3, 7}, rng);
                     LossFn f = [&](Tape* t) { return probe_loss(max_pool1d(x, 3, t), w, t); };
                     return grad_check_tensors(f, {{"x", x}}, eps);
                   }});
  for (std::size_t out_len : {std::size_t{1}, std::size_t{3}, std::size_t{50}}) {
    cases.push_back({"adaptive_avg_pool1d ->" + std::to_string(out_len), [eps, seed, out_len]() {
                       Rng rng(seed);
                       Tensor x = random_tensor({2, 3, 7}, rng, 1.0, true);
                       Tensor w = random_tensor({2, 3, out_len}, rng);
                       LossFn f = [&](Tape* t) { return probe_loss(adaptive_avg_pool1d(x, out_len, t), w, t); };
                       return grad_check_tensors(f, {{"x", x}}, eps);
                     }});
  }
  cases.push_back({"add + concat_channels", [eps, seed]() {
                     Rng rng(seed);
                     Tensor a = random_tensor({2, 2, 4}, rng, 1.0, true);
                     Tensor b = random_tensor({2, 3, 4}, rng, 1.0, true);
                     Tensor c = random_tensor({2, 5, 4}, rng, 1.0, true);
                     Tensor w = random_tensor({2, 5, 4}, rng);
                     LossFn f = [&](Tape* t) { return probe_loss(add(concat_channels({a, b}, t), c, t), w, t); };
                     return grad_check_tensors(f, {{"a", a}, {"b", b}, {"c", c}}, eps);
                   }});
  cases.push_back({"cross_entropy", [eps, seed]() {
                     Rng rng(seed);
                     Tensor z = random_tensor({3, 5}, rng, 2.0, true);
                     std::vector<int> y{0, 4, 2};
                     LossFn f = [&](Tape* t) { return cross_entropy(z, y, t); };
                     return grad_check_tensors(f, {{"logits", z}}, eps);
                   }});
  return cases;
}

/// Full-network check on a [batch, 10, length] input. Batch norm runs in eval
/// mode with running statistics populated by a few train-mode passes, so every
/// parameter (including conv biases that feed a batch norm) has a nonzero
/// derivative.
inline GradCheckCase network_gradcheck_case(const GradCheckOptions& opt, Variant variant = Variant::base) {
  return {std::string("full network (") + variant_name(variant) + ")", [opt, variant]() {
            Rng rng(opt.seed);
            XTimeNetworkSpec spec;
            spec.num_classes = opt.num_classes;
            spec.variant = variant;
            XTimeNetwork net(spec, rng);
            Tensor x = random_tensor({opt.batch, spec.input_channels, opt.length}, rng);
            std::vector<int> labels;
            std::uniform_int_distribution<int> pick(0, static_cast<int>(opt.num_classes) - 1);
            for (std::size_t b = 0; b < opt.batch; ++b) labels.push_back(pick(rng));
            net.set_mode(BnMode::train);
            for (int i = 0; i < 3; ++i) net.forward(random_tensor(x.shape(), rng));
            net.set_mode(BnMode::eval);
            LossFn f = [&](Tape* t) { return cross_entropy(net.forward(x, t), labels, t); };
            return grad_check_tensors(f, net.parameters(), opt.eps, opt.network_samples, opt.seed);
          }};
}

/// Runs every case, prints one line per case (and the worst tensor), and
/// returns true iff every error is below `tolerance`.
inline bool run_gradcheck_suite(const std::vector<GradCheckCase>& cases, double tolerance, std::ostream& os) {
  bool all_ok = true;
  for (const auto& c : cases) {
    const auto report = c.run();
    const double err = max_error(report);
    const bool ok = err < tolerance;
    all_ok = all_ok && ok;
    const GradCheckEntry* worst = &report.front();
    std::size_t coords = 0;
    for (const auto& e : report) {
      coords += e.coordinates;
      if (e.max_relative_error > worst->max_relative_error) worst = &e;
    }
    os << (ok ? "PASS" : "FAIL") << "  " << std::left << std::setw(30) << c.name << " max_rel_err=" << std::scientific
       << std::setprecision(3) << err << std::defaultfloat << "  coords=" << coords << "  worst=" << worst->name
       << '\n';
  }
  os << (all_ok ? "PASS" : "FAIL") << "  gradient check (tolerance " << tolerance << ")\n";
  return all_ok;
}

}  // namespace xtime

#endif  // XTIME_VERIFY_HPP
