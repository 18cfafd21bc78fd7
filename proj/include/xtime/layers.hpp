#ifndef XTIME_LAYERS_HPP
#define XTIME_LAYERS_HPP

// 1-D layers over [batch, channels, length] activations. All convolutions and
// pools run at stride 1 with symmetric "same" padding, so length is preserved.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xtime/tensor.hpp"

namespace xtime {

using Rng = std::mt19937_64;

struct Conv1dParams {
  Tensor weight;               // [C_out, C_in / groups, kernel]
  std::optional<Tensor> bias;  // [C_out]
  std::size_t groups = 1;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1) * groups; }
  std::size_t kernel() const { return weight.dim(2); }
  std::size_t parameter_count() const { return weight.size() + (bias ? bias->size() : 0); }
};

struct DepthwiseSeparableParams {
  Conv1dParams depthwise;  // groups == channels
  Conv1dParams pointwise;  // kernel 1
};

enum class BnMode { train, eval };

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  BnMode mode = BnMode::train;

  std::size_t channels() const { return gamma.size(); }
  std::size_t parameter_count() const { return gamma.size() + beta.size(); }
};

/// He-uniform fan-in weights, zero bias.
inline Conv1dParams make_conv1d(std::size_t c_in, std::size_t c_out, std::size_t kernel,
                                std::size_t groups, bool with_bias, Rng& rng) {
  if (c_in == 0 || c_out == 0 || kernel == 0 || groups == 0) {
    throw ShapeError("conv1d: dimensions must be positive");
  }
  if (c_in % groups != 0 || c_out % groups != 0) {
    throw ShapeError("conv1d: groups=" + std::to_string(groups) + " must divide C_in=" +
                     std::to_string(c_in) + " and C_out=" + std::to_string(c_out));
  }
  if (kernel % 2 == 0) throw ShapeError("conv1d: kernel must be odd, got " + std::to_string(kernel));
  const std::size_t fan_in = (c_in / groups) * kernel;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Conv1dParams p;
  p.weight = Tensor({c_out, c_in / groups, kernel});
  for (double& w : p.weight.data()) w = dist(rng);
  p.weight.set_requires_grad(true);
  if (with_bias) {
    p.bias = Tensor({c_out});
    p.bias->set_requires_grad(true);
  }
  p.groups = groups;
  return p;
}

inline BatchNormParams make_batch_norm(std::size_t channels) {
  if (channels == 0) throw ShapeError("batch_norm: channels must be positive");
  BatchNormParams p;
  p.gamma = Tensor({channels}, 1.0, true);
  p.beta = Tensor({channels}, 0.0, true);
  p.running_mean = Tensor({channels}, 0.0);
  p.running_var = Tensor({channels}, 1.0);
  return p;
}

namespace detail {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void check_bcl(const Tensor& x, const char* op) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected [B,C,L] input, got " + shape_str(x.shape()));
  }
}

// Pure depthwise (one input and one output channel per group) runs as a
// direct loop; everything else is im2col + GEMM per group.
inline Tensor conv1d_depthwise(const Tensor& x, const Conv1dParams& p, Tape* tape) {
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), K = p.kernel();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K - 1) / 2;
  Tensor out({B, C, L});
  auto xd = x.data();
  auto wd = p.weight.data();
  auto od = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* xs = xd.data() + (b * C + c) * L;
      const double* w = wd.data() + c * K;
      double* o = od.data() + (b * C + c) * L;
      const double bias = p.bias ? (*p.bias)[c] : 0.0;
      for (std::size_t t = 0; t < L; ++t) {
        double acc = bias;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pad - static_cast<std::ptrdiff_t>(t));
        const std::ptrdiff_t hi =
            std::min<std::ptrdiff_t>(K, static_cast<std::ptrdiff_t>(L) + pad - static_cast<std::ptrdiff_t>(t));
        for (std::ptrdiff_t j = lo; j < hi; ++j) acc += w[j] * xs[static_cast<std::ptrdiff_t>(t) + j - pad];
        o[t] = acc;
      }
    }
  }
  const Tensor* bias_ptr = p.bias ? &*p.bias : nullptr;
  if (recording(tape, {&x, &p.weight}) || (bias_ptr && recording(tape, {bias_ptr}))) {
    out.set_requires_grad(true);
    tape->record([x, w = p.weight, bias = p.bias, out, B, C, L, K, pad]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      auto xd = x.data();
      auto wd = w.data();
      std::span<double> gx, gw;
      if (x.requires_grad()) gx = x.grad();
      if (w.requires_grad()) gw = w.grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          const double* go = g.data() + (b * C + c) * L;
          const double* xs = xd.data() + (b * C + c) * L;
          if (bias && bias->requires_grad()) {
            double s = 0.0;
            for (std::size_t t = 0; t < L; ++t) s += go[t];
            bias->grad()[c] += s;
          }
          for (std::size_t t = 0; t < L; ++t) {
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pad - static_cast<std::ptrdiff_t>(t));
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
                K, static_cast<std::ptrdiff_t>(L) + pad - static_cast<std::ptrdiff_t>(t));
            for (std::ptrdiff_t j = lo; j < hi; ++j) {
              const std::size_t src = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + j - pad);
              if (!gw.empty()) gw[c * K + j] += go[t] * xs[src];
              if (!gx.empty()) gx[(b * C + c) * L + src] += go[t] * wd[c * K + j];
            }
          }
        }
      }
    });
  }
  return out;
}

inline void im2col(const Tensor& x, std::size_t c0, std::size_t cig, std::size_t K, MatR& cols) {
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K - 1) / 2;
  cols.setZero(static_cast<Eigen::Index>(cig * K), static_cast<Eigen::Index>(B * L));
  auto xd = x.data();
  for (std::size_t c = 0; c < cig; ++c) {
    for (std::size_t j = 0; j < K; ++j) {
      double* row = cols.data() + (c * K + j) * B * L;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      for (std::size_t b = 0; b < B; ++b) {
        const double* xs = xd.data() + (b * C + c0 + c) * L;
        for (std::size_t t = 0; t < L; ++t) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + shift;
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(L)) row[b * L + t] = xs[s];
        }
      }
    }
  }
}

inline void col2im_add(const MatR& dcols, std::size_t c0, std::size_t cig, std::size_t K,
                       std::span<double> gx, std::size_t B, std::size_t C, std::size_t L) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K - 1) / 2;
  for (std::size_t c = 0; c < cig; ++c) {
    for (std::size_t j = 0; j < K; ++j) {
      const double* row = dcols.data() + (c * K + j) * B * L;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      for (std::size_t b = 0; b < B; ++b) {
        double* dst = gx.data() + (b * C + c0 + c) * L;
        for (std::size_t t = 0; t < L; ++t) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + shift;
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(L)) dst[s] += row[b * L + t];
        }
      }
    }
  }
}

inline Tensor conv1d_gemm(const Tensor& x, const Conv1dParams& p, Tape* tape) {
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t G = p.groups, K = p.kernel(), Cout = p.out_channels();
  const std::size_t cig = C / G, cog = Cout / G, N = B * L;
  const auto rows_in = static_cast<Eigen::Index>(cig * K);
  Tensor out({B, Cout, L});
  auto od = out.data();
  std::vector<MatR> cols(G);
  MatR y;
  for (std::size_t g = 0; g < G; ++g) {
    im2col(x, g * cig, cig, K, cols[g]);
    Eigen::Map<const MatR> w(p.weight.data().data() + g * cog * cig * K,
                             static_cast<Eigen::Index>(cog), rows_in);
    y.noalias() = w * cols[g];
    for (std::size_t oo = 0; oo < cog; ++oo) {
      const std::size_t o = g * cog + oo;
      const double bias = p.bias ? (*p.bias)[o] : 0.0;
      const double* yr = y.data() + oo * N;
      for (std::size_t b = 0; b < B; ++b) {
        double* dst = od.data() + (b * Cout + o) * L;
        for (std::size_t t = 0; t < L; ++t) dst[t] = yr[b * L + t] + bias;
      }
    }
  }
  const Tensor* bias_ptr = p.bias ? &*p.bias : nullptr;
  if (recording(tape, {&x, &p.weight}) || (bias_ptr && recording(tape, {bias_ptr}))) {
    out.set_requires_grad(true);
    tape->record([x, w = p.weight, bias = p.bias, out, cols = std::move(cols), B, C, L, G, K, Cout,
                  cig, cog, N, rows_in]() mutable {
      if (!out.has_grad()) return;
      auto gout = std::as_const(out).grad();
      MatR dy(static_cast<Eigen::Index>(cog), static_cast<Eigen::Index>(N));
      MatR dcols;
      for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t oo = 0; oo < cog; ++oo) {
          const std::size_t o = g * cog + oo;
          double* dr = dy.data() + oo * N;
          double s = 0.0;
          for (std::size_t b = 0; b < B; ++b) {
            const double* src = gout.data() + (b * Cout + o) * L;
            for (std::size_t t = 0; t < L; ++t) {
              dr[b * L + t] = src[t];
              s += src[t];
            }
          }
          if (bias && bias->requires_grad()) bias->grad()[o] += s;
        }
        if (w.requires_grad()) {
          Eigen::Map<MatR> gw(w.grad().data() + g * cog * cig * K, static_cast<Eigen::Index>(cog),
                              rows_in);
          gw.noalias() += dy * cols[g].transpose();
        }
        if (x.requires_grad()) {
          Eigen::Map<const MatR> wm(w.data().data() + g * cog * cig * K,
                                    static_cast<Eigen::Index>(cog), rows_in);
          dcols.noalias() = wm.transpose() * dy;
          col2im_add(dcols, g * cig, cig, K, x.grad(), B, C, L);
        }
      }
    });
  }
  return out;
}

}  // namespace detail

/// Stride-1, zero "same"-padded grouped 1-D convolution.
inline Tensor conv1d(const Tensor& x, const Conv1dParams& p, Tape* tape = nullptr) {
  detail::check_bcl(x, "conv1d");
  if (p.weight.rank() != 3) throw ShapeError("conv1d: weight must be [C_out, C_in/groups, K]");
  if (p.kernel() % 2 == 0) throw ShapeError("conv1d: kernel must be odd");
  if (p.groups == 0 || p.out_channels() % p.groups != 0) {
    throw ShapeError("conv1d: groups must divide C_out");
  }
  if (x.dim(1) != p.in_channels()) {
    throw ShapeError("conv1d: input has " + std::to_string(x.dim(1)) + " channels, layer expects " +
                     std::to_string(p.in_channels()));
  }
  if (p.bias && p.bias->size() != p.out_channels()) throw ShapeError("conv1d: bias size mismatch");
  Tensor out = (p.groups == x.dim(1) && p.groups == p.out_channels())
                   ? detail::conv1d_depthwise(x, p, tape)
                   : detail::conv1d_gemm(x, p, tape);
  detail::check_finite(out, "conv1d");
  return out;
}

inline Tensor depthwise_separable_conv1d(const Tensor& x, const DepthwiseSeparableParams& p,
                                         Tape* tape = nullptr) {
  if (p.depthwise.groups != p.depthwise.in_channels() ||
      p.depthwise.out_channels() != p.depthwise.in_channels()) {
    throw ShapeError("depthwise_separable_conv1d: depthwise stage must preserve channels");
  }
  if (p.pointwise.kernel() != 1) throw ShapeError("depthwise_separable_conv1d: pointwise kernel must be 1");
  return conv1d(conv1d(x, p.depthwise, tape), p.pointwise, tape);
}

/// Per-channel normalization over (batch, length). Train mode uses batch
/// statistics and updates the running estimates; eval mode is a fixed affine map.
inline Tensor batch_norm1d(const Tensor& x, BatchNormParams& p, Tape* tape = nullptr) {
  detail::check_bcl(x, "batch_norm1d");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), n = B * L;
  if (C != p.channels()) {
    throw ShapeError("batch_norm1d: input has " + std::to_string(C) + " channels, layer has " +
                     std::to_string(p.channels()));
  }
  const bool train = p.mode == BnMode::train;
  if (train && n < 2) throw ShapeError("batch_norm1d: train mode needs B*L >= 2");

  Tensor out({B, C, L});
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(C);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) s += xd[(b * C + c) * L + t];
      mean = s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) {
          const double d = xd[(b * C + c) * L + t] - mean;
          ss += d * d;
        }
      var = ss / static_cast<double>(n);
      p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean;
      p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] +
                         p.momentum * var * static_cast<double>(n) / static_cast<double>(n - 1);
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + p.eps);
    inv_std[c] = inv;
    const double gamma = p.gamma[c], beta = p.beta[c];
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t i = (b * C + c) * L + t;
        xhat[i] = (xd[i] - mean) * inv;
        od[i] = gamma * xhat[i] + beta;
      }
    }
  }
  detail::check_finite(out, "batch_norm1d");

  if (detail::recording(tape, {&x, &p.gamma, &p.beta})) {
    out.set_requires_grad(true);
    tape->record([x, gamma = p.gamma, beta = p.beta, out, xhat = std::move(xhat),
                  inv_std = std::move(inv_std), train, B, C, L, n]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      for (std::size_t c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < L; ++t) {
            const std::size_t i = (b * C + c) * L + t;
            sum_g += g[i];
            sum_gx += g[i] * xhat[i];
          }
        if (gamma.requires_grad()) gamma.grad()[c] += sum_gx;
        if (beta.requires_grad()) beta.grad()[c] += sum_g;
        if (!x.requires_grad()) continue;
        auto gx = x.grad();
        const double k = gamma[c] * inv_std[c];
        if (train) {
          const double nn = static_cast<double>(n);
          const double mg = sum_g / nn, mgx = sum_gx / nn;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t i = (b * C + c) * L + t;
              gx[i] += k * (g[i] - mg - xhat[i] * mgx);
            }
        } else {
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t i = (b * C + c) * L + t;
              gx[i] += k * g[i];
            }
        }
      }
    });
  }
  return out;
}

inline Tensor relu(const Tensor& x, Tape* tape = nullptr) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (detail::recording(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

/// Length-preserving sliding max. Out-of-range positions never win; ties go
/// to the lowest index.
inline Tensor max_pool1d(const Tensor& x, std::size_t kernel, Tape* tape = nullptr) {
  detail::check_bcl(x, "max_pool1d");
  if (kernel == 0 || kernel % 2 == 0) throw ShapeError("max_pool1d: kernel must be odd and positive");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t half = (kernel - 1) / 2;
  Tensor out(x.shape());
  std::vector<std::size_t> argmax(x.size());
  auto xd = x.data();
  for (std::size_t row = 0; row < B * C; ++row) {
    const double* xs = xd.data() + row * L;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t lo = t >= half ? t - half : 0;
      const std::size_t hi = std::min(L, t + half + 1);
      std::size_t best = lo;
      for (std::size_t s = lo + 1; s < hi; ++s)
        if (xs[s] > xs[best]) best = s;
      out[row * L + t] = xs[best];
      argmax[row * L + t] = row * L + best;
    }
  }
  if (detail::recording(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, argmax = std::move(argmax)]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
    });
  }
  return out;
}

/// Bin i averages x[floor(i*L_in/L_out), ceil((i+1)*L_in/L_out)).
inline Tensor adaptive_avg_pool1d(const Tensor& x, std::size_t out_length, Tape* tape = nullptr) {
  detail::check_bcl(x, "adaptive_avg_pool1d");
  if (out_length == 0) throw ShapeError("adaptive_avg_pool1d: output length must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  std::vector<std::size_t> start(out_length), end(out_length);
  for (std::size_t i = 0; i < out_length; ++i) {
    start[i] = (i * L) / out_length;
    end[i] = ((i + 1) * L + out_length - 1) / out_length;
  }
  Tensor out({B, C, out_length});
  auto xd = x.data();
  for (std::size_t row = 0; row < B * C; ++row) {
    for (std::size_t i = 0; i < out_length; ++i) {
      double s = 0.0;
      for (std::size_t t = start[i]; t < end[i]; ++t) s += xd[row * L + t];
      out[row * out_length + i] = s / static_cast<double>(end[i] - start[i]);
    }
  }
  if (detail::recording(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, start = std::move(start), end = std::move(end), B, C, L,
                  out_length]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t row = 0; row < B * C; ++row) {
        for (std::size_t i = 0; i < out_length; ++i) {
          const double share = g[row * out_length + i] / static_cast<double>(end[i] - start[i]);
          for (std::size_t t = start[i]; t < end[i]; ++t) gx[row * L + t] += share;
        }
      }
    });
  }
  return out;
}

/// Row-wise softmax of [B, K] logits.
inline std::vector<double> softmax_rows(const Tensor& logits) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<double> p(B * K);
  for (std::size_t b = 0; b < B; ++b) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) m = std::max(m, logits[b * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      p[b * K + k] = std::exp(logits[b * K + k] - m);
      z += p[b * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) p[b * K + k] /= z;
  }
  return p;
}

/// Mean over the batch of -log softmax(logits)[label].
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, Tape* tape = nullptr) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B,K], got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B) throw ShapeError("cross_entropy: label count does not match batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(K) + ")");
    }
  }
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) m = std::max(m, logits[b * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[b * K + k] - m);
    loss += std::log(z) + m - logits[b * K + static_cast<std::size_t>(labels[b])];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(B));
  if (detail::recording(tape, {&logits})) {
    out.set_requires_grad(true);
    tape->record([logits, out, y = std::vector<int>(labels.begin(), labels.end()), B, K]() mutable {
      if (!out.has_grad()) return;
      const double g = std::as_const(out).grad()[0] / static_cast<double>(B);
      auto p = softmax_rows(logits);
      auto gl = logits.grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t k = 0; k < K; ++k) {
          const double onehot = static_cast<std::size_t>(y[b]) == k ? 1.0 : 0.0;
          gl[b * K + k] += g * (p[b * K + k] - onehot);
        }
      }
    });
  }
  return out;
}

}  // namespace xtime

#endif  // XTIME_LAYERS_HPP
