#ifndef XTIME_TENSOR_HPP
#define XTIME_TENSOR_HPP

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Every op takes an optional Tape*. When the tape is non-null and at least
// one input requires a gradient, the op records a backward closure and its
// output requires a gradient too. Gradients accumulate into Tensor::grad();
// callers zero them between steps.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xtime/errors.hpp"

namespace xtime {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    check_shape(shape);
    s_->data.assign(shape_size(shape), fill);
    s_->shape = std::move(shape);
    s_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    check_shape(shape);
    if (shape_size(shape) != data.size()) {
      throw ShapeError("tensor data has " + std::to_string(data.size()) +
                       " values but shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_size(shape)));
    }
    s_->shape = std::move(shape);
    s_->data = std::move(data);
    s_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t size() const { return s_->data.size(); }

  std::span<double> data() { return s_->data; }
  std::span<const double> data() const { return s_->data; }
  double& operator[](std::size_t i) { return s_->data[i]; }
  double operator[](std::size_t i) const { return s_->data[i]; }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return s_->data[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }

  // Tensor is a handle: gradient accumulation goes through const handles too,
  // and the buffer is allocated on first access.
  bool has_grad() const { return !s_->grad.empty(); }
  std::span<double> grad() const {
    ensure_grad();
    return s_->grad;
  }
  void ensure_grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
  }
  void zero_grad() const { std::fill(s_->grad.begin(), s_->grad.end(), 0.0); }
  void clear_grad() const { s_->grad.clear(); }

  /// Deep copy of data and shape, detached from any graph.
  Tensor clone() const { return Tensor(s_->shape, s_->data); }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  static void check_shape(const Shape& shape) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    }
  }

  std::shared_ptr<Storage> s_;
};

/// Ordered record of backward rules for one forward pass. Single use.
class Tape {
 public:
  void record(std::function<void()> backward_rule) {
    if (consumed_) throw AutodiffError("cannot record on a consumed tape");
    ops_.push_back(std::move(backward_rule));
  }

  std::size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }

 private:
  friend void backward(Tensor& loss, Tape& tape);

  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

/// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
inline void backward(Tensor& loss, Tape& tape) {
  if (tape.consumed_) throw AutodiffError("backward called twice on the same tape");
  if (loss.size() != 1 || loss.rank() > 1) {
    throw AutodiffError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  tape.consumed_ = true;
  loss.grad()[0] += 1.0;
  for (auto it = tape.ops_.rbegin(); it != tape.ops_.rend(); ++it) (*it)();
  tape.ops_.clear();
}

namespace detail {

inline bool recording(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

#ifndef NDEBUG
inline void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite output from ") + op);
  }
}
#else
inline void check_finite(const Tensor&, const char*) {}
#endif

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  detail::check_finite(out, "add");
  if (detail::recording(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto tg = t->grad();
        for (std::size_t i = 0; i < g.size(); ++i) tg[i] += g[i];
      }
    });
  }
  return out;
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  if (detail::recording(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double s, Tape* tape = nullptr) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
  if (detail::recording(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a, out, s]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  }
  return out;
}

/// Sum of all elements, as a shape-[] scalar.
inline Tensor sum(const Tensor& a, Tape* tape = nullptr) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (detail::recording(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = std::as_const(out).grad()[0];
      for (double& v : a.grad()) v += g;
    });
  }
  return out;
}

/// Same data under a new shape of equal size.
inline Tensor reshape(const Tensor& a, Shape shape, Tape* tape = nullptr) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (detail::recording(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

/// Concatenates [B, C_i, L] tensors along the channel axis.
inline Tensor concat_channels(const std::vector<Tensor>& parts, Tape* tape = nullptr) {
  if (parts.empty()) throw ShapeError("concat_channels: empty part list");
  const auto& first = parts.front();
  if (first.rank() != 3) throw ShapeError("concat_channels: parts must be [B,C,L]");
  const std::size_t batch = first.dim(0);
  const std::size_t length = first.dim(2);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.rank() != 3 || p.dim(0) != batch || p.dim(2) != length) {
      throw ShapeError("concat_channels: part " + shape_str(p.shape()) +
                       " does not match batch/length of " + shape_str(first.shape()));
    }
    channels += p.dim(1);
  }
  Tensor out({batch, channels, length});
  auto o = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.dim(1) * length;
    auto src = p.data();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(src.begin() + b * block, block, o.begin() + (b * channels + offset) * length);
    }
    offset += p.dim(1);
  }

  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    tape->record([parts, out, batch, channels, length]() mutable {
      if (!out.has_grad()) return;
      auto g = std::as_const(out).grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t block = p.dim(1) * length;
        if (p.requires_grad()) {
          auto pg = p.grad();
          for (std::size_t b = 0; b < batch; ++b) {
            const double* src = g.data() + (b * channels + off) * length;
            double* dst = pg.data() + b * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        off += p.dim(1);
      }
    });
  }
  return out;
}

}  // namespace xtime

#endif  // XTIME_TENSOR_HPP
