#ifndef XTIME_MODEL_HPP
#define XTIME_MODEL_HPP

// XceptionTime network.
//
//   module(x) = ReLU(BN(concat[ DSC_11(b(x)), DSC_21(b(x)), DSC_41(b(x)), Conv1x1(MaxPool3(x)) ]))
//
// where b is a 1x1 bottleneck to f channels and DSC_k is a depthwise (kernel k)
// then pointwise (f -> f) convolution. The V2 variant swaps each DSC_k for a
// plain f -> f convolution of kernel k.
//
// Network: modules are applied in series; after every second module the
// output is summed with a Conv1x1+BN projection of the activation two modules
// back, then ReLU. The head pools to a fixed length, applies Conv1x1+BN+ReLU
// stages down to num_classes, and pools to length 1.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xtime/gradcheck.hpp"
#include "xtime/layers.hpp"
#include "xtime/tensor.hpp"

namespace xtime {

enum class Variant { base, v2 };

inline const char* variant_name(Variant v) { return v == Variant::base ? "base" : "v2"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "base") return Variant::base;
  if (s == "v2" || s == "V2") return Variant::v2;
  throw UsageError("unknown variant '" + s + "' (expected base or v2)");
}

struct XTimeModuleSpec {
  std::size_t c_in = 10;
  std::size_t f = 16;
  std::array<std::size_t, 3> kernels{11, 21, 41};
  std::size_t pool_kernel = 3;
  Variant variant = Variant::base;

  std::size_t c_out() const { return 4 * f; }
};

struct XTimeNetworkSpec {
  std::vector<std::size_t> module_filters{16, 32, 64, 128};
  std::size_t num_classes = 52;
  std::size_t head_mid_length = 50;
  std::vector<std::size_t> head_hidden{256, 128};  // the last head stage maps to num_classes
  Variant variant = Variant::base;
  std::size_t input_channels = 10;

  std::vector<std::size_t> module_out_channels() const {
    std::vector<std::size_t> out;
    for (auto f : module_filters) out.push_back(4 * f);
    return out;
  }

  void validate() const {
    if (input_channels == 0 || num_classes == 0 || head_mid_length == 0) {
      throw ShapeError("network spec: dimensions must be positive");
    }
    if (module_filters.empty() || module_filters.size() % 2 != 0) {
      throw ShapeError("network spec: module count must be a positive even number");
    }
    for (auto f : module_filters)
      if (f == 0) throw ShapeError("network spec: filter counts must be positive");
    for (auto h : head_hidden)
      if (h == 0) throw ShapeError("network spec: head channels must be positive");
  }
};

class XTimeModule {
 public:
  XTimeModule(const XTimeModuleSpec& spec, Rng& rng) : spec_(spec) {
    if (spec.c_in == 0 || spec.f == 0) throw ShapeError("xtime module: c_in and f must be positive");
    const std::size_t f = spec.f;
    bottleneck_ = make_conv1d(spec.c_in, f, 1, 1, true, rng);
    for (auto k : spec.kernels) {
      if (spec.variant == Variant::base) {
        separable_.push_back({make_conv1d(f, f, k, f, true, rng), make_conv1d(f, f, 1, 1, true, rng)});
      } else {
        plain_.push_back(make_conv1d(f, f, k, 1, true, rng));
      }
    }
    pool_conv_ = make_conv1d(spec.c_in, f, 1, 1, true, rng);
    bn_ = make_batch_norm(spec.c_out());
  }

  const XTimeModuleSpec& spec() const { return spec_; }
  std::size_t out_channels() const { return spec_.c_out(); }

  Tensor forward(const Tensor& x, Tape* tape = nullptr) {
    Tensor reduced = conv1d(x, bottleneck_, tape);
    std::vector<Tensor> parts;
    parts.reserve(4);
    if (spec_.variant == Variant::base) {
      for (const auto& dsc : separable_) parts.push_back(depthwise_separable_conv1d(reduced, dsc, tape));
    } else {
      for (const auto& conv : plain_) parts.push_back(conv1d(reduced, conv, tape));
    }
    parts.push_back(conv1d(max_pool1d(x, spec_.pool_kernel, tape), pool_conv_, tape));
    return relu(batch_norm1d(concat_channels(parts, tape), bn_, tape), tape);
  }

  void set_mode(BnMode mode) { bn_.mode = mode; }

  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
    add_conv(prefix + "bottleneck", bottleneck_, out);
    for (std::size_t i = 0; i < separable_.size(); ++i) {
      const std::string b = prefix + "branch" + std::to_string(i) + ".";
      add_conv(b + "depthwise", separable_[i].depthwise, out);
      add_conv(b + "pointwise", separable_[i].pointwise, out);
    }
    for (std::size_t i = 0; i < plain_.size(); ++i) {
      add_conv(prefix + "branch" + std::to_string(i) + ".conv", plain_[i], out);
    }
    add_conv(prefix + "pool_conv", pool_conv_, out);
    out.push_back({prefix + "bn.gamma", bn_.gamma});
    out.push_back({prefix + "bn.beta", bn_.beta});
  }

  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + "bn.running_mean", bn_.running_mean});
    out.push_back({prefix + "bn.running_var", bn_.running_var});
  }

  static void add_conv(const std::string& name, const Conv1dParams& c, std::vector<NamedTensor>& out) {
    out.push_back({name + ".weight", c.weight});
    if (c.bias) out.push_back({name + ".bias", *c.bias});
  }

 private:
  XTimeModuleSpec spec_;
  Conv1dParams bottleneck_;
  std::vector<DepthwiseSeparableParams> separable_;
  std::vector<Conv1dParams> plain_;
  Conv1dParams pool_conv_;
  BatchNormParams bn_;
};

inline XTimeModule build_xtime_module(const XTimeModuleSpec& spec, Rng& rng) {
  return XTimeModule(spec, rng);
}

class XTimeNetwork {
 public:
  XTimeNetwork(XTimeNetworkSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t c = spec_.input_channels;
    for (auto f : spec_.module_filters) {
      modules_.emplace_back(XTimeModuleSpec{c, f, {11, 21, 41}, 3, spec_.variant}, rng);
      c = 4 * f;
    }
    std::size_t tap = spec_.input_channels;
    for (std::size_t i = 1; i < modules_.size(); i += 2) {
      const std::size_t target = modules_[i].out_channels();
      residuals_.push_back({make_conv1d(tap, target, 1, 1, true, rng), make_batch_norm(target)});
      tap = target;
    }
    std::size_t prev = c;
    std::vector<std::size_t> widths = spec_.head_hidden;
    widths.push_back(spec_.num_classes);
    for (auto w : widths) {
      head_.push_back({make_conv1d(prev, w, 1, 1, true, rng), make_batch_norm(w)});
      prev = w;
    }
  }

  XTimeNetwork(XTimeNetworkSpec spec, Rng&& rng) : XTimeNetwork(std::move(spec), rng) {}

  const XTimeNetworkSpec& spec() const { return spec_; }
  const std::vector<XTimeModule>& modules() const { return modules_; }
  BnMode mode() const { return mode_; }

  void set_mode(BnMode mode) {
    mode_ = mode;
    for (auto& m : modules_) m.set_mode(mode);
    for (auto& r : residuals_) r.bn.mode = mode;
    for (auto& h : head_) h.bn.mode = mode;
  }

  /// [B, input_channels, L] -> [B, num_classes] logits, for any L >= 1.
  Tensor forward(const Tensor& x, Tape* tape = nullptr) {
    if (x.rank() != 3 || x.dim(1) != spec_.input_channels) {
      throw ShapeError("network: expected [B," + std::to_string(spec_.input_channels) + ",L] input, got " +
                       shape_str(x.shape()));
    }
    Tensor h = x;
    Tensor shortcut = x;
    for (std::size_t i = 0; i < modules_.size(); ++i) {
      h = modules_[i].forward(h, tape);
      if (i % 2 == 1) {
        auto& r = residuals_[i / 2];
        Tensor proj = batch_norm1d(conv1d(shortcut, r.conv, tape), r.bn, tape);
        h = relu(add(h, proj, tape), tape);
        shortcut = h;
      }
    }
    h = adaptive_avg_pool1d(h, spec_.head_mid_length, tape);
    for (auto& stage : head_) h = relu(batch_norm1d(conv1d(h, stage.conv, tape), stage.bn, tape), tape);
    h = adaptive_avg_pool1d(h, 1, tape);
    return reshape(h, {x.dim(0), spec_.num_classes}, tape);
  }

  /// Trainable tensors, in a stable order.
  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < modules_.size(); ++i) {
      modules_[i].collect_parameters("module" + std::to_string(i + 1) + ".", out);
    }
    for (std::size_t i = 0; i < residuals_.size(); ++i) {
      const std::string p = "residual" + std::to_string(i + 1) + ".";
      XTimeModule::add_conv(p + "conv", residuals_[i].conv, out);
      out.push_back({p + "bn.gamma", residuals_[i].bn.gamma});
      out.push_back({p + "bn.beta", residuals_[i].bn.beta});
    }
    for (std::size_t i = 0; i < head_.size(); ++i) {
      const std::string p = "head" + std::to_string(i + 1) + ".";
      XTimeModule::add_conv(p + "conv", head_[i].conv, out);
      out.push_back({p + "bn.gamma", head_[i].bn.gamma});
      out.push_back({p + "bn.beta", head_[i].bn.beta});
    }
    return out;
  }

  /// Batch-norm running statistics (not trainable).
  std::vector<NamedTensor> buffers() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < modules_.size(); ++i) {
      modules_[i].collect_buffers("module" + std::to_string(i + 1) + ".", out);
    }
    auto add_bn = [&out](const std::string& p, const BatchNormParams& bn) {
      out.push_back({p + "bn.running_mean", bn.running_mean});
      out.push_back({p + "bn.running_var", bn.running_var});
    };
    for (std::size_t i = 0; i < residuals_.size(); ++i) add_bn("residual" + std::to_string(i + 1) + ".", residuals_[i].bn);
    for (std::size_t i = 0; i < head_.size(); ++i) add_bn("head" + std::to_string(i + 1) + ".", head_[i].bn);
    return out;
  }

  /// Parameters followed by buffers: everything a checkpoint stores.
  std::vector<NamedTensor> state() const {
    auto out = parameters();
    auto buf = buffers();
    out.insert(out.end(), buf.begin(), buf.end());
    return out;
  }

  /// Final head stage's batch norm, exposed for tests and diagnostics.
  BatchNormParams& final_batch_norm() { return head_.back().bn; }

 private:
  struct ProjectedBn {
    Conv1dParams conv;
    BatchNormParams bn;
  };

  XTimeNetworkSpec spec_;
  std::vector<XTimeModule> modules_;
  std::vector<ProjectedBn> residuals_;
  std::vector<ProjectedBn> head_;
  BnMode mode_ = BnMode::train;
};

inline XTimeNetwork build_xtime_network(XTimeNetworkSpec spec, Rng& rng) {
  spec.variant = Variant::base;
  return XTimeNetwork(std::move(spec), rng);
}

inline XTimeNetwork build_v2_network(XTimeNetworkSpec spec, Rng& rng) {
  spec.variant = Variant::v2;
  return XTimeNetwork(std::move(spec), rng);
}

/// Trainable scalars: conv weights and biases, BN gamma and beta.
inline std::size_t count_parameters(const XTimeNetwork& net) {
  std::size_t n = 0;
  for (const auto& p : net.parameters()) n += p.tensor.size();
  return n;
}

inline std::size_t count_parameters(const XTimeModule& module) {
  std::vector<NamedTensor> ps;
  module.collect_parameters("", ps);
  std::size_t n = 0;
  for (const auto& p : ps) n += p.tensor.size();
  return n;
}

/// Parameter counts grouped by layer path (name without the trailing tensor field).
inline std::vector<std::pair<std::string, std::size_t>> parameter_breakdown(const XTimeNetwork& net) {
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (const auto& p : net.parameters()) {
    const auto dot = p.name.rfind('.');
    std::string layer = p.name.substr(0, dot);
    if (!rows.empty() && rows.back().first == layer) {
      rows.back().second += p.tensor.size();
    } else {
      rows.emplace_back(std::move(layer), p.tensor.size());
    }
  }
  return rows;
}

}  // namespace xtime

#endif  // XTIME_MODEL_HPP
