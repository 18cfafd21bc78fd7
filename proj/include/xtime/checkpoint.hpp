#ifndef XTIME_CHECKPOINT_HPP
#define XTIME_CHECKPOINT_HPP

// Checkpoint container (little-endian):
//   magic     "XTIMECKP" (8 bytes)
//   version   u32 (= 1)
//   metadata  u32 length + "key=value\n" text: network spec under "spec.*",
//             plus caller entries (normalization statistics, provenance)
//   tensors   u32 count, then per tensor: u32 name length + name,
//             u32 rank, rank x u64 dims, prod(dims) x f64 values
//
// Tensors are the network's parameters followed by its batch-norm running
// statistics, named by layer path (e.g. "module2.branch1.depthwise.weight").

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xtime/io.hpp"
#include "xtime/model.hpp"

namespace xtime {

namespace detail {
constexpr char kCheckpointMagic[8] = {'X', 'T', 'I', 'M', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace detail

inline io::KeyValues spec_to_key_values(const XTimeNetworkSpec& s) {
  io::KeyValues kv;
  kv["spec.module_filters"] = io::join(s.module_filters);
  kv["spec.num_classes"] = std::to_string(s.num_classes);
  kv["spec.head_mid_length"] = std::to_string(s.head_mid_length);
  kv["spec.head_hidden"] = io::join(s.head_hidden);
  kv["spec.variant"] = variant_name(s.variant);
  kv["spec.input_channels"] = std::to_string(s.input_channels);
  return kv;
}

inline XTimeNetworkSpec spec_from_key_values(const io::KeyValues& kv) {
  auto sizes = [](const std::string& text) {
    std::vector<std::size_t> out;
    for (int v : io::parse_int_list(text)) {
      if (v <= 0) throw DataError("checkpoint: non-positive dimension in spec");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  };
  XTimeNetworkSpec s;
  s.module_filters = sizes(io::require(kv, "spec.module_filters"));
  s.num_classes = static_cast<std::size_t>(io::require_int(kv, "spec.num_classes"));
  s.head_mid_length = static_cast<std::size_t>(io::require_int(kv, "spec.head_mid_length"));
  s.head_hidden = sizes(io::require(kv, "spec.head_hidden"));
  s.variant = parse_variant(io::require(kv, "spec.variant"));
  s.input_channels = static_cast<std::size_t>(io::require_int(kv, "spec.input_channels"));
  s.validate();
  return s;
}

inline void write_checkpoint(std::ostream& os, const XTimeNetwork& net, const io::KeyValues& metadata = {}) {
  os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  io::write_le(os, detail::kCheckpointVersion);
  auto kv = metadata;
  for (auto& [k, v] : spec_to_key_values(net.spec())) kv[k] = v;
  io::write_string(os, io::format_key_values(kv));
  const auto state = net.state();
  io::write_le(os, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    io::write_string(os, name);
    io::write_le(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io::write_le(os, static_cast<std::uint64_t>(d));
    for (double v : t.data()) io::write_f64(os, v);
  }
}

struct LoadedCheckpoint {
  XTimeNetwork network;
  io::KeyValues metadata;
};

/// Rebuilds the network from the stored spec and overwrites every tensor.
inline LoadedCheckpoint read_checkpoint(std::istream& is, const std::string& source = "<checkpoint>") {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, detail::kCheckpointMagic)) {
    throw DataError(source + ": not an xtime checkpoint");
  }
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != detail::kCheckpointVersion) {
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  auto kv = io::parse_key_values(io::read_string(is, 1 << 24));
  XTimeNetwork net(spec_from_key_values(kv), Rng(0));
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : net.state()) by_name.emplace(name, t);

  const auto count = io::read_le<std::uint32_t>(is);
  if (count != by_name.size()) {
    throw DataError(source + ": checkpoint has " + std::to_string(count) + " tensors, network needs " +
                    std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = io::read_string(is, 4096);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError(source + ": unexpected tensor '" + name + "'");
    const auto rank = io::read_le<std::uint32_t>(is);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(io::read_le<std::uint64_t>(is)));
    Tensor& dst = it->second;
    if (shape != dst.shape()) {
      throw DataError(source + ": tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                      shape_str(dst.shape()));
    }
    for (double& v : dst.data()) v = io::read_f64(is);
    by_name.erase(it);
  }
  for (auto it = kv.begin(); it != kv.end();) {
    it = it->first.rfind("spec.", 0) == 0 ? kv.erase(it) : std::next(it);
  }
  return {std::move(net), std::move(kv)};
}

inline void save_checkpoint(const std::string& path, const XTimeNetwork& net, const io::KeyValues& metadata = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  write_checkpoint(os, net, metadata);
  if (!os) throw DataError("write failed for '" + path + "'");
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_checkpoint(is, path);
}

}  // namespace xtime

#endif  // XTIME_CHECKPOINT_HPP
