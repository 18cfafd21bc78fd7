#ifndef XTIME_IO_HPP
#define XTIME_IO_HPP

// Little-endian binary primitives and exact text formatting of doubles,
// shared by the file formats.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "xtime/errors.hpp"

namespace xtime::io {

template <typename U>
void write_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U read_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw DataError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_le<std::uint64_t>(is)); }
inline void write_f32(std::ostream& os, float v) { write_le(os, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_le<std::uint32_t>(is)); }
inline void write_i32(std::ostream& os, int v) { write_le(os, static_cast<std::uint32_t>(v)); }
inline int read_i32(std::istream& is) { return static_cast<int>(read_le<std::uint32_t>(is)); }

inline void write_string(std::ostream& os, std::string_view s) {
  write_le(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::size_t limit = std::size_t{1} << 30) {
  const auto n = read_le<std::uint32_t>(is);
  if (n > limit) throw DataError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw DataError("unexpected end of file");
  return s;
}

/// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), end);
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, int& out) {
  double d = 0.0;
  if (!parse_double(s, d)) return false;
  if (d != static_cast<double>(static_cast<long long>(d)) || d < -2147483648.0 || d > 2147483647.0) return false;
  out = static_cast<int>(d);
  return true;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_floating_point_v<T>) {
      os << format_double(values[i]);
    } else {
      os << values[i];
    }
  }
  return os.str();
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// `key=value` lines.
using KeyValues = std::map<std::string, std::string>;

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline const std::string& require(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("header is missing key '" + key + "'");
  return it->second;
}

inline double require_double(const KeyValues& kv, const std::string& key) {
  double v = 0.0;
  if (!parse_double(require(kv, key), v)) throw DataError("header key '" + key + "' is not numeric");
  return v;
}

inline int require_int(const KeyValues& kv, const std::string& key) {
  int v = 0;
  if (!parse_int(require(kv, key), v)) throw DataError("header key '" + key + "' is not an integer");
  return v;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (const auto& item : split(s, ',')) {
    double v = 0.0;
    if (!parse_double(item, v)) throw DataError("bad number '" + item + "' in list");
    out.push_back(v);
  }
  return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (const auto& item : split(s, ',')) {
    int v = 0;
    if (!parse_int(item, v)) throw DataError("bad integer '" + item + "' in list");
    out.push_back(v);
  }
  return out;
}

}  // namespace xtime::io

#endif  // XTIME_IO_HPP
