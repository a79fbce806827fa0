#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "psrnn/error.hpp"

namespace psrnn {

/// Which neighbour quadrants of the 2N x 2N context carry reconstructed pixels.
/// FourBlock: above-left, above and left are all visible. ThreeBlock: the left
/// (bottom-left) quadrant is masked as well.
enum class AvailabilityMode { FourBlock, ThreeBlock };

inline const char* to_string(AvailabilityMode m) { return m == AvailabilityMode::FourBlock ? "four-block" : "three-block"; }

inline AvailabilityMode parse_availability(std::string_view s) {
  if (s == "four-block" || s == "four") return AvailabilityMode::FourBlock;
  if (s == "three-block" || s == "three") return AvailabilityMode::ThreeBlock;
  throw ConfigError("unknown availability mode '" + std::string(s) + "'");
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline long long parse_int(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  long long v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw ConfigError("key '" + std::string(key) + "': expected an integer, got '" + t + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw ConfigError("key '" + std::string(key) + "': expected an unsigned integer, got '" + t + "'");
  return v;
}

inline std::size_t parse_size(std::string_view key, std::string_view s) {
  const long long v = parse_int(key, s);
  if (v < 0) throw ConfigError("key '" + std::string(key) + "': must be non-negative");
  return static_cast<std::size_t>(v);
}

inline double parse_double(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + std::string(key) + "': expected a number, got '" + t + "'");
  }
}

inline bool parse_bool(std::string_view key, std::string_view s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("key '" + std::string(key) + "': expected a boolean, got '" + t + "'");
}

inline std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (const auto& item : split(s, ',')) out.push_back(parse_size(key, item));
  return out;
}

template <class V>
std::string join(const std::vector<V>& values, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(values[i]);
  }
  return out;
}

/// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, p) : std::to_string(v);
}

}  // namespace psrnn
