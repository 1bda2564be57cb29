#pragma once

#include <charconv>
#include <cmath>
#include <string>

#include "smfn/tensor.hpp"

namespace smfn::detail {

inline std::string format_double(double v) {
  char buf[64];
  // Plain decimals within a readable range.
  const double a = std::abs(v);
  const bool fixed = a == 0.0 || (a >= 1e-4 && a < 1e15);
  auto res = fixed ? std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed)
                   : std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ValidationError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ValidationError("config key '" + key + "': expected a number, got '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config key '" + key + "': expected true/false, got '" + value + "'");
}

}  // namespace smfn::detail
