#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace hmm2 {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, p);
}

/// Fixed-point text for human-facing tables.
inline std::string format_fixed(double v, int digits) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, p);
}

}  // namespace hmm2
