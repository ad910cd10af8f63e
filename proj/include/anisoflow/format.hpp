#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

namespace anisoflow {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) return std::to_string(v);
  return std::string(buf, res.ptr);
}

}  // namespace anisoflow
