#pragma once

#include <charconv>
#include <string>

namespace dtr {

// Shortest round-trip decimal form; independent of the stream locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace dtr
