#pragma once

#include <charconv>
#include <string>

namespace robmiss {

/// Shortest decimal string that round-trips the double exactly; output is
/// bitwise-stable across runs, which the reproducibility checks rely on.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace robmiss
